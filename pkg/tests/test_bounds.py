import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopgain import optim
from coopgain.bounds import (
    BoundOptions,
    CoutBudget,
    RateRegion,
    baseline_sum_capacity,
    channel_mi,
    inner_sum_rate,
    no_coop_outer_region,
    rate_region_at_policy,
    state_coop_dependence,
    time_share_combine,
)
from coopgain.channel import (
    CondIndependent,
    Costs,
    Independent,
    JointConditional,
    StateMac,
    induced_joint,
    make_builtin,
)
from coopgain.prob import cond_mutual_info

FAST = BoundOptions(starts=4)
LOG3 = math.log2(3)


def reeval(mac, pol):
    j = induced_joint(mac, pol)
    return cond_mutual_info(j, ["X1", "X2"], ["Y"], ["S1", "S2"])


# ---- baseline


def test_mod3_baseline_and_grid(mod3):
    b = baseline_sum_capacity(mod3, "0")
    assert b.value == pytest.approx(1.5, abs=1e-6)
    np.testing.assert_allclose(b.achieving_policy.p1, [0.5, 0.5], atol=1e-3)
    g, _, _ = optim.grid_sum_capacity(mod3, False)
    assert g == pytest.approx(1.5, abs=1e-9)
    assert b.optimizer_report["starts"] >= 33


def test_baseline_other_builtins(mod3_marg, identity):
    assert baseline_sum_capacity(mod3_marg, "0").value == pytest.approx(0.0, abs=1e-9)
    assert baseline_sum_capacity(identity, "0").value == pytest.approx(1.0, abs=1e-9)


def test_baseline_tau_families_on_mod3(mod3):
    # encoder state does not help without cooperation on the invertible adder
    assert baseline_sum_capacity(mod3, "T").value == pytest.approx(1.5, abs=1e-6)
    assert baseline_sum_capacity(mod3, "inf,s").value == pytest.approx(1.5, abs=1e-6)


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10_000))
def test_baseline_matches_grid_on_random_binary_channels(seed):
    mac = make_builtin("random_seeded", sizes=(2, 1, 2, 2, 3), seed=seed)
    b = baseline_sum_capacity(mac, "0", FAST)
    g, _, _ = optim.grid_sum_capacity(mac, False)
    # the grid is a lower bound; BA must reach it (grid step limits agreement)
    assert b.value >= g - 1e-9
    assert b.value - g <= 5e-4


def test_baseline_policy_reevaluates(mod3):
    b = baseline_sum_capacity(make_builtin("random_seeded", seed=5), "inf,s", FAST)
    assert isinstance(b.achieving_policy, CondIndependent)
    assert reeval(make_builtin("random_seeded", seed=5), b.achieving_policy) == pytest.approx(b.value, abs=1e-7)


def test_baseline_with_costs():
    mac0 = make_builtin("trivial_identity")
    # sending x1 = 1 costs 1 with budget 0.11: the capacity is H(0.11)
    mac = StateMac(mac0.state_law, mac0.kernel, Costs(np.array([0.0, 1.0]), np.array([0.0, 0.0]), 0.11, 0.0))
    b = baseline_sum_capacity(mac, "0", FAST)
    assert b.value == pytest.approx(0.49991595816, abs=1e-6)
    assert b.achieving_policy.p1[1] <= 0.11 + 1e-7


def test_infeasible_costs_raise(identity):
    mac = StateMac(identity.state_law, identity.kernel, Costs(np.array([1.0, 1.0]), np.array([0.0, 0.0]), 0.5, 0.0))
    with pytest.raises(ValueError):
        baseline_sum_capacity(mac, "0")


# ---- inner bounds


def test_candidate_joint_oracle(mod3, log3_joint):
    assert channel_mi(mod3, log3_joint) == pytest.approx(LOG3, abs=1e-12)
    j = induced_joint(mod3, log3_joint)
    dep = cond_mutual_info(j, ["X1"], ["X2"])
    # 1 - H(2/3, 1/3) evaluated by hand
    assert dep == pytest.approx(1 - (LOG3 - 2 / 3), abs=1e-12)
    assert dep == pytest.approx(0.0817, abs=1e-4)


def test_mod3_inner_reaches_log3(mod3):
    b = inner_sum_rate(mod3, "0", CoutBudget(0.045, 0.045))
    assert b.value >= 1.58
    assert b.constraint_slacks["dependence"] >= -1e-7
    assert reeval(mod3, b.achieving_policy) == pytest.approx(b.value, abs=1e-7)


@pytest.mark.parametrize("tau", ["0", "T-1", "inf,s", "T"])
def test_zero_budget_is_baseline(mod3, tau):
    b = inner_sum_rate(mod3, tau, CoutBudget(0, 0), FAST)
    assert b.value == pytest.approx(baseline_sum_capacity(mod3, tau, FAST).value, abs=1e-5)


def test_zero_budget_state_coop_policy_is_cond_independent():
    mac = make_builtin("random_seeded", seed=2)
    b = inner_sum_rate(mac, "inf,s", CoutBudget(0, 0), FAST)
    assert isinstance(b.achieving_policy, CondIndependent)


def test_state_coop_constraints_hold():
    mac = make_builtin("random_seeded", seed=1)
    budget = CoutBudget(0.02, 0.03)
    b = inner_sum_rate(mac, "inf,s", budget, FAST)
    d1, d2, ds = state_coop_dependence(mac, b.achieving_policy)
    assert d1 <= 0.02 + 1e-7 and d2 <= 0.03 + 1e-7 and ds <= 0.05 + 1e-7
    assert reeval(mac, b.achieving_policy) == pytest.approx(b.value, abs=1e-7)
    assert 0 <= b.value <= math.log2(mac.nY)


def test_monotone_with_warm_start():
    mac = make_builtin("random_seeded", seed=7)
    prev = None
    for c in (0.0, 0.01, 0.03, 0.06):
        opts = FAST if prev is None else replace(FAST, warm=(prev.achieving_policy,))
        b = inner_sum_rate(mac, "0", CoutBudget(c, c), opts)
        if prev is not None:
            assert b.value >= prev.value - 1e-6
        prev = b


def test_tau_ordering():
    mac = make_builtin("random_seeded", seed=3)
    for c in (0.01, 0.04):
        a = inner_sum_rate(mac, "0", CoutBudget(c, c), FAST).value
        s = inner_sum_rate(mac, "inf,s", CoutBudget(c, c), FAST).value
        assert s >= a - 1e-5


def test_small_u_enumeration_and_cap(mod3):
    b = inner_sum_rate(mod3, "T", CoutBudget(0.05, 0.05), BoundOptions(starts=2, u_sizes=(2, 1)))
    assert b.achieving_policy.pu.shape == (2, 1)
    with pytest.raises(ValueError, match="smaller U"):
        inner_sum_rate(mod3, "T", CoutBudget(0.05, 0.05), BoundOptions(starts=2, u_sizes=(8, 8), max_map_pairs=100))


# ---- regions


def test_mod3_uniform_pentagon(mod3, uniform2):
    r = rate_region_at_policy(mod3, "0", uniform2)
    assert r.support(1, 0) == pytest.approx(1.0)
    assert r.support(0, 1) == pytest.approx(1.0)
    assert r.max_sum() == pytest.approx(1.5)
    assert r.contains(0.5, 1.0) and not r.contains(0.8, 0.8)


def test_point_mass_region_is_origin(mod3):
    r = rate_region_at_policy(mod3, "0", Independent(np.array([1.0, 0.0]), np.array([0.0, 1.0])))
    assert r.max_sum() == pytest.approx(0.0, abs=1e-12)


def test_region_shape_mismatch(mod3):
    with pytest.raises(ValueError):
        rate_region_at_policy(mod3, "T", Independent(np.array([0.5, 0.5]), np.array([0.5, 0.5])))


def test_outer_sum_face(mod3, identity):
    for tau in ("T-1", "inf"):
        assert no_coop_outer_region(mod3, tau, FAST, samples=16).max_sum() == pytest.approx(1.5, abs=1e-5)
    r = no_coop_outer_region(identity, "0", FAST, samples=16)
    assert r.support(1, 0) == pytest.approx(1.0, abs=1e-6)
    assert r.support(0, 1) == pytest.approx(0.0, abs=1e-6)


def test_outer_contains_inner(mod3, uniform2):
    outer = no_coop_outer_region(mod3, "0", FAST, samples=16)
    for v in rate_region_at_policy(mod3, "0", uniform2).vertices():
        assert outer.contains(*v, tol=1e-6)


boxes = st.tuples(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.0, 3.0))


@given(boxes, boxes, st.floats(0.0, 1.0))
def test_time_share_sum_rate_is_affine(a, b, mu):
    rA = RateRegion(((1.0, 0.0, a[0]), (0.0, 1.0, a[1]), (1.0, 1.0, a[2])))
    rB = RateRegion(((1.0, 0.0, b[0]), (0.0, 1.0, b[1]), (1.0, 1.0, b[2])))
    c = time_share_combine(rA, rB, mu)
    assert c.max_sum() - rB.max_sum() == pytest.approx(mu * (rA.max_sum() - rB.max_sum()), abs=1e-9)
    for w in ((1, 0), (0, 1), (1, 2), (3, 1)):
        assert c.support(*w) == pytest.approx(mu * rA.support(*w) + (1 - mu) * rB.support(*w), abs=1e-9)


def test_time_share_endpoints():
    rA = RateRegion(((1.0, 0.0, 1.0), (0.0, 1.0, 0.5), (1.0, 1.0, 1.2)))
    rB = RateRegion(((1.0, 0.0, 0.3), (0.0, 1.0, 1.0), (1.0, 1.0, 1.1)))
    np.testing.assert_allclose(sorted(map(tuple, time_share_combine(rA, rB, 1.0).vertices())),
                               sorted(map(tuple, rA.vertices())), atol=1e-12)
    np.testing.assert_allclose(sorted(map(tuple, time_share_combine(rA, rB, 0.0).vertices())),
                               sorted(map(tuple, rB.vertices())), atol=1e-12)
    with pytest.raises(ValueError):
        time_share_combine(rA, rB, 1.5)


def test_region_validation():
    with pytest.raises(ValueError):
        RateRegion(((-1.0, 0.0, 1.0),))
    with pytest.raises(ValueError):
        RateRegion(((1.0, 0.0, 1.0),))  # unbounded in R2
