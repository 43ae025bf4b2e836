import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopgain.channel import (
    CondIndependent,
    Costs,
    Independent,
    JointConditional,
    ShannonStrategy,
    StateMac,
    Tau,
    expected_cost,
    fold_state_into_output,
    folded_output_index,
    induced_joint,
    lift_shannon_strategy,
    make_builtin,
    marginalize_state,
    strategy_maps,
    validate_policy,
)
from coopgain.prob import cond_mutual_info


@pytest.mark.parametrize(
    "text, tag",
    [("0", Tau.NONE), ("T-1", Tau.STRICTLY_CAUSAL), ("T", Tau.CAUSAL), ("inf", Tau.NONCAUSAL),
     ("(inf,s)", Tau.NONCAUSAL_STATE_COOP), ("∞", Tau.NONCAUSAL), ("inf, s", Tau.NONCAUSAL_STATE_COOP)],
)
def test_tau_parse(text, tag):
    assert Tau.parse(text) is tag


def test_tau_parse_rejects_garbage():
    with pytest.raises(ValueError):
        Tau.parse("sometimes")


def test_state_visibility():
    assert not Tau.NONE.encoders_see_state
    assert not Tau.STRICTLY_CAUSAL.encoders_see_state
    assert Tau.CAUSAL.encoders_see_state and Tau.NONCAUSAL_STATE_COOP.encoders_see_state


def test_mod3_kernel_is_the_adder(mod3):
    assert mod3.sizes == (3, 1, 2, 2, 3)
    for s, x1, x2 in itertools.product(range(3), range(2), range(2)):
        assert mod3.kernel[s, 0, x1, x2, (x1 + x2 + s) % 3] == 1.0


def test_statemac_rejects_bad_row():
    w = np.zeros((1, 1, 2, 1, 2))
    w[0, 0, 0, 0] = [0.5, 0.5]
    w[0, 0, 1, 0] = [0.5, 0.499]
    with pytest.raises(ValueError, match="X1.*1"):
        StateMac(np.ones((1, 1)), w)


def test_statemac_alphabet_cap():
    w = np.zeros((1, 1, 17, 1, 1))
    w[..., 0] = 1.0
    with pytest.raises(ValueError, match="16"):
        StateMac(np.ones((1, 1)), w)


def test_statemac_is_immutable(mod3):
    with pytest.raises(ValueError):
        mod3.kernel[0, 0, 0, 0, 0] = 0.5


def test_random_builtin_is_seeded():
    a = make_builtin("random_seeded", seed=3)
    b = make_builtin("random_seeded", seed=3)
    c = make_builtin("random_seeded", seed=4)
    assert a.equals(b) and not a.equals(c)
    with pytest.raises(ValueError):
        make_builtin("nope")


def test_policy_conditionals(mod3):
    ind = Independent(np.array([0.25, 0.75]), np.array([0.5, 0.5]))
    pi = ind.conditional(mod3)
    assert pi.shape == (3, 1, 2, 2)
    np.testing.assert_allclose(pi[1, 0], np.outer([0.25, 0.75], [0.5, 0.5]))
    ci = CondIndependent(np.array([[1, 0], [0, 1], [0.5, 0.5]]), np.array([[0.2, 0.8]]))
    np.testing.assert_allclose(ci.conditional(mod3)[1, 0], [[0, 0], [0.2, 0.8]])


def test_shannon_strategy_conditional(mod3):
    # u1 = 0: x1 = 0 always; u1 = 1: x1 = 1 iff s1 = 2
    f1 = np.array([[0, 0, 0], [0, 0, 1]])
    f2 = np.array([[1]])
    pol = ShannonStrategy(np.array([[0.4], [0.6]]), f1, f2)
    pi = pol.conditional(mod3)
    np.testing.assert_allclose(pi[2, 0], [[0, 0.4], [0, 0.6]])
    np.testing.assert_allclose(pi[0, 0], [[0, 1.0], [0, 0]])
    j = induced_joint(mod3, pol)
    assert j.axes == ("S1", "S2", "U1", "U2", "X1", "X2", "Y")
    assert j.table.sum() == pytest.approx(1.0)


def test_validate_policy_errors(mod3):
    with pytest.raises(ValueError):
        validate_policy(Independent(np.array([0.5, 0.5, 0.0]), np.array([0.5, 0.5])), mod3)
    with pytest.raises(ValueError):
        validate_policy(JointConditional(np.full((3, 1, 2, 2), 0.3)), mod3)
    with pytest.raises(ValueError):
        validate_policy(ShannonStrategy(np.ones((1, 1)), np.array([[0, 0, 2]]), np.array([[0]])), mod3)


def test_fold_state_into_output(mod3):
    f = fold_state_into_output(mod3)
    assert f.sizes == (1, 1, 2, 2, 9)
    # q((s,y)|x) = p(s) 1[y = x1+x2+s]
    for s, x1, x2 in itertools.product(range(3), range(2), range(2)):
        assert f.kernel[0, 0, x1, x2, folded_output_index(mod3, s, 0, (x1 + x2 + s) % 3)] == pytest.approx(1 / 3)
    # I(X1,X2;Y|S) on the original equals I(X1,X2;(S,Y)) on the folded channel
    pol = Independent(np.array([0.3, 0.7]), np.array([0.6, 0.4]))
    a = cond_mutual_info(induced_joint(mod3, pol), ["X1", "X2"], ["Y"], ["S1", "S2"])
    b = cond_mutual_info(induced_joint(f, pol), ["X1", "X2"], ["Y"])
    assert a == pytest.approx(b, abs=1e-12)


def test_marginalize_state_uniformizes_mod3(mod3):
    m = marginalize_state(mod3)
    np.testing.assert_allclose(m.kernel, 1 / 3)


def test_strategy_maps():
    f = strategy_maps(2, 3)
    assert f.shape == (8, 3)
    assert len({tuple(r) for r in f}) == 8


@given(st.integers(0, 50))
def test_lift_matches_strategy_policy(seed):
    mac = make_builtin("random_seeded", sizes=(2, 2, 2, 2, 3), seed=seed)
    f1, f2 = strategy_maps(2, 2), strategy_maps(2, 2)
    rng = np.random.default_rng(seed)
    pu = rng.dirichlet(np.ones(16)).reshape(4, 4)
    lifted = lift_shannon_strategy(mac, f1, f2)
    a = cond_mutual_info(induced_joint(mac, ShannonStrategy(pu, f1, f2)), ["U1", "U2"], ["Y"], ["S1", "S2"])
    b = cond_mutual_info(induced_joint(lifted, JointConditional(np.broadcast_to(pu, (2, 2, 4, 4)).copy())),
                         ["X1", "X2"], ["Y"], ["S1", "S2"])
    assert a == pytest.approx(b, abs=1e-10)


def test_lift_rejects_large_u(mod3):
    with pytest.raises(ValueError, match="cap"):
        lift_shannon_strategy(mod3, np.zeros((17, 3), int), np.zeros((1, 1), int))


def test_expected_cost(mod3):
    mac = StateMac(mod3.state_law, mod3.kernel, Costs(np.array([0.0, 1.0]), np.array([0.0, 2.0]), 0.5, 0.5))
    e1, e2, ok = expected_cost(mac, Independent(np.array([0.5, 0.5]), np.array([0.75, 0.25])))
    assert (e1, e2, ok) == (pytest.approx(0.5), pytest.approx(0.5), True)
    assert not expected_cost(mac, Independent(np.array([0.4, 0.6]), np.array([1.0, 0.0])))[2]
    with pytest.raises(ValueError):
        expected_cost(mod3, Independent(np.array([0.5, 0.5]), np.array([0.5, 0.5])))
