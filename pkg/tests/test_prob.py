import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coopgain.prob import (
    CondKernel,
    Dist,
    InfiniteDivergenceError,
    JointDist,
    cond_mutual_info,
    entropy,
    expected_state_kl,
    kl_divergence,
    make_rng,
    sample_sequence,
    support,
    typicality_test,
)


def prob_vectors(k_min=1, k_max=6):
    return st.integers(k_min, k_max).flatmap(
        lambda k: arrays(np.float64, k, elements=st.floats(0.0, 1.0)).filter(lambda a: a.sum() > 1e-3)
    ).map(lambda a: a / a.sum())


def joint3(shape=(2, 3, 2)):
    return arrays(np.float64, shape, elements=st.floats(0.0, 1.0)).filter(lambda a: a.sum() > 1e-3).map(
        lambda a: JointDist(("A", "B", "C"), a / a.sum())
    )


# ---- oracles


def test_entropy_values():
    assert entropy([0.5, 0.5]) == pytest.approx(1.0)
    assert entropy([1.0, 0.0]) == 0.0
    assert entropy(np.full(8, 1 / 8)) == pytest.approx(3.0)
    # binary entropy of 0.11, evaluated with 30-digit arithmetic
    assert entropy([0.11, 0.89]) == pytest.approx(0.49991595816, abs=1e-10)


def test_dist_validation():
    with pytest.raises(ValueError):
        Dist([0.5, 0.6])
    with pytest.raises(ValueError):
        Dist([-0.1, 1.1])
    with pytest.raises(ValueError):
        Dist([])


def test_cmi_xor_oracle():
    # Z = X xor Y with X, Y fair and independent: I(X;Y)=0 but I(X;Y|Z)=1
    t = np.zeros((2, 2, 2))
    for x in range(2):
        for y in range(2):
            t[x, y, x ^ y] = 0.25
    j = JointDist(("X", "Y", "Z"), t)
    assert cond_mutual_info(j, ["X"], ["Y"]) == pytest.approx(0.0, abs=1e-15)
    assert cond_mutual_info(j, ["X"], ["Y"], ["Z"]) == pytest.approx(1.0)
    assert cond_mutual_info(j, ["X", "Y"], ["Z"]) == pytest.approx(1.0)


def test_cmi_overlap_rejected():
    j = JointDist(("X", "Y"), np.full((2, 2), 0.25))
    with pytest.raises(ValueError):
        cond_mutual_info(j, ["X"], ["X"])


def test_marginal_respects_requested_order():
    t = np.arange(6, dtype=float).reshape(2, 3)
    j = JointDist(("A", "B"), t / t.sum())
    np.testing.assert_allclose(j.marginal(["B", "A"]).table, (t / t.sum()).T)


def test_kl_values_and_support():
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.5 * math.log2(2) + 0.5 * math.log2(2 / 3))
    assert kl_divergence([0.0, 1.0], [0.5, 0.5]) == pytest.approx(1.0)
    with pytest.raises(InfiniteDivergenceError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])


def test_expected_state_kl_names_state():
    r1 = np.array([[1.0, 0.0], [0.5, 0.5]])
    r0 = np.array([[0.5, 0.5], [1.0, 0.0]])
    with pytest.raises(InfiniteDivergenceError) as e:
        expected_state_kl(r1, r0, [0.5, 0.5])
    assert e.value.state == 1
    # a zero-probability state is skipped
    assert expected_state_kl(r1, r0, [1.0, 0.0]) == pytest.approx(1.0)


def test_cond_kernel_reports_bad_row():
    t = np.array([[0.5, 0.5], [0.4, 0.599]])
    with pytest.raises(ValueError, match="S.*1"):
        CondKernel(("S",), ("X",), t)


def test_support():
    assert support([0.5, 0.0, 0.5]) == (0, 2)
    assert support([1e-12, 1.0 - 1e-12]) == (1,)


# ---- properties


@given(joint3())
def test_cmi_nonnegative_and_chain_rule(j):
    a = cond_mutual_info(j, ["A"], ["B", "C"])
    b = cond_mutual_info(j, ["A"], ["B"]) + cond_mutual_info(j, ["A"], ["C"], ["B"])
    assert a >= 0
    assert a == pytest.approx(b, abs=1e-9)


@given(joint3())
def test_entropy_bounds(j):
    h = j.entropy()
    assert -1e-12 <= h <= math.log2(12) + 1e-12
    assert j.cond_entropy(["A"], ["B"]) <= j.entropy(["A"]) + 1e-12


@given(prob_vectors(2, 6), st.data())
def test_kl_nonnegative(p, data):
    q = data.draw(arrays(np.float64, p.size, elements=st.floats(0.01, 1.0)))
    q = q / q.sum()
    assert kl_divergence(p, q) >= 0
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)


# ---- typicality and sampling


def test_typicality_constant_sequence():
    j = JointDist(("X",), np.array([0.5, 0.5]))
    assert typicality_test({"X": [0, 1, 0, 1]}, j, delta=1e-9)
    jz = JointDist(("X",), np.array([1.0, 0.0]))
    assert not typicality_test({"X": [0, 1]}, jz, delta=10.0)


def test_typicality_group_can_fail_alone():
    # joint stat is exactly H, but the X marginal stat is not
    t = np.array([[0.4, 0.1], [0.1, 0.4]])
    j = JointDist(("X", "Y"), t)
    seqs = {"X": [0, 0, 0, 0], "Y": [0, 0, 1, 1]}
    stat = -np.mean(np.log2(t[[0, 0, 0, 0], [0, 0, 1, 1]]))
    assert abs(stat - j.entropy()) > 0.05
    assert not typicality_test(seqs, j, [("X",)], delta=0.05)


def test_typicality_length_mismatch():
    j = JointDist(("X", "Y"), np.full((2, 2), 0.25))
    with pytest.raises(ValueError):
        typicality_test({"X": [0, 1], "Y": [0]}, j)


def test_make_rng_is_pure():
    a = make_rng(1, 2, 3).random(5)
    b = make_rng(1, 2, 3).random(5)
    c = make_rng(1, 2, 4).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    big = make_rng(2**140 + 7, 1).random(3)
    np.testing.assert_array_equal(big, make_rng(2**140 + 7, 1).random(3))


def test_sample_sequence_frequencies():
    x = sample_sequence([0.2, 0.5, 0.3], 20000, (9,))
    np.testing.assert_allclose(np.bincount(x, minlength=3) / x.size, [0.2, 0.5, 0.3], atol=0.015)


def test_sample_sequence_conditional():
    rows = np.array([[1.0, 0.0], [0.25, 0.75]])
    given = np.array([0, 1] * 5000)
    x = sample_sequence(rows, given.size, (3,), given=given)
    assert np.all(x[given == 0] == 0)
    assert np.mean(x[given == 1]) == pytest.approx(0.75, abs=0.02)
    with pytest.raises(ValueError):
        sample_sequence(rows, 10, (3,))
