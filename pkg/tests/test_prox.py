import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrmlr.exceptions import ConvergenceWarning
from mrmlr.prox import (
    CoarseStructure,
    collapse_groups,
    dual_objective,
    group_soft_threshold,
    multires_penalty,
    prox_composite,
    prox_multires_nonoverlapping,
    prox_multires_overlapping,
    prox_rows,
    soft_threshold_l1,
)
from oracles import numeric_prox, prox_objective, random_structure, scalar_soft_threshold


def _struct(groups, K, weights=None):
    return CoarseStructure(groups, K, weights)


# ----------------------------------------------------------- structure

def test_structure_validation():
    with pytest.raises(ValueError):
        _struct([[0]], 3)
    with pytest.raises(ValueError):
        _struct([[0, 0]], 3)
    with pytest.raises(ValueError):
        _struct([[0, 3]], 3)
    with pytest.raises(ValueError):
        _struct([[0, 1]], 3, [0.0])
    with pytest.raises(ValueError):
        _struct([[0, 1]], 3, [1.0, 2.0])
    S = _struct([[0, 1], [1, 2]], 4)
    assert not S.is_disjoint
    assert S.covered.tolist() == [True, True, True, False]
    assert CoarseStructure.consecutive(4, 3).is_disjoint


def test_empty_structure_is_valid():
    S = _struct([], 5)
    assert S.n_groups == 0
    eta = np.arange(5.0)
    assert np.array_equal(prox_composite(eta, 0.0, 1.0, S), eta)


# ------------------------------------------------------ closed form

def test_closed_form_constant_groups_unchanged():
    S = CoarseStructure.consecutive(2, 3)
    eta = np.array([1.5, 1.5, 1.5, -2.0, -2.0, -2.0])
    assert np.array_equal(prox_multires_nonoverlapping(eta, 0.7, S), eta)


def test_closed_form_collapse_example():
    S = _struct([[0, 1]], 2)
    out = prox_multires_nonoverlapping(np.array([1.0, 1.1]), 0.1, S)
    assert out[0] == out[1]
    np.testing.assert_allclose(out, [1.05, 1.05], atol=1e-15)
    ref = numeric_prox(np.array([1.0, 1.1]), 0.0, 0.1, [[0, 1]])
    np.testing.assert_allclose(out, ref, atol=1e-8)


def test_closed_form_shrink_example():
    S = _struct([[0, 1]], 2)
    out = prox_multires_nonoverlapping(np.array([0.0, 2.0]), 0.5, S)
    np.testing.assert_allclose(out, [0.35355339059327373, 1.6464466094067263], atol=1e-12)
    ref = numeric_prox(np.array([0.0, 2.0]), 0.0, 0.5, [[0, 1]])
    np.testing.assert_allclose(out, ref, atol=1e-8)


def test_closed_form_rejects_overlap():
    with pytest.raises(ValueError):
        prox_multires_nonoverlapping(np.zeros(3), 0.1, _struct([[0, 1], [1, 2]], 3))


def test_closed_form_passes_uncovered_components():
    S = _struct([[0, 1]], 4)
    eta = np.array([0.0, 1.0, 5.0, -3.0])
    out = prox_multires_nonoverlapping(eta, 0.2, S)
    assert out[2] == 5.0 and out[3] == -3.0


def test_closed_form_branch_boundaries():
    # centered norm exactly at the radius collapses; just above shrinks
    S = _struct([[0, 1]], 2)
    eta = np.array([-1.0, 1.0])
    radius = float(np.linalg.norm(eta - eta.mean()))
    at = prox_multires_nonoverlapping(eta, radius, S)
    assert at[0] == at[1] == 0.0
    above = prox_multires_nonoverlapping(eta, radius * (1 - 1e-12), S)
    assert above[0] != above[1]
    assert abs(above[1]) < 1e-11


# ------------------------------------------------------------- BCD

def test_bcd_zero_lambda_is_identity():
    S = _struct([[0, 1], [1, 2]], 3)
    eta = np.array([1.0, 0.0, -1.0])
    nu, Z = prox_multires_overlapping(eta, 0.0, S)
    assert np.array_equal(nu, eta)
    assert np.all(Z == 0)


def test_bcd_matches_closed_form_on_disjoint_groups():
    rng = np.random.default_rng(0)
    S = _struct([[0, 2], [1, 3, 4]], 6, [1.0, 1.7])
    for _ in range(50):
        eta = rng.normal(size=6) * 2
        lam = rng.uniform(0, 2)
        a = prox_multires_nonoverlapping(eta, lam, S)
        b, _ = prox_multires_overlapping(eta, lam, S)
        np.testing.assert_allclose(b, a, atol=1e-8)


def test_bcd_overlap_example_against_numeric_oracle():
    S = _struct([[0, 1], [1, 2]], 3)
    eta = np.array([1.0, 0.0, -1.0])
    nu, _ = prox_multires_overlapping(eta, 0.2, S)
    ref = numeric_prox(eta, 0.0, 0.2, [[0, 1], [1, 2]])
    np.testing.assert_allclose(nu, ref, atol=1e-6)


def test_bcd_duals_feasible_and_objective_monotone():
    S = _struct([[0, 1, 2], [2, 3], [1, 3, 4]], 5, [1.0, 0.5, 2.0])
    eta = np.array([2.0, -1.0, 0.3, 1.2, -0.4])
    lam = 0.4
    history = []

    def cb(sweep, Z):
        for l, (g, w) in enumerate(zip(S.groups, S.weights)):
            assert np.linalg.norm(Z[:, l]) <= w * lam + 1e-12
            off = np.setdiff1d(np.arange(5), g)
            assert np.all(Z[off, l] == 0)
        history.append(dual_objective(eta, Z, S))

    prox_multires_overlapping(eta, lam, S, callback=cb)
    assert len(history) >= 2
    assert np.all(np.diff(history) <= 1e-12)


def test_bcd_warns_when_sweep_cap_hit():
    S = _struct([[0, 1, 2], [1, 2, 3], [0, 3]], 4)
    eta = np.array([3.0, -1.0, 2.0, -2.5])
    with pytest.warns(ConvergenceWarning):
        prox_multires_overlapping(eta, 0.6, S, max_sweeps=1)


def test_bcd_warm_start_gives_same_answer():
    S = _struct([[0, 1, 2], [2, 3, 4]], 5)
    eta = np.array([1.0, -2.0, 0.5, 3.0, 0.0])
    nu, Z = prox_multires_overlapping(eta, 0.3, S)
    nu2, _ = prox_multires_overlapping(eta, 0.3, S, zeta0=Z * 5.0)
    np.testing.assert_allclose(nu2, nu, atol=1e-9)


def test_overlapping_collapse_is_exact():
    S = _struct([[0, 1], [1, 2]], 3)
    nu, _ = prox_multires_overlapping(np.array([1.0, 1.05, 0.98]), 1.0, S)
    assert nu[0] == nu[1] == nu[2]


# ---------------------------------------------------------- composite

def test_composite_zero_branch():
    S = _struct([[0, 1]], 3)
    eta = np.array([0.3, -0.1, 0.2])
    assert np.all(prox_composite(eta, 10.0, 0.1, S) == 0)


def test_composite_gamma_zero_equals_multires_prox():
    S = _struct([[0, 1], [1, 2]], 3)
    eta = np.array([1.0, 0.0, -1.0])
    nu, _ = prox_multires_overlapping(eta, 0.2, S)
    np.testing.assert_allclose(prox_composite(eta, 0.0, 0.2, S), nu, atol=1e-12)


def test_composite_plain_group_soft_threshold():
    S = _struct([], 2)
    np.testing.assert_allclose(prox_composite(np.array([3.0, 4.0]), 0.5, 0.0, S), [2.7, 3.6],
                               atol=1e-15)


def test_screening_skips_small_rows():
    S = _struct([[0, 1]], 2)
    out, _ = prox_rows(np.array([[0.1, 0.1], [3.0, 4.0]]), 0.5, 0.1, S)
    assert np.all(out[0] == 0) and np.all(out[1] != 0)


def test_group_soft_threshold_boundary():
    row = np.array([3.0, 4.0])
    assert np.all(group_soft_threshold(row, 5.0) == 0)
    assert np.all(group_soft_threshold(row, 5.0 * (1 - 1e-12)) != 0)


# -------------------------------------------------------------- L1

def test_soft_threshold_examples():
    eta = np.array([2.0, -0.3])
    assert np.array_equal(soft_threshold_l1(eta, 0.0), eta)
    np.testing.assert_allclose(soft_threshold_l1(eta, 0.5), [1.5, 0.0])
    with pytest.raises(ValueError):
        soft_threshold_l1(eta, -1.0)


def test_soft_threshold_matches_scalar_minimizer():
    rng = np.random.default_rng(3)
    for _ in range(20):
        eta = rng.normal(size=6) * 2
        t = rng.uniform(0, 2)
        np.testing.assert_allclose(soft_threshold_l1(eta, t), scalar_soft_threshold(eta, t),
                                   atol=1e-8)


# ------------------------------------------------------- helpers

def test_penalty_and_collapse_helpers():
    S = _struct([[0, 1], [2, 3]], 4, [1.0, 2.0])
    row = np.array([0.0, 2.0, 1.0, 1.0])
    assert multires_penalty(row, S) == pytest.approx(np.sqrt(2.0))
    out = collapse_groups(row, S)
    assert out[0] == out[1] == 1.0 and out[2] == out[3] == 1.0


# ------------------------------------------------------ properties

prox_case = st.tuples(
    st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(0, 4), st.booleans(),
    st.floats(0, 2), st.floats(0, 2))


def _random_case(seed, K, L, disjoint):
    rng = np.random.default_rng(seed)
    S = _struct(random_structure(rng, K, L, disjoint), K)
    return rng, S


@settings(max_examples=80, deadline=None)
@given(prox_case)
def test_prox_nonexpansive(case):
    seed, K, L, disjoint, g, lam = case
    rng, S = _random_case(seed, K, L, disjoint)
    e1, e2 = rng.normal(size=K) * 2, rng.normal(size=K) * 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        d = np.linalg.norm(prox_composite(e1, g, lam, S) - prox_composite(e2, g, lam, S))
        dm = np.linalg.norm(prox_multires_overlapping(e1, lam, S)[0]
                            - prox_multires_overlapping(e2, lam, S)[0])
    bound = np.linalg.norm(e1 - e2) + 1e-7
    assert d <= bound and dm <= bound
    assert np.linalg.norm(soft_threshold_l1(e1, g) - soft_threshold_l1(e2, g)) <= bound
    if S.is_disjoint:
        dc = np.linalg.norm(prox_multires_nonoverlapping(e1, lam, S)
                            - prox_multires_nonoverlapping(e2, lam, S))
        assert dc <= bound


@settings(max_examples=80, deadline=None)
@given(prox_case)
def test_prox_optimality_against_perturbations(case):
    # the prox output must beat nearby points of the prox objective
    seed, K, L, disjoint, g, lam = case
    rng, S = _random_case(seed, K, L, disjoint)
    eta = rng.normal(size=K) * 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        nu = prox_composite(eta, g, lam, S)
    groups = [list(x) for x in S.groups]
    f0 = prox_objective(nu, eta, g, lam, groups, S.weights)
    for _ in range(20):
        cand = nu + rng.normal(size=K) * 10 ** rng.uniform(-4, 0)
        assert f0 <= prox_objective(cand, eta, g, lam, groups, S.weights) + 1e-9


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(1, 4), st.floats(0.01, 2))
def test_closed_form_groups_exactly_constant_or_shrunk(seed, K, L, lam):
    rng, S = _random_case(seed, K, L, True)
    eta = rng.normal(size=K) * 2
    out = prox_multires_nonoverlapping(eta, lam, S)
    for g in S.groups:
        sub, orig = out[g], eta[g]
        if np.all(sub == sub[0]):
            continue
        c_new = np.linalg.norm(sub - sub.mean())
        c_old = np.linalg.norm(orig - orig.mean())
        assert c_new < c_old
        assert sub.mean() == pytest.approx(orig.mean(), abs=1e-12)
