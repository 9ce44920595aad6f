import numpy as np
import pytest

from mrmlr.fileio import parse_group_spec
from mrmlr.prox import CoarseStructure
from mrmlr.report import recovery_rates, resolution_report

S = CoarseStructure([[0, 1, 2], [3, 4]], 6)


def test_zero_row_is_irrelevant_and_collapsed_at_zero():
    rep = resolution_report(np.zeros((1, 6)), S)
    assert rep.irrelevant.tolist() == [True]
    assert rep.collapsed.all() and np.all(rep.values == 0)


def test_mixed_resolution_row():
    row = np.array([[1.5, 1.5, 1.5, 0.2, -0.7, 3.0]])
    rep = resolution_report(row, S)
    assert not rep.irrelevant[0]
    assert rep.collapsed[0].tolist() == [True, False]
    assert rep.values[0, 0] == 1.5 and np.isnan(rep.values[0, 1])


def test_fully_constant_row_collapsed_everywhere():
    rep = resolution_report(np.full((1, 6), -0.4), S)
    assert rep.collapsed.all() and not rep.irrelevant[0]


def test_penalized_mask_skips_intercept_and_names():
    beta = np.vstack([np.arange(6.0), np.zeros(6)])
    _, spec = parse_group_spec("categories: a, b, c, d, e, f\nG1: a, b, c\nG2: d, e\n")
    rep = resolution_report(beta, S, spec, penalized=[False, True],
                            row_names=["(intercept)", "gene"])
    assert rep.row_names == ["gene"] and rep.group_names == ["G1", "G2"]
    recs = rep.records()
    assert len(recs) == 2 and recs[0]["status"] == "irrelevant"
    assert rep.summary() == {"predictors": 1, "active": 0, "irrelevant": 1,
                             "collapsed_pairs_active": 0, "fine_pairs_active": 0}


def test_shape_and_name_errors():
    with pytest.raises(ValueError):
        resolution_report(np.zeros((2, 5)), S)
    with pytest.raises(ValueError):
        resolution_report(np.zeros((2, 6)), S, row_names=["a"])


def test_relabeling_categories_relabels_report():
    rng = np.random.default_rng(0)
    beta = rng.normal(size=(4, 6))
    beta[1, :3] = 0.25
    beta[2] = 0.0
    perm = np.array([5, 3, 4, 0, 2, 1])  # new column c holds old column perm[c]
    inv = np.argsort(perm)
    S2 = CoarseStructure([sorted(inv[g].tolist()) for g in S.groups], 6)
    a = resolution_report(beta, S)
    b = resolution_report(beta[:, perm], S2)
    assert np.array_equal(a.collapsed, b.collapsed)
    assert np.array_equal(a.irrelevant, b.irrelevant)
    np.testing.assert_array_equal(a.values, b.values)


def test_recovery_rates():
    truth = np.array([[0.0] * 6, [1.0, 1.0, 1.0, 2.0, 2.0, 3.0], [1, 2, 3, 4, 5, 6.0]])
    est = np.array([[0.0] * 6, [1.0, 1.0, 1.1, 2.0, 2.0, 3.0], [0.0] * 6])
    rep = resolution_report(est, S)
    r = recovery_rates(rep, truth, S)
    assert r["zero_rows"] == 1.0
    # true collapsed pairs: row 0 both groups, row 1 both groups; recovered 3 of 4
    assert r["collapsed_pairs"] == 0.75
    assert r["collapsed_pairs_relevant"] == 0.5
    none = recovery_rates(resolution_report(est[2:], S), truth[2:], S)
    assert np.isnan(none["zero_rows"])
