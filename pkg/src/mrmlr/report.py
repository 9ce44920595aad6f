"""Effect-resolution summaries of fitted coefficient matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ResolutionReport", "resolution_report", "recovery_rates"]


@dataclass
class ResolutionReport:
    """Per-predictor resolution of a coefficient matrix.

    Attributes
    ----------
    rows : ndarray of int
        Coefficient rows described (the penalized ones).
    row_names, group_names : list of str
    irrelevant : (m,) bool
        Row is exactly zero.
    collapsed : (m, L) bool
        Row is exactly constant within the group.
    values : (m, L) float
        The common value of collapsed pairs, ``nan`` for fine ones.
    """

    rows: np.ndarray
    row_names: list
    group_names: list
    irrelevant: np.ndarray
    collapsed: np.ndarray
    values: np.ndarray

    @property
    def active(self):
        return ~self.irrelevant

    def records(self):
        """One record per (row, group) pair, for tabular output."""
        out = []
        for r, name in enumerate(self.row_names):
            status = "irrelevant" if self.irrelevant[r] else "active"
            for l, gname in enumerate(self.group_names):
                out.append({
                    "predictor": name,
                    "status": status,
                    "group": gname,
                    "resolution": "collapsed" if self.collapsed[r, l] else "fine",
                    "value": float(self.values[r, l]),
                })
        return out

    def summary(self):
        n_active = int(self.active.sum())
        fine = self.collapsed[self.active]
        return {
            "predictors": len(self.row_names),
            "active": n_active,
            "irrelevant": len(self.row_names) - n_active,
            "collapsed_pairs_active": int(fine.sum()),
            "fine_pairs_active": int(fine.size - fine.sum()),
        }


def resolution_report(beta, structure, names=None, penalized=None, row_names=None):
    """Classify each penalized row and each (row, coarse category) pair.

    A row is irrelevant when every entry is exactly zero. A pair is collapsed
    when the row's entries over the group are exactly equal; equality is
    exact because the prox writes collapsed groups as one stored value.

    Parameters
    ----------
    beta : (p, K) array
    structure : CoarseStructure
    names : GroupSpec, optional
        Supplies group names; defaults to ``A1, A2, ...``.
    penalized : boolean mask, optional
        Rows to describe; all rows by default. Pass the fit's mask to leave
        out the intercept.
    row_names : list of str, optional
        Names of all ``p`` rows; defaults to ``x0, x1, ...``.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 2 or beta.shape[1] != structure.n_categories:
        raise ValueError("beta must have one column per fine category")
    p = beta.shape[0]
    rows = np.arange(p) if penalized is None else np.flatnonzero(np.asarray(penalized, bool))
    all_names = list(row_names) if row_names is not None else [f"x{j}" for j in range(p)]
    if len(all_names) != p:
        raise ValueError("need one name per coefficient row")
    if names is not None and getattr(names, "group_names", None):
        group_names = list(names.group_names)
    else:
        group_names = [f"A{l + 1}" for l in range(structure.n_groups)]
    B = beta[rows]
    L = structure.n_groups
    collapsed = np.zeros((rows.size, L), dtype=bool)
    values = np.full((rows.size, L), np.nan)
    for l, g in enumerate(structure.groups):
        sub = B[:, g]
        c = np.all(sub == sub[:, :1], axis=1)
        collapsed[:, l] = c
        values[c, l] = sub[c, 0]
    irrelevant = np.all(B == 0, axis=1)
    return ResolutionReport(rows, [all_names[j] for j in rows], group_names, irrelevant,
                            collapsed, values)


def recovery_rates(report, beta_star, structure):
    """Agreement of a report with the true coefficients.

    Returns a dict with ``zero_rows`` (share of truly zero rows reported
    irrelevant), ``collapsed_pairs`` (share of truly constant (row, group)
    pairs reported collapsed, zero rows included) and
    ``collapsed_pairs_relevant`` (the same restricted to truly nonzero rows).
    Rates with an empty reference set are ``nan``.
    """
    truth = resolution_report(beta_star, structure, row_names=[str(j) for j in
                                                                range(beta_star.shape[0])])
    sel = report.rows
    t_irr = truth.irrelevant[sel]
    t_col = truth.collapsed[sel]

    def rate(hit, ref):
        return float(hit[ref].mean()) if ref.any() else float("nan")

    return {
        "zero_rows": rate(report.irrelevant, t_irr),
        "collapsed_pairs": rate(report.collapsed, t_col),
        "collapsed_pairs_relevant": rate(report.collapsed, t_col & ~t_irr[:, None]),
    }
