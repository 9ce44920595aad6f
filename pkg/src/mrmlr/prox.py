"""Proximal operators for the group lasso plus multiresolution penalty.

For one coefficient row ``eta`` (length ``K``) the operator solves

    min_nu  0.5 * ||nu - eta||^2 + gamma_t * ||nu||_2
            + lambda_t * sum_l w_l * ||nu[A_l] - mean(nu[A_l])||_2

The ``gamma_t`` term is handled by a single group soft-threshold applied to
the solution with ``gamma_t = 0``. That inner problem has a closed form when
the coarse groups ``A_l`` are disjoint; otherwise it is solved through its
dual by cycling over the groups, each block update being a projection onto a
Euclidean ball.

All operators accept either one row of shape ``(K,)`` or a stack of rows of
shape ``(m, K)`` and work row-wise. Groups that end up collapsed are written
as a single stored mean, so "constant within a group" can be tested with
exact equality downstream.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import ConvergenceWarning

__all__ = [
    "CoarseStructure",
    "BCDInfo",
    "prox_multires_nonoverlapping",
    "prox_multires_overlapping",
    "prox_composite",
    "prox_rows",
    "soft_threshold_l1",
    "group_soft_threshold",
    "multires_penalty",
    "collapse_groups",
    "dual_objective",
]


@dataclass(frozen=True, eq=False)
class CoarseStructure:
    """Coarse categories ``A_1, ..., A_L`` over ``K`` fine categories.

    Parameters
    ----------
    groups : sequence of sequences of int
        Zero-based category indices of each coarse category. Every group
        needs at least two distinct members; groups may overlap.
    n_categories : int
        Number of fine categories ``K``.
    weights : sequence of float, optional
        Positive per-group weights ``w_l``; all ones by default.
    """

    groups: tuple
    n_categories: int
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        K = int(self.n_categories)
        if K < 2:
            raise ValueError("need at least two categories")
        groups = []
        for l, g in enumerate(self.groups):
            idx = np.asarray(list(g), dtype=int)
            if idx.ndim != 1 or idx.size < 2:
                raise ValueError(f"group {l} must contain at least two categories")
            if np.unique(idx).size != idx.size:
                raise ValueError(f"group {l} repeats a category")
            if idx.min() < 0 or idx.max() >= K:
                raise ValueError(f"group {l} has an index outside 0..{K - 1}")
            idx.setflags(write=False)
            groups.append(idx)
        if self.weights is None:
            weights = np.ones(len(groups))
        else:
            weights = np.asarray(self.weights, dtype=float).reshape(-1)
            if weights.size != len(groups):
                raise ValueError("need one weight per group")
            if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
                raise ValueError("group weights must be positive")
        weights = weights.copy()
        weights.setflags(write=False)
        object.__setattr__(self, "groups", tuple(groups))
        object.__setattr__(self, "n_categories", K)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def consecutive(cls, n_groups, size):
        """Disjoint groups ``{0..size-1}, {size..2*size-1}, ...``."""
        K = n_groups * size
        return cls([range(l * size, (l + 1) * size) for l in range(n_groups)], K)

    @property
    def n_groups(self):
        return len(self.groups)

    @property
    def sizes(self):
        return np.array([g.size for g in self.groups], dtype=int)

    @cached_property
    def is_disjoint(self):
        seen = np.zeros(self.n_categories, dtype=int)
        for g in self.groups:
            seen[g] += 1
        return bool(np.all(seen <= 1))

    @property
    def covered(self):
        mask = np.zeros(self.n_categories, dtype=bool)
        for g in self.groups:
            mask[g] = True
        return mask

    @cached_property
    def _buckets(self):
        # groups of equal size stacked as (n_l, a) index arrays for batched work
        by_size = {}
        for l, g in enumerate(self.groups):
            by_size.setdefault(g.size, []).append(l)
        return [(np.stack([self.groups[l] for l in ls]), self.weights[ls])
                for _, ls in sorted(by_size.items())]

    def subset(self, keep):
        """Structure restricted to the groups whose indices are in ``keep``."""
        keep = list(keep)
        return CoarseStructure([self.groups[l] for l in keep], self.n_categories,
                               self.weights[keep] if keep else None)

    def dense_dual(self, blocks):
        """Pack per-group dual blocks of shape ``(a_l,)`` into a ``(K, L)`` matrix."""
        Z = np.zeros((self.n_categories, self.n_groups))
        for l, (g, b) in enumerate(zip(self.groups, blocks)):
            Z[g, l] = b
        return Z

    def __repr__(self):
        groups = [g.tolist() for g in self.groups]
        return f"CoarseStructure(groups={groups}, n_categories={self.n_categories}, weights={self.weights.tolist()})"


@dataclass
class BCDInfo:
    sweeps: int
    converged: bool
    max_change: float


def _as_rows(eta):
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1:
        return eta[None, :], True
    if eta.ndim != 2:
        raise ValueError("eta must be a vector or a stack of row vectors")
    return eta, False


def _check_K(E, structure):
    if E.shape[1] != structure.n_categories:
        raise ValueError(
            f"eta has {E.shape[1]} entries but the structure has {structure.n_categories} categories"
        )


def _group_means(sub):
    # rows already constant keep their value bit-for-bit; works on (..., a)
    mean = sub.mean(axis=-1)
    const = np.all(sub == sub[..., :1], axis=-1)
    return np.where(const, sub[..., 0], mean)


def _centered(E, idx):
    """Group blocks ``(m, n_l, a)``, their means ``(m, n_l)`` and centered norms."""
    sub = E[:, idx]
    mean = _group_means(sub)
    norm = np.linalg.norm(sub - mean[..., None], axis=-1)
    return sub, mean, norm


def soft_threshold_l1(eta, t):
    """Elementwise soft-threshold ``sign(eta) * max(|eta| - t, 0)``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    eta = np.asarray(eta, dtype=float)
    return np.sign(eta) * np.maximum(np.abs(eta) - t, 0.0)


def group_soft_threshold(rows, t):
    """Row-wise ``max(0, 1 - t / ||row||) * row``; rows with norm ``<= t`` become exactly zero."""
    E, single = _as_rows(rows)
    norms = np.linalg.norm(E, axis=1)
    out = np.zeros_like(E)
    keep = norms > t
    out[keep] = E[keep] * (1.0 - t / norms[keep])[:, None]
    return out[0] if single else out


def prox_multires_nonoverlapping(eta, lambda_tilde, structure):
    """Closed-form prox of the multiresolution penalty for disjoint groups.

    Each group is either replaced by its mean (when its centered norm is at
    most ``w_l * lambda_tilde``) or moved toward its mean by the convex
    combination ``(1 - t) * eta[A] + t * mean`` with
    ``t = w_l * lambda_tilde / ||eta[A] - mean||``. Categories outside every
    group pass through unchanged.
    """
    if lambda_tilde < 0:
        raise ValueError("lambda_tilde must be nonnegative")
    if not structure.is_disjoint:
        raise ValueError("prox_multires_nonoverlapping requires pairwise disjoint groups")
    E, single = _as_rows(eta)
    _check_K(E, structure)
    out = E.copy()
    for idx, w in structure._buckets:
        sub, mean, norm = _centered(E, idx)
        radius = np.broadcast_to(w * lambda_tilde, norm.shape)
        collapse = norm <= radius
        block = np.empty_like(sub)
        block[collapse] = mean[collapse][:, None]
        live = ~collapse
        if np.any(live):
            t = radius[live] / norm[live]
            block[live] = (1.0 - t)[:, None] * sub[live] + (t * mean[live])[:, None]
        out[:, idx] = block
    return out[0] if single else out


def _components(groups, active):
    """Connected components (sorted index arrays) of the overlap graph of active groups."""
    comps = []
    for l in np.flatnonzero(active):
        members = set(groups[l].tolist())
        merged = [c for c in comps if c & members]
        for c in merged:
            comps.remove(c)
            members |= c
        comps.append(members)
    return [np.array(sorted(c)) for c in comps]


def collapse_groups(rows, structure, active=None):
    """Set the entries of every active group to a common value.

    Overlapping active groups are merged first, so their union receives a
    single mean. ``active`` is an ``(m, L)`` boolean mask (all groups when
    omitted).
    """
    E, single = _as_rows(rows)
    out = E.copy()
    L = structure.n_groups
    if L == 0:
        return out[0] if single else out
    if active is None:
        active = np.ones((E.shape[0], L), dtype=bool)
    active = np.atleast_2d(active)
    patterns, inverse = np.unique(active, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for k, pattern in enumerate(patterns):
        if not pattern.any():
            continue
        rows_k = np.flatnonzero(inverse == k)
        for comp in _components(structure.groups, pattern):
            sub = out[np.ix_(rows_k, comp)]
            out[np.ix_(rows_k, comp)] = _group_means(sub)[:, None]
    return out[0] if single else out


def dual_objective(eta, zeta, structure):
    """``||eta - sum_l M(A_l) zeta[:, l]||^2`` for a ``(K, L)`` dual matrix."""
    eta = np.asarray(eta, dtype=float)
    r = eta.copy()
    for l, g in enumerate(structure.groups):
        z = zeta[g, l]
        r[g] -= z - z.mean()
    return float(r @ r)


def _run_bcd(E, lambda_tilde, structure, tol, max_sweeps, blocks=None, on_sweep=None):
    """Block coordinate descent on the dual, vectorized over rows.

    Returns the primal residual rows, the dual blocks, the per-(row, group)
    "clipped" flags of the last sweep and a :class:`BCDInfo`.
    """
    m = E.shape[0]
    groups, weights = structure.groups, structure.weights
    if blocks is None:
        blocks = [np.zeros((m, g.size)) for g in groups]
    else:
        # warm blocks: center and pull back inside the current balls
        fixed = []
        for g, w, b in zip(groups, weights, blocks):
            b = np.asarray(b, dtype=float)
            b = b - b.mean(axis=1, keepdims=True)
            nb = np.linalg.norm(b, axis=1)
            radius = w * lambda_tilde
            scale = np.where(nb > radius, radius / np.where(nb > 0, nb, 1.0), 1.0)
            fixed.append(b * scale[:, None])
        blocks = fixed
    r = E.copy()
    for g, b in zip(groups, blocks):
        r[:, g] -= b
    clipped = np.zeros((m, len(groups)), dtype=bool)
    max_change = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_change = 0.0
        for l, (g, w) in enumerate(zip(groups, weights)):
            old = blocks[l]
            tilde = r[:, g] + old
            c = tilde - tilde.mean(axis=1, keepdims=True)
            nc = np.linalg.norm(c, axis=1)
            radius = w * lambda_tilde
            clip = nc > radius
            new = c.copy()
            if np.any(clip):
                new[clip] *= (radius / nc[clip])[:, None]
            clipped[:, l] = clip
            if new.size:
                max_change = max(max_change, float(np.max(np.abs(new - old))))
            r[:, g] = tilde - new
            blocks[l] = new
        if on_sweep is not None:
            on_sweep(sweeps, blocks)
        if max_change < tol:
            return r, blocks, clipped, BCDInfo(sweeps, True, max_change)
    return r, blocks, clipped, BCDInfo(sweeps, False, max_change)


def prox_multires_overlapping(eta, lambda_tilde, structure, tol=1e-10, max_sweeps=500,
                              zeta0=None, callback=None, return_info=False):
    """Prox of the multiresolution penalty for arbitrary (overlapping) groups.

    Solves the dual problem

        min_zeta ||eta - sum_l M(A_l) zeta[:, l]||^2,  ||zeta[:, l]|| <= w_l * lambda_tilde,

    (``zeta[k, l] = 0`` off ``A_l``) by cycling over ``l = 0..L-1`` in order.
    Sweeps stop once the largest entrywise change in a sweep drops below
    ``tol``; a :class:`ConvergenceWarning` is issued when ``max_sweeps`` is
    reached first. Groups whose dual block is strictly inside its ball at the
    final sweep are collapsed exactly to their (component) mean.

    Parameters
    ----------
    eta : array of shape (K,) or (m, K)
    lambda_tilde : float
    structure : CoarseStructure
    tol : float
    max_sweeps : int
    zeta0 : array of shape (K, L) or (m, K, L), optional
        Warm-start duals; they are projected onto the feasible set first.
    callback : callable, optional
        Called as ``callback(sweep, zeta)`` after every sweep with the dense
        dual matrix (single-row input only).
    return_info : bool
        Also return a :class:`BCDInfo`.

    Returns
    -------
    nu : array like ``eta``
    zeta : array of shape (K, L) or (m, K, L)
    info : BCDInfo, only when ``return_info`` is true
    """
    if lambda_tilde < 0:
        raise ValueError("lambda_tilde must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    E, single = _as_rows(eta)
    _check_K(E, structure)
    L = structure.n_groups
    blocks = None
    if zeta0 is not None:
        Z0 = np.asarray(zeta0, dtype=float)
        if Z0.ndim == 2:
            Z0 = Z0[None]
        blocks = [Z0[:, g, l] for l, g in enumerate(structure.groups)]

    on_sweep = None
    if callback is not None:
        if not single:
            raise ValueError("callback is only supported for a single row")

        def on_sweep(sweep, bl):
            callback(sweep, structure.dense_dual([b[0] for b in bl]))

    if L == 0:
        r, blocks = E.copy(), []
        clipped, info = np.zeros((E.shape[0], 0), bool), BCDInfo(0, True, 0.0)
    else:
        r, blocks, clipped, info = _run_bcd(E, lambda_tilde, structure, tol, max_sweeps, blocks,
                                            on_sweep)

    if not info.converged:
        warnings.warn(
            f"dual coordinate descent stopped after {info.sweeps} sweeps "
            f"(max block change {info.max_change:.3e} >= tol {tol:.1e})",
            ConvergenceWarning,
            stacklevel=2,
        )
    nu = collapse_groups(r, structure, ~clipped) if L else r
    Z = np.zeros((E.shape[0], structure.n_categories, L))
    for l, g in enumerate(structure.groups):
        Z[:, g, l] = blocks[l]
    if single:
        nu, Z = nu[0], Z[0]
    if return_info:
        return nu, Z, info
    return nu, Z


def _multires_rows(E, lambda_tilde, structure, tol, max_sweeps, zeta0):
    if structure.n_groups == 0 or lambda_tilde == 0:
        Z = np.zeros((E.shape[0], structure.n_categories, structure.n_groups))
        return E.copy(), Z
    if structure.is_disjoint:
        return prox_multires_nonoverlapping(E, lambda_tilde, structure), None
    return prox_multires_overlapping(E, lambda_tilde, structure, tol=tol,
                                     max_sweeps=max_sweeps, zeta0=zeta0)


def prox_rows(rows, gamma_tilde, lambda_tilde, structure, tol=1e-10, max_sweeps=500, zeta0=None):
    """Row-wise composite prox with screening; returns ``(nu, zeta)``.

    Rows with ``||eta|| <= gamma_tilde`` are zero at the solution and are
    skipped. ``zeta`` is ``None`` for disjoint structures (no duals needed),
    otherwise an ``(m, K, L)`` array usable as the next warm start.
    """
    if gamma_tilde < 0 or lambda_tilde < 0:
        raise ValueError("gamma_tilde and lambda_tilde must be nonnegative")
    E, _ = _as_rows(rows)
    _check_K(E, structure)
    out = np.zeros_like(E)
    live = np.linalg.norm(E, axis=1) > gamma_tilde
    zeta = None
    if np.any(live):
        z0 = None if zeta0 is None else np.asarray(zeta0)[live]
        inner, zl = _multires_rows(E[live], lambda_tilde, structure, tol, max_sweeps, z0)
        out[live] = group_soft_threshold(inner, gamma_tilde)
        if zl is not None:
            zeta = np.zeros((E.shape[0], structure.n_categories, structure.n_groups))
            zeta[live] = zl
    return out, zeta


def prox_composite(eta, gamma_tilde, lambda_tilde, structure, tol=1e-10, max_sweeps=500, zeta0=None):
    """Solve the per-row subproblem with both penalties.

    First the multiresolution prox with ``gamma_tilde = 0`` is computed (closed
    form for disjoint groups, dual coordinate descent otherwise); the result
    is then group-soft-thresholded at ``gamma_tilde``.
    """
    E, single = _as_rows(eta)
    out, _ = prox_rows(E, gamma_tilde, lambda_tilde, structure, tol, max_sweeps, zeta0)
    return out[0] if single else out


def multires_penalty(rows, structure):
    """``sum_rows sum_l w_l ||row[A_l] - mean(row[A_l])||`` (unscaled by lambda)."""
    E, _ = _as_rows(rows)
    total = 0.0
    for idx, w in structure._buckets:
        _, _, norm = _centered(E, idx)
        total += float(np.sum(norm @ w))
    return total
