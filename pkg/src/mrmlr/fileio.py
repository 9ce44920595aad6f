"""Text file formats for datasets, coarse-category specifications and fitted models.

Designs and responses are comma-separated text with one header row. Numbers
are written with 17 significant digits so a write/read cycle is bit-exact.
A response file with a single column holds zero-based integer class labels;
one with ``K`` columns holds a count matrix.

Group specifications use a small line-oriented grammar::

    # comment lines and blank lines are ignored
    categories: CD14 Mono, CD16 Mono, B naive, B memory
    Monocytes: CD14 Mono, CD16 Mono
    B cells [weight=2]: B naive, B memory

The ``categories`` line must come first and lists the ``K`` fine category
names in column order. Every following line defines one coarse category:
a name, an optional ``[weight=w]`` and a comma-separated list of members.
Names may contain spaces but not commas, colons or square brackets.

A fitted model is a directory holding ``manifest.json`` and one coefficient
file ``beta_<i>_<j>.csv`` per solved grid cell.
"""
from __future__ import annotations

import json
import os
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import labels_to_counts
from .prox import CoarseStructure
from .solver import FitPath, FitResult

__all__ = [
    "GroupSpec",
    "parse_group_spec",
    "format_group_spec",
    "read_group_spec",
    "write_matrix",
    "read_matrix",
    "read_design",
    "read_response",
    "write_labels",
    "spec_from_structure",
    "save_path",
    "load_path",
    "MANIFEST",
]

MANIFEST = "manifest.json"
FORMAT_VERSION = 1
_NUM_FMT = "%.17g"
_GROUP_LINE = re.compile(
    r"^(?P<name>[^:\[\],]+?)\s*(\[\s*weight\s*=\s*(?P<weight>[^\]]+)\])?\s*:(?P<members>.*)$")


@dataclass
class GroupSpec:
    """Names attached to a :class:`CoarseStructure`."""

    category_names: list
    group_names: list = field(default_factory=list)
    groups: list = field(default_factory=list)
    weights: list = field(default_factory=list)

    def structure(self):
        index = {name: k for k, name in enumerate(self.category_names)}
        idx = [[index[m] for m in members] for members in self.groups]
        return CoarseStructure(idx, len(self.category_names), self.weights or None)


def _split_names(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def parse_group_spec(text):
    """Parse a group specification document.

    Returns
    -------
    structure : CoarseStructure
    spec : GroupSpec
        The category and group names, in file order.

    Raises
    ------
    ValueError
        On a missing or repeated ``categories`` line, unknown or repeated
        names, groups with fewer than two members, or a bad weight.
    """
    categories = None
    spec = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, rest = line.partition(":")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'name: members'")
        if head.strip().lower() == "categories":
            if categories is not None:
                raise ValueError(f"line {lineno}: categories listed twice")
            categories = _split_names(rest)
            if len(categories) < 2:
                raise ValueError(f"line {lineno}: need at least two categories")
            if len(set(categories)) != len(categories):
                dup = next(c for c in categories if categories.count(c) > 1)
                raise ValueError(f"line {lineno}: category {dup!r} listed twice")
            spec = GroupSpec(categories)
            continue
        if categories is None:
            raise ValueError(f"line {lineno}: the categories line must come first")
        m = _GROUP_LINE.match(line)
        if m is None:
            raise ValueError(f"line {lineno}: cannot parse group definition {line!r}")
        name = m.group("name").strip()
        if name in spec.group_names:
            raise ValueError(f"line {lineno}: group {name!r} defined twice")
        weight = 1.0
        if m.group("weight") is not None:
            try:
                weight = float(m.group("weight"))
            except ValueError:
                raise ValueError(f"line {lineno}: bad weight {m.group('weight')!r}") from None
            if not np.isfinite(weight) or weight <= 0:
                raise ValueError(f"line {lineno}: weight must be positive")
        members = _split_names(m.group("members"))
        for member in members:
            if member not in categories:
                raise ValueError(f"line {lineno}: unknown category {member!r} in group {name!r}")
        if len(set(members)) != len(members):
            dup = next(c for c in members if members.count(c) > 1)
            raise ValueError(f"line {lineno}: category {dup!r} repeated in group {name!r}")
        if len(members) < 2:
            raise ValueError(f"line {lineno}: group {name!r} needs at least two members")
        spec.group_names.append(name)
        spec.groups.append(members)
        spec.weights.append(weight)
    if spec is None:
        raise ValueError("group specification has no categories line")
    return spec.structure(), spec


def format_group_spec(spec):
    lines = ["categories: " + ", ".join(spec.category_names)]
    weights = spec.weights or [1.0] * len(spec.groups)
    for name, members, w in zip(spec.group_names, spec.groups, weights):
        tag = "" if w == 1.0 else f" [weight={w!r}]"
        lines.append(f"{name}{tag}: " + ", ".join(members))
    return "\n".join(lines) + "\n"


def read_group_spec(path):
    with open(path, encoding="utf-8") as fh:
        return parse_group_spec(fh.read())


def spec_from_structure(structure, category_names=None, group_names=None):
    """Default names (``c0``, ``c1``, ... and ``A1``, ``A2``, ...) for a bare structure."""
    K = structure.n_categories
    cats = list(category_names) if category_names is not None else [f"c{k}" for k in range(K)]
    names = (list(group_names) if group_names is not None
             else [f"A{l + 1}" for l in range(structure.n_groups)])
    groups = [[cats[k] for k in g] for g in structure.groups]
    return GroupSpec(cats, names, groups, [float(w) for w in structure.weights])


def write_matrix(path, A, header):
    A = np.asarray(A)
    A = A.reshape(A.shape[0], -1)
    if len(header) != A.shape[1]:
        raise ValueError("header length does not match the number of columns")
    fmt = "%d" if np.issubdtype(A.dtype, np.integer) else _NUM_FMT
    np.savetxt(path, A, fmt=fmt, delimiter=",", header=",".join(header), comments="")


def read_matrix(path):
    """Read a comma-separated numeric file with a header row.

    Returns ``(array of shape (n, m), header names)``.
    """
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ValueError(f"{path}: missing header row")
        header = [h.strip() for h in header_line.rstrip("\n").split(",")]
        try:
            with warnings.catch_warnings():
                # empty tables are handled below
                warnings.simplefilter("ignore", UserWarning)
                A = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=float)
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None
    if A.size == 0:
        A = A.reshape(0, len(header))
    if A.shape[1] != len(header):
        raise ValueError(f"{path}: {len(header)} header names but {A.shape[1]} columns")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{path}: non-finite entries")
    return A, header


def read_design(path):
    X, header = read_matrix(path)
    if X.shape[0] == 0:
        raise ValueError(f"{path}: no data rows")
    return X, header


def read_response(path, n_categories=None):
    """Read labels (one column) or counts (``K`` columns) as an ``(n, K)`` count matrix."""
    A, header = read_matrix(path)
    if A.shape[1] == 1:
        labels = A[:, 0]
        if not np.all(labels == np.round(labels)):
            raise ValueError(f"{path}: class labels must be integers")
        return labels_to_counts(labels.astype(int), n_categories), header
    if n_categories is not None and A.shape[1] != n_categories:
        raise ValueError(f"{path}: {A.shape[1]} count columns but {n_categories} categories")
    if np.any(A < 0) or not np.all(A == np.round(A)):
        raise ValueError(f"{path}: counts must be nonnegative integers")
    return A, header


def write_labels(path, Y, name="label"):
    labels = np.argmax(np.asarray(Y), axis=1).astype(int)
    write_matrix(path, labels[:, None], [name])


def _cell_file(i, j):
    return f"beta_{i}_{j}.csv"


def save_path(directory, path, spec, *, intercept, predictor_names, meta=None):
    """Write a :class:`FitPath` as a model directory.

    ``predictor_names`` names the rows of every coefficient matrix.
    """
    os.makedirs(directory, exist_ok=True)
    cells = []
    for (i, j), res in path.cells():
        write_matrix(os.path.join(directory, _cell_file(i, j)), res.beta, spec.category_names)
        cells.append({
            "i": i, "j": j, "gamma": res.gamma, "lambda": res.lam,
            "file": _cell_file(i, j), "objective": res.objective,
            "iterations": int(res.iterations), "converged": bool(res.converged),
            "kkt_residual": res.kkt_residual, "step": res.step,
        })
    penalized = None
    if path.results:
        penalized = [bool(b) for b in next(iter(path.results.values())).penalized]
    manifest = {
        "format_version": FORMAT_VERSION,
        "intercept": bool(intercept),
        "predictor_names": list(predictor_names),
        "penalized": penalized,
        "group_spec": format_group_spec(spec),
        "gammas": [float(g) for g in path.gammas],
        "lambdas": [float(v) for v in path.lambdas],
        "cells": cells,
        "failures": [{"i": i, "j": j, "message": msg} for (i, j), msg in sorted(path.failures.items())],
    }
    if meta:
        manifest.update(meta)
    with open(os.path.join(directory, MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def load_path(directory):
    """Read a model directory.

    Returns ``(FitPath, GroupSpec, manifest)``; objective traces hold the
    final objective only.
    """
    mpath = os.path.join(directory, MANIFEST)
    if not os.path.isfile(mpath):
        raise ValueError(f"{directory}: not a model directory (no {MANIFEST})")
    with open(mpath, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{directory}: unsupported model format")
    _, spec = parse_group_spec(manifest["group_spec"])
    path = FitPath(np.array(manifest["gammas"], dtype=float),
                   np.array(manifest["lambdas"], dtype=float))
    penalized = np.array(manifest["penalized"], dtype=bool) if manifest["penalized"] else None
    for cell in manifest["cells"]:
        beta, header = read_matrix(os.path.join(directory, cell["file"]))
        if header != spec.category_names:
            raise ValueError(f"{cell['file']}: header does not match the category names")
        path.results[(cell["i"], cell["j"])] = FitResult(
            beta, np.array([cell["objective"]]), cell["iterations"], cell["converged"],
            cell["kkt_residual"], cell["gamma"], cell["lambda"], penalized, cell["step"])
    for f in manifest["failures"]:
        path.failures[(f["i"], f["j"])] = f["message"]
    return path, spec, manifest
