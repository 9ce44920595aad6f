"""Command-line interface.

Exit status is 0 on success, 2 when the input fails validation and 3 when
a fit fails numerically.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings

import numpy as np

from . import fileio
from .benchmark import BENCH_COLUMNS, METHODS, BenchSettings, run_benchmark
from .exceptions import ConvergenceWarning, SolverError
from .model import add_intercept, compute_probabilities
from .report import resolution_report
from .selection import (
    build_grid,
    cross_validate,
    degrees_of_freedom,
    select_model,
    validation_deviances,
)
from .simulate import SimulationSpec, generate_dataset
from .solver import FitPath, SolverConfig, fit, fit_path

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3
INTERCEPT_NAME = "(intercept)"

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_INPUT", "EXIT_NUMERICAL"]


class InputError(ValueError):
    pass


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return "nan"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_table(rows, columns, out):
    """Comma-separated table with a header; floats carry 17 significant digits."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])


def _open_out(path):
    if path is None or path == "-":
        return _Stdout()
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


# ---------------------------------------------------------------- arguments

def _add_solver_flags(p):
    d = SolverConfig()
    g = p.add_argument_group("solver")
    g.add_argument("--max-iters", type=int, default=d.max_iters)
    g.add_argument("--rel-tol", type=float, default=d.rel_tol)
    g.add_argument("--kkt-tol", type=float, default=d.kkt_tol)
    g.add_argument("--initial-step", type=float, default=d.initial_step)
    g.add_argument("--backtrack-factor", type=float, default=d.backtrack_factor)
    g.add_argument("--no-acceleration", action="store_true")
    g.add_argument("--no-kkt-check", action="store_true")
    g.add_argument("--bcd-tol", type=float, default=d.bcd_tol)
    g.add_argument("--bcd-max-sweeps", type=int, default=d.bcd_max_sweeps)


def _config(args):
    return SolverConfig(max_iters=args.max_iters, rel_tol=args.rel_tol, kkt_tol=args.kkt_tol,
                        initial_step=args.initial_step, backtrack_factor=args.backtrack_factor,
                        acceleration=not args.no_acceleration, kkt_check=not args.no_kkt_check,
                        bcd_tol=args.bcd_tol, bcd_max_sweeps=args.bcd_max_sweeps)


def _add_data_flags(p):
    p.add_argument("--x", required=True, help="design matrix (CSV with header)")
    p.add_argument("--y", required=True, help="labels (one column) or counts (K columns)")
    p.add_argument("--groups", required=True, help="coarse-category specification")
    p.add_argument("--no-intercept", action="store_true",
                   help="do not prepend an intercept column")


def _add_grid_flags(p):
    p.add_argument("--n-gamma", type=int, default=20)
    p.add_argument("--n-lambda", type=int, default=5)
    p.add_argument("--min-ratio", type=float, default=0.01)
    p.add_argument("--lambda-min-ratio", type=float, default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mrmlr",
        description="Multinomial logistic regression with group lasso and "
                    "multiresolution penalties.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--model", type=int, required=True, help="simulation model 1-6")
    p.add_argument("--p", type=int, required=True, help="number of predictors")
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-val", type=int, default=500)
    p.add_argument("--n-test", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=1, help="accepted for symmetry; unused")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fit", help="fit at one (gamma, lambda)")
    _add_data_flags(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out", required=True, help="model directory")
    _add_solver_flags(p)

    p = sub.add_parser("path", help="fit a tuning grid with warm starts")
    _add_data_flags(p)
    _add_grid_flags(p)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="model directory")
    p.add_argument("--table", default=None, help="path table (default: stdout)")
    _add_solver_flags(p)

    p = sub.add_parser("select", help="pick the cell with the smallest validation deviance")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--x-val", required=True)
    p.add_argument("--y-val", required=True)
    p.add_argument("--table", default=None, help="deviance table (default: stdout)")

    p = sub.add_parser("cv", help="K-fold cross-validation over a tuning grid")
    _add_data_flags(p)
    _add_grid_flags(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None,
                   help="also fit the full-data path and save it here with the CV choice")
    p.add_argument("--table", default=None, help="CV table (default: stdout)")
    _add_solver_flags(p)

    p = sub.add_parser("predict", help="fitted category probabilities")
    p.add_argument("--model", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--cell", default=None, help="grid cell 'i,j' (default: the selected one)")
    p.add_argument("--out", default=None, help="probability CSV (default: stdout)")

    p = sub.add_parser("report", help="effect-resolution report of a fitted cell")
    p.add_argument("--model", required=True)
    p.add_argument("--cell", default=None)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out", default=None)

    p = sub.add_parser("bench", help="replicated comparison on simulated data")
    p.add_argument("--models", default="1,6", help="comma-separated model ids")
    p.add_argument("--p", default="100", help="comma-separated predictor counts")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--methods", default=",".join(METHODS))
    d = BenchSettings()
    p.add_argument("--n-train", type=int, default=d.n_train)
    p.add_argument("--n-val", type=int, default=d.n_val)
    p.add_argument("--n-test", type=int, default=d.n_test)
    p.add_argument("--n-gamma", type=int, default=d.n_gamma)
    p.add_argument("--n-lambda", type=int, default=d.n_lambda)
    p.add_argument("--min-ratio", type=float, default=d.min_ratio)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="metrics table (default: stdout)")
    _add_solver_flags(p)
    return parser


# ----------------------------------------------------------------- helpers

def _load_data(args):
    structure, spec = fileio.read_group_spec(args.groups)
    X, names = fileio.read_design(args.x)
    Y, _ = fileio.read_response(args.y, structure.n_categories)
    if Y.shape[0] != X.shape[0]:
        raise InputError(f"{args.y} has {Y.shape[0]} rows but {args.x} has {X.shape[0]}")
    if Y.shape[1] != structure.n_categories:
        raise InputError("response and group specification disagree on the number of categories")
    intercept = not args.no_intercept
    if intercept:
        X = add_intercept(X)
        names = [INTERCEPT_NAME] + names
    return X, Y, structure, spec, intercept, names


def _check_threads(n):
    if n < 1:
        raise InputError("--threads must be at least 1")
    return n


def _path_rows(path):
    rows = []
    for (i, j), res in path.cells():
        B = res.beta[res.penalized]
        rows.append({
            "i": i, "j": j, "gamma": res.gamma, "lambda": res.lam,
            "objective": res.objective, "kkt_residual": res.kkt_residual,
            "iterations": res.iterations, "converged": res.converged,
            "active_rows": int(np.any(B != 0, axis=1).sum()),
            "dof": degrees_of_freedom(res.beta, res.penalized),
        })
    return rows


PATH_COLUMNS = ["i", "j", "gamma", "lambda", "objective", "kkt_residual", "iterations",
                "converged", "active_rows", "dof"]


def _parse_cell(text):
    try:
        i, j = (int(t) for t in text.split(","))
    except ValueError:
        raise InputError(f"--cell must look like 'i,j', got {text!r}") from None
    return i, j


def _pick_cell(path, manifest, cell_arg):
    if cell_arg is not None:
        key = _parse_cell(cell_arg)
    elif manifest.get("selected") is not None:
        key = tuple(manifest["selected"])
    elif len(path) == 1:
        key = next(iter(path.results))
    else:
        raise InputError("model has several cells and none is selected; pass --cell or run select")
    if key not in path.results:
        raise InputError(f"cell {key} is not in the model")
    return key


def _set_selected(directory, key, extra=None):
    mpath = os.path.join(directory, fileio.MANIFEST)
    with open(mpath, encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest["selected"] = [int(key[0]), int(key[1])]
    if extra:
        manifest.update(extra)
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _design_for_model(path_x, manifest):
    X, names = fileio.read_design(path_x)
    if manifest["intercept"]:
        X = add_intercept(X)
        names = [INTERCEPT_NAME] + names
    if names != manifest["predictor_names"]:
        raise InputError(f"{path_x}: columns do not match the model's predictors")
    return X


def _report_warnings(caught):
    n = sum(issubclass(w.category, ConvergenceWarning) for w in caught)
    if n:
        print(f"warning: {n} fit(s) stopped before meeting the tolerance", file=sys.stderr)


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    _check_threads(args.threads)
    try:
        spec = SimulationSpec(args.model, args.p, args.n_train, args.n_val, args.n_test,
                              args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    data = generate_dataset(spec)
    os.makedirs(args.out, exist_ok=True)
    names = fileio.spec_from_structure(spec.structure)
    xcols = [f"x{j + 1}" for j in range(spec.p)]
    splits = (("train", data.X_train, data.Y_train), ("val", data.X_val, data.Y_val),
              ("test", data.X_test, data.Y_test))
    for split, X, Y in splits:
        fileio.write_matrix(os.path.join(args.out, f"X_{split}.csv"), X, xcols)
        fileio.write_labels(os.path.join(args.out, f"y_{split}.csv"), Y)
    fileio.write_matrix(os.path.join(args.out, "pi_test.csv"), data.pi_true_test,
                        names.category_names)
    fileio.write_matrix(os.path.join(args.out, "beta_star.csv"), data.beta_star,
                        names.category_names)
    with open(os.path.join(args.out, "groups.txt"), "w", encoding="utf-8") as fh:
        fh.write(fileio.format_group_spec(names))
    rows = []
    for split, X, Y in splits:
        P = compute_probabilities(X, data.beta_star)
        row = {"split": split, "n": X.shape[0],
               "true_deviance": float(-2.0 * np.sum(Y * np.log(P))),
               "bayes_error": float(np.mean(np.argmax(P, axis=1) != np.argmax(Y, axis=1)))}
        for k, c in enumerate(Y.sum(axis=0)):
            row[f"count_{names.category_names[k]}"] = int(c)
        rows.append(row)
    cols = ["split", "n"] + [f"count_{c}" for c in names.category_names] + [
        "true_deviance", "bayes_error"]
    with open(os.path.join(args.out, "summary.csv"), "w", encoding="utf-8", newline="") as fh:
        write_table(rows, cols, fh)
    write_table(rows, cols, sys.stdout)
    return EXIT_OK


def cmd_fit(args):
    X, Y, structure, spec, intercept, names = _load_data(args)
    if args.gamma < 0 or args.lam < 0:
        raise InputError("--gamma and --lambda must be nonnegative")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        res = fit(X, Y, structure, args.gamma, args.lam, _config(args))
    _report_warnings(caught)
    path = FitPath(np.array([args.gamma]), np.array([args.lam]), {(0, 0): res})
    fileio.save_path(args.out, path, spec, intercept=intercept, predictor_names=names,
                     meta={"selected": [0, 0]})
    write_table(_path_rows(path), PATH_COLUMNS, sys.stdout)
    return EXIT_OK


def _grid(args, X, Y, structure):
    return build_grid(X, Y, structure, args.n_gamma, args.n_lambda, args.min_ratio,
                      lambda_min_ratio=args.lambda_min_ratio)


def cmd_path(args):
    X, Y, structure, spec, intercept, names = _load_data(args)
    threads = _check_threads(args.threads)
    grid = _grid(args, X, Y, structure)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        path = fit_path(X, Y, structure, grid, _config(args), n_threads=threads)
    _report_warnings(caught)
    if len(path) == 0:
        raise SolverError("every cell of the path failed")
    fileio.save_path(args.out, path, spec, intercept=intercept, predictor_names=names)
    with _open_out(args.table) as out:
        write_table(_path_rows(path), PATH_COLUMNS, out)
    for (i, j), msg in sorted(path.failures.items()):
        print(f"cell ({i},{j}) failed: {msg}", file=sys.stderr)
    return EXIT_OK


def cmd_select(args):
    path, spec, manifest = fileio.load_path(args.model)
    X = _design_for_model(args.x_val, manifest)
    Y, _ = fileio.read_response(args.y_val, len(spec.category_names))
    if Y.shape[0] != X.shape[0]:
        raise InputError("validation design and response have different row counts")
    if len(path) == 0:
        raise InputError("model has no fitted cells")
    gamma, lam, res = select_model(path, X, Y)
    dev = validation_deviances(path, X, Y)
    key = next(k for k, r in path.results.items() if r is res)
    _set_selected(args.model, key)
    rows = [{"i": i, "j": j, "gamma": path.gammas[i], "lambda": path.lambdas[j],
             "deviance": dev[i, j], "selected": (i, j) == key} for (i, j), _ in path.cells()]
    with _open_out(args.table) as out:
        write_table(rows, ["i", "j", "gamma", "lambda", "deviance", "selected"], out)
    print(f"selected cell {key[0]},{key[1]}: gamma={gamma!r} lambda={lam!r}", file=sys.stderr)
    return EXIT_OK


def cmd_cv(args):
    X, Y, structure, spec, intercept, names = _load_data(args)
    threads = _check_threads(args.threads)
    grid = _grid(args, X, Y, structure)
    cfg = _config(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        cv = cross_validate(X, Y, structure, grid, cfg, args.folds, args.seed,
                            n_threads=threads)
        path = fit_path(X, Y, structure, grid, cfg, n_threads=threads) if args.out else None
    _report_warnings(caught)
    rows = []
    for (i, j), g, lam in grid.cells():
        row = {"i": i, "j": j, "gamma": g, "lambda": lam, "mean_deviance": cv.mean_deviance[i, j],
               "selected": (i, j) == tuple(cv.best_index)}
        for f in range(args.folds):
            row[f"fold{f}"] = cv.fold_deviance[f, i, j]
        rows.append(row)
    cols = ["i", "j", "gamma", "lambda", "mean_deviance"] + [
        f"fold{f}" for f in range(args.folds)] + ["selected"]
    with _open_out(args.table) as out:
        write_table(rows, cols, out)
    if path is not None:
        fileio.save_path(args.out, path, spec, intercept=intercept, predictor_names=names,
                         meta={"selected": [int(v) for v in cv.best_index],
                               "cv": {"folds": args.folds, "seed": args.seed}})
    print(f"selected cell {cv.best_index[0]},{cv.best_index[1]}: gamma={cv.gamma!r} "
          f"lambda={cv.lam!r}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args):
    path, spec, manifest = fileio.load_path(args.model)
    key = _pick_cell(path, manifest, args.cell)
    X = _design_for_model(args.x, manifest)
    P = compute_probabilities(X, path[key].beta)
    with _open_out(args.out) as out:
        rows = [dict(zip(spec.category_names, r)) for r in P]
        write_table(rows, spec.category_names, out)
    return EXIT_OK


def cmd_report(args):
    path, spec, manifest = fileio.load_path(args.model)
    key = _pick_cell(path, manifest, args.cell)
    res = path[key]
    structure = spec.structure()
    rep = resolution_report(res.beta, structure, spec, res.penalized,
                            manifest["predictor_names"])
    with _open_out(args.out) as out:
        if args.format == "csv":
            write_table(rep.records(), ["predictor", "status", "group", "resolution", "value"],
                        out)
        else:
            s = rep.summary()
            out.write(f"cell {key[0]},{key[1]}  gamma={res.gamma!r}  lambda={res.lam!r}\n")
            out.write(f"{s['active']} active and {s['irrelevant']} irrelevant predictors\n")
            width = max([len(n) for n in rep.row_names] + [9])
            cw = [max(len(g), 10) for g in rep.group_names]
            head = "  ".join(g.ljust(c) for g, c in zip(rep.group_names, cw))
            out.write(("predictor".ljust(width) + "  " + head).rstrip() + "\n")
            for r, name in enumerate(rep.row_names):
                if rep.irrelevant[r]:
                    continue
                cells = [(f"{rep.values[r, l]:.4g}" if rep.collapsed[r, l] else "fine").ljust(c)
                         for l, c in enumerate(cw)]
                out.write(name.ljust(width) + "  " + "  ".join(cells).rstrip() + "\n")
    return EXIT_OK


def _int_list(text, flag):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"{flag} must be a comma-separated list of integers") from None


def cmd_bench(args):
    threads = _check_threads(args.threads)
    models = _int_list(args.models, "--models")
    ps = _int_list(args.p, "--p")
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    bad = set(methods) - set(METHODS)
    if bad:
        raise InputError(f"unknown methods: {', '.join(sorted(bad))}")
    if args.reps < 1:
        raise InputError("--reps must be at least 1")
    for m in models:
        if not 1 <= m <= 6:
            raise InputError("model ids must be between 1 and 6")
    settings = BenchSettings(args.n_train, args.n_val, args.n_test, args.n_gamma, args.n_lambda,
                             args.min_ratio, args.seed, _config(args))
    with _open_out(args.out) as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(BENCH_COLUMNS)

        def emit(row):
            w.writerow([_fmt(row[c]) for c in BENCH_COLUMNS])
            out.flush()

        run_benchmark(models, ps, args.reps, settings, methods, threads, on_row=emit)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "fit": cmd_fit, "path": cmd_path, "select": cmd_select,
    "cv": cmd_cv, "predict": cmd_predict, "report": cmd_report, "bench": cmd_bench,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        # downstream reader (e.g. head) closed early
        sys.stderr.close()
        return EXIT_OK
    except (SolverError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
