"""Command-line interface.

Exit codes: 0 success, 1 invalid input, 2 solver did not converge.
Messages go to stderr; results go to files in ``--out``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .aitchison import (
    diversity,
    fit_aitchison_cpca,
    market_weights,
    rank_descending,
    replace_zeros,
)
from .atlas import AtlasParams, atlas_simulate
from .errors import ComponentError, CpcaError, QPNonConvergence, ValidationError
from .geometry import PolyhedralSet
from .io import (
    atomic_write,
    csv_text,
    load_caps_long_csv,
    load_constraints_csv,
    load_points_csv,
    load_samples_long_csv,
    write_json,
    write_matrix,
)
from .solver import CpcaProblem, FitConfig, PrincipalBasis, fit_nested, project_data
from .wasserstein import (
    IntervalGrid,
    empirical_quantile_map,
    fit_gpca,
    perturbation_curve,
)

log = logging.getLogger("cpca")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2


class _Timer:
    def __init__(self):
        self.timings = {}

    def phase(self, name):
        timer = self

        class _Phase:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = time.perf_counter() - self.t

        return _Phase()


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("CPCA_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError(f"CPCA_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValidationError("CPCA_THREADS must be positive")
        return n
    return 1


def _fit_config(args) -> FitConfig:
    return FitConfig(k=args.k, grad_tol=args.grad_tol, obj_tol=args.obj_tol,
                     max_iter=args.max_iter, restarts=args.restarts, screen=args.screen,
                     seed=args.seed,
                     threads=_threads(args), gradient=args.gradient,
                     polish=not args.no_polish)


def _config_echo(args):
    out = {}
    for key, val in sorted(vars(args).items()):
        if key == "handler":
            continue
        out[key] = list(val) if isinstance(val, tuple) else val
    return out


def _component_rows(basis: PrincipalBasis):
    return [dict(index=j + 1, objective=float(basis.objectives[j]), ev=float(basis.ev[j]),
                 iterations=int(d["iterations"]), converged=bool(d["converged"]))
            for j, d in enumerate(basis.diagnostics)]


def _write_basis_outputs(out: Path, basis: PrincipalBasis, coeffs, reference, directions,
                         what: str):
    write_matrix(out / "components.csv", directions, "x",
                 [f"principal directions ({what}), one per row"])
    write_matrix(out / "projections.csv", coeffs, "c",
                 ["coefficients of each datum's projection on the principal set"])
    write_matrix(out / "reference.csv", np.asarray(reference)[None, :], "x",
                 [f"reference point ({what})"])
    rows = [[j + 1, float(basis.objectives[j]), float(basis.ev[j])] for j in range(basis.k)]
    atomic_write(out / "ev.csv", csv_text(
        ["component", "objective", "ev"], rows,
        ["objective: mean squared residual; ev: cumulative explained variation"]))


def _finish(out, args, basis, timer, extra=None):
    report = dict(config=_config_echo(args), components=_component_rows(basis),
                  timings=timer.timings, version=__version__)
    if extra:
        report.update(extra)
    write_json(out / "report.json", report)
    if not all(d["converged"] for d in basis.diagnostics):
        log.error("some components did not converge; see report.json")
        return EXIT_SOLVER
    return EXIT_OK


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_reference(path, d):
    ref = load_points_csv(path)
    if ref.shape != (1, d):
        raise ValidationError(f"{path}: reference must be one row of {d} values")
    return ref[0]


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args):
    timer = _Timer()
    with timer.phase("load"):
        x = load_points_csv(args.points)
        d = x.shape[1]
        domain = (load_constraints_csv(args.constraints, d) if args.constraints
                  else PolyhedralSet(np.zeros((0, d)), np.zeros(0)))
        ref = None if args.reference == "mean" else _load_reference(args.reference, d)
        problem = CpcaProblem(x, ref, domain)
    config = _fit_config(args)
    with timer.phase("fit"):
        basis = fit_nested(problem, config)
    with timer.phase("project"):
        coeffs = project_data(problem, basis, basis.k, config.qp_max_iter)
    out = _out_dir(args)
    with timer.phase("write"):
        _write_basis_outputs(out, basis, coeffs, problem.reference, basis.directions, "raw")
    return _finish(out, args, basis, timer)


def cmd_project(args):
    timer = _Timer()
    with timer.phase("load"):
        dirs = load_points_csv(args.components)
        x = load_points_csv(args.points)
        d = dirs.shape[1]
        if x.shape[1] != d:
            raise ValidationError(f"points have {x.shape[1]} columns, components have {d}")
        ref = _load_reference(args.reference, d)
        if np.max(np.abs(dirs @ dirs.T - np.eye(dirs.shape[0]))) > 1e-10:
            raise ValidationError("components are not orthonormal")
        domain = (load_constraints_csv(args.constraints, d) if args.constraints
                  else PolyhedralSet(np.zeros((0, d)), np.zeros(0)))
        problem = CpcaProblem(x, ref, domain)
    k = dirs.shape[0] if args.k is None else args.k
    if not 1 <= k <= dirs.shape[0]:
        raise ValidationError(f"k must be between 1 and {dirs.shape[0]}")
    basis = PrincipalBasis(dirs[:k], np.zeros(k), np.zeros(k), ref)
    with timer.phase("project"):
        coeffs = project_data(problem, basis, k)
    out = _out_dir(args)
    write_matrix(out / "projections.csv", coeffs, "c",
                 ["coefficients of each datum's projection on the principal set"])
    write_json(out / "report.json", dict(config=_config_echo(args), timings=timer.timings,
                                         version=__version__))
    return EXIT_OK


def cmd_wgpca(args):
    timer = _Timer()
    with timer.phase("load"):
        ids, samples = load_samples_long_csv(args.samples)
        if args.interval:
            a, b = args.interval
            grid = IntervalGrid(a, b, args.grid_n)
        else:
            grid = IntervalGrid.covering(samples, args.grid_n, args.margin)
        maps = [empirical_quantile_map(s, grid) for s in samples]
    config = _fit_config(args)
    with timer.phase("fit"):
        result = fit_gpca(maps, config)
    out = _out_dir(args)
    with timer.phase("curves"):
        rows = []
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            for k in range(result.basis.k):
                ts, curve = perturbation_curve(result, k, args.epsilon, args.steps)
                for t, m in zip(ts, curve):
                    rows.extend([k + 1, float(t), j + 1, float(v)] for j, v in enumerate(m.values))
    with timer.phase("write"):
        _write_basis_outputs(out, result.basis, result.coefficients, result.barycenter.values,
                             result.velocity_fields, "cell values")
        atomic_write(out / "curves.csv", csv_text(
            ["component", "t", "cell", "value"], rows,
            ["perturbation curves: barycenter + t * velocity field, per cell"]))
    extra = dict(grid=dict(a=grid.a, b=grid.b, n=grid.n), groups=ids)
    return _finish(out, args, result.basis, timer, extra)


def cmd_aitchison(args):
    timer = _Timer()
    with timer.phase("load"):
        if args.caps:
            dates, _, raw = load_caps_long_csv(args.caps)
        else:
            raw = load_points_csv(args.weights)
            dates = [str(i + 1) for i in range(raw.shape[0])]
        if args.zero_floor is not None:
            weights = replace_zeros(raw, args.zero_floor)
        else:
            if np.any(raw <= 0):
                rows = np.flatnonzero(np.any(raw <= 0, axis=1)) + 1
                raise ValidationError(f"nonpositive entries on dates {rows[:10].tolist()} "
                                      "(use --zero-floor to replace zeros)")
            weights = market_weights(raw)
        panel = rank_descending(weights)
    config = _fit_config(args)
    with timer.phase("fit"):
        result = fit_aitchison_cpca(panel, config)
    div = diversity(panel, args.lam)
    out = _out_dir(args)
    with timer.phase("write"):
        _write_basis_outputs(out, result.basis, result.coordinates, result.problem.reference,
                             result.basis.directions, "ilr coordinates")
        atomic_write(out / "diversity.csv", csv_text(
            ["date", "diversity"], [[dt, float(v)] for dt, v in zip(dates, div)],
            [f"market diversity with lambda = {args.lam!r}"]))
    corr = np.corrcoef(result.coordinates[:, 0], div)[0, 1] if len(div) > 1 else float("nan")
    return _finish(out, args, result.basis, timer,
                   dict(pc1_diversity_correlation=float(corr)))


def cmd_simulate(args):
    timer = _Timer()
    params = AtlasParams(n_stocks=args.n_stocks, n_days=args.n_days, dt=args.dt,
                         gamma=args.gamma, seed=args.seed)
    with timer.phase("simulate"):
        returns, caps = atlas_simulate(params)
    out = _out_dir(args)
    with timer.phase("write"):
        n_days, n = returns.shape
        rank_rows = ([r + 1, float(returns[t, r])] for r in range(n) for t in range(n_days))
        atomic_write(out / "samples.csv", csv_text(
            ["group_id", "value"], rank_rows,
            ["daily arithmetic returns by capitalisation rank (group_id = rank)"]))
        cap_rows = ([t + 1, f"S{i + 1}", float(caps[t, i])]
                    for t in range(n_days) for i in range(n))
        atomic_write(out / "caps.csv", csv_text(
            ["date", "asset", "cap"], cap_rows, ["end-of-day capitalisations"]))
    write_json(out / "report.json", dict(config=_config_echo(args), timings=timer.timings,
                                         version=__version__))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _solver_options(p):
    g = p.add_argument_group("solver")
    g.add_argument("--k", type=_positive_int, default=2, help="number of components")
    g.add_argument("--max-iter", type=_positive_int, default=500)
    g.add_argument("--grad-tol", type=float, default=1e-8)
    g.add_argument("--obj-tol", type=float, default=1e-12)
    g.add_argument("--restarts", type=int, default=0, help="extra random starts per component")
    g.add_argument("--screen", type=int, default=64,
                   help="directions screened for an extra start (0 disables)")
    g.add_argument("--gradient", choices=("fd", "analytic"), default="fd")
    g.add_argument("--no-polish", action="store_true",
                   help="skip the derivative-free polish after BFGS")


def _common(p):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: $CPCA_THREADS or 1); never changes results")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="convex PCA of points in a polyhedron {x : A x >= b}")
    p.add_argument("--points", required=True, help="CSV, N rows x d columns")
    p.add_argument("--constraints", help="CSV, m rows x (d+1) columns [A | b]")
    p.add_argument("--reference", default="mean", help="'mean' or a one-row CSV")
    _solver_options(p)
    _common(p)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("wgpca", help="geodesic PCA of 1-D distributions")
    p.add_argument("--samples", required=True, help="long CSV: group_id,value")
    p.add_argument("--grid-n", type=int, default=7, help="dyadic level (2^n cells)")
    p.add_argument("--interval", type=float, nargs=2, metavar=("A", "B"))
    p.add_argument("--margin", type=float, default=0.0,
                   help="widen the sample range by this much on each side")
    p.add_argument("--steps", type=_positive_int, default=21)
    p.add_argument("--epsilon", type=float, default=None,
                   help="curve half-range (default: 2 x std of coefficients)")
    _solver_options(p)
    _common(p)
    p.set_defaults(handler=cmd_wgpca)

    p = sub.add_parser("aitchison", help="convex PCA of capital distribution curves")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--caps", help="long CSV: date,asset,cap")
    src.add_argument("--weights", help="wide CSV, one composition per row")
    p.add_argument("--zero-floor", type=float, default=None,
                   help="replace zero weights by this value instead of failing")
    p.add_argument("--lam", type=float, default=0.5, help="diversity exponent")
    _solver_options(p)
    _common(p)
    p.set_defaults(handler=cmd_aitchison)

    p = sub.add_parser("simulate-atlas", help="synthetic rank-based market")
    defaults = AtlasParams()
    p.add_argument("--n-stocks", type=int, default=defaults.n_stocks)
    p.add_argument("--n-days", type=int, default=defaults.n_days)
    p.add_argument("--dt", type=float, default=defaults.dt)
    p.add_argument("--gamma", type=float, default=defaults.gamma)
    _common(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("project", help="project points with a saved basis")
    p.add_argument("--components", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--constraints")
    p.add_argument("--k", type=_positive_int, default=None)
    _common(p)
    p.set_defaults(handler=cmd_project)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="cpca: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.handler(args)
    except ComponentError as exc:
        log.error("%s", exc)
        return EXIT_INPUT if isinstance(exc.cause, ValidationError) else EXIT_SOLVER
    except QPNonConvergence as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    except (CpcaError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
