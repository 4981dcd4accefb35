"""Compare the compiled kernels with the numpy fallback.

Times the two kernels in isolation (``segment_bounds`` works on facets only,
so its cost does not grow with N), then a full ``fit_component``
with each backend swapped in. Usage::

    python3 benchmarks/bench_kernels.py [--sizes 1000 10000 100000] [--threads 1]
"""

import argparse
import timeit

import numpy as np

from cpca import CpcaProblem, FitConfig, PolyhedralSet, _backend, fit_component


def best_time(fn, repeat):
    """Best per-call time in seconds over ``repeat`` rounds."""
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def kernel_inputs(rng, n, c, m):
    s_t = rng.standard_normal((c, n))
    ynorm2 = np.einsum("ij,ij->j", s_t, s_t) + 1.0
    pn = np.ones(c)
    t0 = -np.abs(rng.standard_normal(c))
    t1 = np.abs(rng.standard_normal(c))
    ap_t = rng.standard_normal((c, m))
    slack = np.abs(rng.standard_normal(m))
    return s_t, ynorm2, pn, t0, t1, ap_t, slack


def fit_problem(rng, n, d=6, m=40):
    """Orthant data capped by extra facets that just touch the sample."""
    x = rng.exponential(1.0, (n, d))
    caps = rng.uniform(0.0, 1.0, (m - d, d))
    A = np.vstack([np.eye(d), -caps])
    b = np.concatenate([np.zeros(d), -(x @ caps.T).max(axis=0)])
    return CpcaProblem(x, None, PolyhedralSet(A, b))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[1000, 10_000, 100_000])
    parser.add_argument("--directions", type=int, default=16,
                        help="directions per batched kernel call")
    parser.add_argument("--facets", type=int, default=50)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = _backend.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    names = sorted(backends)
    rng = np.random.default_rng(args.seed)

    header = f"{'benchmark':<22}{'N':>9}" + "".join(f"{n + ' (ms)':>16}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header, flush=True)
    print("-" * len(header))

    def row(label, n, times):
        line = f"{label:<22}{n:>9}" + "".join(f"{times[k] * 1e3:>16.4f}" for k in names)
        if len(names) == 2:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line, flush=True)

    for n in args.sizes:
        s_t, ynorm2, pn, t0, t1, ap_t, slack = kernel_inputs(
            rng, n, args.directions, args.facets)
        out = np.empty(args.directions)
        lo, hi = np.empty(args.directions), np.empty(args.directions)
        times = {k: best_time(lambda k=k: backends[k].clamped_residuals(
            s_t, ynorm2, pn, t0, t1, out, args.threads), args.repeat) for k in names}
        row("clamped_residuals", n, times)
        times = {k: best_time(lambda k=k: backends[k].segment_bounds(
            ap_t, slack, lo, hi, args.threads), args.repeat) for k in names}
        row("segment_bounds", n, times)

        pb = fit_problem(rng, n)
        cfg = FitConfig(threads=args.threads)
        times = {}
        saved = _backend.kernels
        try:
            for k in names:
                _backend.kernels = backends[k]
                times[k] = best_time(lambda: fit_component(pb, None, cfg), max(1, args.repeat // 2))
        finally:
            _backend.kernels = saved
        row("fit_component (d=6)", n, times)


if __name__ == "__main__":
    main()
