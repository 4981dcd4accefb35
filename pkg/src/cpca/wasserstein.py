"""Geodesic PCA in the 2-Wasserstein space of an interval.

A distribution ``P`` on ``[a, b]`` is represented by its transport map from
the uniform law, ``T_P(x) = F_P^{-1}((x - a) / (b - a))``. Maps that are
constant on the ``2**n`` dyadic cells form a finite-dimensional space in
which non-decreasing maps make a polyhedron, and the L2 distance between
maps is the Wasserstein distance between the laws. Convex PCA on that
polyhedron is geodesic PCA.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import FEAS_TOL, PolyhedralSet
from .solver import CpcaProblem, FitConfig, PrincipalBasis, fit_nested, project_data


@dataclass(frozen=True)
class IntervalGrid:
    """Dyadic partition of ``[a, b]`` into ``2**n`` cells of equal mass."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise ValidationError(f"need finite a < b, got [{self.a}, {self.b}]")
        if int(self.n) != self.n or self.n < 0:
            raise ValidationError(f"grid level must be a nonnegative integer, got {self.n}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "n", int(self.n))

    @property
    def size(self) -> int:
        return 1 << self.n

    @property
    def cell_mass(self) -> float:
        return 1.0 / self.size

    def edges(self) -> np.ndarray:
        return self.a + (self.b - self.a) * np.arange(self.size + 1) / self.size

    def at_level(self, n: int) -> "IntervalGrid":
        return IntervalGrid(self.a, self.b, n)

    @classmethod
    def covering(cls, samples, n: int, margin: float = 0.0) -> "IntervalGrid":
        """Smallest interval holding every sample, widened by ``margin``."""
        lo = min(float(np.min(s)) for s in samples)
        hi = max(float(np.max(s)) for s in samples)
        if margin < 0:
            raise ValidationError("margin must be nonnegative")
        if hi - lo + 2 * margin <= 0:
            # all samples equal: any nondegenerate interval works
            margin = max(margin, 0.5 * max(1.0, abs(lo)))
        return cls(lo - margin, hi + margin, n)


@dataclass(frozen=True)
class TransportMap:
    """Non-decreasing piecewise-constant map on a dyadic grid."""

    grid: IntervalGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise ValidationError(f"expected {self.grid.size} cell values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("map values must be finite")
        if v[0] < self.grid.a - FEAS_TOL or v[-1] > self.grid.b + FEAS_TOL:
            raise ValidationError("map leaves the interval")
        if np.any(np.diff(v) < -FEAS_TOL):
            raise ValidationError("map is not non-decreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ScaleRecord:
    """Raw cell values <-> solver coordinates.

    Solver coordinates are raw values times ``sqrt(cell_mass)``, so that
    the Euclidean inner product equals the L2 inner product of maps.
    """

    grid: IntervalGrid

    @property
    def factor(self) -> float:
        return float(np.sqrt(self.grid.cell_mass))

    def to_solver(self, values):
        return np.asarray(values, dtype=float) * self.factor

    def to_raw(self, coords):
        return np.asarray(coords, dtype=float) / self.factor


@dataclass
class GpcaResult:
    """Output of :func:`fit_gpca`.

    ``velocity_fields[k]`` is the k-th principal direction as a raw cell
    vector with unit L2 norm; ``coefficients`` are the per-map coordinates
    of the projection onto the fitted k-dimensional principal set.
    """

    basis: PrincipalBasis
    barycenter: TransportMap
    velocity_fields: np.ndarray
    scale: ScaleRecord
    coefficients: np.ndarray
    problem: CpcaProblem = field(repr=False)


def _check_grid(maps):
    if not maps:
        raise ValidationError("need at least one map")
    grid = maps[0].grid
    for m in maps[1:]:
        if m.grid != grid:
            raise ValidationError("maps live on different grids")
    return grid


def empirical_quantile_map(samples, grid: IntervalGrid) -> TransportMap:
    """Cell averages of the empirical quantile function.

    With sorted samples ``s_(1) <= ... <= s_(M)`` the quantile function is
    ``s_(k)`` on ``((k-1)/M, k/M]``. Measuring levels in units of
    ``1/(M 2^n)``, every cell and every step has integer endpoints, so the
    common refinement splits each cell into pieces of integer length on
    which the quantile is constant. Each cell value is the first order
    statistic it touches plus a weighted sum of differences, which keeps
    constant stretches exact.
    """
    s = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    if s.size == 0:
        raise ValidationError("samples must be nonempty")
    if s[0] < grid.a or s[-1] > grid.b:
        raise ValidationError(
            f"samples span [{s[0]}, {s[-1]}], outside [{grid.a}, {grid.b}]")
    m, cells = s.size, grid.size
    knots = np.union1d(np.arange(cells + 1, dtype=np.int64) * m,
                       np.arange(m + 1, dtype=np.int64) * cells)
    start, length = knots[:-1], np.diff(knots)
    cell, step = start // m, start // cells
    first = np.searchsorted(cell, np.arange(cells))
    base = s[step[first]]
    contrib = length * (s[step] - base[cell])
    vals = base + np.add.reduceat(contrib, first) / m
    # rounding can break ties by an ulp; restore order within the interval
    vals = np.clip(np.maximum.accumulate(vals), grid.a, grid.b)
    return TransportMap(grid, vals)


def project_map(tmap: TransportMap, level: int) -> TransportMap:
    """Average a map onto the coarser dyadic level ``level``."""
    n = tmap.grid.n
    if level > n:
        raise ValidationError(f"cannot project level {n} onto finer level {level}")
    if level == n:
        return tmap
    block = 1 << (n - level)
    vals = tmap.values.reshape(-1, block).mean(axis=1)
    return TransportMap(tmap.grid.at_level(level), vals)


def lift_map(tmap: TransportMap, level: int) -> TransportMap:
    """Express a map on the finer level ``level`` by repeating cell values."""
    n = tmap.grid.n
    if level < n:
        raise ValidationError(f"cannot lift level {n} onto coarser level {level}")
    return TransportMap(tmap.grid.at_level(level), np.repeat(tmap.values, 1 << (level - n)))


def w2_distance(s: TransportMap, t: TransportMap) -> float:
    """2-Wasserstein distance between the laws of two maps on one grid."""
    if s.grid != t.grid:
        raise ValidationError("maps live on different grids")
    diff = s.values - t.values
    return float(np.sqrt(np.mean(diff * diff)))


def barycenter(maps) -> TransportMap:
    """Wasserstein barycenter: the cellwise mean of the maps."""
    grid = _check_grid(list(maps))
    vals = np.mean([m.values for m in maps], axis=0)
    return TransportMap(grid, vals)


def monotone_domain(grid: IntervalGrid) -> PolyhedralSet:
    """``a <= t_1 <= ... <= t_{2^n} <= b`` in solver coordinates.

    Bidiagonal, ``2**n + 1`` rows: ``t_1 >= a``, ``t_{j+1} - t_j >= 0`` and
    ``-t_{2^n} >= -b``. The offsets are rescaled instead of the normals.
    """
    d = grid.size
    A = np.zeros((d + 1, d))
    A[0, 0] = 1.0
    idx = np.arange(d - 1)
    A[idx + 1, idx + 1] = 1.0
    A[idx + 1, idx] = -1.0
    A[d, d - 1] = -1.0
    b = np.zeros(d + 1)
    b[0] = grid.a
    b[d] = -grid.b
    return PolyhedralSet(A, ScaleRecord(grid).to_solver(b))


def build_cpca_problem(maps, reference: TransportMap | None = None):
    """Polyhedral CPCA problem for a list of maps.

    Returns ``(problem, scale)``. The reference defaults to the barycenter.
    """
    maps = list(maps)
    grid = _check_grid(maps)
    scale = ScaleRecord(grid)
    ref = barycenter(maps) if reference is None else reference
    if ref.grid != grid:
        raise ValidationError("reference lives on a different grid")
    data = scale.to_solver(np.array([m.values for m in maps]))
    problem = CpcaProblem(data, scale.to_solver(ref.values), monotone_domain(grid))
    return problem, scale


def fit_gpca(maps, config: FitConfig | None = None,
             reference: TransportMap | None = None) -> GpcaResult:
    """Nested geodesic PCA of distributions given as transport maps."""
    maps = list(maps)
    if len(maps) < 2:
        raise ValidationError("need at least two maps")
    config = config or FitConfig()
    problem, scale = build_cpca_problem(maps, reference)
    basis = fit_nested(problem, config)
    coeffs = project_data(problem, basis, basis.k, config.qp_max_iter)
    bary = TransportMap(scale.grid, scale.to_raw(problem.reference))
    velocity = scale.to_raw(basis.directions)
    return GpcaResult(basis, bary, velocity, scale, coeffs, problem)


def reconstruct(result: GpcaResult, j: int | None = None) -> list:
    """Projections of the fitted maps onto the first ``j`` principal directions."""
    j = result.basis.k if j is None else j
    coeffs = (result.coefficients if j == result.basis.k
              else project_data(result.problem, result.basis, j))
    coords = result.problem.reference + coeffs @ result.basis.directions[:j]
    raw = result.scale.to_raw(coords)
    grid = result.scale.grid
    return [TransportMap(grid, _clean(r, grid)) for r in raw]


def _clean(vals, grid):
    # projections are feasible up to solver tolerance; remove the fuzz
    return np.clip(np.maximum.accumulate(vals), grid.a, grid.b)


def default_epsilon(result: GpcaResult, component: int) -> float:
    """Twice the standard deviation of the data's coefficients on a component."""
    return 2.0 * float(np.std(result.coefficients[:, component]))


def perturbation_curve(result: GpcaResult, component: int, epsilon: float | None = None,
                       steps: int = 21):
    """Maps ``barycenter + t v_k`` for ``steps`` values of ``t`` in ``[-eps, eps]``.

    ``component`` is 0-based. Each quantile moves linearly in ``t``. Values
    of ``t`` outside the feasible segment of the principal direction are
    clamped to its endpoints (with a warning), which keeps every curve
    non-decreasing and inside the interval.

    Returns ``(ts, maps)``.
    """
    if not 0 <= component < result.basis.k:
        raise ValidationError(f"component {component} out of range")
    if steps < 1:
        raise ValidationError("steps must be positive")
    eps = default_epsilon(result, component) if epsilon is None else float(epsilon)
    ts = np.linspace(-eps, eps, steps) if steps > 1 else np.zeros(1)
    from .solver import boundary_coefficients

    bounds = boundary_coefficients(result.problem.domain, result.problem.reference,
                                   result.basis.directions[component])
    clamped = np.clip(ts, bounds.t0, bounds.t1)
    if np.any(clamped != ts):
        warnings.warn("perturbation range exceeds the feasible segment; clamping",
                      stacklevel=2)
    grid = result.scale.grid
    v = result.velocity_fields[component]
    bary = result.barycenter.values
    maps = [TransportMap(grid, _clean(bary + t * v, grid)) for t in clamped]
    return clamped, maps


def reconstruction_error(truth, approx) -> float:
    """Mean Wasserstein distance between paired maps.

    Each approximation is lifted (cell replication) or projected (block
    averaging) onto the grid of its partner before comparing.
    """
    truth, approx = list(truth), list(approx)
    if len(truth) != len(approx):
        raise ValidationError("truth and approximation lists differ in length")
    if not truth:
        raise ValidationError("empty input")
    total = 0.0
    for t, s in zip(truth, approx):
        if (s.grid.a, s.grid.b) != (t.grid.a, t.grid.b):
            raise ValidationError("maps live on different intervals")
        if s.grid.n < t.grid.n:
            s = lift_map(s, t.grid.n)
        elif s.grid.n > t.grid.n:
            s = project_map(s, t.grid.n)
        total += w2_distance(t, s)
    return total / len(truth)
