"""Nested convex PCA on a polyhedral domain.

For a unit direction ``p`` the line ``xbar + t p`` meets the domain in a
segment ``[t0, t1]``; the best approximation of a datum on that segment is
its orthogonal projection clamped to the segment. Averaging the squared
residuals gives the objective ``V(p)``. Convex principal directions are
found one at a time by minimising ``V`` over unit vectors orthogonal to
the directions already fitted, written in hyperspherical angles so that
the search is unconstrained.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import (
    ComponentError,
    CpcaError,
    DegenerateDataError,
    InfeasibleError,
    NonsmoothPointError,
    ValidationError,
)
from .geometry import (
    FEAS_TOL,
    PolyhedralSet,
    angles_of,
    fix_sign,
    omega,
    omega_jacobian,
    orthonormal_complement,
    rotate_chart,
    unit,
)
from .optimize import bfgs, compass_polish
from .qp import project_polyhedron

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentBounds:
    """Feasible range ``[t0, t1]`` of ``t`` along ``xbar + t p``."""

    t0: float
    t1: float


@dataclass(frozen=True)
class FitConfig:
    """Solver settings.

    ``gradient`` is ``"fd"`` (central differences, the default) or
    ``"analytic"`` (envelope-theorem gradient, falling back to central
    differences wherever a datum has two binding constraints).
    ``threads`` only changes how the per-point work is scheduled; results
    are bitwise identical for every value. ``screen`` is the number of
    spread-out directions evaluated before descent; the best of them is
    used as an extra start (0 disables screening).
    """

    k: int = 1
    grad_tol: float = 1e-8
    obj_tol: float = 1e-12
    max_iter: int = 500
    restarts: int = 0
    screen: int = 64
    fd_step: float = 1e-6
    seed: int = 0
    threads: int = 1
    gradient: str = "fd"
    polish: bool = True
    qp_max_iter: int = 1000

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        for name in ("grad_tol", "obj_tol", "fd_step"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.max_iter < 1 or self.restarts < 0 or self.threads < 1 or self.screen < 0:
            raise ValidationError("max_iter and threads must be >= 1, restarts and screen >= 0")
        if self.gradient not in ("fd", "analytic"):
            raise ValidationError("gradient must be 'fd' or 'analytic'")


class CpcaProblem:
    """Data, reference point and polyhedral domain of a CPCA fit.

    Parameters
    ----------
    data : (N, d) array_like
        Observations, one per row. Every row must lie in ``domain``.
    reference : (d,) array_like, optional
        Reference point ``xbar``; defaults to the data mean.
    domain : PolyhedralSet, optional
        Defaults to all of ``R^d``.

    A reference on the boundary of the domain is accepted with a warning.
    """

    def __init__(self, data, reference=None, domain=None):
        x = np.array(data, dtype=float, ndmin=2)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValidationError("data must be a nonempty (N, d) array")
        if not np.all(np.isfinite(x)):
            raise ValidationError("data must be finite")
        n, d = x.shape
        if domain is None:
            domain = PolyhedralSet(np.zeros((0, d)), np.zeros(0))
        if domain.d != d:
            raise ValidationError(f"domain has dimension {domain.d}, data has {d}")
        xbar = x.mean(axis=0) if reference is None else np.array(reference, dtype=float)
        if xbar.shape != (d,):
            raise ValidationError(f"reference must have shape ({d},)")

        slack_x = domain.slack(x) if domain.m else np.zeros((n, 0))
        bad = np.argwhere(slack_x < -FEAS_TOL)
        if bad.size:
            viol = [(int(i), int(j), float(slack_x[i, j])) for i, j in bad]
            rows = sorted({v[0] for v in viol})
            raise InfeasibleError(f"data rows {rows[:10]} violate the domain", viol)
        slack_ref = domain.slack(xbar) if domain.m else np.zeros(0)
        if np.any(slack_ref < -FEAS_TOL):
            j = int(np.argmin(slack_ref))
            raise InfeasibleError(
                f"reference violates constraint {j} (slack {slack_ref[j]:.3e})",
                [(-1, j, float(slack_ref[j]))],
            )
        if np.any(slack_ref <= FEAS_TOL):
            warnings.warn("reference point lies on the boundary of the domain",
                          stacklevel=2)

        self.data = x
        self.reference = xbar
        self.domain = domain
        self.centered = np.ascontiguousarray(x - xbar)
        self.ynorm2 = np.einsum("ij,ij->i", self.centered, self.centered)
        self.total_variation = float(self.ynorm2.mean())
        self.ref_slack = np.ascontiguousarray(np.maximum(slack_ref, 0.0))
        for arr in (self.data, self.reference, self.centered, self.ynorm2, self.ref_slack):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass
class PrincipalBasis:
    """Fitted convex principal directions.

    ``directions`` is ``(k, d)`` with orthonormal rows; ``objectives[j]``
    is ``V`` at direction ``j``; ``ev[j]`` is the cumulative explained
    variation of the first ``j + 1`` directions.
    """

    directions: np.ndarray
    objectives: np.ndarray
    ev: np.ndarray
    reference: np.ndarray
    diagnostics: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.directions.shape[0]

    def matrix(self, j=None) -> np.ndarray:
        """First ``j`` directions as columns of a ``(d, j)`` matrix."""
        j = self.k if j is None else j
        return np.ascontiguousarray(self.directions[:j].T)


# ---------------------------------------------------------------------------
# inner problem


def boundary_coefficients(domain: PolyhedralSet, xbar, p) -> SegmentBounds:
    """Intersect the line ``xbar + t p`` with the domain.

    Each facet ``A_i z >= b_i`` cuts the line at
    ``alpha_i = (b_i - A_i xbar) / (A_i p)``; facets with ``A_i p > 0``
    bound ``t`` from below and those with ``A_i p < 0`` from above.
    Classifying by the sign of ``A_i p`` rather than of ``alpha_i`` keeps
    the answer right when ``xbar`` sits on a facet (``alpha_i = 0``).
    Facets parallel to ``p`` are ignored.
    """
    xbar = np.asarray(xbar, dtype=float)
    p = np.asarray(p, dtype=float)
    if domain.m == 0:
        return SegmentBounds(-np.inf, np.inf)
    slack = domain.slack(xbar)
    if np.any(slack < -FEAS_TOL):
        raise InfeasibleError("reference point is outside the domain")
    slack = np.maximum(slack, 0.0)
    ap = domain.apply(p)
    lo, hi = -np.inf, np.inf
    up = ap > 0.0
    down = ap < 0.0
    if np.any(up):
        lo = float(np.max(-slack[up] / ap[up]))
    if np.any(down):
        hi = float(np.min(slack[down] / -ap[down]))
    return SegmentBounds(lo, hi)


def project_to_segment(x, xbar, p, bounds: SegmentBounds):
    """Closest point to ``x`` on the segment ``xbar + [t0, t1] p``.

    Returns ``(a_star, z_star, sq_dist)``.
    """
    x = np.asarray(x, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    p = np.asarray(p, dtype=float)
    a = float(np.clip(np.dot(x - xbar, p), bounds.t0, bounds.t1))
    z = xbar + a * p
    r = x - z
    return a, z, float(r @ r)


def _batch_values(problem: CpcaProblem, P: np.ndarray, threads: int = 1) -> np.ndarray:
    """``V`` at each column of ``P`` (shape ``(d, c)``), one kernel call."""
    P = np.asarray(P, dtype=float)
    c = P.shape[1]
    kern = _backend.kernels
    pn = np.ascontiguousarray(np.einsum("ij,ij->j", P, P))
    t0 = np.empty(c)
    t1 = np.empty(c)
    if problem.domain.m:
        ap_t = np.ascontiguousarray(problem.domain.apply(P).T)
        kern.segment_bounds(ap_t, problem.ref_slack, t0, t1, threads)
    else:
        t0.fill(-np.inf)
        t1.fill(np.inf)
    s_t = np.ascontiguousarray(P.T @ problem.centered.T)
    out = np.empty(c)
    kern.clamped_residuals(s_t, problem.ynorm2, pn, t0, t1, out, threads)
    return out / problem.n


def value_function(problem: CpcaProblem, p, threads: int = 1) -> float:
    """Mean squared distance from the data to ``(xbar + span{p}) ∩ X``.

    ``p`` need not be normalised. Cost is ``O(N d + m d)``; the result
    does not depend on ``threads``.
    """
    p = np.asarray(p, dtype=float).reshape(-1, 1)
    if not np.any(p):
        raise ValidationError("direction must be nonzero")
    return float(_batch_values(problem, p, threads)[0])


def value_gradient_fd(problem: CpcaProblem, theta, basis, fd_step: float = 1e-6,
                      threads: int = 1) -> np.ndarray:
    """Central-difference gradient of ``theta -> V(basis @ omega(theta))``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    q = theta.size
    steps = fd_step * np.eye(q)
    trial = np.concatenate((theta + steps, theta - steps))
    vals = _batch_values(problem, basis @ omega(trial).T, threads)
    return (vals[:q] - vals[q:]) / (2.0 * fd_step)


def value_gradient_analytic(problem: CpcaProblem, p):
    """Envelope-theorem gradient of ``V`` at a unit direction ``p``.

    Each datum contributes ``-2 a (y - a p)`` plus, when its projection is
    clamped by facet ``j``, the term ``-a lam A_j`` where the multiplier
    ``lam = -2 (y.p - a) / (A_j p)`` solves the one-dimensional KKT
    stationarity condition.

    Returns
    -------
    gradient : (d,) ndarray
    multipliers : (N,) ndarray
        Multiplier of the binding facet per datum (0 when none binds).

    Raises
    ------
    NonsmoothPointError
        If the projection of some datum has two or more binding facets.
    """
    p = unit(p)
    y = problem.centered
    s = y @ p
    dom = problem.domain
    bounds = boundary_coefficients(dom, problem.reference, p)
    a = np.clip(s, bounds.t0, bounds.t1)
    lam = np.zeros(problem.n)
    normals = np.zeros((problem.n, problem.d))
    if dom.m:
        slack0 = problem.ref_slack
        ap = dom.apply(p)
        # facets containing the whole line bind for every datum
        parallel = int(np.count_nonzero((np.abs(ap) <= 1e-12) & (slack0 <= FEAS_TOL)))
        at_lo = s <= bounds.t0
        at_hi = s >= bounds.t1
        count = np.full(problem.n, parallel)
        for mask, t in ((at_lo, bounds.t0), (at_hi, bounds.t1)):
            if not np.any(mask):
                continue
            on_facet = (slack0 + t * ap <= FEAS_TOL) & (np.abs(ap) > 1e-12)
            count[mask] += int(np.count_nonzero(on_facet))
            j = int(np.argmin(np.where(on_facet, slack0 + t * ap, np.inf)))
            lam[mask] = -2.0 * (s[mask] - a[mask]) / ap[j]
            normals[mask] = dom.a_matrix[j]
        bad = np.flatnonzero(count >= 2)
        if bad.size:
            raise NonsmoothPointError(
                f"{bad.size} data points have two or more binding constraints", bad)
    resid = y - a[:, None] * p
    terms = -2.0 * a[:, None] * resid - (a * lam)[:, None] * normals
    return terms.mean(axis=0), lam


# ---------------------------------------------------------------------------
# outer problem


def init_guess(problem: CpcaProblem, previous=None) -> np.ndarray:
    """Top Euclidean principal direction of the data projected off ``previous``.

    The second-moment matrix is taken about the reference point. The
    returned vector is unit, orthogonal to ``previous`` and sign-fixed.
    """
    y = problem.centered
    if previous is not None and np.size(previous):
        P = np.asarray(previous, dtype=float).reshape(problem.d, -1)
        y = y - (y @ P) @ P.T
    else:
        P = None
    if not np.any(np.abs(y) > 1e-12 * max(1.0, np.sqrt(problem.total_variation))):
        raise DegenerateDataError("projected data are all zero")
    _, _, vt = np.linalg.svd(y, full_matrices=False)
    v = vt[0]
    if P is not None:
        v = v - P @ (P.T @ v)
    return fix_sign(unit(v))


class _AngleObjective:
    """``theta -> V(B omega(theta)) / TV`` with batched evaluations."""

    def __init__(self, problem, basis, config):
        self.problem = problem
        self.basis = basis
        self.config = config
        self.scale = 1.0 / problem.total_variation
        self.fallbacks = 0
        self.evaluations = 0

    def direction(self, theta):
        return self.basis @ omega(theta)

    def __call__(self, theta):
        self.evaluations += 1
        return self.batch(np.asarray(theta)[None, :])[0]

    def batch(self, thetas):
        P = self.basis @ omega(thetas).T
        return self.scale * _batch_values(self.problem, P, self.config.threads)

    def grad(self, theta):
        cfg = self.config
        if cfg.gradient == "analytic":
            p = self.direction(theta)
            try:
                gp, _ = value_gradient_analytic(self.problem, p)
            except NonsmoothPointError:
                self.fallbacks += 1
            else:
                return self.scale * (omega_jacobian(theta).T @ (self.basis.T @ gp))
        return self.scale * value_gradient_fd(
            self.problem, theta, self.basis, cfg.fd_step, cfg.threads)


def _screen_directions(basis: np.ndarray, count: int, rng) -> np.ndarray:
    """Spread-out unit directions in the span of ``basis``, as columns.

    In a 2-D span the half circle is sampled evenly; otherwise the
    directions are uniform random (antipodes are equivalent).
    """
    s = basis.shape[1]
    if s == 2:
        ang = np.pi * np.arange(count) / count
        return basis @ np.vstack([np.cos(ang), np.sin(ang)])
    W = rng.standard_normal((s, count))
    return basis @ (W / np.linalg.norm(W, axis=0))


def _descend(obj: _AngleObjective, theta0, config: FitConfig):
    theta = np.asarray(theta0, dtype=float)
    total_iter = 0
    result = None
    for _ in range(4):
        result = bfgs(obj, obj.grad, theta, config.grad_tol, config.obj_tol,
                      config.max_iter - total_iter)
        total_iter += result.iterations
        theta, f = result.x, result.fun
        if not config.polish:
            break
        theta_p, f_p, _ = compass_polish(obj.batch, theta, f)
        improved = f - f_p > config.obj_tol * max(abs(f), 1e-300)
        theta, f = theta_p, f_p
        if not improved or total_iter >= config.max_iter:
            break
    converged = result.converged or (config.polish and total_iter < config.max_iter)
    status = result.status if result.converged else (
        "stationary" if converged else result.status)
    return theta, f, total_iter, converged, status


def fit_component(problem: CpcaProblem, previous=None, config: FitConfig | None = None):
    """Fit the next convex principal direction.

    Parameters
    ----------
    previous : (d, r) array_like or None
        Orthonormal columns already fitted.

    Returns
    -------
    direction : (d,) ndarray
    objective : float
        ``V(direction)``.
    diagnostics : dict
        ``iterations``, ``converged``, ``status``, ``starts``,
        ``gradient_fallbacks``, ``init_objective``.
    """
    config = config or FitConfig()
    d = problem.d
    if previous is None or np.size(previous) == 0:
        previous = np.zeros((d, 0))
    previous = np.asarray(previous, dtype=float).reshape(d, -1)
    r = previous.shape[1]
    if d - r < 1:
        raise ValidationError(f"no directions left: d={d}, r={r}")
    if problem.total_variation == 0.0:
        raise DegenerateDataError("all data coincide with the reference point")
    basis = orthonormal_complement(previous, d)
    threads = config.threads

    if basis.shape[1] == 1:
        p = fix_sign(basis[:, 0].copy())
        v = value_function(problem, p, threads)
        diag = dict(iterations=0, converged=True, status="determined", starts=0,
                    gradient_fallbacks=0, init_objective=v)
        return p, v, diag

    p_init = init_guess(problem, previous)
    v_init = value_function(problem, p_init, threads)
    starts = [p_init]
    rng = np.random.default_rng(config.seed)
    if config.screen:
        cand = _screen_directions(basis, config.screen, rng)
        vals = _batch_values(problem, cand, threads)
        i = int(np.argmin(vals))
        if vals[i] < v_init:
            starts.append(cand[:, i])
    for _ in range(config.restarts):
        w = rng.standard_normal(basis.shape[1])
        starts.append(basis @ unit(w))

    best = None
    total_iter = 0
    fallbacks = 0
    q = basis.shape[1] - 1
    theta0 = np.full(q, np.pi / 2)
    for start in starts:
        chart = rotate_chart(basis, basis.T @ start)
        obj = _AngleObjective(problem, chart, config)
        theta, f, iters, conv, status = _descend(obj, theta0, config)
        total_iter += iters
        fallbacks += obj.fallbacks
        p = fix_sign(unit(obj.direction(theta)))
        v = value_function(problem, p, threads)
        if best is None or v < best[1]:
            best = (p, v, conv, status, iters)
    p, v, conv, status, iters = best
    if v > v_init:
        p, v = p_init, v_init
    diag = dict(iterations=total_iter, converged=bool(conv), status=status,
                starts=len(starts), gradient_fallbacks=fallbacks, init_objective=v_init)
    if not conv:
        log.warning("component did not converge (%s) after %d iterations", status, total_iter)
    return p, v, diag


def fit_nested(problem: CpcaProblem, config: FitConfig | None = None) -> PrincipalBasis:
    """Fit ``config.k`` nested convex principal directions."""
    config = config or FitConfig()
    k, d = config.k, problem.d
    if k > d:
        raise ValidationError(f"k={k} exceeds the dimension d={d}")
    if problem.total_variation == 0.0:
        raise DegenerateDataError("all data coincide with the reference point")
    dirs, objs, diags = [], [], []
    for j in range(k):
        prev = np.array(dirs).T if dirs else None
        try:
            p, v, diag = fit_component(problem, prev, config)
        except CpcaError as exc:
            raise ComponentError(j + 1, exc) from exc
        dirs.append(p)
        objs.append(v)
        diags.append(diag)
    basis = PrincipalBasis(np.array(dirs), np.array(objs), np.zeros(k),
                           problem.reference.copy(), diags)
    coeffs = np.zeros((problem.n, 0))
    for j in range(1, k + 1):
        coeffs = project_data(problem, basis, j, config.qp_max_iter)
        basis.ev[j - 1] = float(np.einsum("ij,ij->i", coeffs, coeffs).mean()
                                / problem.total_variation)
    return basis


# ---------------------------------------------------------------------------
# projections and explained variation


def project_onto_component_set(x, basis: PrincipalBasis, domain: PolyhedralSet,
                               j: int | None = None, qp_max_iter: int = 1000):
    """Metric projection of ``x`` onto ``(xbar + span{p_1..p_j}) ∩ X``.

    Returns ``(coeffs, z)`` with ``z = xbar + P coeffs``. One direction uses
    the closed-form segment clamp; more directions solve a small QP.
    """
    j = basis.k if j is None else j
    P = basis.matrix(j)
    xbar = basis.reference
    y = np.asarray(x, dtype=float) - xbar
    coeffs = _project_centered(y[None, :], P, domain, xbar, qp_max_iter)[0]
    return coeffs, xbar + P @ coeffs


def _project_centered(Y, P, domain, xbar, qp_max_iter=1000):
    C = Y @ P
    if domain.m == 0:
        return C
    if P.shape[1] == 1:
        b = boundary_coefficients(domain, xbar, P[:, 0])
        return np.clip(C, b.t0, b.t1)
    G = domain.apply(P)
    h = -np.maximum(domain.slack(xbar), 0.0)
    out = np.empty_like(C)
    for i in range(C.shape[0]):
        out[i] = project_polyhedron(C[i], G, h, max_iter=qp_max_iter)
    return out


def project_data(problem: CpcaProblem, basis: PrincipalBasis, j: int | None = None,
                 qp_max_iter: int = 1000) -> np.ndarray:
    """Coefficients of every datum's projection onto ``C_j``, shape ``(N, j)``."""
    j = basis.k if j is None else j
    return _project_centered(problem.centered, basis.matrix(j), problem.domain,
                             problem.reference, qp_max_iter)


def explained_variation(problem: CpcaProblem, basis: PrincipalBasis, up_to_j: int,
                        qp_max_iter: int = 1000) -> float:
    """Proportion of total variation captured by ``C_j``.

    ``E |Pi_C x - xbar|^2 / TV``; zero for ``j = 0``.
    """
    if problem.total_variation == 0.0:
        raise DegenerateDataError("total variation is zero")
    if up_to_j == 0:
        return 0.0
    a = project_data(problem, basis, up_to_j, qp_max_iter)
    return float(np.einsum("ij,ij->i", a, a).mean() / problem.total_variation)
