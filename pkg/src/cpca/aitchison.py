"""Aitchison geometry on the open simplex and PCA of ranked compositions.

Functions accept a single composition ``(n,)`` or a stack ``(..., n)`` and
operate along the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import PolyhedralSet
from .solver import CpcaProblem, FitConfig, PrincipalBasis, fit_nested, project_data

SUM_TOL = 1e-12


def _positive(x, what="entries"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValidationError("expected a nonempty vector")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{what} must be finite")
    if np.any(x <= 0):
        raise ValidationError(f"{what} must be strictly positive")
    return x


def as_composition(p) -> np.ndarray:
    """Validate that ``p`` lies in the open simplex and return it as float."""
    p = _positive(p, "composition entries")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > SUM_TOL * p.shape[-1]):
        raise ValidationError("composition entries must sum to 1")
    return p


def closure(x) -> np.ndarray:
    """Rescale positive vectors to unit sum."""
    x = _positive(x)
    return x / x.sum(axis=-1, keepdims=True)


def replace_zeros(x, floor: float) -> np.ndarray:
    """Multiplicative zero replacement followed by closure.

    Zeros become ``floor``; the positive entries are shrunk so each row
    keeps its original total before the final closure.
    """
    x = np.asarray(x, dtype=float)
    if not floor > 0:
        raise ValidationError("floor must be positive")
    if np.any(x < 0):
        raise ValidationError("negative entries cannot be replaced")
    zero = x == 0
    total = x.sum(axis=-1, keepdims=True)
    nz = zero.sum(axis=-1, keepdims=True)
    shrink = 1.0 - nz * floor / np.where(total > 0, total, 1.0)
    if np.any(shrink <= 0):
        raise ValidationError("floor too large for the given rows")
    return closure(np.where(zero, floor, x * shrink))


def perturb(p, q) -> np.ndarray:
    """Simplex addition ``p (+) q``."""
    return closure(_positive(p) * _positive(q))


def power(alpha: float, p) -> np.ndarray:
    """Simplex scalar multiplication ``alpha (.) p``."""
    return closure(_positive(p) ** float(alpha))


def inverse(p) -> np.ndarray:
    """Additive inverse in the simplex: closure of the reciprocals."""
    return closure(1.0 / _positive(p))


def clr(p) -> np.ndarray:
    """Centred log-ratio: ``log p`` minus its mean."""
    lp = np.log(_positive(p))
    return lp - lp.mean(axis=-1, keepdims=True)


def aitchison_inner(p, q) -> float | np.ndarray:
    """Aitchison inner product.

    Uses ``(1/2n) sum_ij log(p_i/p_j) log(q_i/q_j) = clr(p) . clr(q)``.
    """
    p, q = _positive(p), _positive(q)
    if p.shape[-1] != q.shape[-1]:
        raise ValidationError("compositions have different lengths")
    out = np.einsum("...i,...i->...", clr(p), clr(q))
    return float(out) if np.ndim(out) == 0 else out


def _ilr_weights(n):
    i = np.arange(1, n, dtype=float)
    return np.sqrt(i / (i + 1.0))


def ilr(p) -> np.ndarray:
    """Isometric log-ratio coordinates, ``n - 1`` per composition.

    ``ilr(p)_i = sqrt(i/(i+1)) * (mean(log p_1..p_i) - log p_{i+1})``.
    """
    lp = np.log(_positive(p))
    n = lp.shape[-1]
    if n < 2:
        raise ValidationError("need at least two parts")
    i = np.arange(1, n, dtype=float)
    running = np.cumsum(lp, axis=-1)[..., :-1] / i
    return _ilr_weights(n) * (running - lp[..., 1:])


def ilr_inverse(y) -> np.ndarray:
    """Composition with the given ilr coordinates."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 0 or not np.all(np.isfinite(y)):
        raise ValidationError("ilr coordinates must be a finite vector")
    n = y.shape[-1] + 1
    i = np.arange(1, n, dtype=float)
    # ilr = V^T clr with basis vectors e_i = (1/i,...,1/i, -1, 0...) * sqrt(i/(i+1))
    c = y / np.sqrt(i * (i + 1.0))
    tail = np.cumsum(c[..., ::-1], axis=-1)[..., ::-1]  # sum_{k >= i} c_k
    z = np.zeros(y.shape[:-1] + (n,))
    z[..., :-1] = tail
    z[..., 1:] -= i * c
    z -= z.max(axis=-1, keepdims=True)
    return closure(np.exp(z))


def ordered_cone_matrix(n: int) -> PolyhedralSet:
    """Cone ``{y : A y >= 0}`` equal to the ilr image of non-increasing compositions.

    Row ``i`` reads ``sqrt((i+1)/i) y_i - sqrt((i-1)/i) y_{i-1}`` (1-based,
    the second term absent for ``i = 1``) and is a positive multiple of
    ``log p_i - log p_{i+1}``.
    """
    n = int(n)
    if n < 2:
        raise ValidationError("need at least two parts")
    q = n - 1
    j = np.arange(1, q + 1, dtype=float)
    A = np.diag(np.sqrt((j + 1.0) / j))
    A[np.arange(1, q), np.arange(q - 1)] = -np.sqrt(j[:-1] / (j[:-1] + 1.0))
    return PolyhedralSet(A, np.zeros(q))


def market_weights(caps) -> np.ndarray:
    """Market weights from positive capitalisations."""
    return closure(_positive(caps, "capitalisations"))


def rank_descending(w) -> np.ndarray:
    """Sort weights in non-increasing order (ties keep their input order)."""
    w = np.asarray(w, dtype=float)
    order = np.argsort(-w, axis=-1, kind="stable")
    return np.take_along_axis(w, order, axis=-1)


def diversity(p, lam: float = 0.5):
    """Market diversity ``(sum p_i^lam)^(1/lam)``, between 1 and ``n^((1-lam)/lam)``."""
    if not 0.0 < lam < 1.0:
        raise ValidationError("lambda must lie in (0, 1)")
    p = as_composition(p)
    out = np.sum(p ** lam, axis=-1) ** (1.0 / lam)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class AitchisonResult:
    """Convex PCA of ranked compositions in ilr coordinates.

    ``coordinates`` holds each composition's projection coefficients on the
    fitted principal set; ``reference`` is the Aitchison mean.
    """

    basis: PrincipalBasis
    coordinates: np.ndarray
    reference: np.ndarray
    problem: CpcaProblem

    def component_composition(self, j: int, t: float) -> np.ndarray:
        """Composition at coefficient ``t`` along direction ``j`` (0-based)."""
        y = self.problem.reference + t * self.basis.directions[j]
        return ilr_inverse(y)


def fit_aitchison_cpca(panel, config: FitConfig | None = None,
                       zero_floor: float | None = None) -> AitchisonResult:
    """PCA of capital distribution curves on the ordered simplex.

    Parameters
    ----------
    panel : (T, n) array_like
        Rows are compositions sorted in non-increasing order.
    zero_floor : float, optional
        Replace zero entries by this value (then re-close). Zeros are
        rejected when not given.
    """
    x = np.asarray(panel, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 2:
        raise ValidationError("panel must be a (T, n) array with n >= 2")
    if np.any(x == 0):
        if zero_floor is None:
            rows = np.flatnonzero(np.any(x == 0, axis=1))
            raise ValidationError(f"zero weights in rows {rows[:10].tolist()}")
        x = replace_zeros(x, zero_floor)
    x = as_composition(x)
    if np.any(np.diff(x, axis=1) > 0):
        rows = np.flatnonzero(np.any(np.diff(x, axis=1) > 0, axis=1))
        raise ValidationError(f"rows {rows[:10].tolist()} are not in non-increasing order")
    y = ilr(x)
    domain = ordered_cone_matrix(x.shape[1])
    problem = CpcaProblem(y, y.mean(axis=0), domain)
    basis = fit_nested(problem, config or FitConfig())
    coords = project_data(problem, basis, basis.k, (config or FitConfig()).qp_max_iter)
    return AitchisonResult(basis, coords, ilr_inverse(problem.reference), problem)
