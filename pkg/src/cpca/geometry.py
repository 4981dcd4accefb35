"""Polyhedral sets, unit directions and hyperspherical coordinates.

Everything here is a small immutable value or a pure function, so the
solver can share these objects freely between threads.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

FEAS_TOL = 1e-9
"""Boundary fuzz for ``A x >= b`` membership, used everywhere."""

_SPARSE_MIN_SIZE = 4096
_SPARSE_MAX_DENSITY = 0.1


class PolyhedralSet:
    """The convex set ``{x : A x >= b}``.

    Parameters
    ----------
    a_matrix : (m, d) array_like
        Constraint normals, one row per halfspace.
    b_vector : (m,) array_like
        Offsets.

    Notes
    -----
    Large, mostly-zero constraint matrices (the bidiagonal ones produced by
    the Wasserstein and Aitchison front-ends) are also kept in CSR form so
    that ``A @ P`` costs ``O(nnz)`` instead of ``O(m d)``.
    """

    def __init__(self, a_matrix, b_vector):
        a = np.array(a_matrix, dtype=float, ndmin=2)
        b = np.array(b_vector, dtype=float).reshape(-1)
        if a.ndim != 2:
            raise ValidationError("a_matrix must be two-dimensional")
        if a.shape[0] != b.shape[0]:
            raise ValidationError(
                f"a_matrix has {a.shape[0]} rows but b_vector has length {b.shape[0]}"
            )
        if a.shape[1] < 1:
            raise ValidationError("ambient dimension must be at least 1")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValidationError("constraint data must be finite")
        zero_rows = np.flatnonzero(~np.any(a != 0.0, axis=1))
        if zero_rows.size:
            raise ValidationError(f"constraint rows {zero_rows.tolist()} are identically zero")
        a.setflags(write=False)
        b.setflags(write=False)
        self._a = a
        self._b = b
        self._sparse = None
        if a.size >= _SPARSE_MIN_SIZE and np.count_nonzero(a) <= _SPARSE_MAX_DENSITY * a.size:
            self._sparse = sp.csr_matrix(a)

    @property
    def a_matrix(self) -> np.ndarray:
        return self._a

    @property
    def b_vector(self) -> np.ndarray:
        return self._b

    @property
    def m(self) -> int:
        return self._a.shape[0]

    @property
    def d(self) -> int:
        return self._a.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Return ``A @ x`` for a vector or a ``(d, c)`` matrix."""
        if self._sparse is not None:
            return np.asarray(self._sparse @ x)
        return self._a @ x

    def slack(self, x) -> np.ndarray:
        """Constraint slacks ``A x - b`` (nonnegative inside the set)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.apply(x) - self._b
        return self.apply(x.T).T - self._b

    def contains(self, x, tol: float = FEAS_TOL):
        """Membership test with the solver-wide tolerance.

        Accepts a single point or an ``(N, d)`` array of points; returns a
        bool or a bool array accordingly.
        """
        s = self.slack(x)
        return np.all(s >= -tol, axis=-1)

    def __repr__(self):
        return f"PolyhedralSet(m={self.m}, d={self.d})"


def unit(p) -> np.ndarray:
    """Normalise ``p`` to unit Euclidean length."""
    p = np.asarray(p, dtype=float)
    nrm = np.linalg.norm(p)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ValidationError("direction must be a nonzero finite vector")
    return p / nrm


def fix_sign(p: np.ndarray) -> np.ndarray:
    """Flip ``p`` so that its largest-magnitude entry is positive.

    Ties go to the lowest index.
    """
    i = int(np.argmax(np.abs(p)))
    return -p if p[i] < 0 else p


def omega(theta) -> np.ndarray:
    """Map hyperspherical angles to a point on the unit sphere.

    ``omega(theta)`` has length ``len(theta) + 1`` with entries
    ``cos t1, sin t1 cos t2, ..., sin t1 ... sin t(q-1) cos tq,
    sin t1 ... sin tq``.

    A ``(c, q)`` array is mapped row by row to a ``(c, q + 1)`` array.

    >>> omega([0.0])
    array([1., 0.])
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0 or theta.shape[-1] < 1:
        raise ValidationError("theta must have at least one angle")
    lead = np.ones(theta.shape[:-1] + (1,))
    out = np.concatenate((lead, np.cumprod(np.sin(theta), axis=-1)), axis=-1)
    out[..., :-1] *= np.cos(theta)
    return out


def omega_jacobian(theta) -> np.ndarray:
    """Jacobian of :func:`omega`, shape ``(q + 1, q)``.

    Built from products with one factor swapped, so it stays exact at
    poles where some ``sin`` vanishes.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    q = theta.size
    s, c = np.sin(theta), np.cos(theta)
    jac = np.zeros((q + 1, q))
    for k in range(q):
        # entry k: prod_{l<k} s_l * cos(theta_k)  ->  d/dtheta_k = -prod_{l<=k} s_l
        lead = np.prod(s[:k])
        jac[k, k] = -lead * s[k]
        # entries j>k contain the factor s_k; replace it with c_k
        tail = lead * c[k]
        for j in range(k + 1, q + 1):
            if j < q:
                jac[j, k] = tail * np.prod(s[k + 1 : j]) * c[j]
            else:
                jac[j, k] = tail * np.prod(s[k + 1 :])
    return jac


def angles_of(p) -> np.ndarray:
    """Inverse of :func:`omega` for a unit vector of dimension at least 2."""
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size < 2:
        raise ValidationError("direction must have dimension >= 2")
    q = p.size - 1
    # tail[k] = ||p[k:]||, accumulated from the back for stability
    tail = np.sqrt(np.cumsum((p**2)[::-1])[::-1])
    theta = np.empty(q)
    theta[: q - 1] = np.arctan2(tail[1:q], p[: q - 1])
    theta[q - 1] = np.arctan2(p[q], p[q - 1])
    return theta


def orthonormal_complement(previous, d: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span(previous)``.

    Parameters
    ----------
    previous : (d, r) array_like
        Orthonormal columns, ``r < d``. An empty array (``r = 0``) returns
        the identity.
    d : int
        Ambient dimension.

    Returns
    -------
    (d, d - r) ndarray
        Trailing columns of the complete Householder QR of ``previous``.
        The factorisation has a fixed order, so the same input always
        yields the same basis.
    """
    prev = np.asarray(previous, dtype=float)
    if prev.size == 0:
        return np.eye(d)
    prev = prev.reshape(d, -1)
    r = prev.shape[1]
    if r >= d:
        raise ValidationError(f"cannot complement {r} directions in dimension {d}")
    q, _ = np.linalg.qr(prev, mode="complete")
    return np.ascontiguousarray(q[:, r:])


def rotate_chart(basis: np.ndarray, w0: np.ndarray) -> np.ndarray:
    """Rotate ``basis`` so that its last column becomes ``basis @ w0``.

    A Householder reflection sends the last coordinate axis to the unit
    vector ``w0``. After the rotation the starting direction sits at
    ``theta = (pi/2, ..., pi/2)``, where the Jacobian of :func:`omega` is
    ``-I`` padded by a zero row, so no parameter is lost to a pole.
    """
    w0 = unit(w0)
    e = np.zeros_like(w0)
    e[-1] = 1.0
    u = e - w0
    nu = np.linalg.norm(u)
    if nu < 1e-14:
        return basis.copy()
    u /= nu
    # (B H) with H = I - 2 u u^T
    return basis - 2.0 * np.outer(basis @ u, u)
