"""Euclidean projection onto a low-dimensional polyhedron.

Projecting a datum onto ``C_j = (xbar + span P) ∩ X`` with orthonormal
``P`` reduces to

    minimise ||a - c||^2  subject to  G a >= h,

with ``c = P^T (x - xbar)``, ``G = A P`` and ``h = b - A xbar <= 0``, so
``a = 0`` is always feasible. The number of unknowns is the number of
components (a handful), which makes a primal active-set method both exact
and cheap. Dykstra's alternating projections serve as a fallback when the
active-set iteration stalls on a degenerate vertex.
"""

from __future__ import annotations

import numpy as np

from .errors import QPNonConvergence

KKT_TOL = 1e-9


def kkt_residual(a, c, G, h, active=None):
    """Largest violation of the KKT conditions at ``a``.

    Combines primal infeasibility, dual infeasibility (negative
    multipliers) and the stationarity residual, all scaled by
    ``max(1, |c|)``. Multipliers are fitted by least squares on the
    constraints active at ``a``.
    """
    scale = max(1.0, float(np.linalg.norm(c)))
    if G.shape[0] == 0:
        return float(np.linalg.norm(a - c)) / scale
    slack = G @ a - h
    primal = max(0.0, -float(slack.min()))
    if active is None:
        active = np.flatnonzero(slack <= KKT_TOL * scale)
    r = a - c
    if len(active) == 0:
        return max(primal, float(np.linalg.norm(r))) / scale
    GA = G[active]
    lam, *_ = np.linalg.lstsq(GA.T, r, rcond=None)
    stat = float(np.linalg.norm(GA.T @ lam - r))
    dual = max(0.0, -float(lam.min()))
    return max(primal, stat, dual) / scale


def _active_set(c, G, h, max_iter, tol):
    a = np.zeros_like(c)
    work: list[int] = []
    scale = max(1.0, float(np.linalg.norm(c)))
    for _ in range(max_iter):
        r = c - a
        if work:
            GW = G[work]
            mu, *_ = np.linalg.lstsq(GW.T, r, rcond=None)
            step = r - GW.T @ mu
        else:
            step = r
        if np.linalg.norm(step) <= tol * scale:
            if not work:
                return a, work
            # a - c = G_W^T lam with lam >= 0 at the optimum
            lam, *_ = np.linalg.lstsq(G[work].T, -r, rcond=None)
            imin = int(np.argmin(lam))
            if lam[imin] >= -tol * scale:
                return a, work
            work.pop(imin)
            continue
        Gs = G @ step
        cand = Gs < -tol * np.linalg.norm(G, axis=1) * np.linalg.norm(step)
        if work:
            cand[work] = False
        alpha = 1.0
        block = -1
        if np.any(cand):
            idx = np.flatnonzero(cand)
            ratios = (h[idx] - G[idx] @ a) / Gs[idx]
            ratios = np.maximum(ratios, 0.0)
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                alpha = float(ratios[j])
                block = int(idx[j])
        a = a + alpha * step
        if block >= 0:
            work.append(block)
    raise QPNonConvergence("active-set iteration limit reached")


def dykstra(c, G, h, max_iter=100000, tol=KKT_TOL):
    """Project ``c`` onto ``{a : G a >= h}`` by Dykstra's algorithm.

    Slow (linear convergence) but needs nothing beyond the closed-form
    projection onto a single halfspace.
    """
    m = G.shape[0]
    x = np.array(c, dtype=float)
    incr = np.zeros((m, x.size))
    gn2 = np.einsum("ij,ij->i", G, G)
    for _ in range(max_iter):
        prev = x.copy()
        for i in range(m):
            y = x + incr[i]
            viol = h[i] - G[i] @ y
            x = y + (viol / gn2[i]) * G[i] if viol > 0.0 else y
            incr[i] = y - x
        if np.linalg.norm(x - prev) <= 1e-3 * tol and kkt_residual(x, c, G, h) <= tol:
            return x
    raise QPNonConvergence("Dykstra iteration limit reached")


def project_polyhedron(c, G, h, max_iter=1000, tol=KKT_TOL):
    """Solve ``min ||a - c||^2 s.t. G a >= h`` assuming ``h <= 0``.

    Rows of ``G`` that vanish are dropped (they are satisfied by every
    ``a`` because ``h <= 0``).

    Returns
    -------
    ndarray
        The unique minimiser, with KKT residual at most ``tol``.

    Raises
    ------
    QPNonConvergence
        If neither the active-set method nor the Dykstra fallback reaches
        the tolerance.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float).reshape(-1, c.size)
    h = np.asarray(h, dtype=float).reshape(-1)
    keep = np.linalg.norm(G, axis=1) > 1e-14
    G, h = G[keep], h[keep]
    if G.shape[0] == 0 or np.all(G @ c - h >= 0.0):
        return c.copy()
    try:
        a, _ = _active_set(c, G, h, max_iter, 1e-13)
        if kkt_residual(a, c, G, h) <= tol:
            return a
    except QPNonConvergence:
        pass
    return dykstra(c, G, h, tol=tol)
