"""Unconstrained minimisation over hyperspherical angles.

The objective is piecewise smooth: it has kinks where the binding facet of
some datum changes. BFGS does the heavy lifting on the smooth pieces and a
compass search, which evaluates all ``2q`` coordinate moves in a single
batch, finishes the job when the minimiser sits on a kink.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    status: str


def bfgs(fun, grad, x0, grad_tol=1e-8, obj_tol=1e-12, max_iter=500,
         c1=1e-4, max_step=1.0, max_backtracks=60):
    """BFGS on the inverse Hessian with Armijo backtracking.

    Stops when ``max|g| <= grad_tol``, when the relative objective change
    of an accepted step is at most ``obj_tol``, after ``max_iter``
    iterations, or when backtracking fails along steepest descent.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    f = fun(x)
    g = grad(x)
    H = np.eye(n)
    fresh = True
    for it in range(max_iter):
        if np.max(np.abs(g)) <= grad_tol:
            return MinimizeResult(x, f, it, True, "gradient")
        d = -H @ g
        slope = float(g @ d)
        if slope >= 0.0:
            H = np.eye(n)
            fresh = True
            d = -g
            slope = -float(g @ g)
        t = min(1.0, max_step / float(np.linalg.norm(d)))
        for _ in range(max_backtracks):
            x_new = x + t * d
            f_new = fun(x_new)
            if f_new <= f + c1 * t * slope:
                break
            t *= 0.5
        else:
            if fresh:
                return MinimizeResult(x, f, it, False, "linesearch")
            H = np.eye(n)
            fresh = True
            continue
        g_new = grad(x_new)
        s = x_new - x
        y = g_new - g
        small_change = abs(f - f_new) <= obj_tol * max(abs(f), abs(f_new), 1e-300)
        x, f, g = x_new, f_new, g_new
        if small_change:
            return MinimizeResult(x, f, it + 1, True, "objective")
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if fresh:
                H = (sy / float(y @ y)) * np.eye(n)
            rho = 1.0 / sy
            Hy = H @ y
            H = (H - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                 + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s))
            fresh = False
    return MinimizeResult(x, f, max_iter, False, "maxiter")


def compass_polish(batch_fun, x0, f0, step=1e-3, min_step=1e-10,
                   shrink=0.25, max_rounds=2000):
    """Derivative-free polish by compass search.

    ``batch_fun`` maps a ``(c, q)`` array of points to ``c`` objective
    values. Each round tries ``x +- step e_k`` for every coordinate, moves
    to the best strict improvement, and shrinks the step when none exists.

    Returns ``(x, f, rounds)``.
    """
    x = np.array(x0, dtype=float)
    f = float(f0)
    q = x.size
    eye = np.eye(q)
    rounds = 0
    while step >= min_step and rounds < max_rounds:
        rounds += 1
        trial = np.concatenate((x + step * eye, x - step * eye))
        vals = batch_fun(trial)
        j = int(np.argmin(vals))
        # ignore gains at the level of rounding noise
        if vals[j] < f - 4.0 * np.finfo(float).eps * abs(f):
            x, f = trial[j], float(vals[j])
        else:
            step *= shrink
    return x, f, rounds
