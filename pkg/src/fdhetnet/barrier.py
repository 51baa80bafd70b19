"""Logarithmic-barrier interior-point method for smooth convex programs.

Solves ``min f(x)`` subject to ``c_i(x) < 0`` with damped Newton steps on
``t f(x) - sum_i log(-c_i(x))`` and a geometric schedule for ``t``. The
caller supplies

* ``objective(x) -> (f, grad, hess)``, returning ``f = inf`` outside its domain;
* ``constraints(x) -> (c, jac, hess_weighted)`` where ``hess_weighted(w)``
  returns ``sum_i w_i * hess c_i(x)`` (zero for linear rows).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class BarrierResult:
    x: np.ndarray
    f: float
    duals: np.ndarray
    kkt_residual: float
    gap: float
    newton_steps: int
    outer_steps: int
    converged: bool


def _merit(value, constraint_values, x, t):
    c = constraint_values(x)
    if np.any(c >= 0):
        return np.inf
    f = value(x)
    if not np.isfinite(f):
        return np.inf
    return t * f - float(np.sum(np.log(-c)))


def _max_step(c, J, step, fraction: float = 0.99) -> float:
    """Largest step (at most 1) keeping the linearized constraints strictly
    feasible; exact for linear rows, optimistic for convex ones."""
    rate = J @ step
    up = rate > 0
    if not np.any(up):
        return 1.0
    return min(1.0, fraction * float(np.min(-c[up] / rate[up])))


def barrier_minimize(objective, constraints, x0, rel_gap: float = 1e-7, mu: float = 15.0,
                     t0: float | None = None, newton_tol: float = 1e-12, max_outer: int = 60,
                     max_newton: int = 100, value=None, constraint_values=None) -> BarrierResult:
    """Minimize from the strictly feasible point ``x0``.

    Stops when the duality-gap bound ``m / t`` falls below
    ``rel_gap * max(1, |f|)``. Raises ``ValueError`` when ``x0`` is not
    strictly feasible. ``value(x)``, when given, returns the objective
    alone and is used by the line search, as is ``constraint_values(x)``
    for the constraint values alone.
    """
    if value is None:
        def value(z):
            return objective(z)[0]
    if constraint_values is None:
        def constraint_values(z):
            return constraints(z)[0]
    x = np.array(x0, dtype=float)
    c, _, _ = constraints(x)
    f, _, _ = objective(x)
    if np.any(c >= 0) or not np.isfinite(f):
        raise ValueError("starting point is not strictly feasible")
    m = c.size
    t = t0 if t0 is not None else max(1.0, m / max(1.0, abs(f)))
    total_newton = 0
    converged = False
    outer = 0
    for outer in range(1, max_outer + 1):
        for _ in range(max_newton):
            f, g, H = objective(x)
            c, J, hw = constraints(x)
            inv = 1.0 / (-c)
            grad = t * g + J.T @ inv
            hess = t * H + (J.T * inv ** 2) @ J + hw(inv)
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            dec = float(-grad @ step)
            total_newton += 1
            phi0 = t * f - float(np.sum(np.log(-c)))
            if dec / 2.0 <= newton_tol:
                break
            s = _max_step(c, J, step)
            # allowance for rounding in the merit once the decrement is tiny
            slack = 1e-13 * abs(phi0)
            while s > 1e-14:
                val = _merit(value, constraint_values, x + s * step, t)
                if val <= phi0 - 0.25 * s * dec + slack:
                    break
                s *= 0.5
            else:
                break
            x = x + s * step
        f, g, _ = objective(x)
        if m / t <= rel_gap * max(1.0, abs(f)):
            converged = True
            break
        t *= mu
    c, J, _ = constraints(x)
    f, g, _ = objective(x)
    duals = 1.0 / (t * (-c))
    resid = float(np.linalg.norm(g + J.T @ duals)) / max(1.0, float(np.linalg.norm(g)))
    if not converged:
        log.warning("barrier method stopped before reaching the requested gap")
    return BarrierResult(x, f, duals, resid, m / t, total_newton, outer, converged)


def linear_constraints(G, h):
    """Constraint callback for ``G x - h < 0``."""
    G = np.asarray(G, float)
    h = np.asarray(h, float)
    zero = np.zeros((G.shape[1], G.shape[1]))

    def fn(x):
        return G @ x - h, G, lambda w: zero
    return fn


def stack_constraints(*fns):
    """Concatenate several constraint callbacks into one."""
    def fn(x):
        parts = [f(x) for f in fns]
        c = np.concatenate([p[0] for p in parts])
        J = np.vstack([p[1] for p in parts])
        sizes = np.cumsum([0] + [p[0].size for p in parts])

        def hw(w):
            out = 0.0
            for (lo, hi), p in zip(zip(sizes[:-1], sizes[1:]), parts):
                out = out + p[2](w[lo:hi])
            return out
        return c, J, hw
    return fn
