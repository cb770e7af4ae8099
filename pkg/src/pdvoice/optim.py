"""Limited-memory BFGS with a strong-Wolfe line search."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFiniteObjective

GRADIENT_TOLERANCE = "gradient tolerance"
ITERATION_LIMIT = "iteration limit"
LINE_SEARCH_FAILED = "line search failed"

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass
class OptimTrace:
    values: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    reason: str = ""
    n_evals: int = 0
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def to_dict(self) -> dict:
        return {
            "values": self.values,
            "grad_norms": self.grad_norms,
            "steps": self.steps,
            "reason": self.reason,
            "n_evals": self.n_evals,
            **self.extras,
        }


@dataclass
class LbfgsOptions:
    max_iterations: int = 1000
    gtol: float = 1e-6
    memory: int = 10
    first_step: float = 0.1
    c1: float = 1e-4
    c2: float = 0.9
    curvature_eps: float = 1e-10
    max_line_search: int = 30


def _options(cfg) -> LbfgsOptions:
    if cfg is None:
        return LbfgsOptions()
    if isinstance(cfg, LbfgsOptions):
        return cfg
    return LbfgsOptions(
        max_iterations=cfg.max_iterations,
        gtol=cfg.gtol,
        memory=cfg.memory,
        first_step=cfg.learning_rate,
    )


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic matching values and slopes at ``a`` and ``b``, or None."""
    if a == b:
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = math.copysign(math.sqrt(rad), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    t = b - (b - a) * (db + d2 - d1) / denom
    return t if math.isfinite(t) else None


def strong_wolfe(phi, f0, d0, alpha0, c1=1e-4, c2=0.9, max_iter=30, alpha_max=1e10):
    """Step length meeting the strong Wolfe conditions along a descent ray.

    ``phi(alpha)`` returns ``(value, slope, payload)``. Returns
    ``(alpha, value, payload, ok)``; when the curvature condition cannot be
    met, the best sufficient-decrease point is returned with ``ok=False``
    (``alpha=0`` when no decrease was found at all).
    """
    best = (0.0, f0, None)

    def armijo(a, fa):
        return math.isfinite(fa) and fa <= f0 + c1 * a * d0

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        nonlocal best
        for _ in range(max_iter):
            width = abs(hi - lo)
            trial = None
            if math.isfinite(f_hi) and d_hi is not None:
                trial = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            lo_b, hi_b = min(lo, hi), max(lo, hi)
            if trial is None or not (lo_b + 0.1 * width <= trial <= hi_b - 0.1 * width):
                trial = 0.5 * (lo + hi)
            f_t, d_t, p_t = phi(trial)
            if not armijo(trial, f_t) or f_t >= f_lo:
                hi, f_hi, d_hi = trial, f_t, (d_t if math.isfinite(f_t) else None)
            else:
                if f_t < best[1]:
                    best = (trial, f_t, p_t)
                if abs(d_t) <= -c2 * d0:
                    return trial, f_t, p_t, True
                if d_t * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = trial, f_t, d_t
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        return best[0], best[1], best[2], False

    prev_a, prev_f, prev_d = 0.0, f0, d0
    a = alpha0
    for i in range(max_iter):
        f_a, d_a, p_a = phi(a)
        if not armijo(a, f_a) or (i > 0 and f_a >= prev_f):
            return zoom(prev_a, prev_f, prev_d, a, f_a, d_a if math.isfinite(f_a) else None)
        if f_a < best[1]:
            best = (a, f_a, p_a)
        if abs(d_a) <= -c2 * d0:
            return a, f_a, p_a, True
        if d_a >= 0:
            return zoom(a, f_a, d_a, prev_a, prev_f, prev_d)
        prev_a, prev_f, prev_d = a, f_a, d_a
        a = min(2.0 * a, alpha_max)
    return best[0], best[1], best[2], False


def _two_loop(g, pairs):
    q = g.copy()
    coeffs = []
    for s, y, rho in reversed(pairs):
        alpha = rho * (s @ q)
        q -= alpha * y
        coeffs.append(alpha)
    s, y, _ = pairs[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, rho), alpha in zip(pairs, reversed(coeffs)):
        beta = rho * (y @ q)
        q += (alpha - beta) * s
    return -q


def lbfgs_minimize(objective: Objective, x0, cfg=None) -> tuple[np.ndarray, OptimTrace]:
    """Minimise ``objective`` (returning value and gradient) from ``x0``.

    ``cfg`` is an :class:`LbfgsOptions` or any object with
    ``max_iterations``, ``gtol``, ``memory`` and ``learning_rate``; the
    latter sets the trial step of the very first (steepest-descent)
    iteration, later iterations try the unit quasi-Newton step. Curvature
    pairs with ``s.y <= 1e-10`` are dropped.
    """
    opt = _options(cfg)
    x = np.array(x0, dtype=float)
    trace = OptimTrace()
    f, g = objective(x)
    trace.n_evals = 1
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteObjective("objective is not finite at the starting point")
    if np.max(np.abs(g), initial=0.0) <= opt.gtol:
        trace.reason = GRADIENT_TOLERANCE
        return x, trace
    pairs: deque = deque(maxlen=max(1, opt.memory))
    trace.reason = ITERATION_LIMIT
    for _ in range(opt.max_iterations):
        d = _two_loop(g, list(pairs)) if pairs else -g
        slope = float(g @ d)
        if not slope < 0:
            pairs.clear()
            d = -g
            slope = float(g @ d)
        alpha0 = 1.0 if pairs else opt.first_step

        def phi(a, d=d):
            fa, ga = objective(x + a * d)
            trace.n_evals += 1
            fa = float(fa)
            if not math.isfinite(fa) or not np.all(np.isfinite(ga)):
                return math.inf, math.nan, None
            return fa, float(ga @ d), np.asarray(ga, dtype=float)

        alpha, f_new, g_new, ok = strong_wolfe(phi, f, slope, alpha0, opt.c1, opt.c2, opt.max_line_search)
        if alpha == 0.0 or g_new is None:
            trace.reason = LINE_SEARCH_FAILED
            break
        s = alpha * d
        yv = g_new - g
        sy = float(s @ yv)
        if sy > opt.curvature_eps:
            pairs.append((s, yv, 1.0 / sy))
        x = x + s
        f, g = f_new, g_new
        gnorm = float(np.max(np.abs(g)))
        trace.values.append(f)
        trace.grad_norms.append(gnorm)
        trace.steps.append(float(alpha))
        if gnorm <= opt.gtol:
            trace.reason = GRADIENT_TOLERANCE
            break
    return x, trace
