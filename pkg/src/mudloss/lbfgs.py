"""Limited-memory BFGS minimizer with a strong-Wolfe line search.

Standard two-loop recursion over the last ``memory`` curvature pairs, with a
bracket-and-zoom line search using cubic interpolation. Pairs that fail the
curvature safeguard are skipped. Everything is deterministic: the same
objective, start point and config produce the same trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError

GRADIENT_TOL = "gradient_tol"
MAX_ITER = "max_iter"
LINE_SEARCH_FAILURE = "line_search_failure"

_CURVATURE_EPS = 1e-10
_ALPHA_MAX = 1e10


class ObjectiveError(FitError):
    """The objective raised mid-run; the best point seen so far is attached."""

    def __init__(self, message: str, point: np.ndarray, value: float):
        super().__init__(message)
        self.point = point
        self.value = value


@dataclass(frozen=True)
class ObjectiveEval:
    """One objective evaluation: the point and the value/gradient found there."""

    point: np.ndarray
    value: float
    gradient: np.ndarray

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value) and bool(np.all(np.isfinite(self.gradient)))


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iterations: int = 200
    gradient_tolerance: float = 1e-6
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search_steps: int = 40

    def __post_init__(self):
        if self.memory < 1:
            raise FitError(f"memory must be >= 1, got {self.memory}")
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise FitError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.max_iterations < 1 or self.max_line_search_steps < 1:
            raise FitError("iteration caps must be >= 1")

    def to_doc(self) -> dict:
        return {
            "memory": self.memory,
            "max_iterations": self.max_iterations,
            "gradient_tolerance": self.gradient_tolerance,
            "c1": self.c1,
            "c2": self.c2,
            "max_line_search_steps": self.max_line_search_steps,
        }


@dataclass
class OptResult:
    point: np.ndarray
    value: float
    gradient: np.ndarray
    iterations: int
    termination: str
    trace: list[tuple[int, float, float]] = field(default_factory=list)
    config: LbfgsConfig = field(default_factory=LbfgsConfig)
    n_evals: int = 0


def two_loop_direction(gradient: np.ndarray, pairs) -> np.ndarray:
    """L-BFGS search direction from the stored (s, y) curvature pairs.

    With no history this is steepest descent; otherwise the implicit inverse
    Hessian is seeded with gamma = s.y / y.y of the most recent pair.
    """
    g = np.asarray(gradient, dtype=float)
    if not np.any(g):
        return np.zeros_like(g)
    pairs = list(pairs)
    q = g.copy()
    rhos = [1.0 / float(y @ s) for s, y in pairs]
    alphas = []
    for (s, y), rho in zip(reversed(pairs), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y = pairs[-1]
        gamma = float(s @ y) / float(y @ y)
    else:
        gamma = 1.0
    r = gamma * q
    for (s, y), rho, a in zip(pairs, rhos, reversed(alphas)):
        b = rho * float(y @ r)
        r += s * (a - b)
    return -r


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic Hermite interpolant on [a, b]; None if degenerate."""
    if a == b:
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0.0 or not math.isfinite(disc):
        return None
    d2 = math.sqrt(disc) * (1.0 if b >= a else -1.0)
    denom = db - da + 2.0 * d2
    if denom == 0.0 or not math.isfinite(denom):
        return None
    x = b - (b - a) * (db + d2 - d1) / denom
    if not math.isfinite(x):
        return None
    return x


class _Evaluator:
    """Wraps the objective: counts calls, tracks the best finite point seen."""

    def __init__(self, objective):
        self._objective = objective
        self.n_evals = 0
        self.best: ObjectiveEval | None = None

    def __call__(self, x: np.ndarray) -> ObjectiveEval:
        point = np.array(x, dtype=float, copy=True)
        try:
            value, gradient = self._objective(point)
        except Exception as exc:
            best = self.best
            raise ObjectiveError(
                f"objective raised {type(exc).__name__}: {exc}",
                point=best.point if best is not None else point,
                value=best.value if best is not None else math.nan,
            ) from exc
        ev = ObjectiveEval(point, float(value), np.asarray(gradient, dtype=float))
        self.n_evals += 1
        if ev.finite and (self.best is None or ev.value < self.best.value):
            self.best = ev
        return ev


def _zoom(ev, x, d, f0, dg0, a_lo, f_lo, dg_lo, a_hi, f_hi, dg_hi, cfg):
    """Strong-Wolfe zoom on the bracket [a_lo, a_hi] (lo is the better end)."""
    c1, c2 = cfg.c1, cfg.c2
    for _ in range(cfg.max_line_search_steps):
        width = abs(a_hi - a_lo)
        if width <= 1e-16 * max(1.0, abs(a_lo)):
            break
        a = None
        if math.isfinite(f_hi):
            a = _cubic_min(a_lo, f_lo, dg_lo, a_hi, f_hi, dg_hi)
        lo, hi = (a_lo, a_hi) if a_lo < a_hi else (a_hi, a_lo)
        margin = 1e-3 * width
        if a is None or not (lo + margin <= a <= hi - margin):
            a = 0.5 * (a_lo + a_hi)
        trial = ev(x + a * d)
        if not trial.finite:
            a_hi, f_hi, dg_hi = a, math.inf, 0.0
            continue
        f, dg = trial.value, float(trial.gradient @ d)
        if f > f0 + c1 * a * dg0 or f >= f_lo:
            a_hi, f_hi, dg_hi = a, f, dg
        else:
            if abs(dg) <= -c2 * dg0:
                return a, trial
            if dg * (a_hi - a_lo) >= 0.0:
                a_hi, f_hi, dg_hi = a_lo, f_lo, dg_lo
            a_lo, f_lo, dg_lo = a, f, dg
    return None, None


def _refine(ev, x, d, f0, dg0, a_prev, f_prev, dg_prev, alpha, trial, cfg):
    """One cubic polish of an already-acceptable step.

    The cubic through the last two evaluations minimizes a quadratic exactly,
    so this recovers the true line minimum whenever the model is locally
    quadratic. The refined point is kept only if it also satisfies the strong
    Wolfe conditions with a value no worse than the accepted trial.
    """
    f, dg = trial.value, float(trial.gradient @ d)
    if dg == 0.0:
        return alpha, trial
    a_ref = _cubic_min(a_prev, f_prev, dg_prev, alpha, f, dg)
    if a_ref is None or a_ref <= 0.0 or a_ref == alpha or a_ref > _ALPHA_MAX:
        return alpha, trial
    refined = ev(x + a_ref * d)
    if not refined.finite:
        return alpha, trial
    dg_ref = float(refined.gradient @ d)
    armijo = refined.value <= f0 + cfg.c1 * a_ref * dg0
    curvature = abs(dg_ref) <= -cfg.c2 * dg0
    if armijo and curvature and refined.value <= f:
        return a_ref, refined
    return alpha, trial


def _line_search(ev, x, f0, g0, d, cfg):
    """Strong-Wolfe search along d from x. Returns (alpha, ObjectiveEval) or (None, None)."""
    c1, c2 = cfg.c1, cfg.c2
    dg0 = float(g0 @ d)
    a_prev, f_prev, dg_prev = 0.0, f0, dg0
    alpha = 1.0
    bracketing = 0
    for attempt in range(cfg.max_line_search_steps):
        trial = ev(x + alpha * d)
        if not trial.finite:
            alpha = 0.5 * (a_prev + alpha)
            continue
        f, dg = trial.value, float(trial.gradient @ d)
        if f > f0 + c1 * alpha * dg0 or (bracketing > 0 and f >= f_prev):
            return _zoom(ev, x, d, f0, dg0, a_prev, f_prev, dg_prev, alpha, f, dg, cfg)
        if abs(dg) <= -c2 * dg0:
            return _refine(ev, x, d, f0, dg0, a_prev, f_prev, dg_prev, alpha, trial, cfg)
        if dg >= 0.0:
            return _zoom(ev, x, d, f0, dg0, alpha, f, dg, a_prev, f_prev, dg_prev, cfg)
        a_prev, f_prev, dg_prev = alpha, f, dg
        alpha = min(2.0 * alpha, _ALPHA_MAX)
        bracketing += 1
    return None, None


def minimize(objective, x0, cfg: LbfgsConfig | None = None) -> OptResult:
    """Minimize ``objective(x) -> (value, gradient)`` from x0.

    Terminates when the gradient max-norm falls below the tolerance, the
    iteration cap is reached, or the line search fails (in which case the best
    point seen is returned).
    """
    cfg = cfg if cfg is not None else LbfgsConfig()
    ev = _Evaluator(objective)
    x = np.array(x0, dtype=float, copy=True)
    if x.ndim != 1:
        raise FitError(f"x0 must be a 1-D vector, got shape {x.shape}")
    current = ev(x)
    if not current.finite:
        raise FitError("objective is non-finite at the initial point")
    f, g = current.value, current.gradient

    pairs: list[tuple[np.ndarray, np.ndarray]] = []
    trace = [(0, f, float(np.max(np.abs(g))))]
    iterations = 0
    termination = MAX_ITER
    while True:
        g_inf = float(np.max(np.abs(g)))
        if g_inf <= cfg.gradient_tolerance:
            termination = GRADIENT_TOL
            break
        if iterations >= cfg.max_iterations:
            termination = MAX_ITER
            break
        d = two_loop_direction(g, pairs)
        if float(d @ g) >= 0.0:  # safeguard: curvature info went bad
            d = -g
        alpha, accepted = _line_search(ev, x, f, g, d, cfg)
        if alpha is None:
            termination = LINE_SEARCH_FAILURE
            best = ev.best
            if best is not None and best.value < f:
                x, f, g = best.point, best.value, best.gradient
                iterations += 1
                trace.append((iterations, f, float(np.max(np.abs(g)))))
            break
        x_new = x + alpha * d
        s = x_new - x
        y = accepted.gradient - g
        if float(s @ y) > _CURVATURE_EPS * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            pairs.append((s, y))
            if len(pairs) > cfg.memory:
                pairs.pop(0)
        x, f, g = x_new, accepted.value, accepted.gradient
        iterations += 1
        trace.append((iterations, f, float(np.max(np.abs(g)))))

    return OptResult(
        point=x,
        value=f,
        gradient=g,
        iterations=iterations,
        termination=termination,
        trace=trace,
        config=cfg,
        n_evals=ev.n_evals,
    )
