"""Quasi-Newton gradient ascent with Armijo backtracking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import OptimizationError


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for :func:`gradient_ascent`.

    Each iteration tries the full quasi-Newton step and shrinks it by
    ``shrink`` until the Armijo condition with constant ``armijo`` holds.
    ``initial_step`` scales the identity used before curvature is known;
    ``max_step`` caps that scale.
    """

    tol: float = 1e-8
    max_iter: int = 10000
    initial_step: float = 1.0
    armijo: float = 1e-4
    shrink: float = 0.5
    min_step: float = 1e-20
    max_step: float = 1e10

    def __post_init__(self):
        if not self.tol > 0 or not self.initial_step > 0:
            raise ValueError("tolerance and initial step must be positive")
        if not (0 < self.armijo < 1 and 0 < self.shrink < 1):
            raise ValueError("Armijo constants must lie in (0, 1)")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    grad_norm: float
    n_iter: int
    converged: bool
    message: str = ""


def gradient_ascent(fun, grad, x0, config: OptimizerConfig = OptimizerConfig()) -> OptimizeResult:
    """Maximize ``fun`` from ``x0``; stop when ``max|grad| < config.tol``.

    Search directions come from a BFGS approximation of the inverse
    Hessian, reset to a scaled identity whenever the curvature condition
    fails or the direction stops ascending. ``fun`` may return ``-inf`` (or
    nan) at trial points; such steps are simply shrunk. A non-finite value
    at ``x0`` raises :class:`~ctmn.exceptions.OptimizationError`.
    """
    x = np.array(x0, dtype=float)
    f = float(fun(x))
    if not np.isfinite(f):
        raise OptimizationError(f"objective is not finite at the starting point ({f})")
    g = np.asarray(grad(x), dtype=float)
    n = x.size
    eye = np.eye(n)
    H, fresh = config.initial_step * eye, True
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    for it in range(config.max_iter):
        if gnorm < config.tol:
            return OptimizeResult(x, f, gnorm, it, True, "gradient below tolerance")
        d = H @ g
        slope = float(g @ d)
        if not slope > 0:
            H, fresh = config.initial_step * eye, True
            d, slope = H @ g, float(g @ g) * config.initial_step
        # slack for rounding in f; otherwise tiny steps near the optimum are rejected
        slack = 8.0 * np.finfo(float).eps * max(abs(f), 1.0)
        a = 1.0
        while True:
            xn = x + a * d
            fn = float(fun(xn))
            if np.isfinite(fn) and fn >= f + config.armijo * a * slope - slack:
                break
            a *= config.shrink
            if a * np.max(np.abs(d)) < config.min_step:
                return OptimizeResult(x, f, gnorm, it, False, "line search failed to make progress")
        gn = np.asarray(grad(xn), dtype=float)
        s = xn - x
        yv = g - gn  # gradient change of the negated objective
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if fresh:
                H, fresh = min(sy / float(yv @ yv), config.max_step) * eye, False
            rho = 1.0 / sy
            V = eye - rho * np.outer(s, yv)
            H = V @ H @ V.T + rho * np.outer(s, s)
        else:
            H, fresh = config.initial_step * eye, True
        x, f, g = xn, fn, gn
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    converged = gnorm < config.tol
    return OptimizeResult(x, f, gnorm, config.max_iter, converged,
                          "gradient below tolerance" if converged else "iteration cap reached")
