"""Acceptance functions mapping an equilibrium ratio to an acceptance probability.

Both functions satisfy ``f(z) = z * f(1/z)``, which is what makes the
resulting process reversible with respect to the target distribution.
Internally everything is evaluated from the log ratio ``t = log z`` so that
large feature weights never overflow.
"""
from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.special import expit

DEFAULT_PSI_CAP = 1e6


class Acceptance(str, Enum):
    LOGISTIC = "logistic"
    METROPOLIS = "metropolis"

    @classmethod
    def parse(cls, value) -> "Acceptance":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown acceptance kind {value!r} (expected one of {choices})") from None


def accept_prob(kind, z):
    """Acceptance probability ``f(z)`` for a ratio ``z > 0``.

    >>> accept_prob("logistic", 1.0)
    0.5
    """
    kind = Acceptance.parse(kind)
    z_arr = np.asarray(z, dtype=float)
    if np.any(~(z_arr > 0)):
        raise ValueError("acceptance ratio must be strictly positive")
    with np.errstate(divide="ignore"):
        out = acceptance_from_log_ratio(kind, np.log(z_arr))
    return float(out) if np.ndim(out) == 0 else out


def acceptance_from_log_ratio(kind, t):
    """``f(exp(t))``: stable sigmoid for logistic, clamped exponential for Metropolis."""
    t = np.asarray(t, dtype=float)
    if kind is Acceptance.LOGISTIC:
        return expit(t)
    return np.exp(np.minimum(t, 0.0))


def rejection_from_log_ratio(kind, t):
    """``1 - f(exp(t))`` without cancellation."""
    t = np.asarray(t, dtype=float)
    if kind is Acceptance.LOGISTIC:
        return expit(-t)
    return -np.expm1(np.minimum(t, 0.0))


def log_acceptance(kind, t):
    t = np.asarray(t, dtype=float)
    if kind is Acceptance.LOGISTIC:
        return -np.logaddexp(0.0, -t)
    return np.minimum(t, 0.0)


def log_rejection(kind, t):
    """``log(1 - f(exp(t)))``; ``-inf`` where Metropolis accepts surely (t >= 0)."""
    t = np.asarray(t, dtype=float)
    if kind is Acceptance.LOGISTIC:
        return -np.logaddexp(0.0, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t < 0.0, np.log(-np.expm1(np.minimum(t, 0.0))), -np.inf)


def score_weights(kind, t, cap=DEFAULT_PSI_CAP):
    """Return ``(psi_accept, psi_reject)`` at log ratio ``t``.

    These are ``z f'(z) / f(z)`` and ``z f'(z) / (1 - f(z))`` evaluated at
    ``z = exp(t)``, i.e. the derivatives of ``log f`` and ``-log(1 - f)``
    with respect to ``t``.

    For Metropolis the function has a kink at ``z = 1``. We take
    ``psi_accept = 1{z <= 1}`` and, for the rejection weight, the left limit
    ``z / (1 - z)`` clamped at ``cap``; the clamp value is also used for
    ``z >= 1``, where any positive rejection count makes the likelihood
    ``-inf`` anyway.
    """
    t = np.asarray(t, dtype=float)
    if kind is Acceptance.LOGISTIC:
        return expit(-t), expit(t)
    below = t < 0.0
    psi_a = (t <= 0.0).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.exp(np.minimum(t, 0.0)) / -np.expm1(np.minimum(t, 0.0))
    psi_r = np.where(below, np.minimum(ratio, cap), cap)
    return psi_a, psi_r
