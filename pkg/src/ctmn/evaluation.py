"""Divergences, exact path likelihoods and the expected-transition time unit."""
from __future__ import annotations

import math

import numpy as np

from .model import CtmnModel, RateMatrix, build_rate_matrix, stationary_exact
from .simulate import Trajectory


def kl_divergence(p, q) -> float:
    """``sum_x p_x log(p_x / q_x)`` with ``0 log 0 = 0``; ``inf`` if ``q`` misses support of ``p``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"distributions have different shapes {p.shape} and {q.shape}")
    support = p > 0
    if np.any(q[support] <= 0):
        return math.inf
    val = float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))
    return max(val, 0.0)


def trajectory_loglik_exact(traj: Trajectory, Q: RateMatrix, init) -> float:
    """Log-density of an observed path under generator ``Q`` and initial distribution ``init``.

    Full dwells contribute ``q_xx * tau + log q_xy``; the censored final
    dwell contributes only its survival term.
    """
    M = Q.matrix
    idx = np.ravel_multi_index(tuple(traj.states.T), Q.cardinalities)
    init = np.asarray(init, dtype=float)
    if init[idx[0]] <= 0:
        return -math.inf
    diag = np.diag(M)
    total = math.log(init[idx[0]]) + float(diag[idx] @ traj.dwells)
    if len(idx) > 1:
        jumps = M[idx[:-1], idx[1:]]
        if np.any(jumps <= 0):
            return -math.inf
        total += float(np.log(jumps).sum())
    return total


def expected_transition_time_unit(model: CtmnModel) -> float:
    """Mean time between transitions at equilibrium, ``1 / sum_x pi_x |q_xx|``."""
    pi = stationary_exact(model)
    rate = float(pi @ -np.diag(build_rate_matrix(model).matrix))
    if not rate > 0:
        raise ValueError("the process has no transitions (all rates are zero)")
    return 1.0 / rate


def detailed_balance_residual(model: CtmnModel) -> float:
    """``max |pi_x q_xy - pi_y q_yx|`` over all state pairs."""
    pi = stationary_exact(model)
    Q = build_rate_matrix(model).matrix
    flow = pi[:, None] * Q
    return float(np.max(np.abs(flow - flow.T)))
