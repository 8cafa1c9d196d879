"""Comparison learners for the equilibrium distribution.

* :func:`fit_mn_dwell` fits the log-linear model to the states visited,
  each weighted by the time spent there.
* :func:`fit_ctbn_mle` estimates conditional rates as count / time, and
  :func:`ctbn_stationary` extracts the stationary vector of the amalgamated
  generator.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .ctbn import CtbnConditionalRates, amalgamate
from .exceptions import ConvergenceWarning, DegenerateDataWarning, NullSpaceError
from .model import CtmnModel, InteractionGraph
from .optimize import OptimizerConfig, gradient_ascent
from .simulate import AugmentedTrajectory, strip_proposals
from .stats import collect_stats


@dataclass
class BaselineResult:
    stationary: np.ndarray
    learner: str
    diagnostics: dict = field(default_factory=dict)


def _observed(trajectories):
    return [strip_proposals(t) if isinstance(t, AugmentedTrajectory) else t for t in trajectories]


def occupancy(trajectories, cardinalities):
    """Total time spent in each joint state (mixed-radix order)."""
    n_states = int(np.prod(cardinalities))
    occ = np.zeros(n_states)
    for tr in _observed(trajectories):
        idx = np.ravel_multi_index(tuple(tr.states.T), cardinalities)
        occ += np.bincount(idx, weights=tr.dwells, minlength=n_states)
    return occ


def fit_mn_dwell(trajectories, template: CtmnModel, config: OptimizerConfig = OptimizerConfig()):
    """Duration-weighted maximum likelihood for the log-linear weights.

    Maximizes ``sum_x w(x) log pi_theta(x)`` with ``w`` the fraction of
    time spent in ``x`` (the total-time factor does not move the optimum).
    The gradient is empirical minus model feature expectations.

    Returns ``(weights, BaselineResult)``.
    """
    states = template.all_states()
    F = np.column_stack([f.values(states) for f in template.features]) if template.features else np.zeros((len(states), 0))
    occ = occupancy(trajectories, template.cardinalities)
    total = occ.sum()
    if total <= 0:
        raise ValueError("trajectories carry no observation time")
    w = occ / total
    target = w @ F

    def value(theta):
        lw = F @ theta
        return float(w @ lw - logsumexp(lw))

    def grad(theta):
        lw = F @ theta
        p = np.exp(lw - logsumexp(lw))
        return target - p @ F

    res = gradient_ascent(value, grad, np.array(template.weights, dtype=float), config)
    if not res.converged:
        warnings.warn(f"dwell-time fit did not converge: {res.message}", ConvergenceWarning, stacklevel=2)
    lw = F @ res.x
    pi = np.exp(lw - logsumexp(lw))
    diag = {"iterations": res.n_iter, "grad_norm": res.grad_norm, "converged": res.converged,
            "total_time": float(total)}
    return res.x, BaselineResult(pi, "mn_dwell", diag)


def fit_ctbn_mle(trajectories, graph: InteractionGraph) -> CtbnConditionalRates:
    """Conditional rates ``M^a[x, y | u] / T[x | u]``; zero where ``T[x | u] == 0``."""
    stats = collect_stats(_observed(trajectories), graph)
    mats = []
    unvisited = []
    for i, c in enumerate(graph.cardinalities):
        n_ctx = graph.n_contexts(i)
        m = np.zeros((n_ctx, c, c))
        for u in range(n_ctx):
            t = stats.time[i].get(u)
            if t is None:
                unvisited.extend((i, u, x) for x in range(c))
                continue
            for x in range(c):
                if t[x] > 0:
                    m[u, x] = stats.accepted[i][u][x] / t[x]
                else:
                    unvisited.append((i, u, x))
        idx = np.arange(c)
        m[:, idx, idx] = 0.0
        m[:, idx, idx] = -m.sum(axis=2)
        mats.append(m)
    if unvisited:
        warnings.warn(
            f"{len(unvisited)} (variable, context, value) cells never visited; their rates are set to 0",
            DegenerateDataWarning, stacklevel=2,
        )
    return CtbnConditionalRates(graph.cardinalities, graph.neighbors, mats)


def stationary_from_generator(Q, cond_limit=1e12, residual_tol=1e-10):
    """Normalized null vector of ``Q^T``.

    One balance equation is replaced by the normalization row and the square
    system is solved directly. Raises :class:`NullSpaceError` when that
    system is (numerically) singular, i.e. the null space is not
    one-dimensional.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    A = Q.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    if np.linalg.cond(A) > cond_limit:
        raise NullSpaceError("rate matrix has a multi-dimensional stationary null space (reducible chain)")
    pi = np.linalg.solve(A, b)
    if np.any(pi < -1e-12):
        raise NullSpaceError(f"stationary solution has negative entries (min {pi.min():.3g})")
    if np.any(pi < 0):
        warnings.warn("clamping tiny negative stationary entries to zero", RuntimeWarning, stacklevel=2)
        pi = np.maximum(pi, 0.0)
        pi /= pi.sum()
    scale = max(1.0, float(np.max(np.abs(Q))))
    residual = float(np.max(np.abs(pi @ Q)))
    if residual >= residual_tol * scale:
        raise NullSpaceError(f"stationary residual {residual:.3g} exceeds tolerance")
    return pi


def ctbn_stationary(ctbn: CtbnConditionalRates, cardinalities=None) -> np.ndarray:
    return stationary_from_generator(amalgamate(ctbn, cardinalities).matrix)


def fit_ctbn_stationary(trajectories, graph: InteractionGraph) -> BaselineResult:
    ctbn = fit_ctbn_mle(trajectories, graph)
    pi = ctbn_stationary(ctbn)
    return BaselineResult(pi, "ctbn", {"conditional_rates": ctbn})
