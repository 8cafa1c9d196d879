"""Likelihood, gradients and EM for CTMN parameters.

With proposal attempts observed, the log-likelihood splits into one
proposal-rate term per variable (closed-form symmetric MLE) and a single
acceptance term in the feature weights, which involves only equilibrium
ratios and hence no partition function. When only the realized path is
observed, the rejected proposals are missing data and their expected counts
have a closed form, which gives a simple EM loop.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .acceptance import (
    DEFAULT_PSI_CAP,
    Acceptance,
    acceptance_from_log_ratio,
    log_acceptance,
    log_rejection,
    rejection_from_log_ratio,
    score_weights,
)
from .exceptions import ConvergenceWarning, DegenerateDataWarning, OptimizationError
from .model import CtmnModel, Equilibrium
from .optimize import OptimizerConfig, gradient_ascent
from .simulate import AugmentedTrajectory, strip_proposals
from .stats import SufficientStats, collect_stats


@dataclass(frozen=True)
class EmConfig:
    """Settings for :func:`em_fit`.

    ``init`` is ``"default"`` (zero weights, proposal rates at twice the
    accepted-transition estimate) or ``"template"`` (the template's own
    parameters). Convergence is declared when the largest parameter change,
    relative to ``max(|old value|, 1)``, drops below ``tol``.
    """

    tol: float = 1e-6
    max_iter: int = 500
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    init: str = "default"
    psi_cap: float = DEFAULT_PSI_CAP

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("EM tolerance must be positive")
        if self.init not in ("default", "template"):
            raise ValueError(f"unknown EM initialization {self.init!r}")


@dataclass
class WeightFit:
    weights: np.ndarray
    loglik: float
    grad_norm: float
    n_iter: int
    converged: bool
    message: str = ""


@dataclass
class EmResult:
    model: CtmnModel
    converged: bool
    n_iter: int
    history: list
    warnings: list = field(default_factory=list)


class _Cells:
    """All ``(variable, context, x, y)`` transition cells with ``x != y``.

    ``delta[c, k]`` is the change of feature ``k`` when the cell's flip is
    made, so ``delta @ weights`` is the cell's log equilibrium ratio.
    """

    def __init__(self, stats: SufficientStats, features):
        cards = stats.cardinalities
        n = len(cards)
        var, ctx, xs, ys = [], [], [], []
        for i in range(n):
            c = cards[i]
            for u in stats.contexts(i):
                for x in range(c):
                    for y in range(c):
                        if x != y:
                            var.append(i)
                            ctx.append(u)
                            xs.append(x)
                            ys.append(y)
        self.cardinalities = cards
        self.var = np.array(var, dtype=np.int64)
        self.ctx = np.array(ctx, dtype=np.int64)
        self.x = np.array(xs, dtype=np.int64)
        self.y = np.array(ys, dtype=np.int64)
        m = len(var)
        self.time = np.array([stats.time[i][u][x] for i, u, x in zip(var, ctx, xs)]) if m else np.zeros(0)
        self.accepted = np.array([stats.accepted[i][u][x, y] for i, u, x, y in zip(var, ctx, xs, ys)]) if m else np.zeros(0)
        self.rejected = np.array([stats.rejected[i][u][x, y] for i, u, x, y in zip(var, ctx, xs, ys)]) if m else np.zeros(0)

        local = np.zeros((m, n), dtype=np.int64)
        for i in range(n):
            sel = self.var == i
            nb = stats.blankets[i]
            if nb and sel.any():
                bc = [cards[j] for j in nb]
                vals = np.unravel_index(self.ctx[sel], bc)
                for j, v in zip(nb, vals):
                    local[sel, j] = v
        local[np.arange(m), self.var] = self.x
        after = local.copy()
        after[np.arange(m), self.var] = self.y

        self.delta = np.zeros((m, len(features)))
        for k, f in enumerate(features):
            for i in f.scope:
                outside = set(f.scope) - set(stats.blankets[i]) - {i}
                if outside:
                    raise ValueError(
                        f"feature {k} involves variables {sorted(outside)} outside the blanket of variable {i}"
                    )
                sel = self.var == i
                if sel.any():
                    self.delta[sel, k] = f.values(after[sel]) - f.values(local[sel])

    def rates(self, rates):
        if not len(self.var):
            return np.zeros(0)
        return np.array([rates[i][x, y] for i, x, y in zip(self.var, self.x, self.y)])

    def aggregate(self, values):
        """Sum a per-cell quantity into per-variable ``(card, card)`` matrices."""
        out = [np.zeros((c, c)) for c in self.cardinalities]
        for i in range(len(out)):
            sel = self.var == i
            np.add.at(out[i], (self.x[sel], self.y[sel]), values[sel])
        return out


def _xlogy(m, logp):
    with np.errstate(invalid="ignore"):
        return np.where(m > 0, m * logp, 0.0)


def _acceptance_value(cells, weights, kind, accepted, rejected):
    t = cells.delta @ weights
    total = _xlogy(accepted, log_acceptance(kind, t)).sum() + _xlogy(rejected, log_rejection(kind, t)).sum()
    return float(total)


def _acceptance_grad(cells, weights, kind, accepted, rejected, cap=DEFAULT_PSI_CAP):
    t = cells.delta @ weights
    psi_a, psi_r = score_weights(kind, t, cap)
    return cells.delta.T @ (psi_a * accepted - psi_r * rejected)


def loglik_proposal(stats: SufficientStats, rates) -> float:
    """``sum_i sum_{x != y} M[x, y] log r_i[x, y] - r_i[x, y] T[x]``; ``-inf`` if a used rate is zero."""
    total = 0.0
    for i in range(stats.n_variables):
        r = np.asarray(rates[i], dtype=float)
        m = stats.total_counts(i)
        t = stats.total_time(i)
        off = ~np.eye(len(t), dtype=bool)
        if np.any((m > 0) & (r <= 0) & off):
            return -math.inf
        with np.errstate(divide="ignore"):
            total += float(_xlogy(m[off], np.log(r[off])).sum() - (r * t[:, None])[off].sum())
    return total


def loglik_acceptance(stats: SufficientStats, equilibrium: Equilibrium, acceptance) -> float:
    """Acceptance part of the augmented log-likelihood.

    Returns ``-inf`` when a rejected count sits on a cell Metropolis accepts
    with certainty.
    """
    kind = Acceptance.parse(acceptance)
    cells = _Cells(stats, equilibrium.features)
    return _acceptance_value(cells, equilibrium.weights, kind, cells.accepted, cells.rejected)


def grad_acceptance(stats: SufficientStats, equilibrium: Equilibrium, acceptance,
                    psi_cap=DEFAULT_PSI_CAP) -> np.ndarray:
    """Gradient of :func:`loglik_acceptance` with respect to the feature weights."""
    kind = Acceptance.parse(acceptance)
    cells = _Cells(stats, equilibrium.features)
    return _acceptance_grad(cells, equilibrium.weights, kind, cells.accepted, cells.rejected, psi_cap)


def augmented_loglik(stats: SufficientStats, model: CtmnModel) -> float:
    """Complete-data log-likelihood: proposal terms plus the acceptance term."""
    return loglik_proposal(stats, model.rates) + loglik_acceptance(stats, model.equilibrium, model.acceptance)


def observed_loglik(stats: SufficientStats, model: CtmnModel) -> float:
    """Log-density of the observed transitions and dwell times (initial state excluded).

    Computed from blanket-level statistics, so no enumeration of the joint
    state space is needed.
    """
    return _observed_loglik(_Cells(stats, model.features), model)


def _observed_loglik(cells, model):
    if not len(cells.var):
        return 0.0
    t = cells.delta @ model.weights
    r = cells.rates(model.rates)
    q = r * acceptance_from_log_ratio(model.acceptance, t)
    if np.any((cells.accepted > 0) & (q <= 0)):
        return -math.inf
    with np.errstate(divide="ignore"):
        return float(_xlogy(cells.accepted, np.log(q)).sum() - (cells.time * q).sum())


def _symmetric_mle(counts, times, fallback):
    """Per variable ``(M[x,y] + M[y,x]) / (T[x] + T[y])``; ``fallback`` where the denominator is zero."""
    out, degenerate = [], []
    for i, (m, t, r0) in enumerate(zip(counts, times, fallback)):
        num = m + m.T
        den = t[:, None] + t[None, :]
        r = np.array(r0, dtype=float)
        ok = den > 0
        r[ok] = num[ok] / den[ok]
        np.fill_diagonal(r, 0.0)
        bad = ~ok & ~np.eye(len(t), dtype=bool)
        degenerate.extend((i, int(a), int(b)) for a, b in zip(*np.nonzero(np.triu(bad, 1))))
        out.append(r)
    return tuple(out), degenerate


def mle_proposal_rates(stats: SufficientStats, template) -> tuple:
    """Symmetric proposal-rate MLE from completed statistics.

    Pairs never visited (``T[x] + T[y] == 0``) keep the template value and
    trigger a :class:`DegenerateDataWarning`.
    """
    counts = [stats.total_counts(i) for i in range(stats.n_variables)]
    times = [stats.total_time(i) for i in range(stats.n_variables)]
    rates, degenerate = _symmetric_mle(counts, times, template)
    if degenerate:
        warnings.warn(
            f"no dwell time for proposal pairs {degenerate}; template rates kept", DegenerateDataWarning,
            stacklevel=2,
        )
    return rates


def _maximize(cells, weights0, kind, accepted, rejected, config, cap):
    res = gradient_ascent(
        lambda w: _acceptance_value(cells, w, kind, accepted, rejected),
        lambda w: _acceptance_grad(cells, w, kind, accepted, rejected, cap),
        weights0,
        config,
    )
    return WeightFit(res.x, res.value, res.grad_norm, res.n_iter, res.converged, res.message)


def maximize_acceptance_weights(stats: SufficientStats, equilibrium: Equilibrium, acceptance,
                                config: OptimizerConfig = OptimizerConfig(),
                                psi_cap=DEFAULT_PSI_CAP) -> WeightFit:
    """Maximize the acceptance log-likelihood over weights, starting at ``equilibrium.weights``.

    For the logistic acceptance the objective is concave, so the result is
    the global maximum (weights themselves may be non-unique when feature
    differences are collinear).
    """
    kind = Acceptance.parse(acceptance)
    cells = _Cells(stats, equilibrium.features)
    fit = _maximize(cells, equilibrium.weights, kind, cells.accepted, cells.rejected, config, psi_cap)
    if not fit.converged:
        warnings.warn(f"weight optimization did not converge: {fit.message}", ConvergenceWarning, stacklevel=2)
    return fit


def _param_vector(weights, rates):
    parts = [np.asarray(weights, dtype=float)]
    for r in rates:
        parts.append(r[np.triu_indices(len(r), 1)])
    return np.concatenate(parts)


def _relative_change(old, new):
    if not old.size:
        return 0.0
    return float(np.max(np.abs(new - old) / np.maximum(np.abs(old), 1.0)))


def em_fit(trajectories, template: CtmnModel, config: EmConfig = EmConfig(), callback=None) -> EmResult:
    """Fit weights and proposal rates to observed trajectories by EM.

    The E-step fills in expected rejected proposals in closed form; the
    M-step re-estimates proposal rates in closed form and weights by
    gradient ascent warm-started at the previous iterate. ``callback`` is
    called as ``callback(iteration, model)`` after every iteration
    (iteration 0 is the initialization).

    For the Metropolis acceptance the zero-weight start is a fixed point of
    EM (no rejection is ever expected at ratio 1), so the default
    initialization first runs the logistic fit and starts from its weights.
    This mode is experimental: the objective is not smooth.
    """
    trajectories = [strip_proposals(t) if isinstance(t, AugmentedTrajectory) else t for t in trajectories]
    kind = template.acceptance
    if kind is Acceptance.METROPOLIS and config.init == "default":
        warm = em_fit(trajectories, template.with_parameters(acceptance=Acceptance.LOGISTIC), config)
        start = template.with_parameters(weights=warm.model.weights, rates=warm.model.rates)
        res = em_fit(trajectories, start, EmConfig(config.tol, config.max_iter, config.optimizer,
                                                   "template", config.psi_cap), callback)
        res.warnings = warm.warnings + res.warnings
        return res

    stats = collect_stats(trajectories, template.graph)
    cells = _Cells(stats, template.features)
    times = [stats.total_time(i) for i in range(stats.n_variables)]
    notes = []

    accepted_by_var = cells.aggregate(cells.accepted)
    if config.init == "template":
        weights = np.array(template.weights, dtype=float)
        rates = template.rates
    else:
        weights = np.zeros(len(template.features))
        est, _ = _symmetric_mle(accepted_by_var, times, template.rates)
        rates = tuple(2.0 * r for r in est)
    _, degenerate = _symmetric_mle(accepted_by_var, times, template.rates)
    if degenerate:
        notes.append(f"no dwell time for proposal pairs {degenerate}; template rates kept")
        warnings.warn(notes[-1], DegenerateDataWarning, stacklevel=2)

    model = template.with_parameters(weights=weights, rates=rates)
    history = [{"iteration": 0, "observed_loglik": _observed_loglik(cells, model),
                "param_change": None, "inner_iterations": 0}]
    if callback is not None:
        callback(0, model)

    if not np.any(cells.accepted > 0):
        notes.append("no transitions observed; weights left at their initial values")
        warnings.warn(notes[-1], DegenerateDataWarning, stacklevel=2)
        return EmResult(model, True, 0, history, notes)

    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        t = cells.delta @ weights
        rejected = cells.time * cells.rates(rates) * rejection_from_log_ratio(kind, t)
        new_rates, _ = _symmetric_mle(
            [a + b for a, b in zip(accepted_by_var, cells.aggregate(rejected))], times, rates
        )
        start = _acceptance_value(cells, weights, kind, cells.accepted, rejected)
        if not np.isfinite(start):
            raise OptimizationError(
                "acceptance log-likelihood is -inf at the M-step start (rejections on surely-accepted cells)"
            )
        fit = _maximize(cells, weights, kind, cells.accepted, rejected, config.optimizer, config.psi_cap)
        change = _relative_change(_param_vector(weights, rates), _param_vector(fit.weights, new_rates))
        weights, rates = fit.weights, new_rates
        model = template.with_parameters(weights=weights, rates=rates)
        history.append({"iteration": it, "observed_loglik": _observed_loglik(cells, model),
                        "param_change": change, "inner_iterations": fit.n_iter,
                        "acceptance_loglik": fit.loglik, "inner_converged": fit.converged})
        if callback is not None:
            callback(it, model)
        if change < config.tol:
            converged = True
            break
    if not converged:
        notes.append(f"EM stopped at the iteration cap ({config.max_iter})")
        warnings.warn(notes[-1], ConvergenceWarning, stacklevel=2)
    return EmResult(model, converged, it, history, notes)
