"""Sufficient statistics of trajectories and the analytic E-step.

Statistics are kept per variable ``i`` and blanket context ``u`` (the
mixed-radix index of the blanket values, see
:class:`ctmn.model.InteractionGraph`). Contexts that were never visited are
simply absent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acceptance import rejection_from_log_ratio
from .exceptions import TrajectoryError
from .model import CtmnModel, InteractionGraph, flip_log_ratios
from .simulate import AugmentedTrajectory, Trajectory, strip_proposals


@dataclass
class SufficientStats:
    """Dwell times and accepted / rejected proposal counts.

    ``time[i][u]`` has shape ``(card_i,)``; ``accepted[i][u]`` and
    ``rejected[i][u]`` have shape ``(card_i, card_i)``. The three dicts of a
    variable share the same keys. Counts are real so expected rejections fit
    the same representation.
    """

    cardinalities: tuple
    blankets: tuple
    time: list
    accepted: list
    rejected: list

    @classmethod
    def empty(cls, graph: InteractionGraph) -> "SufficientStats":
        n = graph.n_variables
        return cls(tuple(graph.cardinalities), tuple(graph.neighbors),
                   [{} for _ in range(n)], [{} for _ in range(n)], [{} for _ in range(n)])

    @property
    def n_variables(self):
        return len(self.cardinalities)

    def contexts(self, i):
        return sorted(self.time[i])

    def _ensure(self, i, ctx):
        if ctx not in self.time[i]:
            c = self.cardinalities[i]
            self.time[i][ctx] = np.zeros(c)
            self.accepted[i][ctx] = np.zeros((c, c))
            self.rejected[i][ctx] = np.zeros((c, c))

    def copy(self) -> "SufficientStats":
        return SufficientStats(
            self.cardinalities, self.blankets,
            [{u: a.copy() for u, a in d.items()} for d in self.time],
            [{u: a.copy() for u, a in d.items()} for d in self.accepted],
            [{u: a.copy() for u, a in d.items()} for d in self.rejected],
        )

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        if (self.cardinalities, self.blankets) != (other.cardinalities, other.blankets):
            raise ValueError("cannot merge statistics collected over different graphs")
        out = self.copy()
        for i in range(self.n_variables):
            for u in other.time[i]:
                out._ensure(i, u)
                out.time[i][u] += other.time[i][u]
                out.accepted[i][u] += other.accepted[i][u]
                out.rejected[i][u] += other.rejected[i][u]
        return out

    def without_rejections(self) -> "SufficientStats":
        out = self.copy()
        for i in range(self.n_variables):
            for u in out.rejected[i]:
                out.rejected[i][u][:] = 0.0
        return out

    def total_time(self, i):
        """``T[x_i]``: time with ``X_i = x_i``, summed over contexts."""
        out = np.zeros(self.cardinalities[i])
        for u in self.contexts(i):
            out += self.time[i][u]
        return out

    def total_counts(self, i):
        """``M[x_i, y_i]``: accepted plus rejected proposals, summed over contexts."""
        c = self.cardinalities[i]
        out = np.zeros((c, c))
        for u in self.contexts(i):
            out += self.accepted[i][u] + self.rejected[i][u]
        return out

    def total_accepted(self, i):
        c = self.cardinalities[i]
        out = np.zeros((c, c))
        for u in self.contexts(i):
            out += self.accepted[i][u]
        return out

    def to_records(self):
        """Flat per-cell records for dumping: one dict per (variable, context, value)."""
        rows = []
        for i in range(self.n_variables):
            for u in self.contexts(i):
                for x in range(self.cardinalities[i]):
                    rows.append({
                        "variable": i,
                        "context": int(u),
                        "value": x,
                        "time": float(self.time[i][u][x]),
                        "accepted": [float(v) for v in self.accepted[i][u][x]],
                        "rejected": [float(v) for v in self.rejected[i][u][x]],
                    })
        return rows


def _changed_variable(before, after):
    """Index of the single variable that differs, per row; raises on multi-variable jumps."""
    diff = before != after
    n_changed = diff.sum(axis=1)
    bad = np.flatnonzero(n_changed != 1)
    if bad.size:
        m = int(bad[0])
        raise TrajectoryError(
            f"step {m} changes {int(n_changed[m])} variables ({before[m].tolist()} -> {after[m].tolist()}); "
            "exactly one variable may change at a time"
        )
    return np.argmax(diff, axis=1)


def _check_states(states, graph):
    if states.shape[1] != graph.n_variables:
        raise TrajectoryError(f"trajectory has {states.shape[1]} variables, graph has {graph.n_variables}")
    cards = np.asarray(graph.cardinalities)
    if np.any(states < 0) or np.any(states >= cards):
        raise TrajectoryError("trajectory contains values outside the variables' domains")


def _add_time(stats, graph, states, dwell):
    for i in range(graph.n_variables):
        c = graph.cardinalities[i]
        ctx = graph.context_index(i, states)
        key = ctx * c + states[:, i]
        keys, inv = np.unique(key, return_inverse=True)
        sums = np.bincount(inv, weights=dwell, minlength=len(keys))
        for kk, s in zip(keys.tolist(), sums):
            u, x = divmod(kk, c)
            stats._ensure(i, u)
            stats.time[i][u][x] += s


def _add_counts(stats, graph, before, after, target):
    if len(before) == 0:
        return
    changed = _changed_variable(before, after)
    for i in np.unique(changed).tolist():
        c = graph.cardinalities[i]
        rows = changed == i
        ctx = graph.context_index(i, before[rows])
        key = (ctx * c + before[rows, i]) * c + after[rows, i]
        keys, counts = np.unique(key, return_counts=True)
        for kk, cnt in zip(keys.tolist(), counts):
            rest, y = divmod(kk, c)
            u, x = divmod(rest, c)
            stats._ensure(i, u)
            target(stats, i)[u][x, y] += cnt


def collect_observed_stats(traj: Trajectory, graph: InteractionGraph) -> SufficientStats:
    """Dwell times per value and blanket context; one accepted count per transition."""
    states = traj.states
    _check_states(states, graph)
    dwell = traj.dwells
    if np.any(dwell <= 0):
        raise TrajectoryError("dwell durations must be positive")
    stats = SufficientStats.empty(graph)
    _add_time(stats, graph, states, dwell)
    _add_counts(stats, graph, states[:-1], states[1:], lambda s, i: s.accepted[i])
    return stats


def collect_augmented_stats(aug: AugmentedTrajectory, graph: InteractionGraph) -> SufficientStats:
    """Observed statistics plus one rejected count per rejected proposal.

    Dwell times depend only on the state path, so they are taken from the
    stripped trajectory; this makes the result agree exactly with
    :func:`collect_observed_stats` apart from the rejected counts.
    """
    _check_states(aug.states, graph)
    if len(aug.proposals):
        _check_states(aug.proposals, graph)
    stats = collect_observed_stats(strip_proposals(aug), graph)
    _changed_variable(aug.states[:-1], aug.proposals)
    rej = ~aug.accepted
    _add_counts(stats, graph, aug.states[:-1][rej], aug.proposals[rej], lambda s, i: s.rejected[i])
    return stats


def collect_stats(trajectories, graph: InteractionGraph) -> SufficientStats:
    """Sum of per-trajectory statistics (augmented trajectories keep their rejections)."""
    total = SufficientStats.empty(graph)
    for tr in trajectories:
        if isinstance(tr, AugmentedTrajectory):
            total = total + collect_augmented_stats(tr, graph)
        else:
            total = total + collect_observed_stats(tr, graph)
    return total


def context_log_ratios(model: CtmnModel, i, ctx):
    """``(card, card)`` matrix of ``log g_i(x -> y | u)``; the diagonal is zero."""
    graph = model.graph
    c = model.cardinalities[i]
    local = np.zeros((c, model.n_variables), dtype=np.int64)
    for j, v in zip(graph.neighbors[i], graph.decode_context(i, ctx)):
        local[:, j] = v
    local[:, i] = np.arange(c)
    out = np.zeros((c, c))
    for y in range(c):
        out[:, y] = flip_log_ratios(model, i, local, y)
    out[np.arange(c), np.arange(c)] = 0.0
    return out


def _check_compatible(stats, model):
    if tuple(stats.cardinalities) != model.cardinalities or tuple(stats.blankets) != model.graph.neighbors:
        raise ValueError("statistics were collected over a different graph than the model's")


def expected_rejections(stats: SufficientStats, model: CtmnModel) -> SufficientStats:
    """Fill ``M^r[x, y | u] = T[x | u] * r[x, y] * (1 - f(g(x -> y | u)))``.

    Accepted counts and dwell times are carried over unchanged; any rejected
    counts already present are replaced.
    """
    _check_compatible(stats, model)
    out = stats.copy()
    for i in range(stats.n_variables):
        r = model.rates[i]
        for u in out.contexts(i):
            t = context_log_ratios(model, i, u)
            rej = out.time[i][u][:, None] * r * rejection_from_log_ratio(model.acceptance, t)
            np.fill_diagonal(rej, 0.0)
            out.rejected[i][u] = rej
    return out
