"""Sampling proposal-resolved and observed trajectories.

Randomness comes from :func:`numpy.random.default_rng` (PCG64) seeded with
the integer passed in. Batches use ``seed + j`` for the ``j``-th trajectory.
Results are reproducible for a given numpy version; nothing is promised
across implementations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acceptance import acceptance_from_log_ratio
from .exceptions import TrajectoryError
from .model import CtmnModel, flip_log_ratios, stationary_exact


def _int_states(states, n_variables=None):
    arr = np.array(states, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if n_variables is not None and arr.shape[1] != n_variables:
        raise TrajectoryError(f"states have {arr.shape[1]} variables, expected {n_variables}")
    arr.flags.writeable = False
    return arr


def _float_times(times):
    arr = np.array(times, dtype=float).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-constant path observed on ``[0, horizon]``.

    ``states[0]`` is the initial state and ``states[j]`` the state entered at
    ``times[j - 1]``. The final dwell is censored by the horizon.
    """

    states: np.ndarray
    times: np.ndarray
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "states", _int_states(self.states))
        object.__setattr__(self, "times", _float_times(self.times))
        object.__setattr__(self, "horizon", float(self.horizon))
        if len(self.times) != len(self.states) - 1:
            raise TrajectoryError(
                f"{len(self.states)} states need {len(self.states) - 1} jump times, got {len(self.times)}"
            )

    @property
    def initial_state(self):
        return tuple(int(v) for v in self.states[0])

    @property
    def n_transitions(self):
        return len(self.times)

    @property
    def dwells(self):
        return np.diff(np.concatenate(([0.0], self.times, [self.horizon])))

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.times, other.times)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class AugmentedTrajectory:
    """Trajectory annotated with every proposal, accepted or rejected.

    ``proposals[m]`` is the state proposed at ``times[m]`` from
    ``states[m]``; ``states[m + 1]`` is the state after it was resolved, so
    the proposal was accepted iff ``states[m + 1] == proposals[m]``.
    """

    states: np.ndarray
    proposals: np.ndarray
    times: np.ndarray
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "states", _int_states(self.states))
        props = np.array(self.proposals, dtype=np.int64).reshape(-1, self.states.shape[1])
        props.flags.writeable = False
        object.__setattr__(self, "proposals", props)
        object.__setattr__(self, "times", _float_times(self.times))
        object.__setattr__(self, "horizon", float(self.horizon))
        m = len(self.times)
        if len(self.states) != m + 1 or len(self.proposals) != m:
            raise TrajectoryError(
                f"augmented trajectory needs M+1 states and M proposals for M={m} times"
            )

    @property
    def n_proposals(self):
        return len(self.times)

    @property
    def tau(self):
        """Inter-proposal intervals; the last one runs to the horizon."""
        return np.diff(np.concatenate(([0.0], self.times, [self.horizon])))

    @property
    def accepted(self):
        return np.all(self.states[1:] == self.proposals, axis=1)

    def __eq__(self, other):
        if not isinstance(other, AugmentedTrajectory):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.proposals, other.proposals)
            and np.array_equal(self.times, other.times)
        )

    __hash__ = None


@dataclass(frozen=True)
class InitialDistribution:
    """How the first state is drawn: ``stationary``, ``uniform`` or ``fixed``."""

    kind: str
    state: tuple = None

    def __post_init__(self):
        if self.kind not in ("stationary", "uniform", "fixed"):
            raise ValueError(f"unknown initial distribution {self.kind!r}")
        if self.kind == "fixed":
            if self.state is None:
                raise ValueError("fixed initial distribution needs a state")
            object.__setattr__(self, "state", tuple(int(v) for v in self.state))

    @classmethod
    def stationary(cls):
        return cls("stationary")

    @classmethod
    def uniform(cls):
        return cls("uniform")

    @classmethod
    def fixed(cls, state):
        return cls("fixed", tuple(state))

    @classmethod
    def parse(cls, text):
        """Parse ``stationary``, ``uniform`` or ``fixed=0,1,0,1``."""
        text = text.strip()
        if text.startswith("fixed="):
            return cls.fixed(int(v) for v in text[len("fixed="):].split(","))
        return cls(text)

    def __str__(self):
        if self.kind == "fixed":
            return "fixed=" + ",".join(str(v) for v in self.state)
        return self.kind

    def draw(self, model: CtmnModel, rng, stationary=None):
        if self.kind == "fixed":
            if len(self.state) != model.n_variables or any(
                not 0 <= v < c for v, c in zip(self.state, model.cardinalities)
            ):
                raise ValueError(f"fixed state {self.state} is not valid for the model")
            return np.array(self.state, dtype=np.int64)
        if self.kind == "uniform":
            return np.array([rng.integers(c) for c in model.cardinalities], dtype=np.int64)
        pi = stationary_exact(model) if stationary is None else stationary
        return np.array(model.state_of(rng.choice(len(pi), p=pi)), dtype=np.int64)


class _Draws:
    """Block-buffered scalar draws from a generator."""

    def __init__(self, rng, block=4096):
        self.rng = rng
        self.block = block
        self._exp = rng.standard_exponential(block)
        self._uni = rng.random(2 * block)
        self._ie = 0
        self._iu = 0

    def exponential(self):
        if self._ie == self.block:
            self._exp = self.rng.standard_exponential(self.block)
            self._ie = 0
        v = self._exp[self._ie]
        self._ie += 1
        return v

    def uniform(self):
        if self._iu == 2 * self.block:
            self._uni = self.rng.random(2 * self.block)
            self._iu = 0
        v = self._uni[self._iu]
        self._iu += 1
        return v


class _Kernel:
    """Per-model tables used by the sampler."""

    def __init__(self, model: CtmnModel):
        self.model = model
        graph = model.graph
        self.exit = [r.sum(axis=1).tolist() for r in model.rates]
        self.cum = [np.cumsum(r, axis=1) for r in model.rates]
        self.blankets = [list(graph.neighbors[i]) for i in range(model.n_variables)]
        self.strides = []
        for i in range(model.n_variables):
            cards = graph.blanket_cardinalities(i)
            s = [1] * len(cards)
            for j in range(len(cards) - 2, -1, -1):
                s[j] = s[j + 1] * cards[j + 1]
            self.strides.append(s)
        self._accept = {}

    def context(self, i, x):
        return sum(x[j] * s for j, s in zip(self.blankets[i], self.strides[i]))

    def accept_prob(self, i, ctx, xi, y, x):
        key = (i, ctx, xi, y)
        p = self._accept.get(key)
        if p is None:
            t = flip_log_ratios(self.model, i, np.array(x, dtype=np.int64)[None, :], y)
            p = float(acceptance_from_log_ratio(self.model.acceptance, t)[0])
            self._accept[key] = p
        return p


def _check_rates(model):
    if not any(np.any(r > 0) for r in model.rates):
        raise ValueError("all proposal rates are zero; the process never moves")


def sample_augmented_trajectory(model: CtmnModel, init: InitialDistribution, horizon, seed=None, *,
                                rng=None, stationary=None, _kernel=None) -> AugmentedTrajectory:
    """Simulate proposals and their acceptance on ``[0, horizon]``.

    Waiting times are exponential with the total proposal rate of the
    current state; the proposal is picked in proportion to its rate and
    accepted with probability ``f(g)``. The pending proposal after the
    horizon is discarded.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    _check_rates(model)
    rng = np.random.default_rng(seed) if rng is None else rng
    kernel = _Kernel(model) if _kernel is None else _kernel
    x0 = init.draw(model, rng, stationary)
    x = x0.tolist()
    draws = _Draws(rng)
    exit_, cum = kernel.exit, kernel.cum
    n = model.n_variables
    rho = sum(exit_[i][x[i]] for i in range(n))

    times, var, target, acc = [], [], [], []
    t = 0.0
    while rho > 0.0:
        t += draws.exponential() / rho
        if t >= horizon:
            break
        u = draws.uniform() * rho
        for i in range(n):
            w = exit_[i][x[i]]
            if u < w:
                break
            u -= w
        else:
            i = max(j for j in range(n) if exit_[j][x[j]] > 0)
            u = exit_[i][x[i]] * 0.5
        xi = x[i]
        row = cum[i][xi]
        y = int(np.searchsorted(row, u, side="right"))
        if y >= len(row) or y == xi:
            y = int(np.flatnonzero(model.rates[i][xi] > 0)[-1])
        p = kernel.accept_prob(i, kernel.context(i, x), xi, y, x)
        ok = draws.uniform() < p
        times.append(t)
        var.append(i)
        target.append(y)
        acc.append(ok)
        if ok:
            rho += exit_[i][y] - exit_[i][xi]
            x[i] = y

    return _assemble(x0, np.array(times), np.array(var, dtype=np.int64),
                     np.array(target, dtype=np.int64), np.array(acc, dtype=bool), horizon)


def _assemble(x0, times, var, target, acc, horizon):
    m = len(times)
    n = len(x0)
    states = np.empty((m + 1, n), dtype=np.int64)
    pos = np.arange(m)
    for i in range(n):
        hit = acc & (var == i)
        last = np.where(hit, pos, -1)
        np.maximum.accumulate(last, out=last)
        vals = np.where(last >= 0, target[np.maximum(last, 0)], x0[i])
        states[0, i] = x0[i]
        states[1:, i] = vals
    proposals = states[:-1].copy()
    proposals[pos, var] = target
    return AugmentedTrajectory(states, proposals, times, horizon)


def strip_proposals(aug: AugmentedTrajectory) -> Trajectory:
    """Drop rejected proposals, merging the intervals they separated."""
    acc = aug.accepted
    states = np.concatenate([aug.states[:1], aug.states[1:][acc]])
    return Trajectory(states, aug.times[acc], aug.horizon)


def sample_trajectory(model, init, horizon, seed=None, **kwargs) -> Trajectory:
    return strip_proposals(sample_augmented_trajectory(model, init, horizon, seed, **kwargs))


def sample_trajectories(model: CtmnModel, init: InitialDistribution, horizon, count, seed=0, *,
                        augmented=False, rng=None):
    """``count`` independent trajectories.

    Without ``rng`` the ``j``-th trajectory is seeded with ``seed + j``;
    with ``rng`` all are drawn sequentially from that generator.
    """
    _check_rates(model)
    kernel = _Kernel(model)
    pi = stationary_exact(model) if init.kind == "stationary" else None
    out = []
    for j in range(count):
        gen = rng if rng is not None else np.random.default_rng(seed + j)
        aug = sample_augmented_trajectory(model, init, horizon, rng=gen, stationary=pi, _kernel=kernel)
        out.append(aug if augmented else strip_proposals(aug))
    return out
