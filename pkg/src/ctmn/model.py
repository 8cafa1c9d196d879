"""Continuous-time Markov network models.

A model pairs a log-linear equilibrium distribution (weighted features over
small variable subsets) with symmetric per-variable proposal rates and an
acceptance function. A proposed single-variable change ``x_i -> y_i`` is
accepted with probability ``f(g)``, where ``g`` is the equilibrium ratio of
the two joint states; ``g`` depends only on the variable's Markov blanket.

Joint states are enumerated in mixed radix with variable 0 as the most
significant digit: for cardinalities ``(2, 3)`` state ``(a, b)`` has index
``3 * a + b``. Every dense vector or matrix over the joint state space uses
this ordering.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .acceptance import Acceptance, acceptance_from_log_ratio
from .exceptions import StateSpaceTooLargeError

MAX_ENUMERATED_STATES = 2**20

#: Feature weights and proposal rates used for the four-variable ring example.
EXAMPLE_WEIGHTS = (-0.2, -2.3, 0.7, 0.7, -1.2, -1.2, -1.2, -1.2)
EXAMPLE_RATES = (1.0, 2.0, 3.0, 4.0)


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Variable:
    name: str
    cardinality: int


@dataclass(frozen=True, eq=False)
class Feature:
    """A real-valued function of the variables in ``scope``.

    ``table`` is dense with one axis per scope variable, in scope order.
    """

    scope: tuple
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(int(v) for v in self.scope))
        object.__setattr__(self, "table", _frozen(self.table))

    @classmethod
    def indicator(cls, scope, cardinalities, assignments) -> "Feature":
        """0/1 feature equal to one exactly on ``assignments`` (tuples over scope)."""
        scope = tuple(scope)
        table = np.zeros([cardinalities[v] for v in scope])
        for a in assignments:
            table[tuple(a)] = 1.0
        return cls(scope, table)

    def values(self, states):
        """Evaluate on a ``(N, n_variables)`` integer array of joint states."""
        states = np.asarray(states)
        return self.table[tuple(states[..., v] for v in self.scope)]

    def __eq__(self, other):
        if not isinstance(other, Feature):
            return NotImplemented
        return self.scope == other.scope and np.array_equal(self.table, other.table)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """Log-linear equilibrium: ``log pi(x) = sum_k weights[k] * features[k](x) - log Z``."""

    features: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "weights", _frozen(np.atleast_1d(self.weights)))

    def with_weights(self, weights) -> "Equilibrium":
        return Equilibrium(self.features, weights)


@dataclass(frozen=True)
class InteractionGraph:
    """Undirected graph induced by feature scopes, with blanket context coding.

    A blanket context of variable ``i`` is the mixed-radix index of the values
    of ``neighbors[i]`` (sorted, first neighbor most significant).
    """

    cardinalities: tuple
    neighbors: tuple

    @property
    def n_variables(self):
        return len(self.cardinalities)

    @property
    def edges(self):
        return frozenset(
            (i, j) for i, nb in enumerate(self.neighbors) for j in nb if i < j
        )

    def blanket(self, i):
        return self.neighbors[i]

    def blanket_cardinalities(self, i):
        return tuple(self.cardinalities[j] for j in self.neighbors[i])

    def n_contexts(self, i):
        return math.prod(self.blanket_cardinalities(i))

    def context_index(self, i, states):
        """Blanket context index of variable ``i`` for one state or an array of states."""
        states = np.asarray(states)
        nb = self.neighbors[i]
        if not nb:
            return np.zeros(states.shape[:-1], dtype=np.int64) if states.ndim > 1 else 0
        idx = np.ravel_multi_index(
            tuple(states[..., j] for j in nb), self.blanket_cardinalities(i)
        )
        return idx if states.ndim > 1 else int(idx)

    def decode_context(self, i, ctx):
        """Blanket values (aligned with ``neighbors[i]``) for context index ``ctx``."""
        if not self.neighbors[i]:
            return ()
        return tuple(int(v) for v in np.unravel_index(ctx, self.blanket_cardinalities(i)))


@dataclass(frozen=True, eq=False)
class CtmnModel:
    """Continuous-time Markov network.

    Parameters
    ----------
    variables : sequence of Variable
    equilibrium : Equilibrium
    rates : sequence of ndarray
        One symmetric ``(card, card)`` proposal-rate matrix per variable.
        Diagonals carry no meaning and are stored as zero.
    acceptance : Acceptance
    """

    variables: tuple
    equilibrium: Equilibrium
    rates: tuple
    acceptance: Acceptance = Acceptance.LOGISTIC

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "acceptance", Acceptance.parse(self.acceptance))
        rates = []
        for r in self.rates:
            r = np.array(r, dtype=float)
            if r.ndim == 2 and r.shape[0] == r.shape[1]:
                np.fill_diagonal(r, 0.0)
            rates.append(_frozen(r))
        object.__setattr__(self, "rates", tuple(rates))

    @property
    def features(self):
        return self.equilibrium.features

    @property
    def weights(self):
        return self.equilibrium.weights

    @property
    def cardinalities(self):
        return tuple(v.cardinality for v in self.variables)

    @property
    def n_variables(self):
        return len(self.variables)

    @property
    def n_states(self):
        return math.prod(self.cardinalities)

    @property
    def names(self):
        return tuple(v.name for v in self.variables)

    @cached_property
    def graph(self) -> InteractionGraph:
        return induced_graph(self)

    @cached_property
    def touching(self):
        """Per variable, indices of the features whose scope contains it."""
        return tuple(
            tuple(k for k, f in enumerate(self.features) if i in f.scope)
            for i in range(self.n_variables)
        )

    def with_parameters(self, weights=None, rates=None, acceptance=None) -> "CtmnModel":
        return CtmnModel(
            self.variables,
            self.equilibrium if weights is None else self.equilibrium.with_weights(weights),
            self.rates if rates is None else rates,
            self.acceptance if acceptance is None else acceptance,
        )

    def with_features(self, features, weights) -> "CtmnModel":
        return CtmnModel(self.variables, Equilibrium(features, weights), self.rates, self.acceptance)

    def variable_index(self, name):
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(f"no variable named {name!r}")

    def state_index(self, state):
        return int(np.ravel_multi_index(tuple(int(s) for s in state), self.cardinalities))

    def state_of(self, index):
        return tuple(int(v) for v in np.unravel_index(index, self.cardinalities))

    def all_states(self):
        """``(n_states, n_variables)`` array of all joint states in index order."""
        check_enumerable(self.cardinalities)
        grids = np.indices(self.cardinalities).reshape(self.n_variables, -1)
        return grids.T.copy()

    def proposal_exit_rates(self):
        """Per variable, the total proposal rate out of each of its values."""
        return tuple(r.sum(axis=1) for r in self.rates)


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Dense generator over the mixed-radix joint state space."""

    cardinalities: tuple
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cardinalities", tuple(self.cardinalities))
        object.__setattr__(self, "matrix", _frozen(self.matrix))

    @property
    def n_states(self):
        return self.matrix.shape[0]

    def index(self, state):
        return int(np.ravel_multi_index(tuple(int(s) for s in state), self.cardinalities))


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self):
        return f"{self.field}: {self.message}"


def check_enumerable(cardinalities, limit=MAX_ENUMERATED_STATES):
    n = math.prod(cardinalities)
    if n > limit:
        raise StateSpaceTooLargeError(
            f"joint state space has {n} states, above the enumeration limit of {limit}"
        )
    return n


def validate_model(model: CtmnModel) -> list:
    """Return the list of violations; an empty list means the model is well formed."""
    out = []
    names = set()
    for i, v in enumerate(model.variables):
        if not isinstance(v.cardinality, (int, np.integer)) or v.cardinality < 2:
            out.append(Violation(f"variables[{i}].cardinality", f"must be an integer >= 2, got {v.cardinality!r}"))
        if v.name in names:
            out.append(Violation(f"variables[{i}].name", f"duplicate name {v.name!r}"))
        names.add(v.name)
    n = model.n_variables
    cards = model.cardinalities

    for k, f in enumerate(model.features):
        where = f"features[{k}]"
        if not f.scope:
            out.append(Violation(f"{where}.scope", "empty scope"))
            continue
        if len(set(f.scope)) != len(f.scope):
            out.append(Violation(f"{where}.scope", "repeated variable"))
        bad = [v for v in f.scope if not 0 <= v < n]
        if bad:
            out.append(Violation(f"{where}.scope", f"variable index out of range: {bad}"))
            continue
        shape = tuple(cards[v] for v in f.scope)
        if f.table.shape != shape:
            out.append(Violation(f"{where}.table", f"shape {f.table.shape} does not match scope domain {shape}"))
        elif not np.all(np.isfinite(f.table)):
            out.append(Violation(f"{where}.table", "non-finite value"))

    w = model.weights
    if w.ndim != 1 or w.shape[0] != len(model.features):
        out.append(Violation("weights", f"length {w.size} does not match {len(model.features)} features"))
    elif not np.all(np.isfinite(w)):
        out.append(Violation("weights", "non-finite weight"))

    if len(model.rates) != n:
        out.append(Violation("rates", f"{len(model.rates)} matrices for {n} variables"))
    for i, r in enumerate(model.rates[:n]):
        where = f"rates[{i}]"
        if r.shape != (cards[i], cards[i]):
            out.append(Violation(where, f"shape {r.shape} does not match cardinality {cards[i]}"))
            continue
        if not np.all(np.isfinite(r)):
            out.append(Violation(where, "non-finite rate"))
            continue
        if np.any(r < 0):
            out.append(Violation(where, "negative proposal rate"))
        if not np.allclose(r, r.T, rtol=1e-12, atol=0.0):
            out.append(Violation(where, "proposal rates are not symmetric"))

    if not isinstance(model.acceptance, Acceptance):
        out.append(Violation("acceptance", f"unknown kind {model.acceptance!r}"))
    return out


def induced_graph(model: CtmnModel) -> InteractionGraph:
    """Graph with an edge between every pair of variables sharing a feature scope."""
    n = model.n_variables
    nb = [set() for _ in range(n)]
    for f in model.features:
        for a in f.scope:
            for b in f.scope:
                if a != b:
                    nb[a].add(b)
    return InteractionGraph(model.cardinalities, tuple(tuple(sorted(s)) for s in nb))


def log_unnormalized_weight(model: CtmnModel, x) -> float:
    """``sum_k theta_k s_k(x)``; subtract ``log Z`` to get ``log pi(x)``."""
    x = np.asarray(x)
    return float(_log_weights(model, x[None, :])[0])


def _log_weights(model, states):
    acc = np.zeros(len(states))
    for theta, f in zip(model.weights, model.features):
        acc = acc + theta * f.values(states)
    return acc


def log_partition(model: CtmnModel) -> float:
    return float(logsumexp(_log_weights(model, model.all_states())))


def stationary_exact(model: CtmnModel) -> np.ndarray:
    """Equilibrium distribution by exhaustive enumeration (log-sum-exp normalized)."""
    lw = _log_weights(model, model.all_states())
    return np.exp(lw - logsumexp(lw))


def flip_log_ratios(model: CtmnModel, i, states, targets):
    """``log g_i`` for changing variable ``i`` to ``targets`` in each of ``states``.

    Only features containing ``i`` are read, so ``states`` need only be
    correct on the blanket of ``i`` and on ``i`` itself.
    """
    states = np.asarray(states)
    after = states.copy()
    after[..., i] = targets
    acc = np.zeros(states.shape[:-1])
    for k in model.touching[i]:
        f = model.features[k]
        acc = acc + model.weights[k] * (f.values(after) - f.values(states))
    return acc


def _local_state(model, i, x_i, blanket_values):
    state = np.zeros(model.n_variables, dtype=np.int64)
    for j, v in zip(model.graph.neighbors[i], blanket_values):
        state[j] = v
    state[i] = x_i
    return state


def g_ratio(model: CtmnModel, i, x_i, y_i, u_i) -> float:
    """Equilibrium ratio ``pi(y) / pi(x)`` for the flip ``x_i -> y_i`` in blanket context ``u_i``.

    ``u_i`` gives the values of ``model.graph.neighbors[i]`` in order, or is a
    mapping from neighbor index to value.
    """
    nb = model.graph.neighbors[i]
    if isinstance(u_i, dict):
        if set(u_i) != set(nb):
            raise ValueError(f"blanket assignment must cover exactly {nb}, got {sorted(u_i)}")
        u_i = [u_i[j] for j in nb]
    u_i = tuple(u_i)
    if len(u_i) != len(nb):
        raise ValueError(f"blanket assignment of length {len(u_i)} for blanket {nb}")
    if x_i == y_i:
        raise ValueError("a flip must change the variable's value")
    state = _local_state(model, i, x_i, u_i)
    return float(np.exp(flip_log_ratios(model, i, state[None, :], y_i)[0]))


def build_rate_matrix(model: CtmnModel) -> RateMatrix:
    """Dense generator ``q[x, y] = r_i[x_i, y_i] * f(g_i(x_i -> y_i | u_i))`` for single flips."""
    cards = model.cardinalities
    states = model.all_states()
    n_states = len(states)
    idx = np.arange(n_states)
    strides = np.array([math.prod(cards[i + 1:]) for i in range(len(cards))], dtype=np.int64)
    Q = np.zeros((n_states, n_states))
    for i, card in enumerate(cards):
        r = model.rates[i]
        for y in range(card):
            mask = states[:, i] != y
            src = states[mask]
            t = flip_log_ratios(model, i, src, y)
            q = r[src[:, i], y] * acceptance_from_log_ratio(model.acceptance, t)
            Q[idx[mask], idx[mask] + (y - src[:, i]) * strides[i]] = q
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return RateMatrix(cards, Q)


def _pair_log_ratios(pi):
    lp = np.log(np.asarray(pi, dtype=float))
    return lp[None, :] - lp[:, None]


def metropolis_generator(proposal, pi, acceptance) -> np.ndarray:
    """Unfactored generator ``q[x, y] = r[x, y] * f(pi_y / pi_x)`` from a symmetric proposal matrix."""
    R = np.array(proposal, dtype=float)
    np.fill_diagonal(R, 0.0)
    Q = R * acceptance_from_log_ratio(Acceptance.parse(acceptance), _pair_log_ratios(pi))
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def proposal_from_generator(Q, pi, acceptance) -> np.ndarray:
    """Proposal matrix ``r[x, y] = q[x, y] / f(pi_y / pi_x)`` of a reversible generator.

    Symmetric exactly when ``Q`` satisfies detailed balance under ``pi``.
    """
    Q = np.asarray(Q, dtype=float)
    f = acceptance_from_log_ratio(Acceptance.parse(acceptance), _pair_log_ratios(pi))
    R = np.where(Q > 0, Q / np.where(f > 0, f, 1.0), 0.0)
    np.fill_diagonal(R, 0.0)
    return R


def example_4_1(weights=EXAMPLE_WEIGHTS, rates=EXAMPLE_RATES, acceptance=Acceptance.LOGISTIC,
                drop_edges: Sequence = ()) -> CtmnModel:
    """Four binary variables on a ring, with unary and agreement features.

    Features are ``I{X_i = 1}`` for each variable followed by
    ``I{X_1 = X_2}, I{X_2 = X_3}, I{X_3 = X_4}, I{X_1 = X_4}``. Pairwise
    features over an edge listed in ``drop_edges`` (0-based pairs) are
    removed together with their weights.
    """
    cards = (2, 2, 2, 2)
    variables = tuple(Variable(f"X{i + 1}", 2) for i in range(4))
    feats = [Feature.indicator((i,), cards, [(1,)]) for i in range(4)]
    feats += [Feature.indicator(p, cards, [(0, 0), (1, 1)]) for p in [(0, 1), (1, 2), (2, 3), (0, 3)]]
    weights = list(weights)
    dropped = {tuple(sorted(e)) for e in drop_edges}
    keep = [k for k, f in enumerate(feats) if not (len(f.scope) == 2 and tuple(sorted(f.scope)) in dropped)]
    rate_mats = [np.array([[0.0, r], [r, 0.0]]) for r in rates]
    return CtmnModel(
        variables,
        Equilibrium([feats[k] for k in keep], [weights[k] for k in keep]),
        rate_mats,
        acceptance,
    )


def symmetric_rates(cardinality, upper) -> np.ndarray:
    """Symmetric rate matrix from its strict upper triangle in row-major order."""
    r = np.zeros((cardinality, cardinality))
    iu = np.triu_indices(cardinality, 1)
    upper = np.asarray(upper, dtype=float)
    if upper.shape != (len(iu[0]),):
        raise ValueError(f"expected {len(iu[0])} upper-triangular rates, got {upper.size}")
    r[iu] = upper
    return r + r.T
