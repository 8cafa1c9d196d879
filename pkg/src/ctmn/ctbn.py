"""Conditional rate matrices (CTBN form) and their amalgamation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .acceptance import acceptance_from_log_ratio
from .model import CtmnModel, RateMatrix, check_enumerable, flip_log_ratios


@dataclass(frozen=True, eq=False)
class CtbnConditionalRates:
    """One conditional generator per (variable, parent assignment).

    ``matrices[i]`` has shape ``(n_parent_contexts, card_i, card_i)``; the
    parent context is the mixed-radix index of ``parents[i]`` (sorted, first
    parent most significant).
    """

    cardinalities: tuple
    parents: tuple
    matrices: tuple

    def __post_init__(self):
        object.__setattr__(self, "cardinalities", tuple(self.cardinalities))
        object.__setattr__(self, "parents", tuple(tuple(p) for p in self.parents))
        mats = []
        for m in self.matrices:
            m = np.array(m, dtype=float)
            m.flags.writeable = False
            mats.append(m)
        object.__setattr__(self, "matrices", tuple(mats))

    def parent_cardinalities(self, i):
        return tuple(self.cardinalities[j] for j in self.parents[i])

    def conditional(self, i, parent_values=()):
        ctx = 0
        if self.parents[i]:
            ctx = int(np.ravel_multi_index(tuple(parent_values), self.parent_cardinalities(i)))
        return self.matrices[i][ctx]


def _fill_diagonals(mats):
    idx = np.arange(mats.shape[-1])
    mats[..., idx, idx] = 0.0
    mats[..., idx, idx] = -mats.sum(axis=-1)
    return mats


def to_ctbn(model: CtmnModel) -> CtbnConditionalRates:
    """Equivalent CTBN: parents are the Markov blanket, rates ``r * f(g)``."""
    graph = model.graph
    mats = []
    for i, card in enumerate(model.cardinalities):
        nb = graph.neighbors[i]
        pcards = graph.blanket_cardinalities(i)
        n_ctx = math.prod(pcards)
        m = np.zeros((n_ctx, card, card))
        local = np.zeros((n_ctx, model.n_variables), dtype=np.int64)
        if nb:
            local[:, list(nb)] = np.indices(pcards).reshape(len(nb), -1).T
        r = model.rates[i]
        for x in range(card):
            local[:, i] = x
            for y in range(card):
                if y == x:
                    continue
                t = flip_log_ratios(model, i, local, y)
                m[:, x, y] = r[x, y] * acceptance_from_log_ratio(model.acceptance, t)
        mats.append(_fill_diagonals(m))
    return CtbnConditionalRates(model.cardinalities, graph.neighbors, mats)


def amalgamate(ctbn: CtbnConditionalRates, cardinalities=None) -> RateMatrix:
    """Global generator: a single-variable change takes that variable's conditional rate."""
    cards = tuple(cardinalities) if cardinalities is not None else ctbn.cardinalities
    if cards != ctbn.cardinalities:
        raise ValueError(f"cardinalities {cards} do not match the CTBN's {ctbn.cardinalities}")
    n_states = check_enumerable(cards)
    n = len(cards)
    states = np.indices(cards).reshape(n, -1).T
    idx = np.arange(n_states)
    strides = np.array([math.prod(cards[i + 1:]) for i in range(n)], dtype=np.int64)
    Q = np.zeros((n_states, n_states))
    for i, card in enumerate(cards):
        if i >= len(ctbn.matrices):
            raise ValueError(f"missing conditional matrices for variable {i}")
        pa = ctbn.parents[i]
        mats = ctbn.matrices[i]
        expected = (math.prod(ctbn.parent_cardinalities(i)), card, card)
        if mats.shape != expected:
            raise ValueError(f"conditional matrices for variable {i} have shape {mats.shape}, expected {expected}")
        if pa:
            ctx = np.ravel_multi_index(tuple(states[:, j] for j in pa), ctbn.parent_cardinalities(i))
        else:
            ctx = np.zeros(n_states, dtype=np.int64)
        for y in range(card):
            mask = states[:, i] != y
            xi = states[mask, i]
            Q[idx[mask], idx[mask] + (y - xi) * strides[i]] = mats[ctx[mask], xi, y]
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return RateMatrix(cards, Q)
