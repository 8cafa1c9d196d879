"""Shared builders for tests."""
import itertools

import numpy as np

from ctmn.acceptance import Acceptance
from ctmn.model import CtmnModel, Equilibrium, Feature, Variable

RING_THETA = (-0.2, -2.3, 0.7, 0.7, -1.2, -1.2, -1.2, -1.2)


def random_model(rng, n_vars=None, cards=None, acceptance=None, weight_scale=1.0, max_vars=5,
                 binary=False, pair_prob=0.5, triple=False):
    """Random well-formed model with unary tables, random pairwise features and optionally a triple."""
    if cards is None:
        n_vars = int(rng.integers(1, max_vars + 1)) if n_vars is None else n_vars
        cards = [2 if binary else int(rng.integers(2, 4)) for _ in range(n_vars)]
    n_vars = len(cards)
    variables = [Variable(f"V{i}", c) for i, c in enumerate(cards)]
    feats = [Feature((i,), rng.normal(size=c)) for i, c in enumerate(cards)]
    for a, b in itertools.combinations(range(n_vars), 2):
        if rng.random() < pair_prob:
            feats.append(Feature((a, b), rng.normal(size=(cards[a], cards[b]))))
    if triple and n_vars >= 3:
        s = tuple(sorted(rng.choice(n_vars, 3, replace=False).tolist()))
        feats.append(Feature(s, rng.normal(size=tuple(cards[v] for v in s))))
    weights = rng.normal(scale=weight_scale, size=len(feats))
    rates = []
    for c in cards:
        r = rng.uniform(0.2, 3.0, size=(c, c))
        rates.append(np.triu(r, 1) + np.triu(r, 1).T)
    if acceptance is None:
        acceptance = Acceptance.LOGISTIC if rng.random() < 0.5 else Acceptance.METROPOLIS
    return CtmnModel(variables, Equilibrium(feats, weights), rates, acceptance)


def single_binary(theta=np.log(3.0), rate=1.0, acceptance=Acceptance.LOGISTIC):
    """One binary variable with feature I{X = 1}."""
    return CtmnModel(
        [Variable("X", 2)],
        Equilibrium([Feature((0,), [0.0, 1.0])], [theta]),
        [np.array([[0.0, rate], [rate, 0.0]])],
        acceptance,
    )


def direct_augmented_logdensity(model, aug, pi):
    """Event-by-event log density of an augmented trajectory.

    Exponential waits at the total proposal rate, the choice of proposal,
    and acceptance / rejection with ``f(pi_y / pi_x)`` taken from the
    enumerated stationary vector ``pi``.
    """
    from ctmn.acceptance import accept_prob

    total = 0.0
    tau = aug.tau
    for m in range(aug.n_proposals):
        x = aug.states[m]
        rho = sum(model.rates[i][x[i]].sum() for i in range(model.n_variables))
        y = aug.proposals[m]
        i = int(np.flatnonzero(x != y)[0])
        r = model.rates[i][x[i], y[i]]
        z = pi[model.state_index(y)] / pi[model.state_index(x)]
        f = accept_prob(model.acceptance, z)
        total += np.log(rho) - rho * tau[m] + np.log(r / rho)
        total += np.log(f) if aug.accepted[m] else np.log1p(-f)
    x = aug.states[-1]
    rho = sum(model.rates[i][x[i]].sum() for i in range(model.n_variables))
    return total - rho * tau[-1]
