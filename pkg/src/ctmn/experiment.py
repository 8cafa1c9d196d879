"""Synthetic learning experiment: KL of learned equilibria versus data size.

Data sizes and trajectory lengths are in expected-transition units (the
equilibrium mean time between transitions of the true model), so results
do not depend on the overall rate scale.

Replicate ``j`` draws all of its trajectories sequentially from
``numpy.random.default_rng(base_seed + j)``; the data set for a size is
the first ``size / trajectory_length`` of them, so smaller sets are
prefixes of larger ones.
"""
from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .estimators import LEARNERS
from .evaluation import expected_transition_time_unit, kl_divergence
from .learn import EmConfig
from .model import CtmnModel, stationary_exact
from .simulate import InitialDistribution, sample_trajectories

#: regime tag -> (initial distribution, default trajectory length)
REGIMES = {
    "stationary_init": ("stationary", 25.0),
    "uniform_init_long": ("uniform", 25.0),
    "uniform_init_short": ("uniform", 10.0),
}
_ALIASES = {"stationaryinit": "stationary_init", "uniforminitlong": "uniform_init_long",
            "uniforminitshort": "uniform_init_short"}

ROW_HEADER = ("learner", "regime", "size", "replicate", "kl", "seconds")
SUMMARY_HEADER = ("learner", "regime", "size", "n", "failed", "median", "q25", "q75")


def parse_regime(tag):
    key = str(tag).strip()
    key = _ALIASES.get(key.lower().replace("_", ""), key.lower())
    if key not in REGIMES:
        raise ValueError(f"unknown regime {tag!r} (expected one of {', '.join(REGIMES)})")
    return key


@dataclass(frozen=True)
class ExperimentConfig:
    regime: str
    sizes: tuple = (250, 1000, 4000)
    replicates: int = 20
    base_seed: int = 0
    learners: tuple = ("ctmn", "ctbn", "mn_dwell")
    trajectory_length: float = None
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self):
        object.__setattr__(self, "regime", parse_regime(self.regime))
        object.__setattr__(self, "sizes", tuple(self.sizes))
        object.__setattr__(self, "learners", tuple(self.learners))
        if not self.sizes or any(s <= 0 for s in self.sizes) or list(self.sizes) != sorted(set(self.sizes)):
            raise ValueError("sizes must be positive and strictly increasing")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        unknown = set(self.learners) - set(LEARNERS)
        if unknown:
            raise ValueError(f"unknown learners {sorted(unknown)}")
        if self.trajectory_length is None:
            object.__setattr__(self, "trajectory_length", REGIMES[self.regime][1])
        if not self.trajectory_length > 0:
            raise ValueError("trajectory length must be positive")

    @property
    def init(self):
        return InitialDistribution(REGIMES[self.regime][0])

    def n_trajectories(self, size):
        return max(1, int(round(size / self.trajectory_length)))


@dataclass
class ExperimentRow:
    learner: str
    regime: str
    size: int
    replicate: int
    kl: float
    seconds: float
    error: str = None

    @property
    def failed(self):
        return self.error is not None


def _make_learner(tag, template, em):
    if tag == "ctmn":
        return LEARNERS[tag](template=template, tol=em.tol, max_iter=em.max_iter,
                             grad_tol=em.optimizer.tol, max_inner_iter=em.optimizer.max_iter)
    return LEARNERS[tag](template=template)


def run_experiment(true_model: CtmnModel, template: CtmnModel, config: ExperimentConfig):
    """Sample data per replicate, fit each learner at each size, score by KL from the truth.

    Learner failures become rows with ``kl = nan`` and the error message
    kept in ``row.error``. Rows come back sorted by (learner, regime, size,
    replicate).
    """
    pi_true = stationary_exact(true_model)
    unit = expected_transition_time_unit(true_model)
    horizon = config.trajectory_length * unit
    n_max = config.n_trajectories(config.sizes[-1])
    rows = []
    for rep in range(config.replicates):
        rng = np.random.default_rng(config.base_seed + rep)
        data = sample_trajectories(true_model, config.init, horizon, n_max, rng=rng)
        for size in config.sizes:
            subset = data[:config.n_trajectories(size)]
            for tag in config.learners:
                t0 = time.perf_counter()
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        est = _make_learner(tag, template, config.em).fit(subset)
                    kl = kl_divergence(pi_true, est.stationary_distribution_)
                    err = None
                except Exception as exc:  # recorded, not raised
                    kl, err = float("nan"), f"{type(exc).__name__}: {exc}"
                rows.append(ExperimentRow(tag, config.regime, size, rep, kl, time.perf_counter() - t0, err))
    rows.sort(key=lambda r: (r.learner, r.regime, r.size, r.replicate))
    return rows


def summarize(rows):
    """Median and 25%/75% quantiles of KL per (learner, regime, size), failed rows excluded."""
    groups = {}
    for r in rows:
        groups.setdefault((r.learner, r.regime, r.size), []).append(r)
    out = []
    for (learner, regime, size), rs in sorted(groups.items()):
        kls = np.array([r.kl for r in rs if not r.failed])
        failed = sum(r.failed for r in rs)
        if kls.size:
            q25, med, q75 = np.percentile(kls, [25, 50, 75])
        else:
            q25 = med = q75 = float("nan")
        out.append({"learner": learner, "regime": regime, "size": size, "n": int(kls.size),
                    "failed": failed, "median": float(med), "q25": float(q25), "q75": float(q75)})
    return out


def medians(summary):
    """``{(learner, regime, size): median}`` lookup from :func:`summarize` output."""
    return {(s["learner"], s["regime"], s["size"]): s["median"] for s in summary}


def write_rows_csv(rows, fp):
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(ROW_HEADER)
    for r in rows:
        w.writerow([r.learner, r.regime, r.size, r.replicate, repr(float(r.kl)), repr(round(r.seconds, 6))])


def write_summary_csv(summary, fp):
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for s in summary:
        w.writerow([s["learner"], s["regime"], s["size"], s["n"], s["failed"],
                    repr(s["median"]), repr(s["q25"]), repr(s["q75"])])
