"""Command-line interface: ``ctmn {sample,learn,baseline,eval,experiment,stats}``.

Exit status: 0 success, 1 unexpected library error, 2 bad usage,
3 unreadable or malformed input document, 4 model or trajectory validation
failure. Errors are printed to stderr as one line,
``error: <kind>: <message>``.

The default seed comes from the ``CTMN_SEED`` environment variable (0 if
unset).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .acceptance import Acceptance
from .baselines import ctbn_stationary, fit_ctbn_mle, fit_mn_dwell
from .evaluation import detailed_balance_residual, expected_transition_time_unit, kl_divergence
from .exceptions import CtmnError, DocumentError, ModelValidationError, TrajectoryError
from .experiment import ExperimentConfig, run_experiment, summarize, write_rows_csv, write_summary_csv
from .learn import EmConfig, em_fit
from .model import stationary_exact
from .optimize import OptimizerConfig
from .simulate import InitialDistribution, sample_trajectories
from .stats import collect_stats

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DOCUMENT, EXIT_INVALID = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_seed():
    try:
        return int(os.environ.get("CTMN_SEED", "0"))
    except ValueError:
        raise UsageError("CTMN_SEED must be an integer") from None


def _with_acceptance(model, acceptance):
    return model if acceptance is None else model.with_parameters(acceptance=acceptance)


def _load_data(paths, model):
    trajs = []
    for p in paths:
        trajs.extend(io.read_trajectories(p, model))
    if not trajs:
        raise DocumentError("no trajectories in the given files")
    return trajs


def cmd_sample(args, out):
    model = _with_acceptance(io.load_model(args.model), args.acceptance)
    if args.horizon is not None:
        horizon = args.horizon
    else:
        horizon = args.length_units * expected_transition_time_unit(model)
    seed = _default_seed() if args.seed is None else args.seed
    init = InitialDistribution.parse(args.init)
    trajs = sample_trajectories(model, init, horizon, args.count, seed, augmented=args.augmented)
    io.write_trajectories(args.out, trajs, model, seeds=[seed + j for j in range(args.count)])
    print(json.dumps({"trajectories": len(trajs), "horizon": horizon, "seed": seed,
                      "transitions": int(sum(np.sum(t.accepted) if args.augmented else t.n_transitions
                                             for t in trajs))}), file=out)


def cmd_learn(args, out):
    template = _with_acceptance(io.load_model(args.template), args.acceptance)
    trajs = _load_data(args.data, template)
    config = EmConfig(tol=args.tol, max_iter=args.max_iter, init=args.init,
                      optimizer=OptimizerConfig(tol=args.grad_tol))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = em_fit(trajs, template, config)
    io.save_model(res.model, args.out)
    if args.diagnostics:
        with open(args.diagnostics, "w") as fp:
            for rec in res.history:
                fp.write(json.dumps(rec) + "\n")
    print(json.dumps({"converged": res.converged, "iterations": res.n_iter,
                      "observed_loglik": res.history[-1]["observed_loglik"],
                      "warnings": [str(w.message) for w in caught]}), file=out)


def cmd_baseline(args, out):
    template = io.load_model(args.template)
    trajs = _load_data(args.data, template)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.learner == "ctbn":
            pi = ctbn_stationary(fit_ctbn_mle(trajs, template.graph))
            diag = {}
        else:
            _, result = fit_mn_dwell(trajs, template)
            pi, diag = result.stationary, result.diagnostics
    diag["warnings"] = [str(w.message) for w in caught]
    io.save_stationary(args.out, pi, args.learner, template, diag)
    print(json.dumps({"learner": args.learner, "states": len(pi)}), file=out)


def cmd_eval(args, out):
    truth = io.load_model(args.true)
    pi_true = stationary_exact(truth)
    report = {"detailed_balance_residual_true": detailed_balance_residual(truth)}
    if args.model:
        other = io.load_model(args.model)
        if other.cardinalities != truth.cardinalities:
            raise ModelValidationError(["models have different state spaces"])
        estimate = stationary_exact(other)
        report["detailed_balance_residual"] = detailed_balance_residual(other)
    else:
        estimate, _ = io.load_stationary(args.estimate)
        if len(estimate) != len(pi_true):
            raise DocumentError(f"estimate has {len(estimate)} states, model has {len(pi_true)}", args.estimate)
    report["kl"] = kl_divergence(pi_true, estimate)
    print(json.dumps(report), file=out)


def _experiment_from_config(path):
    cfg = io._read_json(path)
    if not isinstance(cfg, dict):
        raise DocumentError("experiment config must be a JSON object", str(path))
    base = Path(str(path)).parent

    def rel(p):
        return p if str(p).startswith(io.BUILTIN_PREFIX) or Path(p).is_absolute() else str(base / p)

    try:
        model = io.load_model(rel(cfg["model"]))
        template = io.load_model(rel(cfg.get("template", cfg["model"])))
        em_cfg = cfg.get("em", {})
        em = EmConfig(tol=em_cfg.get("tol", 1e-6), max_iter=em_cfg.get("max_iter", 500))
        regimes = cfg.get("regimes") or [cfg["regime"]]
        configs = [
            ExperimentConfig(
                regime=r,
                sizes=tuple(cfg.get("sizes", (250, 1000, 4000))),
                replicates=int(cfg.get("replicates", 20)),
                base_seed=int(cfg.get("base_seed", _default_seed())),
                learners=tuple(cfg.get("learners", ("ctmn", "ctbn", "mn_dwell"))),
                trajectory_length=cfg.get("trajectory_length"),
                em=em,
            )
            for r in regimes
        ]
    except KeyError as exc:
        raise DocumentError(f"missing field {exc.args[0]!r}", str(path)) from None
    except (TypeError, ValueError) as exc:
        raise DocumentError(str(exc), str(path)) from None
    return model, template, configs


def cmd_experiment(args, out):
    model, template, configs = _experiment_from_config(args.config)
    if args.replicates is not None:
        configs = [ExperimentConfig(c.regime, c.sizes, args.replicates, c.base_seed, c.learners,
                                    c.trajectory_length, c.em) for c in configs]
    rows = []
    for c in configs:
        rows.extend(run_experiment(model, template, c))
    rows.sort(key=lambda r: (r.learner, r.regime, r.size, r.replicate))
    with open(args.out, "w") as fp:
        write_rows_csv(rows, fp)
    summary = summarize(rows)
    if args.summary:
        with open(args.summary, "w") as fp:
            write_summary_csv(summary, fp)
    print(json.dumps({"rows": len(rows), "failed": sum(r.failed for r in rows)}), file=out)


def cmd_stats(args, out):
    model = io.load_model(args.model)
    stats = collect_stats(_load_data(args.data, model), model.graph)
    for rec in stats.to_records():
        rec["variable"] = model.names[rec["variable"]]
        print(json.dumps(rec), file=out)


def build_parser():
    p = _Parser(prog="ctmn", description="Continuous-time Markov networks: simulate, learn, evaluate.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    acc = dict(type=Acceptance.parse, default=None, metavar="{logistic,metropolis}",
               help="override the model's acceptance function")

    s = sub.add_parser("sample", help="simulate trajectories from a model")
    s.add_argument("--model", required=True, help="model document or builtin:NAME")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--horizon", type=float, help="trajectory length in absolute time")
    g.add_argument("--length-units", type=float, help="trajectory length in expected transitions")
    s.add_argument("--init", default="stationary", help="stationary | uniform | fixed=v1,v2,...")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--augmented", action="store_true", help="keep rejected proposals")
    s.add_argument("--acceptance", **acc)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("learn", help="fit a model to trajectories by EM")
    s.add_argument("--template", required=True)
    s.add_argument("--data", required=True, nargs="+")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--grad-tol", type=float, default=1e-8)
    s.add_argument("--init", choices=("default", "template"), default="default")
    s.add_argument("--acceptance", **acc)
    s.add_argument("--diagnostics", help="write per-iteration records (JSON lines) here")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("baseline", help="estimate the stationary distribution with a comparison learner")
    s.add_argument("--template", required=True)
    s.add_argument("--data", required=True, nargs="+")
    s.add_argument("--learner", choices=("ctbn", "mn_dwell"), required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("eval", help="KL divergence and detailed-balance residuals")
    s.add_argument("--true", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--estimate")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("experiment", help="run the learning-curve experiment from a config file")
    s.add_argument("--config", required=True, help="JSON config or builtin:experiment")
    s.add_argument("--replicates", type=int, default=None, help="override the config's replicate count")
    s.add_argument("--out", required=True, help="per-run CSV")
    s.add_argument("--summary", help="median / quantile CSV")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("stats", help="dump sufficient statistics of trajectories")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True, nargs="+")
    s.set_defaults(func=cmd_stats)
    return p


def _fail(kind, message, code, err):
    print(f"error: {kind}: {' '.join(str(message).split())}", file=err)
    return code


def dispatch(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        args.func(args, out)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE, err)
    except DocumentError as exc:
        return _fail("document", exc, EXIT_DOCUMENT, err)
    except (ModelValidationError, TrajectoryError) as exc:
        return _fail("invalid", exc, EXIT_INVALID, err)
    except (CtmnError, ValueError, OSError) as exc:
        return _fail(type(exc).__name__, exc, EXIT_ERROR, err)
    return EXIT_OK


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
