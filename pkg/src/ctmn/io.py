"""Persistence formats.

Model document (JSON, one model per file)::

    {
      "schema": "ctmn-model/1",
      "variables": [{"name": "X1", "cardinality": 2}, ...],
      "features": [
        {"scope": ["X1"], "indicator": [[1]]},          # 1 on listed assignments
        {"scope": ["X1", "X2"], "table": [[1.0, 0.0], [0.0, 1.0]]},
        ...
      ],
      "weights": [-0.2, ...],                           # one per feature
      "proposal_rates": [
        {"variable": "X1", "upper": [1.0]},             # strict upper triangle, row-major
        {"variable": "X2", "matrix": [[0, 2], [2, 0]]}, # or a full matrix
        ...
      ],
      "acceptance": "logistic"                          # or "metropolis"
    }

Models are always saved with dense tables and upper-triangular rates.
Reals are written as the shortest decimal that round-trips a double.

Trajectory file (JSON Lines). Each trajectory starts with a header line
followed by its events, in this exact key order::

    {"format": "ctmn-trajectory/1", "augmented": false, "horizon": 10.0,
     "model_hash": "3f1c...", "seed": 7, "variables": ["X1", ...]}
    {"time": 0.0, "kind": "init", "state": [0, 1, 0, 0]}
    {"time": 0.31, "kind": "accept", "variable": "X2", "from": 1, "to": 0}
    {"time": 0.52, "kind": "reject", "variable": "X4", "from": 0, "to": 1}

Event times are strictly increasing and below the horizon; ``reject``
lines only appear when the header says ``"augmented": true``.

Stationary estimate (JSON)::

    {"format": "ctmn-stationary/1", "learner": "ctbn",
     "variables": [...], "cardinalities": [...], "distribution": [...]}
"""
from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .acceptance import Acceptance
from .exceptions import DocumentError, ModelValidationError
from .model import CtmnModel, Equilibrium, Feature, Variable, symmetric_rates, validate_model
from .simulate import AugmentedTrajectory, Trajectory

MODEL_SCHEMA = "ctmn-model/1"
TRAJECTORY_FORMAT = "ctmn-trajectory/1"
STATIONARY_FORMAT = "ctmn-stationary/1"
BUILTIN_PREFIX = "builtin:"


def resolve(path):
    """Map ``builtin:NAME`` to the bundled ``NAME.json``; other paths pass through."""
    path = str(path)
    if path.startswith(BUILTIN_PREFIX):
        name = path[len(BUILTIN_PREFIX):]
        ref = resources.files("ctmn") / "data" / f"{name}.json"
        if not ref.is_file():
            raise DocumentError(f"no bundled document named {name!r}")
        return ref
    return Path(path)


def _read_json(path):
    ref = resolve(path)
    try:
        text = ref.read_text()
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(exc.msg, f"{path}: line {exc.lineno} column {exc.colno}") from None


# -- models ---------------------------------------------------------------

def model_to_dict(model: CtmnModel) -> dict:
    names = model.names
    return {
        "schema": MODEL_SCHEMA,
        "variables": [{"name": v.name, "cardinality": int(v.cardinality)} for v in model.variables],
        "features": [{"scope": [names[i] for i in f.scope], "table": f.table.tolist()} for f in model.features],
        "weights": [float(w) for w in model.weights],
        "proposal_rates": [
            {"variable": v.name, "upper": r[np.triu_indices(v.cardinality, 1)].tolist()}
            for v, r in zip(model.variables, model.rates)
        ],
        "acceptance": model.acceptance.value,
    }


def _field(d, key, where, kind=None):
    if not isinstance(d, dict) or key not in d:
        raise DocumentError(f"missing field {key!r}", where)
    val = d[key]
    if kind is not None and not isinstance(val, kind):
        raise DocumentError(f"field {key!r} must be a {kind.__name__ if isinstance(kind, type) else kind}",
                            f"{where}.{key}" if where else key)
    return val


def model_from_dict(doc: dict, validate=True) -> CtmnModel:
    """Build a model from a parsed document; field errors name the JSON path."""
    if not isinstance(doc, dict):
        raise DocumentError("model document must be a JSON object")
    schema = doc.get("schema")
    if schema != MODEL_SCHEMA:
        raise DocumentError(f"unsupported schema {schema!r} (expected {MODEL_SCHEMA!r})", "schema")

    variables = []
    for n, v in enumerate(_field(doc, "variables", "", list)):
        where = f"variables[{n}]"
        name = _field(v, "name", where, str)
        card = _field(v, "cardinality", where, int)
        variables.append(Variable(name, card))
    index = {v.name: i for i, v in enumerate(variables)}
    cards = [v.cardinality for v in variables]

    def var_index(name, where):
        if isinstance(name, int) and not isinstance(name, bool) and 0 <= name < len(variables):
            return name
        if name not in index:
            raise DocumentError(f"unknown variable {name!r}", where)
        return index[name]

    features = []
    for k, f in enumerate(_field(doc, "features", "", list)):
        where = f"features[{k}]"
        scope = [var_index(s, f"{where}.scope") for s in _field(f, "scope", where, list)]
        if "indicator" in f:
            try:
                features.append(Feature.indicator(scope, cards, [tuple(a) for a in f["indicator"]]))
            except (IndexError, TypeError, ValueError) as exc:
                raise DocumentError(f"bad indicator assignment ({exc})", f"{where}.indicator") from None
        else:
            try:
                table = np.array(_field(f, "table", where), dtype=float)
            except (TypeError, ValueError):
                raise DocumentError("table must be a nested list of numbers", f"{where}.table") from None
            features.append(Feature(scope, table))

    weights = _field(doc, "weights", "", list)
    try:
        weights = np.array(weights, dtype=float)
    except (TypeError, ValueError):
        raise DocumentError("weights must be numbers", "weights") from None

    rate_entries = _field(doc, "proposal_rates", "", list)
    rates = [None] * len(variables)
    for n, entry in enumerate(rate_entries):
        where = f"proposal_rates[{n}]"
        i = var_index(_field(entry, "variable", where), f"{where}.variable")
        try:
            if "matrix" in entry:
                rates[i] = np.array(entry["matrix"], dtype=float)
            else:
                rates[i] = symmetric_rates(cards[i], _field(entry, "upper", where, list))
        except (TypeError, ValueError) as exc:
            raise DocumentError(str(exc), where) from None
    missing = [variables[i].name for i, r in enumerate(rates) if r is None]
    if missing:
        raise DocumentError(f"no proposal rates for {missing}", "proposal_rates")

    try:
        acceptance = Acceptance.parse(_field(doc, "acceptance", "", str))
    except ValueError as exc:
        raise DocumentError(str(exc), "acceptance") from None

    model = CtmnModel(variables, Equilibrium(features, weights), rates, acceptance)
    if validate:
        violations = validate_model(model)
        if violations:
            raise ModelValidationError(violations)
    return model


def load_model(path) -> CtmnModel:
    """Read and validate a model document (``builtin:example_4_1`` for the bundled one)."""
    doc = _read_json(path)
    try:
        return model_from_dict(doc)
    except DocumentError as exc:
        raise DocumentError(str(exc), str(path)) from None


def dumps_model(model: CtmnModel) -> str:
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def save_model(model: CtmnModel, path):
    Path(path).write_text(dumps_model(model))


def model_hash(model: CtmnModel) -> str:
    canon = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# -- trajectories ---------------------------------------------------------

def _event(time, kind, name, a, b):
    return {"time": float(time), "kind": kind, "variable": name, "from": int(a), "to": int(b)}


def trajectory_lines(traj, names, model_hash=None, seed=None):
    """JSON lines for one trajectory (header first)."""
    augmented = isinstance(traj, AugmentedTrajectory)
    header = {"format": TRAJECTORY_FORMAT, "augmented": augmented, "horizon": float(traj.horizon),
              "model_hash": model_hash, "seed": seed, "variables": list(names)}
    lines = [json.dumps(header)]
    lines.append(json.dumps({"time": 0.0, "kind": "init", "state": [int(v) for v in traj.states[0]]}))
    if augmented:
        acc = traj.accepted
        for m, t in enumerate(traj.times):
            before, prop = traj.states[m], traj.proposals[m]
            i = int(np.flatnonzero(before != prop)[0])
            lines.append(json.dumps(_event(t, "accept" if acc[m] else "reject", names[i], before[i], prop[i])))
    else:
        for j, t in enumerate(traj.times):
            before, after = traj.states[j], traj.states[j + 1]
            i = int(np.flatnonzero(before != after)[0])
            lines.append(json.dumps(_event(t, "accept", names[i], before[i], after[i])))
    return lines


def write_trajectories(path, trajectories, model: CtmnModel, seeds=None):
    h = model_hash(model)
    seeds = list(seeds) if seeds is not None else [None] * len(trajectories)
    with open(path, "w") as fp:
        for tr, s in zip(trajectories, seeds):
            for line in trajectory_lines(tr, model.names, h, s):
                fp.write(line + "\n")


class _Builder:
    def __init__(self, header, lineno):
        self.header = header
        self.lineno = lineno
        self.names = header["variables"]
        self.state = None
        self.states, self.proposals, self.times = [], [], []
        self.last_time = None

    def add(self, ev, where):
        kind = ev.get("kind")
        t = ev.get("time")
        if not isinstance(t, (int, float)) or isinstance(t, bool):
            raise DocumentError("event time must be a number", where)
        if self.state is None:
            if kind != "init":
                raise DocumentError("first event of a trajectory must be 'init'", where)
            state = ev.get("state")
            if not isinstance(state, list) or len(state) != len(self.names):
                raise DocumentError(f"init state must list {len(self.names)} values", where)
            self.state = [int(v) for v in state]
            self.states.append(list(self.state))
            self.last_time = float(t)
            return
        if kind not in ("accept", "reject"):
            raise DocumentError(f"unknown event kind {kind!r}", where)
        if kind == "reject" and not self.header.get("augmented"):
            raise DocumentError("reject events are only allowed in augmented trajectories", where)
        if not t > self.last_time:
            raise DocumentError("event times must be strictly increasing", where)
        if not t < self.header["horizon"]:
            raise DocumentError("event time is not before the horizon", where)
        name = ev.get("variable")
        if name not in self.names:
            raise DocumentError(f"unknown variable {name!r}", where)
        i = self.names.index(name)
        if ev.get("from") != self.state[i]:
            raise DocumentError(f"'from' value {ev.get('from')!r} does not match current value {self.state[i]}", where)
        to = ev.get("to")
        if not isinstance(to, int) or to == self.state[i]:
            raise DocumentError("'to' must be an integer different from 'from'", where)
        prop = list(self.state)
        prop[i] = to
        self.proposals.append(prop)
        self.times.append(float(t))
        if kind == "accept":
            self.state = prop
        self.states.append(list(self.state))
        self.last_time = float(t)

    def build(self):
        if self.state is None:
            raise DocumentError("trajectory has no init event", f"line {self.lineno}")
        horizon = self.header["horizon"]
        if self.header.get("augmented"):
            return AugmentedTrajectory(self.states, np.array(self.proposals).reshape(-1, len(self.names)),
                                       self.times, horizon)
        return Trajectory(self.states, self.times, horizon)


def read_trajectories(path, model: CtmnModel = None):
    """Parse every trajectory in a JSON Lines file.

    With ``model`` the variable names must match the model's.
    """
    out = []
    builder = None
    try:
        fp = open(path)
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc.strerror or exc}") from None
    with fp:
        for lineno, line in enumerate(fp, 1):
            where = f"{path}: line {lineno}"
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DocumentError(exc.msg, where) from None
            if not isinstance(rec, dict):
                raise DocumentError("each line must be a JSON object", where)
            if "format" in rec:
                if rec["format"] != TRAJECTORY_FORMAT:
                    raise DocumentError(f"unsupported format {rec['format']!r}", where)
                horizon = rec.get("horizon")
                if not isinstance(horizon, (int, float)) or not horizon > 0:
                    raise DocumentError("header needs a positive horizon", where)
                if not isinstance(rec.get("variables"), list):
                    raise DocumentError("header needs a variables list", where)
                if model is not None and list(rec["variables"]) != list(model.names):
                    raise DocumentError(f"variables {rec['variables']} do not match the model's {list(model.names)}", where)
                if builder is not None:
                    out.append(builder.build())
                builder = _Builder(rec, lineno)
                continue
            if builder is None:
                raise DocumentError("event before any trajectory header", where)
            builder.add(rec, where)
    if builder is not None:
        out.append(builder.build())
    return out


# -- stationary estimates ---------------------------------------------------

def save_stationary(path, distribution, learner, model: CtmnModel, diagnostics=None):
    doc = {"format": STATIONARY_FORMAT, "learner": learner, "variables": list(model.names),
           "cardinalities": list(model.cardinalities),
           "distribution": [float(p) for p in distribution], "diagnostics": diagnostics or {}}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_stationary(path):
    doc = _read_json(path)
    if not isinstance(doc, dict) or doc.get("format") != STATIONARY_FORMAT:
        raise DocumentError(f"not a {STATIONARY_FORMAT} document", str(path))
    try:
        return np.array(doc["distribution"], dtype=float), doc
    except (KeyError, TypeError, ValueError):
        raise DocumentError("distribution must be a list of numbers", f"{path}: distribution") from None
