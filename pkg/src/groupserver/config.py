"""Run configuration files.

Configs are YAML documents with field names that follow the usual queueing
symbols::

    model:
      lambda: 10
      v: 1                       # operating cost weight, optional
      holding: {kind: linear, a: 1}
      groups:
        - {servers: 3, mu: 6, c: 7}
        - {servers: 4, mu: 4, c: 8}
    mode: algorithm2             # optional for most subcommands
    policy: {thresholds: [1, 9, 21]}
    simulation: {horizon: 1.0e6, seed: 7}
    options: {max_iters: 100}
    output: {dir: out, format: both}

Unknown keys are rejected with their line number so typos cannot silently
fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .errors import ConfigError, ConfigValidationError
from .model import GroupSpec, HoldingCost, QueueModel, validate
from .optimize import SolverOptions
from .simulate import SimConfig

MODES = ("auto", "algorithm1", "algorithm2", "evaluate", "simulate", "brute-force",
         "experiment-suite")
SUITES = ("ex1", "ex2", "ex3", "ex4", "ex5", "ex6")
FORMATS = ("json", "csv", "both")

# Allowed keys per section; ``None`` marks a free-form leaf.
SCHEMA = {
    "mode": None,
    "suite": None,
    "model": {
        "lambda": None,
        "v": None,
        "holding": {"kind": None, "a": None, "p": None, "b": None,
                    "values": None, "slope": None},
        "groups": [{"servers": None, "mu": None, "c": None}],
    },
    "policy": {"thresholds": None, "table": None},
    "simulation": {"horizon": None, "warmup": None, "replications": None,
                   "seed": None, "batch_count": None},
    "options": {"max_iters": None, "tol": None, "truncation": None,
                "heuristic_cmu": None, "theta_bound": None, "margin": None},
    "output": {"dir": None, "format": None},
}

# Validation violation names mapped to config field paths.
FIELD_PATHS = {
    "arrival_rate": "model.lambda",
    "groups": "model.groups",
    "servers": "model.groups[].servers",
    "rates": "model.groups[].mu",
    "costs": "model.groups[].c",
    "weight": "model.v",
    "capacity": "model.lambda",
    "holding": "model.holding",
    "convexity": "model.holding",
}


@dataclass
class RunConfig:
    model: QueueModel | None
    mode: str = "auto"
    suite: str | None = None
    thresholds: tuple | None = None
    table: list | None = None
    simulation: SimConfig | None = None
    options: SolverOptions = field(default_factory=SolverOptions)
    heuristic_cmu: bool = False
    theta_bound: int = 30
    margin: int = 10
    out_dir: str | None = None
    format: str = "json"
    raw: dict = field(default_factory=dict)


def _check_keys(node, schema, path, problems):
    if schema is None:
        return
    if isinstance(schema, list):
        if not isinstance(node, yaml.SequenceNode):
            problems.append(f"line {node.start_mark.line + 1}: {path} must be a list")
            return
        for i, item in enumerate(node.value):
            _check_keys(item, schema[0], f"{path}[{i}]", problems)
        return
    if not isinstance(node, yaml.MappingNode):
        problems.append(f"line {node.start_mark.line + 1}: {path or 'document'} must be a mapping")
        return
    for key_node, value_node in node.value:
        key = key_node.value
        where = f"{path}.{key}" if path else key
        if key not in schema:
            problems.append(f"line {key_node.start_mark.line + 1}: unknown field '{where}'")
            continue
        _check_keys(value_node, schema[key], where, problems)


def _number(data, key, path, problems, default=None, kind=float):
    if key not in data or data[key] is None:
        if default is None:
            problems.append(f"missing required field '{path}'")
        return default
    value = data[key]
    if isinstance(value, str):
        # YAML 1.1 reads exponents without a dot (1e6) as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"field '{path}' must be a number, got {value!r}")
        return default
    if kind is int and int(value) != value:
        problems.append(f"field '{path}' must be an integer, got {value!r}")
        return default
    return kind(value)


def _holding(data, problems):
    if data is None:
        return HoldingCost.linear(1.0)
    kind = data.get("kind", "linear")
    if kind == "linear":
        return HoldingCost.linear(_number(data, "a", "model.holding.a", problems, 1.0))
    if kind == "power":
        return HoldingCost.power(_number(data, "a", "model.holding.a", problems, 1.0),
                                 _number(data, "p", "model.holding.p", problems, 1.0),
                                 _number(data, "b", "model.holding.b", problems, 0.0))
    if kind == "table":
        values = data.get("values")
        if not isinstance(values, list) or not values:
            problems.append("field 'model.holding.values' must be a nonempty list")
            values = [0.0]
        return HoldingCost.table(values, _number(data, "slope", "model.holding.slope", problems))
    problems.append(f"field 'model.holding.kind' must be linear, power or table, got {kind!r}")
    return HoldingCost.linear(1.0)


def parse_model(data, problems):
    if not isinstance(data, dict):
        problems.append("missing required section 'model'")
        return None
    lam = _number(data, "lambda", "model.lambda", problems)
    groups = []
    raw_groups = data.get("groups")
    if not isinstance(raw_groups, list) or not raw_groups:
        problems.append("field 'model.groups' must be a nonempty list")
    else:
        for i, g in enumerate(raw_groups):
            p = f"model.groups[{i}]"
            if not isinstance(g, dict):
                problems.append(f"field '{p}' must be a mapping")
                continue
            groups.append(GroupSpec(_number(g, "servers", f"{p}.servers", problems, 1, int),
                                    _number(g, "mu", f"{p}.mu", problems, 1.0),
                                    _number(g, "c", f"{p}.c", problems, 0.0)))
    v = _number(data, "v", "model.v", problems, 1.0)
    holding = _holding(data.get("holding"), problems)
    if lam is None:
        return None
    return QueueModel(lam, tuple(groups), holding, v)


def parse_config(text: str, strict: bool = True) -> RunConfig:
    """Parse and validate a YAML run configuration.

    Raises ``ConfigError`` listing every problem found.
    """
    problems = []
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError([f"{where}{getattr(exc, 'problem', None) or exc}"]) from exc
    if node is None:
        raise ConfigError(["empty configuration"])
    if strict:
        _check_keys(node, SCHEMA, "", problems)
    if not isinstance(data, dict):
        raise ConfigError(problems or ["configuration must be a mapping"])

    mode = data.get("mode", "auto")
    if mode not in MODES:
        problems.append(f"field 'mode' must be one of {', '.join(MODES)}, got {mode!r}")
    suite = data.get("suite")
    if suite is not None and suite not in SUITES:
        problems.append(f"field 'suite' must be one of {', '.join(SUITES)}, got {suite!r}")

    cfg = RunConfig(model=None, mode=mode, suite=suite, raw=data)
    if mode == "experiment-suite":
        if suite is None:
            problems.append("mode 'experiment-suite' requires field 'suite'")
        if "model" in data:
            cfg.model = parse_model(data["model"], problems)
    else:
        cfg.model = parse_model(data.get("model"), problems)

    pol = data.get("policy") or {}
    if "thresholds" in pol:
        th = pol["thresholds"]
        if not isinstance(th, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in th):
            problems.append("field 'policy.thresholds' must be a list of integers")
        else:
            cfg.thresholds = tuple(th)
    if "table" in pol:
        cfg.table = pol["table"]
    if mode in ("evaluate", "simulate") and cfg.thresholds is None and cfg.table is None:
        problems.append(f"mode '{mode}' requires 'policy.thresholds' or 'policy.table'")

    sim = data.get("simulation")
    if sim is not None:
        try:
            cfg.simulation = SimConfig(
                horizon=_number(sim, "horizon", "simulation.horizon", problems, 1e6),
                warmup=sim.get("warmup"),
                replications=_number(sim, "replications", "simulation.replications", problems, 1, int),
                seed=_number(sim, "seed", "simulation.seed", problems, 0, int),
                batch_count=_number(sim, "batch_count", "simulation.batch_count", problems, 20, int))
        except ValueError as exc:
            problems.append(f"section 'simulation': {exc}")
    elif mode == "simulate":
        problems.append("mode 'simulate' requires section 'simulation'")

    opts = data.get("options") or {}
    cfg.options = SolverOptions(
        max_iters=_number(opts, "max_iters", "options.max_iters", problems, 100, int))
    if opts.get("tol") is not None:
        cfg.options.eta_tol = _number(opts, "tol", "options.tol", problems, 1e-9)
    if opts.get("truncation") is not None:
        cfg.options.truncation = _number(opts, "truncation", "options.truncation", problems, None, int)
    cfg.heuristic_cmu = bool(opts.get("heuristic_cmu", False))
    cfg.theta_bound = _number(opts, "theta_bound", "options.theta_bound", problems, 30, int)
    cfg.margin = _number(opts, "margin", "options.margin", problems, 10, int)

    out = data.get("output") or {}
    cfg.out_dir = out.get("dir")
    cfg.format = out.get("format", "json")
    if cfg.format not in FORMATS:
        problems.append(f"field 'output.format' must be one of {', '.join(FORMATS)}")

    if cfg.model is not None and not problems:
        report = validate(cfg.model)
        invalid = [f"invalid '{FIELD_PATHS.get(name, name)}': {msg}"
                   for name, msg in report.violations]
        if invalid:
            raise ConfigValidationError(invalid)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
