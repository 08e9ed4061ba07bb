"""Command line interface.

    groupserver solve --config ex1.yaml --out out/ --format both
    groupserver evaluate --config ex2_eval.yaml
    groupserver simulate --config ex2_sim.yaml --seed 11
    groupserver brute-force --config ex2.yaml
    groupserver suite ex6 --out out/

Exit codes: 0 success, 2 bad config or usage, 3 invalid model, 4 no
convergence, 5 unstable policy, 1 any other solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import ctmc
from .config import RunConfig, load_config
from .errors import (ConfigError, ConfigValidationError, GroupServerError, ModelError, NonConvergenceError,
                     StabilityError)
from .model import Policy, ThresholdPolicy, check_policy
from .optimize import (algorithm1, algorithm2, brute_force_thresholds, check_scale_economies,
                       threshold_to_policy)
from .report import Report, eta_entry, model_dict, provenance, solve_results, write_outputs
from .simulate import simulate
from .suites import experiment_suite

log = logging.getLogger("groupserver")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_NONCONVERGENCE = 4
EXIT_INSTABILITY = 5

SUBCOMMAND_MODES = {"solve": None, "evaluate": "evaluate", "simulate": "simulate",
                    "brute-force": "brute-force", "suite": "experiment-suite"}


def thresholds_from_groups(model, by_group) -> ThresholdPolicy:
    """ThresholdPolicy from thresholds listed in the model's group order."""
    if len(by_group) != model.K:
        raise ModelError(f"need {model.K} thresholds, got {len(by_group)}")
    _, order = check_scale_economies(model)
    return ThresholdPolicy(tuple(by_group[k] for k in order), order)


def config_policy(cfg: RunConfig):
    """Policy named in the config plus the threshold vector if one was given."""
    model = cfg.model
    if cfg.thresholds is not None:
        theta = thresholds_from_groups(model, cfg.thresholds)
        return threshold_to_policy(model, theta), theta
    policy = Policy(np.asarray(cfg.table, dtype=np.int64))
    check_policy(model, policy)
    return policy, None


def _echo(cfg):
    return {k: v for k, v in cfg.raw.items() if k != "output"}


def run(cfg: RunConfig) -> Report:
    """Dispatch a parsed configuration to the requested mode."""
    mode = cfg.mode
    if mode == "experiment-suite":
        report = experiment_suite(cfg.suite, cfg.options, cfg.margin)
        report.data["config"] = _echo(cfg)
        return report

    model = cfg.model
    holds, order = check_scale_economies(model)
    data = {"provenance": provenance(), "config": _echo(cfg), "model": model_dict(model),
            "scale_economies": holds}

    if mode in ("auto", "algorithm1", "algorithm2"):
        if mode == "auto":
            mode = "algorithm2" if holds or cfg.heuristic_cmu else "algorithm1"
        data["mode"] = mode
        if mode == "algorithm2":
            theta, rep, trace = algorithm2(model, cfg.options)
            policy = threshold_to_policy(model, theta)
            res, tables = solve_results(model, "algorithm2", policy, rep, trace, theta=theta,
                                        scale_economies=holds, margin=cfg.margin)
            if trace.heuristic:
                # without scale economies the c/mu rule is only a heuristic
                p1, rep1, _ = algorithm1(model, cfg.options)
                res["comparison"] = {
                    "algorithm1_eta": eta_entry(rep1.eta, "algorithm1"),
                    "error_percent": 100.0 * (rep.eta - rep1.eta) / rep1.eta}
        else:
            policy, rep, trace = algorithm1(model, cfg.options)
            res, tables = solve_results(model, "algorithm1", policy, rep, trace,
                                        scale_economies=holds, margin=cfg.margin)
        data["results"] = res
        return Report(data, tables)

    if mode == "evaluate":
        data["mode"] = mode
        policy, theta = config_policy(cfg)
        rep = (ctmc.evaluate(model, policy, n_max=cfg.options.truncation)
               if cfg.options.truncation else
               ctmc.evaluate(model, policy, eta_tol=cfg.options.eta_tol))
        res, tables = solve_results(model, "exact evaluation", policy, rep, theta=theta,
                                    scale_economies=holds, margin=cfg.margin)
        data["results"] = res
        return Report(data, tables)

    if mode == "simulate":
        data["mode"] = mode
        policy, theta = config_policy(cfg)
        sim = cfg.simulation
        est = simulate(model, policy, sim)
        exact = ctmc.evaluate(model, policy)
        data["provenance"]["seed"] = sim.seed
        data["results"] = {
            "eta": eta_entry(est.eta_hat, "simulation", ci_halfwidth=est.ci_halfwidth,
                             confidence=sim.confidence),
            "L": est.mean_queue_length,
            "analytic_eta": eta_entry(exact.eta, "exact evaluation"),
            "covered": est.covers(exact.eta),
            "events": est.events,
            "rng": est.rng,
            "batch_means": [float(x) for x in est.batch_means],
        }
        if theta is not None:
            data["results"]["thresholds"] = list(theta.by_group())
        return Report(data, {})

    if mode == "brute-force":
        data["mode"] = mode
        theta, eta = brute_force_thresholds(model, cfg.theta_bound)
        policy = threshold_to_policy(model, theta)
        rep = ctmc.evaluate(model, policy)
        res, tables = solve_results(model, "brute-force threshold enumeration", policy, rep,
                                    theta=theta, scale_economies=holds, margin=cfg.margin)
        res["theta_bound"] = cfg.theta_bound
        res["enumeration_eta"] = eta_entry(eta, "brute-force threshold enumeration")
        data["results"] = res
        return Report(data, tables)

    raise ConfigError([f"unsupported mode {mode!r}"])


def build_parser():
    parser = argparse.ArgumentParser(prog="groupserver",
                                     description="Optimal scheduling of heterogeneous server groups.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_MODES:
        p = sub.add_parser(name)
        if name == "suite":
            p.add_argument("name", nargs="?", help="ex1 .. ex6")
            p.add_argument("--config")
        else:
            p.add_argument("--config", required=True)
        p.add_argument("--out", help="output directory (report is printed when omitted)")
        p.add_argument("--format", choices=("json", "csv", "both"))
        p.add_argument("--seed", type=int)
        p.add_argument("--max-iters", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--truncation", type=int)
        p.add_argument("--heuristic-cmu", action="store_true",
                       help="use the c/mu threshold iteration even without scale economies")
        if name == "solve":
            p.add_argument("--algorithm", choices=("auto", "1", "2"))
        if name == "brute-force":
            p.add_argument("--theta-bound", type=int)
    return parser


def _apply_overrides(cfg, args):
    mode = SUBCOMMAND_MODES[args.command]
    if mode is not None:
        cfg.mode = mode
    elif getattr(args, "algorithm", None):
        cfg.mode = {"auto": "auto", "1": "algorithm1", "2": "algorithm2"}[args.algorithm]
    elif cfg.mode not in ("auto", "algorithm1", "algorithm2"):
        cfg.mode = "auto"
    if args.heuristic_cmu:
        cfg.heuristic_cmu = True
        if cfg.mode == "auto":
            cfg.mode = "algorithm2"
    if args.max_iters is not None:
        cfg.options.max_iters = args.max_iters
    if args.tol is not None:
        cfg.options.eta_tol = args.tol
    if args.truncation is not None:
        cfg.options.truncation = args.truncation
    if args.seed is not None and cfg.simulation is not None:
        cfg.simulation.seed = args.seed
    if getattr(args, "theta_bound", None) is not None:
        cfg.theta_bound = args.theta_bound
    if args.out is not None:
        cfg.out_dir = args.out
    if args.format is not None:
        cfg.format = args.format
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "suite" and args.config is None:
            if args.name is None:
                raise ConfigError(["suite needs a name or --config"])
            cfg = RunConfig(model=None, mode="experiment-suite", suite=args.name,
                            raw={"mode": "experiment-suite", "suite": args.name})
        else:
            cfg = load_config(args.config)
            if args.command == "suite" and args.name is not None:
                cfg.suite = args.name
        cfg = _apply_overrides(cfg, args)
        if cfg.mode == "experiment-suite" and cfg.suite not in ("ex1", "ex2", "ex3", "ex4", "ex5", "ex6"):
            raise ConfigError([f"unknown suite {cfg.suite!r}"])
        report = run(cfg)
    except ConfigValidationError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"invalid model: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NonConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except StabilityError as exc:
        print(f"unstable: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    except GroupServerError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    if cfg.out_dir:
        for path in write_outputs(report, cfg.out_dir, cfg.format):
            log.info("wrote %s", path)
    else:
        print(report.to_json())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
