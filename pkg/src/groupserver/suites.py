"""Parameter sweeps for the six published experiments.

All three-group experiments share M = (3, 4, 3) and mu = (6, 4, 2) with
h(n) = n; they differ in lambda, the cost vector c or the weight v.
"""

from __future__ import annotations

import time

import numpy as np

from .errors import ModelError
from .model import QueueModel
from .optimize import SolverOptions, algorithm1, algorithm2, check_scale_economies, threshold_to_policy
from .report import Report, Table, eta_entry, model_dict, provenance, solve_results

SERVERS = (3, 4, 3)
RATES = (6.0, 4.0, 2.0)
EX1_COSTS = ((7, 4, 3), (7, 4, 1.8))
EX2_COSTS = (7, 8, 5)
EX3_ARRIVALS = (2, 5, 10, 20, 30, 38, 39)
EX4_WEIGHTS = (0.1, 0.3, 0.5, 1, 2, 3)
EX5_SIZES = (3, 5, 10, 20, 30, 50)
EX6_COSTS = ((7, 4, 3), (7, 4, 1.8), (7, 4, 1), (8, 3, 1), (4, 3, 1), (18, 10, 3))

SUITE_NAMES = ("ex1", "ex2", "ex3", "ex4", "ex5", "ex6")


def three_group_model(costs=EX2_COSTS, arrival_rate=10.0, weight=1.0):
    return QueueModel.from_arrays(arrival_rate, SERVERS, RATES, costs,
                                  operating_weight=weight)


def scalability_model(K):
    """K groups of 3 servers, mu = (2..K+1), c = mu**0.9, load one half."""
    mu = np.arange(2, K + 2, dtype=float)
    servers = np.full(K, 3)
    return QueueModel.from_arrays(0.5 * float(servers @ mu), servers, mu, mu ** 0.9)


def _solve_point(model, algorithm, options, margin, timed=False):
    holds, _ = check_scale_economies(model)
    start = time.perf_counter()
    if algorithm == 1:
        policy, rep, trace = algorithm1(model, options)
        res, _ = solve_results(model, "algorithm1", policy, rep, trace,
                               scale_economies=holds, margin=margin)
    else:
        theta, rep, trace = algorithm2(model, options)
        policy = threshold_to_policy(model, theta)
        res, _ = solve_results(model, "algorithm2", policy, rep, trace, theta=theta,
                               scale_economies=holds, margin=margin)
    if timed:
        res["seconds"] = time.perf_counter() - start
    res["model"] = model_dict(model)
    return res


def _ex1(options, margin):
    points = [dict(c=list(c), **_solve_point(three_group_model(c), 1, options, margin))
              for c in EX1_COSTS]
    return points, None


def _ex2(options, margin):
    model = three_group_model(EX2_COSTS)
    p2 = _solve_point(model, 2, options, margin)
    p1 = _solve_point(model, 1, options, margin)
    p2["algorithm1_policy_matches"] = p1["policy"] == p2["policy"]
    return [dict(c=list(EX2_COSTS), **p2), dict(c=list(EX2_COSTS), **p1)], None


def _sweep(name, values, make, options, margin):
    points = []
    rows = []
    for x in values:
        res = _solve_point(make(x), 2, options, margin)
        points.append({name: x, **res})
        rows.append([x, res["eta"]["value"], " ".join(map(str, res["thresholds"])),
                     res["trace"]["iterations"]])
    return points, Table([name, "eta", "thresholds", "iterations"], rows)


def _ex5(options, margin):
    points = []
    rows = []
    for K in EX5_SIZES:
        res = _solve_point(scalability_model(K), 2, options, margin, timed=True)
        # keep large tables out of the summary
        for key in ("policy", "g", "G"):
            res.pop(key)
        points.append({"K": K, **res})
        rows.append([K, res["eta"]["value"], res["trace"]["iterations"], res["seconds"]])
    return points, Table(["K", "eta", "iterations", "seconds"], rows)


def _ex6(options, margin):
    points = []
    rows = []
    for c in EX6_COSTS:
        model = three_group_model(c)
        exact = _solve_point(model, 1, options, margin)
        cmu = _solve_point(model, 2, options, margin)
        e1, e2 = exact["eta"]["value"], cmu["eta"]["value"]
        err = 100.0 * (e2 - e1) / e1
        points.append({"c": list(c), "algorithm1": exact, "algorithm2": cmu,
                       "error_percent": err})
        rows.append([" ".join(f"{x:g}" for x in c), e1, e2, err,
                     " ".join(map(str, cmu["thresholds"]))])
    return points, Table(["c", "eta_algorithm1", "eta_algorithm2", "error_percent",
                          "thresholds_algorithm2"], rows)


def experiment_suite(name: str, options: SolverOptions | None = None,
                     margin: int = 10) -> Report:
    """Run one of the published experiments and collect its results."""
    options = options or SolverOptions()
    if name == "ex1":
        points, table = _ex1(options, margin)
    elif name == "ex2":
        points, table = _ex2(options, margin)
    elif name == "ex3":
        points, table = _sweep("lambda", EX3_ARRIVALS,
                               lambda lam: three_group_model(arrival_rate=lam), options, margin)
    elif name == "ex4":
        points, table = _sweep("v", EX4_WEIGHTS,
                               lambda v: three_group_model(weight=v), options, margin)
    elif name == "ex5":
        points, table = _ex5(options, margin)
    elif name == "ex6":
        points, table = _ex6(options, margin)
    else:
        raise ModelError(f"unknown suite {name!r}; choose from {', '.join(SUITE_NAMES)}")
    data = {"provenance": provenance(), "mode": "experiment-suite", "suite": name,
            "points": points}
    if name == "ex6":
        data["table"] = [{"c": p["c"],
                          "eta_algorithm1": eta_entry(p["algorithm1"]["eta"]["value"], "algorithm1"),
                          "eta_algorithm2": eta_entry(p["algorithm2"]["eta"]["value"],
                                                      "algorithm2 (heuristic c/mu rule)"),
                          "error_percent": round(p["error_percent"], 2)} for p in points]
    tables = {f"{name}_summary": table} if table is not None else {}
    return Report(data, tables)
