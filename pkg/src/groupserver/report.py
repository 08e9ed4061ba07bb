"""Report assembly and JSON/CSV emission.

A ``Report`` holds a JSON-ready ``data`` dict plus named CSV tables.  Every
average cost in ``data`` is stored as ``{"value": ..., "method": ...}`` so
the producing method travels with the number.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__

TOOL = "groupserver"


@dataclass
class Table:
    header: list
    rows: list


@dataclass
class Report:
    data: dict
    tables: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(self.data, indent=2, sort_keys=False)


def eta_entry(value, method, **extra):
    out = {"value": float(value), "method": method}
    out.update(extra)
    return out


def provenance(seed=None):
    return {"tool": TOOL, "version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "seed": seed}


def model_dict(model):
    h = model.holding
    if h.kind == "linear":
        holding = {"kind": "linear", "a": h.a}
    elif h.kind == "power":
        holding = {"kind": "power", "a": h.a, "p": h.p, "b": h.b}
    else:
        holding = {"kind": "table", "values": list(h.values), "slope": h.slope}
    return {"lambda": model.arrival_rate, "v": model.operating_weight, "holding": holding,
            "groups": [{"servers": g.servers, "mu": g.service_rate, "c": g.cost_rate}
                       for g in model.groups]}


def policy_table(policy, upto):
    """Rows ``[n, d(n,1), ..., d(n,K)]`` for n = 0..upto."""
    table = policy.table(upto)
    return Table(["n"] + [f"group_{k + 1}" for k in range(policy.K)],
                 [[n] + [int(x) for x in row] for n, row in enumerate(table)])


def curve_table(solve_report, upto):
    upto = min(upto, solve_report.truncation)
    return Table(["n", "g", "G"],
                 [[n, float(solve_report.g[n]), float(solve_report.G[n]) if n else None]
                  for n in range(upto + 1)])


def trace_table(trace):
    return Table(["iteration", "eta", "L", "frontier", "thresholds"],
                 [[i + 1, r.eta, r.mean_queue_length, r.frontier,
                   " ".join(map(str, r.thresholds)) if r.thresholds else ""]
                  for i, r in enumerate(trace.records)])


def trace_dict(trace, order=None):
    records = []
    for r in trace.records:
        rec = {"eta": r.eta, "L": r.mean_queue_length, "frontier": r.frontier,
               "truncation": r.truncation}
        if r.thresholds is not None:
            rec["thresholds_ranked"] = list(r.thresholds)
            if order is not None:
                by_group = [0] * len(order)
                for rank, k in enumerate(order):
                    by_group[k] = r.thresholds[rank]
                rec["thresholds"] = by_group
        records.append(rec)
    return {"iterations": trace.iterations, "converged": trace.converged,
            "status": trace.status, "records": records}


def table_dict(table):
    return [dict(zip(table.header, row)) for row in table.rows]


def solve_results(model, method, policy, solve_report, trace=None, theta=None,
                  scale_economies=None, margin=10):
    upto = policy.frontier + margin
    pol = policy_table(policy, upto)
    curves = curve_table(solve_report, upto)
    res = {
        "eta": eta_entry(solve_report.eta, method),
        "L": solve_report.mean_queue_length,
        "frontier": policy.frontier,
        "truncation": solve_report.truncation,
        "tail_mass": solve_report.tail_mass,
        "poisson_residual": solve_report.poisson_residual,
        "policy": [row[1:] for row in pol.rows],
        "g": [float(x) for x in solve_report.g[: upto + 1]],
        "G": [float(x) for x in solve_report.G[: upto + 1]],
    }
    if theta is not None:
        res["thresholds"] = list(theta.by_group())
        res["thresholds_ranked"] = list(theta.thresholds)
        res["cmu_order"] = [k + 1 for k in theta.order]
    if scale_economies is not None:
        res["scale_economies"] = scale_economies
    if trace is not None:
        res["trace"] = trace_dict(trace, theta.order if theta is not None else None)
        res["heuristic"] = trace.heuristic
    tables = {"policy": pol, "curves": curves}
    if trace is not None:
        tables["trace"] = trace_table(trace)
    return res, tables


def _plain(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def write_outputs(report: Report, out_dir, fmt="json", stem="report"):
    """Write the JSON report and/or CSV tables; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        path = os.path.join(out_dir, f"{stem}.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
            fh.write("\n")
        written.append(path)
    if fmt in ("csv", "both"):
        for name, table in report.tables.items():
            path = os.path.join(out_dir, f"{name}.csv")
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(table.header)
                for row in table.rows:
                    w.writerow(["" if v is None else _plain(v) for v in row])
            written.append(path)
    return written
