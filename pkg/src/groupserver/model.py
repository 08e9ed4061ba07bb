"""Domain types for the group-server queue.

A single FCFS queue with Poisson arrivals is served by K groups of
exponential servers.  Group k has ``servers`` identical servers, each with
rate ``service_rate`` and operating cost ``cost_rate`` per unit time.  The
state is the number of customers n; an action is the vector of working
server counts per group.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ModelError

#: Default number of states sampled when checking the holding cost shape.
CONVEXITY_SAMPLES = 1000

#: Holding costs above this are treated as overflow risk by ``validate``.
HOLDING_SOFT_CAP = 1e150


@dataclass(frozen=True)
class GroupSpec:
    servers: int
    service_rate: float
    cost_rate: float

    @property
    def cost_per_service(self):
        return self.cost_rate / self.service_rate


@dataclass(frozen=True)
class HoldingCost:
    """Holding cost rate h(n).

    ``kind`` is one of ``"linear"`` (h = a n), ``"power"`` (h = a n**p + b)
    or ``"table"`` (explicit values for n = 0..len-1, continued linearly with
    ``slope`` past the end of the table).
    """

    kind: str = "linear"
    a: float = 1.0
    p: float = 1.0
    b: float = 0.0
    values: tuple = ()
    slope: float = 0.0

    @classmethod
    def linear(cls, a=1.0):
        return cls(kind="linear", a=float(a))

    @classmethod
    def power(cls, a=1.0, p=1.0, b=0.0):
        return cls(kind="power", a=float(a), p=float(p), b=float(b))

    @classmethod
    def table(cls, values, slope):
        return cls(kind="table", values=tuple(float(x) for x in values),
                   slope=float(slope))

    def __call__(self, n):
        """Evaluate h at a state or an array of states."""
        arr = np.asarray(n)
        if np.any(arr < 0):
            raise ModelError(f"holding cost undefined for negative state {n!r}")
        x = arr.astype(float)
        if self.kind == "linear":
            out = self.a * x
        elif self.kind == "power":
            out = self.a * x ** self.p + self.b
        elif self.kind == "table":
            vals = np.asarray(self.values, dtype=float)
            last = len(vals) - 1
            idx = np.minimum(arr, last).astype(int)
            out = np.where(arr <= last, vals[idx],
                           vals[last] + self.slope * (x - last))
        else:
            raise ModelError(f"unknown holding cost kind {self.kind!r}")
        if np.ndim(out) == 0:
            return float(out)
        return out

    def structural_problems(self):
        """Problems detectable without sampling (h unbounded, valid params)."""
        problems = []
        if self.kind == "linear":
            if not self.a > 0:
                problems.append("holding slope a must be positive")
        elif self.kind == "power":
            if not self.a > 0:
                problems.append("holding coefficient a must be positive")
            if not self.p >= 1:
                problems.append("holding exponent p must be >= 1")
        elif self.kind == "table":
            if len(self.values) < 1:
                problems.append("holding table must not be empty")
            if not self.slope > 0:
                problems.append("holding extrapolation slope must be positive")
        else:
            problems.append(f"unknown holding cost kind {self.kind!r}")
        return problems


@dataclass(frozen=True)
class QueueModel:
    arrival_rate: float
    groups: tuple
    holding: HoldingCost = field(default_factory=HoldingCost)
    operating_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))

    @classmethod
    def from_arrays(cls, arrival_rate, servers, rates, costs, holding=None,
                    operating_weight=1.0):
        groups = tuple(GroupSpec(int(m), float(mu), float(c))
                       for m, mu, c in zip(servers, rates, costs))
        if not (len(groups) == len(servers) == len(rates) == len(costs)):
            raise ModelError("servers, rates and costs must have equal length")
        return cls(float(arrival_rate), groups,
                   holding if holding is not None else HoldingCost.linear(1.0),
                   float(operating_weight))

    @property
    def K(self):
        return len(self.groups)

    @property
    def servers(self):
        return np.array([g.servers for g in self.groups], dtype=np.int64)

    @property
    def rates(self):
        return np.array([g.service_rate for g in self.groups], dtype=float)

    @property
    def costs(self):
        return np.array([g.cost_rate for g in self.groups], dtype=float)

    @property
    def effective_costs(self):
        """Per-server operating cost rates scaled by the operating weight."""
        return self.operating_weight * self.costs

    @property
    def total_servers(self):
        return int(self.servers.sum())

    @property
    def capacity(self):
        """Maximum total service rate, sum of M_k mu_k."""
        return float(self.servers @ self.rates)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def add(self, name, message):
        self.violations.append((name, message))

    def names(self):
        return [name for name, _ in self.violations]

    def __str__(self):
        if self.ok:
            return "valid"
        return "; ".join(f"{name}: {msg}" for name, msg in self.violations)


def validate(model: QueueModel, samples: int = CONVEXITY_SAMPLES) -> ValidationReport:
    """Check a model against the solver's assumptions.

    Never raises for bad parameter values; every problem is recorded as a
    named violation (``rates``, ``servers``, ``costs``, ``weight``,
    ``capacity``, ``holding``, ``convexity``).
    """
    report = ValidationReport()
    lam = model.arrival_rate
    if not (np.isfinite(lam) and lam > 0):
        report.add("arrival_rate", f"arrival rate must be positive, got {lam}")
    if model.K < 1:
        report.add("groups", "at least one server group is required")
    for k, g in enumerate(model.groups, start=1):
        if int(g.servers) != g.servers or g.servers < 1:
            report.add("servers", f"group {k}: server count must be a positive integer, got {g.servers}")
        if not (np.isfinite(g.service_rate) and g.service_rate > 0):
            report.add("rates", f"group {k}: service rate must be positive, got {g.service_rate}")
        if not (np.isfinite(g.cost_rate) and g.cost_rate >= 0):
            report.add("costs", f"group {k}: cost rate must be nonnegative, got {g.cost_rate}")
    v = model.operating_weight
    if not (np.isfinite(v) and v >= 0):
        report.add("weight", f"operating weight must be nonnegative, got {v}")

    if model.K >= 1 and "servers" not in report.names() and "rates" not in report.names():
        cap = model.capacity
        if not lam < cap:
            report.add("capacity",
                       f"arrival rate {lam:g} must be below total service capacity {cap:g}")

    for msg in model.holding.structural_problems():
        report.add("holding", msg)
    if "holding" not in report.names():
        n_check = max(samples, len(model.holding.values) + 2)
        h = model.holding(np.arange(n_check + 1))
        if not np.all(np.isfinite(h)) or np.max(np.abs(h)) > HOLDING_SOFT_CAP:
            report.add("holding", f"holding cost overflows within the first {n_check} states")
        else:
            dh = np.diff(h)
            scale = np.maximum(1.0, np.abs(h[1:]))
            tol = 1e-12 * scale
            if np.any(dh < -tol):
                n = int(np.argmax(dh < -tol))
                report.add("convexity", f"holding cost decreases between n={n} and n={n + 1}")
            d2 = np.diff(dh)
            bad = d2 < -tol[1:]
            if np.any(bad):
                n = int(np.argmax(bad)) + 1
                report.add("convexity",
                           f"holding cost not convex at n={n}: "
                           f"h({n + 1})-h({n})={dh[n]:g} < h({n})-h({n - 1})={dh[n - 1]:g}")
    return report


def require_valid(model: QueueModel) -> None:
    report = validate(model)
    if not report.ok:
        raise ModelError(f"invalid model: {report}")


def holding(model: QueueModel, n):
    """Holding cost rate h(n)."""
    if np.any(np.asarray(n) < 0):
        raise ModelError(f"state must be nonnegative, got {n!r}")
    return model.holding(n)


def check_action(model: QueueModel, n: int, m: Sequence[int]) -> np.ndarray:
    m = np.asarray(m)
    if m.shape != (model.K,):
        raise ModelError(f"action must have {model.K} entries, got shape {m.shape}")
    if np.any(m != np.round(m)):
        raise ModelError(f"action entries must be integers, got {m}")
    m = m.astype(np.int64)
    if n < 0:
        raise ModelError(f"state must be nonnegative, got {n}")
    if np.any(m < 0) or np.any(m > model.servers):
        raise ModelError(f"action {tuple(m)} outside 0..M={tuple(model.servers)}")
    if m.sum() > n:
        raise ModelError(f"action {tuple(m)} uses {m.sum()} servers with only {n} customers")
    return m


def total_cost_rate(model: QueueModel, n: int, m: Sequence[int]) -> float:
    """Cost rate h(n) + v * sum_k m_k c_k of action ``m`` at state ``n``."""
    m = check_action(model, n, m)
    return model.holding(n) + float(m @ model.effective_costs)


def cost_vector(model: QueueModel, actions: np.ndarray) -> np.ndarray:
    """Cost rates f(n, actions[n]) for n = 0..len(actions)-1, unchecked."""
    n = np.arange(actions.shape[0])
    return model.holding(n) + actions @ model.effective_costs


class Policy:
    """State-indexed action table with an all-on tail.

    ``actions[n]`` is the action at state n for n <= frontier; every state
    beyond the frontier uses ``actions[frontier]``, which must be all-on.
    """

    __slots__ = ("actions",)

    def __init__(self, actions):
        arr = np.array(actions, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ModelError("policy table must be a nonempty 2-d array")
        arr.setflags(write=False)
        self.actions = arr

    @classmethod
    def all_on_from(cls, model, rows):
        """Policy whose table is ``rows`` followed by one all-on row."""
        rows = np.asarray(rows, dtype=np.int64).reshape(-1, model.K)
        return cls(np.vstack([rows, model.servers[None, :]]))

    @property
    def frontier(self):
        return self.actions.shape[0] - 1

    @property
    def K(self):
        return self.actions.shape[1]

    def action(self, n):
        return self.actions[min(n, self.frontier)]

    def table(self, n_max):
        """Actions for states 0..n_max as an (n_max+1, K) array."""
        if n_max <= self.frontier:
            return self.actions[: n_max + 1].copy()
        tail = np.repeat(self.actions[-1:], n_max - self.frontier, axis=0)
        return np.vstack([self.actions, tail])

    def key(self):
        """Hashable form that ignores repeated all-on rows at the end."""
        a = self.actions
        last = a.shape[0]
        while last > 1 and np.array_equal(a[last - 1], a[last - 2]):
            last -= 1
        return (last, a.shape[1], a[:last].tobytes())

    def __eq__(self, other):
        if not isinstance(other, Policy):
            return NotImplemented
        # Compare after extending both to a common frontier.
        n = max(self.frontier, other.frontier)
        return np.array_equal(self.table(n), other.table(n))

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Policy(frontier={self.frontier}, actions={self.actions.tolist()})"


def check_policy(model: QueueModel, policy: Policy) -> None:
    """Raise ModelError unless the policy is efficient with an all-on frontier."""
    a = policy.actions
    if a.shape[1] != model.K:
        raise ModelError(f"policy has {a.shape[1]} groups, model has {model.K}")
    if np.any(a < 0) or np.any(a > model.servers[None, :]):
        raise ModelError("policy action outside 0..M_k")
    totals = a.sum(axis=1)
    over = np.nonzero(totals > np.arange(a.shape[0]))[0]
    if over.size:
        n = int(over[0])
        raise ModelError(f"policy action at n={n} uses {totals[n]} servers with {n} customers")
    if not np.array_equal(a[-1], model.servers):
        raise ModelError("policy frontier action must turn every server on")


@dataclass(frozen=True)
class ThresholdPolicy:
    """Multi-threshold policy in c/mu rank order.

    ``thresholds[i]`` is the threshold of the group ranked i-th by ascending
    c/mu; ``order[i]`` is that group's index in the model (0-based).
    """

    thresholds: tuple
    order: tuple

    def __post_init__(self):
        th = tuple(int(t) for t in self.thresholds)
        order = tuple(int(i) for i in self.order)
        if len(th) != len(order):
            raise ModelError("thresholds and order must have equal length")
        if sorted(order) != list(range(len(order))):
            raise ModelError(f"order {order} is not a permutation")
        if any(t < 1 for t in th):
            raise ModelError(f"thresholds must be positive integers, got {th}")
        if any(a > b for a, b in zip(th, th[1:])):
            raise ModelError(f"thresholds must be nondecreasing, got {th}")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "order", order)

    def by_group(self):
        """Thresholds indexed by the model's own group order."""
        out = [0] * len(self.order)
        for rank, k in enumerate(self.order):
            out[k] = self.thresholds[rank]
        return tuple(out)
