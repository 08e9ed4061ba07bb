"""Discrete-event simulation of the group-server queue.

Service is exponential and customers move freely between servers, so the
only dynamic that matters is the total service rate d(n) . mu.  The
simulation therefore runs one exponential clock with rate lambda + d(n) mu
and splits each event into an arrival or a departure.

Random numbers come from numpy's ``PCG64`` bit generator.  Replication r
uses the r-th child of ``SeedSequence(seed)``, and numbers are drawn in
fixed-size blocks, so a (model, policy, config) triple always gives the
same estimate on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .ctmc import build_chain
from .errors import StabilityError
from .model import Policy, QueueModel, ThresholdPolicy, require_valid, cost_vector

RNG_NAME = "PCG64"
BLOCK = 1 << 18
GUARD_FACTOR = 100

_RUNNING, _DONE, _UNSTABLE = 0, 1, 2


@dataclass
class SimConfig:
    horizon: float = 1e6
    #: Time discarded before statistics start; ``None`` means 10% of horizon.
    warmup: float | None = None
    replications: int = 1
    seed: int = 0
    batch_count: int = 20
    confidence: float = 0.95

    def __post_init__(self):
        if self.warmup is None:
            self.warmup = 0.1 * self.horizon
        if not self.horizon > self.warmup >= 0:
            raise ValueError("need horizon > warmup >= 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.batch_count < 2:
            raise ValueError("batch_count must be >= 2")


@dataclass
class SimEstimate:
    eta_hat: float
    ci_halfwidth: float
    mean_queue_length: float
    batch_means: np.ndarray = field(repr=False)
    events: int = 0
    rng: str = RNG_NAME

    def covers(self, value):
        return abs(value - self.eta_hat) <= self.ci_halfwidth


@njit(cache=False)
def _advance(lam, deaths, costs, exps, unif, n, t, horizon, warmup, batch_len,
             cost_acc, len_acc):
    nb = cost_acc.shape[0]
    guard = deaths.shape[0] - 1
    for i in range(exps.shape[0]):
        rate = lam + deaths[n]
        t1 = t + exps[i] / rate
        a = t if t > warmup else warmup
        b = t1 if t1 < horizon else horizon
        while a < b:
            k = int((a - warmup) / batch_len)
            if k >= nb - 1:
                k = nb - 1
                end = b
            else:
                end = warmup + (k + 1) * batch_len
                if end > b:
                    end = b
                if end <= a:
                    end = b
            cost_acc[k] += costs[n] * (end - a)
            len_acc[k] += n * (end - a)
            a = end
        t = t1
        if t >= horizon:
            return i + 1, n, t, 1
        if unif[i] * rate < lam:
            n += 1
            if n >= guard:
                return i + 1, n, t, 2
        else:
            n -= 1
    return exps.shape[0], n, t, 0


def guard_length(model: QueueModel, policy: Policy) -> int:
    """Queue length treated as evidence of instability.

    At least 100 times the policy frontier, and far enough into the
    geometric tail that a stable run reaches it with negligible probability.
    """
    frontier = max(policy.frontier, 1)
    rho = model.arrival_rate / model.capacity
    tail = math.ceil(math.log(1e-20) / math.log(rho)) if 0 < rho < 1 else 0
    return max(GUARD_FACTOR * frontier, policy.frontier + tail)


def _as_policy(model, policy):
    if isinstance(policy, ThresholdPolicy):
        from .optimize import threshold_to_policy
        return threshold_to_policy(model, policy)
    return policy


def run_replication(model: QueueModel, policy: Policy, config: SimConfig,
                    seed_seq: np.random.SeedSequence):
    """One replication; returns per-batch cost and queue-length integrals."""
    guard = guard_length(model, policy)
    actions = policy.table(guard)
    deaths = actions @ model.rates
    deaths[0] = 0.0
    costs = cost_vector(model, actions)
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    batch_len = (config.horizon - config.warmup) / config.batch_count
    cost_acc = np.zeros(config.batch_count)
    len_acc = np.zeros(config.batch_count)
    n, t, events = 0, 0.0, 0
    lam = float(model.arrival_rate)
    while True:
        exps = rng.standard_exponential(BLOCK)
        unif = rng.random(BLOCK)
        used, n, t, status = _advance(lam, deaths, costs, exps, unif, n, t,
                                      float(config.horizon), float(config.warmup),
                                      batch_len, cost_acc, len_acc)
        events += used
        if status == _DONE:
            return cost_acc / batch_len, len_acc / batch_len, events
        if status == _UNSTABLE:
            raise StabilityError(
                f"queue reached guard length {guard} at time {t:.6g}; policy looks unstable")


def simulate(model: QueueModel, policy, config: SimConfig | None = None) -> SimEstimate:
    """Estimate the long-run average cost of ``policy`` by simulation.

    Each replication is cut into ``batch_count`` equal time batches after
    the warmup; the confidence interval is a Student-t interval over all
    batch means of all replications.
    """
    config = config or SimConfig()
    require_valid(model)
    policy = _as_policy(model, policy)
    build_chain(model, policy, policy.frontier + 1)
    children = np.random.SeedSequence(config.seed).spawn(config.replications)
    cost_means, len_means, events = [], [], 0
    for child in children:
        c, q, e = run_replication(model, policy, config, child)
        cost_means.append(c)
        len_means.append(q)
        events += e
    batches = np.concatenate(cost_means)
    lengths = np.concatenate(len_means)
    b = batches.shape[0]
    eta_hat = float(batches.mean())
    sd = float(batches.std(ddof=1))
    half = float(stats.t.ppf(0.5 + config.confidence / 2, b - 1) * sd / math.sqrt(b))
    return SimEstimate(eta_hat=eta_hat, ci_halfwidth=half,
                       mean_queue_length=float(lengths.mean()),
                       batch_means=batches, events=events)
