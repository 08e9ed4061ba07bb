"""Policy optimisation for the group-server queue.

Both iterative algorithms follow the same pattern as policy iteration:
evaluate the current policy exactly (``ctmc.evaluate``), read off the PRF
G(n), and improve every state with the index rule.  At state n a group k is
worth switching on when its index ``v c_k - mu_k G(n)`` is negative; such
groups are filled in ascending index order up to the n customers present.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import ctmc
from .errors import EnumerationError, NonConvergenceError, CycleError, TruncationError
from .model import Policy, QueueModel, ThresholdPolicy, require_valid, check_policy, cost_vector

MAX_ITERS = 100
CYCLE_ETA_TOL = 1e-12
ENUMERATION_GUARD = 10 ** 6


@dataclass
class SolverOptions:
    max_iters: int = MAX_ITERS
    #: Fixed truncation level; ``None`` selects it adaptively per evaluation.
    truncation: int | None = None
    tail_tol: float = ctmc.TAIL_MASS_TOL
    eta_tol: float = ctmc.ETA_TOL


@dataclass
class IterationRecord:
    eta: float
    mean_queue_length: float
    frontier: int
    truncation: int
    policy: Policy
    thresholds: tuple | None = None


@dataclass
class OptimizationTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    status: str = "running"
    heuristic: bool = False

    @property
    def iterations(self):
        return len(self.records)

    @property
    def etas(self):
        return [r.eta for r in self.records]


# -- index rule -------------------------------------------------------------

def index_values(model: QueueModel, G_n: float) -> np.ndarray:
    """Group indices v c_k - mu_k G(n); negative means economic."""
    return model.effective_costs - model.rates * G_n


def index_order(indices: np.ndarray) -> np.ndarray:
    """Ascending index order, ties broken by group number."""
    return np.argsort(indices, kind="stable")


def economic_set(model: QueueModel, G_n: float) -> frozenset:
    """Groups with G(n) > v c_k / mu_k."""
    return frozenset(int(k) for k in np.nonzero(index_values(model, G_n) < 0)[0])


def ilp_greedy(model: QueueModel, n: int, G_n: float) -> np.ndarray:
    """Minimise sum_k m_k (v c_k - mu_k G_n) over 0 <= m_k <= M_k, sum m_k <= n.

    Groups with nonnegative index stay off (an index of exactly zero keeps
    the group off); the others are filled to capacity in ascending index
    order until the n customers are all in service.
    """
    idx = index_values(model, G_n)
    m = np.zeros(model.K, dtype=np.int64)
    left = int(n)
    servers = model.servers
    for k in index_order(idx):
        if idx[k] >= 0 or left <= 0:
            break
        m[k] = min(servers[k], left)
        left -= m[k]
    return m


def greedy_table(model: QueueModel, G: np.ndarray) -> np.ndarray:
    """``ilp_greedy`` for every state 0..len(G)-1 at once.

    ``G[0]`` is ignored; the empty state always gets the zero action.
    """
    n_states = G.shape[0]
    idx = model.effective_costs[None, :] - np.outer(G, model.rates)
    order = np.argsort(idx, axis=1, kind="stable")
    sorted_idx = np.take_along_axis(idx, order, axis=1)
    cap = np.where(sorted_idx < 0, model.servers[order], 0)
    before = np.cumsum(cap, axis=1) - cap
    n = np.arange(n_states)[:, None]
    alloc = np.clip(n - before, 0, cap)
    out = np.zeros_like(alloc)
    np.put_along_axis(out, order, alloc, axis=1)
    out[0] = 0
    return out


# -- threshold policies ------------------------------------------------------

def check_scale_economies(model: QueueModel):
    """Rank groups by ascending c/mu and test the scale-economies condition.

    Returns ``(holds, order)`` where ``order`` lists model group indices by
    rank (ties by group number) and ``holds`` is true when service rates are
    nonincreasing along that order.
    """
    ratio = model.costs / model.rates
    order = tuple(int(k) for k in np.argsort(ratio, kind="stable"))
    mu = model.rates[list(order)]
    return bool(np.all(np.diff(mu) <= 0)), order


def canonical_thresholds(model: QueueModel, theta: ThresholdPolicy) -> ThresholdPolicy:
    """Raise each threshold to the first state where its group can get a server.

    A group ranked k cannot receive a server before 1 + sum_{l<k} M_l
    customers are present, so thresholds below that value describe the same
    policy.  The canonical vector is the unique representative.
    """
    servers = model.servers[list(theta.order)]
    floor = 1 + np.concatenate([[0], np.cumsum(servers)[:-1]])
    th = np.maximum(np.asarray(theta.thresholds), floor)
    return ThresholdPolicy(tuple(int(t) for t in np.maximum.accumulate(th)), theta.order)


def threshold_to_policy(model: QueueModel, theta: ThresholdPolicy) -> Policy:
    """Multi-threshold policy as a state-indexed action table.

    Group ranked k is on from state theta_k, with as many servers as the
    customers left after higher-ranked groups allow.
    """
    order = list(theta.order)
    servers = model.servers[order]
    th = np.asarray(theta.thresholds)
    frontier = max(int(th[-1]), model.total_servers)
    n = np.arange(frontier + 1)
    ranked = np.zeros((frontier + 1, model.K), dtype=np.int64)
    left = n.copy()
    for k in range(model.K):
        take = np.where(n >= th[k], np.minimum(servers[k], left), 0)
        ranked[:, k] = take
        left = left - take
    actions = np.zeros_like(ranked)
    actions[:, order] = ranked
    return Policy(actions)


def all_on_policy(model: QueueModel) -> Policy:
    """Every server on whenever there are customers for it (c/mu priority)."""
    _, order = check_scale_economies(model)
    return threshold_to_policy(model, ThresholdPolicy((1,) * model.K, order))


# -- shared iteration helpers -------------------------------------------------

def _evaluate(model, policy, options, min_states=0):
    if options.truncation is not None:
        return ctmc.evaluate(model, policy, n_max=max(options.truncation, min_states))
    return ctmc.evaluate(model, policy, min_states=min_states,
                         tail_tol=options.tail_tol, eta_tol=options.eta_tol)


def _record(trace, report, policy, thresholds=None):
    trace.records.append(IterationRecord(
        eta=report.eta, mean_queue_length=report.mean_queue_length,
        frontier=policy.frontier, truncation=report.truncation,
        policy=policy, thresholds=thresholds))


def improve_policy(model: QueueModel, report: ctmc.SolveReport) -> Policy | None:
    """One improvement step: greedy actions up to the first all-on state.

    Returns ``None`` when no state in the evaluated range is all-on, meaning
    the truncation must be extended.
    """
    table = greedy_table(model, report.G)
    all_on = np.all(table == model.servers[None, :], axis=1)
    hits = np.nonzero(all_on)[0]
    if hits.size == 0:
        return None
    return Policy(table[: hits[0] + 1])


def algorithm1(model: QueueModel, options: SolverOptions | None = None,
               initial: Policy | None = None):
    """Index-policy iteration.

    Starting from all servers on, alternates exact evaluation and the
    per-state index rule until the policy repeats.  Returns
    ``(policy, report, trace)``; ``report`` is the evaluation of the returned
    policy.
    """
    options = options or SolverOptions()
    require_valid(model)
    policy = initial if initial is not None else all_on_policy(model)
    check_policy(model, policy)
    trace = OptimizationTrace()
    seen = {}
    best = None
    for _ in range(options.max_iters):
        report = _evaluate(model, policy, options)
        _record(trace, report, policy)
        if best is None or report.eta < best[1].eta:
            best = (policy, report)
        key = policy.key()
        if key in seen:
            prev_eta = seen[key]
            trace.status = "cycle"
            if abs(prev_eta - report.eta) <= CYCLE_ETA_TOL:
                return best[0], best[1], trace
            raise CycleError("policy iteration revisited a policy with a different cost", trace)
        seen[key] = report.eta

        new = improve_policy(model, report)
        while new is None:
            report = _evaluate(model, policy, options, min_states=2 * report.truncation)
            if report.truncation > ctmc.MAX_TRUNCATION:
                raise TruncationError("no all-on state found within the truncation limit")
            new = improve_policy(model, report)
        if new == policy:
            trace.converged = True
            trace.status = "converged"
            return policy, report, trace
        policy = new
    trace.status = "iteration cap"
    raise NonConvergenceError(f"no fixed point after {options.max_iters} iterations", trace)


def sweep_thresholds(ratios: np.ndarray, G: np.ndarray):
    """Thresholds from one pass of the c/mu rule over G(1), G(2), ...

    ``ratios`` must be ascending.  Returns ``None`` if G stays below some
    ratio across the available range.
    """
    K = len(ratios)
    theta = [0] * K
    k = 0
    for n in range(1, G.shape[0]):
        while k < K and G[n] > ratios[k]:
            theta[k] = n
            k += 1
        if k == K:
            return tuple(theta)
    return None


def algorithm2(model: QueueModel, options: SolverOptions | None = None):
    """c/mu-rule threshold iteration.

    Groups are ranked by ascending c/mu.  When the scale-economies condition
    fails the search still runs, but the trace is flagged ``heuristic``: the
    result is then the best threshold found under the c/mu ranking, not
    necessarily an optimal policy.  Returns ``(theta, report, trace)``.
    """
    options = options or SolverOptions()
    require_valid(model)
    holds, order = check_scale_economies(model)
    ratios = (model.effective_costs / model.rates)[list(order)]
    trace = OptimizationTrace(heuristic=not holds)
    theta = canonical_thresholds(model, ThresholdPolicy((1,) * model.K, order))
    seen = {}
    best = None
    for _ in range(options.max_iters):
        policy = threshold_to_policy(model, theta)
        report = _evaluate(model, policy, options)
        _record(trace, report, policy, theta.thresholds)
        if best is None or report.eta < best[2].eta:
            best = (theta, policy, report)
        if theta.thresholds in seen:
            trace.status = "cycle"
            if abs(seen[theta.thresholds] - report.eta) <= CYCLE_ETA_TOL:
                return best[0], best[2], trace
            raise CycleError("threshold iteration revisited a vector with a different cost", trace)
        seen[theta.thresholds] = report.eta

        new = sweep_thresholds(ratios, report.G)
        while new is None:
            report = _evaluate(model, policy, options, min_states=2 * report.truncation)
            if report.truncation > ctmc.MAX_TRUNCATION:
                raise TruncationError("G never exceeds every c/mu ratio within the truncation limit")
            new = sweep_thresholds(ratios, report.G)
        new = canonical_thresholds(model, ThresholdPolicy(new, order)).thresholds
        if new == theta.thresholds:
            trace.converged = True
            trace.status = "converged"
            return theta, report, trace
        theta = ThresholdPolicy(new, order)
    trace.status = "iteration cap"
    raise NonConvergenceError(f"no fixed point after {options.max_iters} iterations", trace)


# -- sensitivity ----------------------------------------------------------------

def common_truncation(model: QueueModel, *policies: Policy) -> int:
    return max(ctmc.truncation_for(model, p) for p in policies)


def policy_cost_difference(model: QueueModel, d: Policy, d_new: Policy,
                           n_max: int | None = None) -> float:
    """eta(d_new) - eta(d) from G under ``d`` and pi under ``d_new`` only.

    Evaluates sum_n pi'(n) sum_k (d'(n,k) - d(n,k)) (v c_k - mu_k G(n)).
    Both chains share one truncation level, where the identity is exact.
    """
    if n_max is None:
        n_max = common_truncation(model, d, d_new)
    old = ctmc.evaluate_at(model, d, n_max)
    new_chain = ctmc.build_chain(model, d_new, n_max)
    pi_new = ctmc.stationary_distribution(new_chain)
    delta = d_new.table(n_max) - d.table(n_max)
    idx = model.effective_costs[None, :] - np.outer(old.G, model.rates)
    return float(pi_new @ np.sum(delta * idx, axis=1))


# -- value iteration -------------------------------------------------------------

@dataclass
class ValueIterationResult:
    g: np.ndarray
    eta: float
    eta_bounds: tuple
    sweeps: int
    policy: Policy | None


def value_iteration(model: QueueModel, n_max: int, epsilon: float = 1e-8,
                    max_sweeps: int = 1_000_000, callback=None) -> ValueIterationResult:
    """Relative value iteration on the uniformised chain.

    Uses the uniformisation constant lambda + sum_k M_k mu_k and the
    reflecting truncation at ``n_max``.  Each sweep minimises over efficient
    actions with the greedy index rule applied to the current differences
    g(n) - g(n-1).  Stops when the span of Lambda (T g - g), which brackets
    the optimal average cost, is below ``epsilon``.  ``callback(sweep, g)``
    sees every iterate, starting with g = 0.
    """
    require_valid(model)
    lam = model.arrival_rate
    Lam = lam + model.capacity
    n = np.arange(n_max + 1)
    h = model.holding(n)
    c = model.effective_costs
    mu = model.rates
    g = np.zeros(n_max + 1)
    if callback is not None:
        callback(0, g)
    for sweep in range(1, max_sweeps + 1):
        G = np.zeros_like(g)
        G[1:] = np.diff(g)
        m = greedy_table(model, G)
        rate = m @ mu
        up = np.empty_like(g)
        up[:-1] = g[1:]
        up[-1] = 2.0 * g[-1] - g[-2]
        down = np.empty_like(g)
        down[1:] = g[:-1]
        down[0] = g[0]
        Tg = (h + m @ c + lam * up + rate * down + (Lam - lam - rate) * g) / Lam
        diff = Lam * (Tg - g)
        lo, hi = float(diff.min()), float(diff.max())
        g = Tg - Tg[0]
        if callback is not None:
            callback(sweep, g)
        if hi - lo < epsilon:
            full = np.flatnonzero(np.all(m == model.servers[None, :], axis=1))
            policy = Policy(m[: full[0] + 1]) if full.size else None
            return ValueIterationResult(g=g, eta=0.5 * (lo + hi), eta_bounds=(lo, hi),
                                        sweeps=sweep, policy=policy)
    raise NonConvergenceError(f"value iteration did not converge in {max_sweeps} sweeps")


# -- brute force -----------------------------------------------------------------------

def threshold_count(K: int, bound: int) -> int:
    """Number of nondecreasing K-vectors with entries in 1..bound."""
    return math.comb(bound + K - 1, K)


def eta_fixed(model: QueueModel, policy: Policy, n_max: int) -> float:
    chain = ctmc.build_chain(model, policy, n_max)
    pi = ctmc.stationary_distribution(chain)
    return float(pi @ cost_vector(model, policy.table(n_max)))


def brute_force_thresholds(model: QueueModel, theta_bound: int,
                           order: tuple | None = None,
                           guard: int = ENUMERATION_GUARD):
    """Best nondecreasing threshold vector with entries in 1..theta_bound.

    Groups are ranked by ascending c/mu unless ``order`` is given.  Every
    candidate is evaluated exactly on one shared truncation level.  Returns
    ``(theta, eta)``.
    """
    require_valid(model)
    count = threshold_count(model.K, theta_bound)
    if count > guard:
        raise EnumerationError(f"{count} threshold vectors exceed the guard of {guard}")
    if order is None:
        _, order = check_scale_economies(model)
    widest = threshold_to_policy(model, ThresholdPolicy((theta_bound,) * model.K, order))
    n_max = ctmc.truncation_for(model, widest)
    best = None
    for th in itertools.combinations_with_replacement(range(1, theta_bound + 1), model.K):
        theta = ThresholdPolicy(th, order)
        eta = eta_fixed(model, threshold_to_policy(model, theta), n_max)
        if best is None or eta < best[1] - 1e-13:
            best = (theta, eta)
    return canonical_thresholds(model, best[0]), best[1]
