"""Birth-death evaluation of a fixed scheduling policy.

Under a policy the queue length is a birth-death process with birth rate
lambda and death rate d(n) . mu.  The infinite chain is truncated at
``n_max`` with a reflecting boundary (no arrivals accepted at ``n_max``),
which keeps a proper generator; the truncation level is grown until the
mass beyond it is negligible.

Conventions used throughout:

* ``g`` is normalised with g(0) = 0.
* ``G`` has the same length as ``g``; ``G[n] = g[n] - g[n-1]`` for n >= 1
  and ``G[0]`` is unused (set to 0).
* States below the highest state with zero death rate are transient and get
  zero stationary probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import logsumexp

from .errors import SolverError, StabilityError, TruncationError
from .model import Policy, QueueModel, cost_vector

#: Extra states kept above the policy frontier at the first truncation level.
INITIAL_MARGIN = 50
TAIL_MASS_TOL = 1e-12
ETA_TOL = 1e-9
MAX_TRUNCATION = 1 << 20


@dataclass(frozen=True)
class BirthDeathChain:
    birth_rate: float
    death_rates: np.ndarray
    frontier: int

    @property
    def size(self):
        return self.death_rates.shape[0]

    @property
    def n_max(self):
        return self.size - 1

    @property
    def birth_rates(self):
        """Per-state up-rates; zero at the reflecting boundary."""
        up = np.full(self.size, self.birth_rate)
        up[-1] = 0.0
        return up

    @property
    def first_recurrent(self):
        """Lowest recurrent state: the last n >= 1 with zero death rate, else 0."""
        zero = np.nonzero(self.death_rates[1:] <= 0.0)[0]
        return int(zero[-1]) + 1 if zero.size else 0

    def generator(self):
        """Dense generator matrix (for small chains and tests)."""
        n = self.size
        B = np.zeros((n, n))
        up = self.birth_rates
        idx = np.arange(n)
        B[idx[:-1], idx[:-1] + 1] = up[:-1]
        B[idx[1:], idx[1:] - 1] = self.death_rates[1:]
        B[idx, idx] = -(up + self.death_rates)
        return B


@dataclass
class SolveReport:
    """Exact evaluation of one policy on a truncated state space."""

    pi: np.ndarray
    eta: float
    g: np.ndarray
    G: np.ndarray
    tail_mass: float
    truncation: int
    actions: np.ndarray
    costs: np.ndarray
    death_rates: np.ndarray
    birth_rate: float
    frontier: int
    poisson_residual: float = field(default=float("nan"))

    @property
    def mean_queue_length(self):
        return float(self.pi @ np.arange(self.pi.shape[0]))


def service_rates(model: QueueModel, actions: np.ndarray) -> np.ndarray:
    return actions @ model.rates


def build_chain(model: QueueModel, policy: Policy, n_max: int) -> BirthDeathChain:
    """Truncated birth-death chain of ``policy`` on states 0..n_max."""
    if n_max < policy.frontier:
        raise TruncationError(
            f"truncation {n_max} is below the policy frontier {policy.frontier}")
    if n_max < 1:
        raise TruncationError("truncation must keep at least states 0 and 1")
    actions = policy.table(n_max)
    deaths = service_rates(model, actions)
    deaths[0] = 0.0
    if not deaths[policy.frontier] > model.arrival_rate:
        raise StabilityError(
            f"tail service rate {deaths[policy.frontier]:g} does not exceed "
            f"arrival rate {model.arrival_rate:g}")
    deaths.setflags(write=False)
    return BirthDeathChain(float(model.arrival_rate), deaths, policy.frontier)


def log_stationary(chain: BirthDeathChain) -> np.ndarray:
    """Log of the stationary distribution; -inf on transient states."""
    z = chain.first_recurrent
    if z >= chain.n_max:
        raise StabilityError("no recurrent state with positive death rate")
    logp = np.full(chain.size, -np.inf)
    steps = np.log(chain.birth_rate) - np.log(chain.death_rates[z + 1:])
    logp[z] = 0.0
    logp[z + 1:] = np.cumsum(steps)
    return logp - logsumexp(logp[z:])


def stationary_distribution(chain: BirthDeathChain) -> np.ndarray:
    """Stationary distribution of the truncated chain via the product form."""
    return np.exp(log_stationary(chain))


def tail_mass(chain: BirthDeathChain, pi: np.ndarray) -> float:
    """Geometric estimate of the probability mass beyond the truncation.

    Past the frontier the chain is an M/M/1-like walk with ratio
    rho = lambda / d(frontier) mu < 1, so the missing mass is about
    pi(n_max) rho / (1 - rho).
    """
    rho = chain.birth_rate / chain.death_rates[chain.frontier]
    return float(pi[-1] * rho / (1.0 - rho))


def average_cost(model: QueueModel, policy: Policy, pi: np.ndarray) -> float:
    actions = policy.table(pi.shape[0] - 1)
    return float(pi @ cost_vector(model, actions))


def _forward_G(chain, f, eta, stop):
    """Forward recursion for G(1..stop) from the row equations."""
    G = np.zeros(stop + 1)
    lam = chain.birth_rate
    if stop >= 1:
        G[1] = (eta - f[0]) / lam
    for n in range(1, stop):
        G[n + 1] = (chain.death_rates[n] * G[n] + eta - f[n]) / lam
    return G


def prf_forward(model: QueueModel, policy: Policy, eta, n_max: int,
                dps: int | None = None) -> np.ndarray:
    """PRF by the forward recursion G(n+1) = (d(n)mu G(n) + eta - f(n)) / lambda.

    Exact algebra, but wherever d(n)mu > lambda each step multiplies the
    error already in G by d(n)mu/lambda, so rounding in ``eta`` grows
    geometrically towards the tail.  With ``dps`` set the recursion runs in
    mpmath at that many decimal digits; ``eta`` should then come from
    ``average_cost_mp`` at the same precision.  ``forward_digits_lost``
    estimates how many digits are needed.
    """
    chain = build_chain(model, policy, n_max)
    f = cost_vector(model, policy.table(n_max))
    if dps is None:
        return _forward_G(chain, f, float(eta), n_max)
    import mpmath
    with mpmath.workdps(dps):
        lam = mpmath.mpf(chain.birth_rate)
        eta = mpmath.mpf(eta)
        G = [mpmath.mpf(0)] * (n_max + 1)
        if n_max >= 1:
            G[1] = (eta - mpmath.mpf(f[0])) / lam
        for n in range(1, n_max):
            G[n + 1] = (mpmath.mpf(chain.death_rates[n]) * G[n] + eta - mpmath.mpf(f[n])) / lam
        return np.array([float(x) for x in G])


def forward_digits_lost(chain: BirthDeathChain, upto: int) -> float:
    """log10 of the worst error amplification of the forward recursion up to ``upto``."""
    ratio = chain.death_rates[1:upto] / chain.birth_rate
    return float(np.sum(np.log10(np.maximum(ratio, 1.0))))


def average_cost_mp(model: QueueModel, policy: Policy, n_max: int, dps: int):
    """Average cost of the chain truncated at ``n_max`` in mpmath precision."""
    import mpmath
    chain = build_chain(model, policy, n_max)
    f = cost_vector(model, policy.table(n_max))
    z = chain.first_recurrent
    with mpmath.workdps(dps):
        lam = mpmath.mpf(chain.birth_rate)
        w = mpmath.mpf(1)
        num = w * mpmath.mpf(f[z])
        den = w
        for n in range(z + 1, n_max + 1):
            w = w * lam / mpmath.mpf(chain.death_rates[n])
            num += w * mpmath.mpf(f[n])
            den += w
        return num / den


def prf_reference(model: QueueModel, policy: Policy, upto: int, n_max: int,
                  guard_digits: int = 30) -> np.ndarray:
    """Forward-recursion PRF on states 0..upto with enough digits to be trusted.

    eta is recomputed on the chain truncated at ``n_max`` at the same
    precision, so the result is comparable with ``evaluate_at(.., n_max)``.
    """
    chain = build_chain(model, policy, n_max)
    dps = int(math.ceil(forward_digits_lost(chain, upto + 1))) + guard_digits
    eta = average_cost_mp(model, policy, n_max, dps)
    return prf_forward(model, policy, eta, upto, dps=dps)


def prf_tailsum(model: QueueModel, policy: Policy, pi: np.ndarray, eta: float) -> np.ndarray:
    """PRF from stationary-weighted partial sums of the Poisson equation.

    Summing the Poisson equation against pi and using detailed balance
    lambda pi(n) = d(n+1)mu pi(n+1) gives two equivalent forms

        G(n+1) = sum_{j<=n} pi(j) (eta - f(j)) / (lambda pi(n))     (prefix)
               = sum_{j>n}  pi(j) (f(j) - eta) / (lambda pi(n))     (tail)

    since sum_j pi(j) (f(j) - eta) = 0 on the truncated chain.  Neither is
    formed from raw probabilities.  The prefix sum is accumulated upwards
    with the ratio pi(n-1)/pi(n) = d(n)mu/lambda, the tail sum downwards
    with pi(n+1)/pi(n) = lambda/d(n+1)mu.  Each is used on the side of the
    mode of pi where its ratio is below one, so rounding errors shrink
    instead of growing and nothing underflows.  Transient states (pi = 0)
    sit below the mode and are covered by the prefix form.
    """
    n_max = pi.shape[0] - 1
    chain = build_chain(model, policy, n_max)
    f = cost_vector(model, policy.table(n_max))
    lam = chain.birth_rate
    logp = log_stationary(chain)
    mode = int(np.flatnonzero(logp == logp.max())[-1])
    split = min(max(mode, 1), n_max)
    G = _forward_G(chain, f, eta, split)
    G = np.concatenate([G, np.zeros(n_max - split)])
    excess = f - eta
    s = 0.0
    for n in range(n_max - 1, split - 1, -1):
        s = lam / chain.death_rates[n + 1] * (excess[n + 1] + s)
        G[n + 1] = s / lam
    return G


def potentials(model: QueueModel, policy: Policy, pi: np.ndarray, eta: float) -> np.ndarray:
    """Solve the truncated Poisson equation f - eta + B g = 0 with g(0) = 0.

    The recurrent block is solved as a banded (tridiagonal) system with the
    potential of its lowest state pinned; transient states below it follow
    from the row equations directly.
    """
    n_max = pi.shape[0] - 1
    chain = build_chain(model, policy, n_max)
    f = cost_vector(model, policy.table(n_max))
    z = chain.first_recurrent
    G = _forward_G(chain, f, eta, z) if z >= 1 else np.zeros(1)

    # unknowns g(z+1..n_max) relative to g(z); rows z+1..n_max
    up = chain.birth_rates[z + 1:]
    down = chain.death_rates[z + 1:]
    m = n_max - z
    ab = np.zeros((3, m))
    ab[0, 1:] = up[:-1]
    ab[1, :] = -(up + down)
    ab[2, :-1] = down[1:]
    rhs = eta - f[z + 1:]
    try:
        x = solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"Poisson solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("Poisson solve produced non-finite potentials")
    rel = np.concatenate([[0.0], x])
    g = np.zeros(n_max + 1)
    g[1:z + 1] = np.cumsum(G[1:z + 1])
    g[z:] = g[z] + rel
    return g


def poisson_residual(chain: BirthDeathChain, f: np.ndarray, eta: float, g: np.ndarray) -> np.ndarray:
    """Row residuals of f - eta + B g at every state."""
    up = chain.birth_rates
    down = chain.death_rates
    r = f - eta - (up + down) * g
    r[:-1] += up[:-1] * g[1:]
    r[1:] += down[1:] * g[:-1]
    return r


def evaluate_at(model: QueueModel, policy: Policy, n_max: int) -> SolveReport:
    """Evaluate ``policy`` on the chain truncated at exactly ``n_max``."""
    chain = build_chain(model, policy, n_max)
    actions = policy.table(n_max)
    f = cost_vector(model, actions)
    pi = stationary_distribution(chain)
    eta = float(pi @ f)
    G = prf_tailsum(model, policy, pi, eta)
    g = np.zeros_like(G)
    g[1:] = np.cumsum(G[1:])
    res = poisson_residual(chain, f, eta, g)
    scale = max(1.0, abs(eta))
    return SolveReport(pi=pi, eta=eta, g=g, G=G, tail_mass=tail_mass(chain, pi),
                       truncation=n_max, actions=actions, costs=f,
                       death_rates=np.asarray(chain.death_rates), birth_rate=chain.birth_rate,
                       frontier=policy.frontier,
                       poisson_residual=float(np.max(np.abs(res[1:-1])) / scale) if n_max > 1 else 0.0)


def initial_truncation(policy: Policy, margin: int = INITIAL_MARGIN) -> int:
    return policy.frontier + margin


def evaluate(model: QueueModel, policy: Policy, n_max: int | None = None,
             min_states: int = 0, tail_tol: float = TAIL_MASS_TOL,
             eta_tol: float = ETA_TOL) -> SolveReport:
    """Evaluate ``policy``, choosing the truncation adaptively.

    With ``n_max`` given the chain is truncated exactly there.  Otherwise the
    level starts at frontier + 50 (and at least ``min_states``) and doubles
    until the tail mass is below ``tail_tol`` and eta moved by less than
    ``eta_tol`` since the previous level.
    """
    if n_max is not None:
        return evaluate_at(model, policy, max(n_max, policy.frontier))
    level = max(initial_truncation(policy), min_states, 2)
    prev = evaluate_at(model, policy, level)
    while True:
        level *= 2
        if level > MAX_TRUNCATION:
            raise TruncationError(
                f"tail mass {prev.tail_mass:.3g} still above {tail_tol:g} at truncation {prev.truncation}")
        cur = evaluate_at(model, policy, level)
        if cur.tail_mass < tail_tol and abs(cur.eta - prev.eta) < eta_tol * max(1.0, abs(cur.eta)):
            return cur
        prev = cur


def truncation_for(model: QueueModel, policy: Policy, tail_tol: float = TAIL_MASS_TOL) -> int:
    """Smallest level past the frontier whose geometric tail bound is below ``tail_tol``.

    Used where several policies must share one truncation level.
    """
    rho = model.arrival_rate / float(model.servers @ model.rates)
    extra = math.ceil(math.log(tail_tol) / math.log(rho)) if rho > 0 else 1
    return policy.frontier + INITIAL_MARGIN + extra
