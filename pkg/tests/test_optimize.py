import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from groupserver import (EnumerationError, NonConvergenceError, ctmc)
from groupserver.model import ThresholdPolicy
from groupserver.optimize import (SolverOptions, algorithm1, algorithm2, all_on_policy,
                                  brute_force_thresholds, canonical_thresholds,
                                  check_scale_economies, economic_set, greedy_table, ilp_greedy,
                                  policy_cost_difference, threshold_count, threshold_to_policy,
                                  value_iteration)
from groupserver.suites import three_group_model

from conftest import mm1, scale_economy_models, small_models


def exhaustive_min(model, n, G_n):
    """Smallest sum_k m_k (v c_k - mu_k G) over all efficient actions."""
    idx = model.effective_costs - model.rates * G_n
    best = 0.0
    for m in itertools.product(*(range(M + 1) for M in model.servers)):
        if sum(m) <= n:
            best = min(best, float(np.dot(m, idx)))
    return best


def test_ilp_greedy_example():
    model = three_group_model()
    assert tuple(ilp_greedy(model, 10, 1.5)) == (3, 0, 0)
    assert tuple(ilp_greedy(model, 2, 1.5)) == (2, 0, 0)
    # all indices negative: fill cheapest index first
    assert tuple(ilp_greedy(model, 5, 10.0)) == (3, 2, 0)


def test_zero_index_stays_off():
    model = three_group_model()
    # index of group 1 is 7 - 6 * 7/6 = 0
    assert tuple(ilp_greedy(model, 10, 7 / 6)) == (0, 0, 0)


@given(small_models(max_servers=4), st.integers(0, 20), st.floats(0.0, 8.0))
def test_ilp_greedy_is_optimal(model, n, G_n):
    m = ilp_greedy(model, n, G_n)
    assert m.sum() <= n and np.all(m <= model.servers) and np.all(m >= 0)
    value = float(np.dot(m, model.effective_costs - model.rates * G_n))
    assert value == pytest.approx(exhaustive_min(model, n, G_n), abs=1e-9)


@given(small_models(), st.lists(st.floats(0.0, 8.0), min_size=2, max_size=30))
def test_greedy_table_matches_rowwise(model, G):
    G = np.asarray(G)
    table = greedy_table(model, G)
    for n in range(len(G)):
        assert tuple(table[n]) == tuple(ilp_greedy(model, n, G[n]))


def test_economic_set():
    model = three_group_model()
    assert economic_set(model, 1.5) == frozenset({0})
    assert economic_set(model, 2.2) == frozenset({0, 1})
    assert economic_set(model, 1.0) == frozenset()


def test_threshold_to_policy_example():
    model = three_group_model()
    policy = threshold_to_policy(model, ThresholdPolicy((1, 9, 21), (0, 1, 2)))
    assert tuple(policy.action(2)) == (2, 0, 0)
    assert tuple(policy.action(9)) == (3, 4, 0)
    assert tuple(policy.action(20)) == (3, 4, 0)
    assert tuple(policy.action(21)) == (3, 4, 3)
    assert policy.frontier == 21


def test_canonical_thresholds():
    model = three_group_model()
    raw = ThresholdPolicy((1, 1, 12), (0, 1, 2))
    # group 2 cannot start before its servers fit behind group 1's three
    assert canonical_thresholds(model, raw).thresholds == (1, 4, 12)
    same = threshold_to_policy(model, raw) == threshold_to_policy(model, canonical_thresholds(model, raw))
    assert same


def test_scale_economies_examples():
    holds, order = check_scale_economies(three_group_model((7, 8, 5)))
    assert holds and order == (0, 1, 2)
    holds, order = check_scale_economies(three_group_model((7, 4, 1.8)))
    assert not holds and order == (2, 1, 0)
    holds, _ = check_scale_economies(three_group_model((4, 3, 1)))
    assert not holds


@pytest.mark.parametrize("costs", [(7, 4, 3), (7, 8, 5), (4, 3, 1)])
def test_policy_cost_difference_matches_direct(costs):
    model = three_group_model(costs)
    d = all_on_policy(model)
    d_new = threshold_to_policy(model, ThresholdPolicy((1, 5, 11), check_scale_economies(model)[1]))
    n_max = max(ctmc.truncation_for(model, d), ctmc.truncation_for(model, d_new))
    direct = (ctmc.evaluate_at(model, d_new, n_max).eta
              - ctmc.evaluate_at(model, d, n_max).eta)
    assert policy_cost_difference(model, d, d_new, n_max) == pytest.approx(direct, abs=1e-6)


def test_algorithm1_independent_of_start():
    model = three_group_model((7, 4, 1.8))
    p1, r1, _ = algorithm1(model)
    start = threshold_to_policy(model, ThresholdPolicy((1, 3, 7), (2, 1, 0)))
    p2, r2, _ = algorithm1(model, initial=start)
    assert p1 == p2
    assert r1.eta == pytest.approx(r2.eta, abs=1e-12)


def test_iteration_cap_keeps_trace():
    model = three_group_model((7, 4, 3))
    with pytest.raises(NonConvergenceError) as info:
        algorithm1(model, SolverOptions(max_iters=1))
    assert info.value.trace.iterations == 1
    assert info.value.trace.status == "iteration cap"


def test_algorithm2_flags_heuristic():
    _, _, trace = algorithm2(three_group_model((4, 3, 1)))
    assert trace.heuristic and trace.converged
    _, _, trace = algorithm2(three_group_model((7, 8, 5)))
    assert not trace.heuristic


def test_value_iteration_mm1():
    res = value_iteration(mm1(), 60, epsilon=1e-9)
    assert res.eta == pytest.approx(2.5, abs=1e-6)
    assert res.eta_bounds[0] <= 2.5 + 1e-6 and res.eta_bounds[1] >= 2.5 - 1e-6
    assert res.policy == all_on_policy(mm1())


def test_value_iteration_policy_matches_algorithm1():
    model = three_group_model((7, 4, 3))
    p1, r1, _ = algorithm1(model)
    res = value_iteration(model, 80)
    assert res.eta == pytest.approx(r1.eta, abs=1e-6)
    assert res.policy == p1


def test_threshold_count():
    assert threshold_count(3, 25) == 2925
    assert threshold_count(1, 7) == 7


def test_brute_force_guard():
    with pytest.raises(EnumerationError):
        brute_force_thresholds(three_group_model(), 500, guard=1000)


def test_brute_force_example2():
    theta, eta = brute_force_thresholds(three_group_model(), 25)
    assert theta.by_group() == (1, 9, 21)
    assert eta == pytest.approx(13.6965, abs=1e-3)


@settings(max_examples=15)
@given(small_models(max_groups=3, max_servers=3))
def test_algorithm1_fixed_point_is_unimprovable(model):
    policy, rep, trace = algorithm1(model)
    assert trace.converged
    # no single state can be improved by the index rule
    G = rep.G[: policy.frontier + 1]
    assert np.array_equal(greedy_table(model, G)[1:], policy.table(policy.frontier)[1:])
    # and it beats the all-on start and its own c/mu threshold policies
    eta_all_on = ctmc.evaluate(model, all_on_policy(model)).eta
    assert rep.eta <= eta_all_on + 1e-9
    _, rep2, _ = algorithm2(model)
    assert rep.eta <= rep2.eta + 1e-9


@settings(max_examples=10)
@given(scale_economy_models())
def test_algorithms_agree_under_scale_economies(model):
    p1, r1, _ = algorithm1(model)
    theta, r2, trace = algorithm2(model)
    assert not trace.heuristic
    assert theta.thresholds[0] == 1
    assert r1.eta == pytest.approx(r2.eta, rel=1e-9, abs=1e-9)
