import numpy as np
import pytest

from groupserver import ModelError
from groupserver.model import (HoldingCost, Policy, QueueModel, ThresholdPolicy, check_policy,
                               holding, total_cost_rate, validate)
from groupserver.suites import three_group_model


def test_published_models_are_valid():
    for costs in ((7, 4, 3), (7, 4, 1.8), (7, 8, 5), (18, 10, 3)):
        assert validate(three_group_model(costs)).ok


def test_capacity_violation_named():
    model = QueueModel.from_arrays(40.0, (3, 4, 3), (6, 4, 2), (7, 8, 5))
    rep = validate(model)
    assert rep.names() == ["capacity"]
    assert "40" in str(rep)


def test_negative_arrival_rate_named():
    model = QueueModel.from_arrays(-1.0, (3,), (6,), (7,))
    assert "arrival_rate" in validate(model).names()


@pytest.mark.parametrize("servers,rates,costs,name", [
    ((0,), (1.0,), (1.0,), "servers"),
    ((2,), (0.0,), (1.0,), "rates"),
    ((2,), (1.0,), (-1.0,), "costs"),
])
def test_group_violations(servers, rates, costs, name):
    model = QueueModel.from_arrays(0.5, servers, rates, costs)
    assert name in validate(model).names()


def test_nonconvex_holding_reported():
    h = HoldingCost.table([0, 2, 3, 3.5], slope=1.0)
    model = QueueModel.from_arrays(1.0, (2,), (2.0,), (1.0,), holding=h)
    assert "convexity" in validate(model).names()


def test_decreasing_holding_reported():
    h = HoldingCost.table([0, 2, 1], slope=1.0)
    model = QueueModel.from_arrays(1.0, (2,), (2.0,), (1.0,), holding=h)
    assert "convexity" in validate(model).names()


def test_power_holding_valid_and_evaluates():
    h = HoldingCost.power(a=0.5, p=2.0, b=1.0)
    np.testing.assert_allclose(h(np.arange(4)), [1.0, 1.5, 3.0, 5.5])
    model = QueueModel.from_arrays(1.0, (2,), (2.0,), (1.0,), holding=h)
    assert validate(model).ok


def test_table_holding_extends_linearly():
    h = HoldingCost.table([0, 1, 3], slope=4.0)
    assert h(2) == 3.0
    assert h(5) == 15.0


def test_holding_rejects_negative_state():
    with pytest.raises(ModelError):
        holding(three_group_model(), -1)


def test_total_cost_rate():
    model = three_group_model((7, 4, 3))
    assert total_cost_rate(model, 5, (1, 2, 0)) == pytest.approx(5 + 7 + 8)
    weighted = three_group_model((7, 4, 3), weight=0.5)
    assert total_cost_rate(weighted, 5, (1, 2, 0)) == pytest.approx(5 + 7.5)


@pytest.mark.parametrize("n,m", [
    (2, (3, 0, 0)),     # more servers than customers
    (10, (4, 0, 0)),    # more than M_1
    (10, (-1, 0, 0)),
    (10, (1, 0)),
    (10, (0.5, 0, 0)),
])
def test_total_cost_rate_rejects_bad_actions(n, m):
    with pytest.raises(ModelError):
        total_cost_rate(three_group_model(), n, m)


def test_policy_table_repeats_tail():
    p = Policy([[0, 0], [1, 0], [1, 1]])
    assert p.frontier == 2
    assert p.table(4).tolist() == [[0, 0], [1, 0], [1, 1], [1, 1], [1, 1]]
    assert tuple(p.action(100)) == (1, 1)
    with pytest.raises(ValueError):
        p.actions[0, 0] = 1


def test_policy_equality_ignores_redundant_tail():
    a = Policy([[0, 0], [1, 0], [1, 1]])
    b = Policy([[0, 0], [1, 0], [1, 1], [1, 1]])
    assert a == b
    assert hash(a) == hash(b)
    assert a != Policy([[0, 0], [0, 1], [1, 1]])


def test_check_policy_rejects_inefficient_rows():
    model = QueueModel.from_arrays(1.0, (2,), (2.0,), (1.0,))
    with pytest.raises(ModelError):
        check_policy(model, Policy([[1], [1], [2]]))
    with pytest.raises(ModelError):
        check_policy(model, Policy([[0], [1]]))   # last row not all-on


def test_threshold_policy_validation():
    ThresholdPolicy((1, 9, 21), (0, 1, 2))
    with pytest.raises(ModelError):
        ThresholdPolicy((1, 9, 5), (0, 1, 2))
    with pytest.raises(ModelError):
        ThresholdPolicy((0, 9, 21), (0, 1, 2))
    with pytest.raises(ModelError):
        ThresholdPolicy((1, 9, 21), (0, 0, 2))


def test_threshold_by_group_maps_back():
    theta = ThresholdPolicy((1, 4, 8), (2, 0, 1))
    assert theta.by_group() == (4, 8, 1)
