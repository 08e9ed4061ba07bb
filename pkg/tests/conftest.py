import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from groupserver.model import QueueModel
from groupserver.optimize import check_scale_economies

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def mm1(arrival_rate=1.0, service_rate=2.0, cost=3.0):
    """Single server, h(n) = n; with c = 3 the average cost is 1 + 1.5 = 2.5."""
    return QueueModel.from_arrays(arrival_rate, (1,), (service_rate,), (cost,))


@st.composite
def small_models(draw, max_groups=4, max_servers=5, load=(0.1, 0.85)):
    """Random valid models with K <= 4 and M_k <= 5."""
    K = draw(st.integers(1, max_groups))
    servers = draw(st.lists(st.integers(1, max_servers), min_size=K, max_size=K))
    rates = draw(st.lists(st.floats(0.5, 6.0), min_size=K, max_size=K))
    costs = draw(st.lists(st.floats(0.0, 10.0), min_size=K, max_size=K))
    rho = draw(st.floats(*load))
    cap = float(np.dot(servers, rates))
    return QueueModel.from_arrays(rho * cap, servers, rates, costs)


@st.composite
def scale_economy_models(draw, max_groups=3, max_servers=5, load=(0.2, 0.8)):
    """Random models satisfying scale economies: faster groups are no dearer per unit rate."""
    K = draw(st.integers(1, max_groups))
    servers = draw(st.lists(st.integers(1, max_servers), min_size=K, max_size=K))
    rates = sorted(draw(st.lists(st.integers(1, 8), min_size=K, max_size=K)), reverse=True)
    ratios = sorted(draw(st.lists(st.floats(0.2, 4.0), min_size=K, max_size=K)))
    costs = [r * mu for r, mu in zip(ratios, rates)]
    rho = draw(st.floats(*load))
    cap = float(np.dot(servers, rates))
    model = QueueModel.from_arrays(rho * cap, servers, rates, costs)
    assert check_scale_economies(model)[0]
    return model


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    number = getattr(item.function, "criterion", None)
    if number is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _ACCEPTANCE[number] = (rep.outcome, getattr(item.function, "title", item.name))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        outcome, title = _ACCEPTANCE[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {title}")
