import numpy as np
import pytest
from hypothesis import settings

from radnereq.agent import AgentSpec
from radnereq.endowments import Constant, Endowment, Tanh
from radnereq.grid import GridSpec

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


@pytest.fixture
def small_grid():
    return GridSpec(0.25, -5.0, 5.0, 40, 60)


@pytest.fixture
def tanh_agent():
    return AgentSpec(1.0, Endowment.same(Tanh(1.0, 1.0, 0.0)), name="tanh")


@pytest.fixture
def constant_agent():
    return AgentSpec(2.0, Endowment.same(Constant(0.5)), name="const")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
