import os

import pytest
from hypothesis import HealthCheck, settings as hypothesis_settings

from config.terminal_logger import terminal_logger
from engines.flow import CumulantFlow
from engines.mechanism import LogBernstein, Quadratic, ReciprocalSum, Stable

hypothesis_settings.register_profile(
    "numerics", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
hypothesis_settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "numerics"))


@pytest.fixture(autouse=True)
def quiet_logger(monkeypatch):
    monkeypatch.delenv("CB_OUTPUT_DIR", raising=False)
    terminal_logger.set_output_mode("none")
    terminal_logger.clear_logs()
    yield


@pytest.fixture
def stable_flow():
    return CumulantFlow(Stable(c=1.0, alpha=1.0))


@pytest.fixture
def feller_flow():
    return CumulantFlow(Quadratic(b=1.0))


@pytest.fixture
def reciprocal_flow():
    return CumulantFlow(ReciprocalSum(alpha=0.8, beta=0.2))


@pytest.fixture(scope="module")
def log_bernstein_flow():
    return CumulantFlow(LogBernstein(beta=1.0))
