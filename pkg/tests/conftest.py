import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lisce.channel import CorrelationProfile, RngStream

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_profile():
    return CorrelationProfile(M=4, K=3, rho1=0.5, rho2=0.6, rho3=0.3)


@pytest.fixture
def rng():
    return RngStream(1234)


def random_hpd(gen, n, shift=0.5):
    a = gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))
    return a @ a.conj().T / n + shift * np.eye(n)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
