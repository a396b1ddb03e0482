import math
import os

import pytest
from hypothesis import HealthCheck, settings

from optoconvert import SystemConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=15,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

TWO_PI = 2 * math.pi
OMEGA_M = TWO_PI * 100e6
KAPPA = TWO_PI * 1e6
G_SINGLE = TWO_PI * 1e3
EPS = (1e7, 7e6)


def nominal_config(kappa=KAPPA, T=2.0, Q_m=1e4, **kw) -> SystemConfig:
    return SystemConfig(omega_m=OMEGA_M, kappa=(kappa, kappa), G=(G_SINGLE, G_SINGLE),
                        T=T, Q_m=Q_m, **kw)


def toy_config(kappa=0.0, T=0.0, omega_m=1.0, G=0.01, **kw) -> SystemConfig:
    """Dimensionless system, cheap for master-equation tests."""
    return SystemConfig(omega_m=omega_m, kappa=(kappa, kappa), G=(G, G), T=T, **kw)


@pytest.fixture
def nominal():
    return nominal_config()
