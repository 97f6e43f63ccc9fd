import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gwroute.dataset import SpatialDataset
from gwroute.synth import SurfaceSpec, generate_svc

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=_criterion_order):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")


def _criterion_order(key):
    num = "".join(c for c in key if c.isdigit())
    return int(num or 0), key


def random_dataset(n, m, seed=0, extent=1000.0, noise=1.0):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, extent, size=(n, 2))
    X = rng.normal(size=(n, m))
    beta = np.arange(1, m + 2) / 2.0
    y = beta[0] + X @ beta[1:] + rng.normal(scale=noise, size=n)
    return SpatialDataset(coords=coords, response=y, predictors=X,
                          predictor_names=tuple(f"x{k + 1}" for k in range(m)))


@pytest.fixture
def ds15():
    """15 scattered points, two predictors."""
    return random_dataset(15, 2, seed=3)


@pytest.fixture
def ds60():
    return random_dataset(60, 2, seed=11)


@pytest.fixture(scope="session")
def bump_ds():
    surfaces = {"Intercept": SurfaceSpec.constant(1.0),
                "x1": SurfaceSpec.gaussian_bump((500.0, 500.0), 2.0, 200.0),
                "x2": SurfaceSpec.constant(-0.5)}
    return generate_svc(121, 1000.0, "grid", surfaces, noise_sd=0.5, seed=5)


@pytest.fixture(scope="session")
def global_ds():
    surfaces = {"Intercept": SurfaceSpec.constant(1.0), "x1": SurfaceSpec.constant(0.5),
                "x2": SurfaceSpec.constant(-0.5)}
    return generate_svc(121, 1000.0, "grid", surfaces, noise_sd=0.5, seed=2)[0]
