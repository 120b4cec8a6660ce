import sys
import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

unit = st.floats(0.0, 1.0, allow_nan=False)
half = st.floats(0.0, 0.5, allow_nan=False)


@st.composite
def pmfs(draw, shape, min_mass=0.0):
    """Random pmf of the given shape; cells may be exactly zero unless ``min_mass`` > 0."""
    raw = draw(arrays(np.float64, shape, elements=st.floats(min_mass, 1.0, allow_nan=False)))
    if raw.sum() <= 0:
        raw = np.ones(shape)
    return raw / raw.sum()


@st.composite
def channels(draw, n_in, n_out, min_mass=0.0):
    rows = [draw(pmfs((n_out,), min_mass)) for _ in range(n_in)]
    return np.array(rows)


def random_pmf(rng, shape, zero_frac=0.0):
    m = rng.exponential(size=shape)
    if zero_frac:
        m[rng.random(shape) < zero_frac] = 0.0
        if m.sum() == 0:
            m.flat[0] = 1.0
    return m / m.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.REPORT):
        terminalreporter.write_line(mod.REPORT[key])
