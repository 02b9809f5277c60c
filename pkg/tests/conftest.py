import numpy as np
import pytest

from ris_cnoma.channel import ChannelSet, FadingParams, Geometry, sample_channels
from ris_cnoma.system import SystemParams


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_channels(rng, N, M, scale=1.0):
    """Unit-scale i.i.d. channels, handy for identity tests."""
    return ChannelSet(h_d1=scale * crandn(rng, N), h_d2=scale * crandn(rng, N),
                      G=crandn(rng, M, N), h_r1=scale * crandn(rng, M),
                      h_r2=scale * crandn(rng, M), g_d=complex(scale * crandn(rng)),
                      g=crandn(rng, M), g_r=scale * crandn(rng, M))


def unit_phases(rng, M):
    return np.exp(1j * rng.uniform(0, 2 * np.pi, M))


def default_instance(seed, N=4, M=8, power_dbm=30.0, gamma2=0.5):
    p = SystemParams(N=N, M=M, P_s=10 ** (power_dbm / 10) / 1000, gamma2=gamma2)
    return sample_channels(Geometry(), FadingParams(), p, seed), p


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
