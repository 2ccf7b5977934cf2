import math

import numpy as np
import pytest

from star_rsma import channel
from star_rsma.config import SystemConfig
from star_rsma.model import BeamSolution, StarState


def desk_config(**kw) -> SystemConfig:
    """Small scenario: 4 antennas, 8 elements, one user and one Eve per side, 10 dB SNR."""
    base = dict(N_T=4, N_S=8, K_r=1, K_t=1, J_r=1, J_t=1, P_max=10.0, sigma2=1.0, r_0=1.0, r_E=1.0)
    base.update(kw)
    return SystemConfig(**base)


def random_star(rng, n) -> StarState:
    split = rng.uniform(0.05, 0.95, n)
    return StarState(np.sqrt(split), np.sqrt(1 - split), rng.uniform(0, 2 * math.pi, n), rng.uniform(0, 2 * math.pi, n))


def random_beams(rng, n_t, n_streams, scale=1.0) -> BeamSolution:
    W = scale * (rng.standard_normal((n_t, n_streams)) + 1j * rng.standard_normal((n_t, n_streams)))
    return BeamSolution.from_precoders(W)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def desk():
    cfg = desk_config()
    return cfg, channel.generate(cfg, 3)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
