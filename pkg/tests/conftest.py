import numpy as np
import pytest

from semgame.channel import LinkConfig, Topology, build_channel_set
from semgame.config import config_from_dict
from semgame.game import Scenario
from semgame.semantics import SemanticPilots, whiten


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_pilots(rng, d2, m2, n, coupling=1.0):
    X, _ = whiten(crandn(rng, d2, n))
    M = crandn(rng, m2, d2)
    Y = coupling * M @ X + 0.3 * crandn(rng, m2, n)
    return SemanticPilots(X, Y)


def small_scenario(seed=0, num_links=3, d=16, m=16, n_t=2, n_r=2, k=2, n=256,
                   spacing=60.0, snr_db=10.0):
    """Tiny interference scenario with random (non-mixture) pilots."""
    rng = np.random.default_rng(seed)
    links = [LinkConfig(d, m, n_t, n_r, k, 1.0) for _ in range(num_links)]
    geo = Topology.linear_array(num_links, 30.0, spacing)
    sigma2 = (1 / 30.0) ** 2.5 / 10 ** (snr_db / 10)
    topo = Topology(geo.tx_positions, geo.rx_positions, noise_power=sigma2)
    channels = build_channel_set(topo, links, seed)
    pilots = [random_pilots(rng, d // 2, m // 2, n) for _ in range(num_links)]
    return Scenario(channels, pilots, links)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_CONFIG = {
    "seed": 5,
    "topology": {"tx_rx_distance": 30.0, "tx_spacing": 60.0},
    "links": [{"d": 16, "m": 16, "n_t": 2, "n_r": 2, "k": 2}] * 3,
    "latent": {"true_dim": 6, "class_count": 4, "class_separation": 3.0,
               "n_pilots": 256, "n_test": 600, "seed": 1},
    "game": {"ne_check_trials": 200},
    "experiment": {"seeds": [1, 2], "alpha_values": [1.0, 3.0, 40.0]},
    "output": {"directory": "out"},
}


@pytest.fixture
def small_config():
    return config_from_dict(SMALL_CONFIG)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion and fail the test on FAIL."""
    def report(label, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}" + (f" :: {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
