import numpy as np
import pytest

from drlmcts.agent import train
from drlmcts.scenario import Scenario, TrainConfig
from drlmcts.signal_model import BPSK, to_real_system

# desk-scale optimiser settings shared by the tests that need a trained agent
DESK_LEARNING_RATE = 1e-3
DESK_REWARD_SCALE = 0.02


def system_from_triangular(R, y, constellation=BPSK, sigma_w2=1.0, x_true=None):
    """Real system whose QR factors are exactly ``(I, R)`` and ``y = y'``.

    An upper-triangular matrix with positive diagonal is its own R factor, so
    hand-computed metric examples can be expressed directly.
    """
    R = np.asarray(R, dtype=float)
    return to_real_system(R, np.asarray(y, dtype=float), sigma_w2, constellation, x_true)


def all_vectors(levels, m):
    """Every element of ``levels**m`` as rows."""
    grids = np.meshgrid(*([np.asarray(levels, dtype=float)] * m), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def trained_2x2():
    """2x2 BPSK agent after 2000 updates at 12 dB, with the scenario it came from."""
    cfg = TrainConfig(total_updates=2000, learning_rate=DESK_LEARNING_RATE,
                      reward_scale=DESK_REWARD_SCALE, train_snr_db=(12.0, 12.0), seed=0)
    scenario = Scenario(2, 2, "BPSK", 0.0, (12.0,), 1000, seed=5, train=cfg)
    agent, _ = train(cfg, scenario)
    return scenario, agent


# -- acceptance reporting ---------------------------------------------------------------
#
# Tests marked ``criterion(number, title)`` are gathered here and summarised as one
# PASS/FAIL line per criterion at the end of the run.  Measured values a test stores with
# ``record_property`` are shown next to the verdict.

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (report.when == "call" or report.failed or report.skipped):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "failed": False, "details": []})
    entry["failed"] |= report.failed or report.skipped
    if report.when == "call":
        entry["details"].extend(f"{k}={v}" for k, v in item.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        verdict = "FAIL" if entry["failed"] else "PASS"
        line = f"criterion {number} {verdict}: {entry['title']}"
        if entry["details"]:
            line += "  [" + ", ".join(entry["details"]) + "]"
        terminalreporter.write_line(line)
