import functools

import pytest

from hybrid_ias.config import load_config
from hybrid_ias.experiments import run_experiment

ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def _preset_run(name, seed=None):
    return run_experiment(load_config(preset=name, seed=seed))


@pytest.fixture(scope="session")
def preset_run():
    """``preset_run(name, seed=None)`` -> ``(experiment, state, metrics, detected)``, cached per session."""
    return _preset_run


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
