import sys
from pathlib import Path

import pytest

from greenfront.search_space import HyperparameterSpec as H
from greenfront.search_space import SearchSpace

ADAPTERS = Path(__file__).parent / "adapters"
ROOT = Path(__file__).parent.parent

ACCEPTANCE_RESULTS = []


def adapter_cmd(script, *args):
    parts = [sys.executable, str(ADAPTERS / script), *map(str, args)]
    return " ".join(f'"{p}"' if " " in p else p for p in parts)


@pytest.fixture
def scripted():
    def make(mode, log=None):
        return adapter_cmd("scripted.py", mode, *( [log] if log else [] ))
    return make


@pytest.fixture
def synthetic_cmd():
    return f"{sys.executable} -m greenfront.adapters.synthetic"


@pytest.fixture
def cnn_space():
    return SearchSpace([
        H.range("layers", 1, 6),
        H.choice("max_pool", [True, False]),
        H.range("filters", 1, 128),
        H.choice("kernel_size", [1, 3, 5, 7, 9]),
        H.fixed("stride", 1),
        H.fixed("epochs", 500),
        H.fixed("batch_size", 64),
        H.fixed("learning_rate", 0.001),
        H.fixed("stop_early", True),
        H.fixed("stop_early_patience", 3),
        H.fixed("stop_early_min_delta", 0.001),
    ])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {name}: {detail}")
