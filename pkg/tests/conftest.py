import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running learning experiments")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = [line for name, mod in list(sys.modules.items()) if name.endswith("test_acceptance")
             for line in getattr(mod, "REPORT", [])]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
