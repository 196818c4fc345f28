from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from windatc.config import load_config
from windatc.grid_model import parse_case, solve_base_power_flow

DATA = Path(str(resources.files("windatc") / "data"))


def case_path(name: str) -> Path:
    return DATA / name


@pytest.fixture(scope="session")
def ieee39():
    return parse_case(case_path("ieee39.case"))


@pytest.fixture(scope="session")
def case9():
    return parse_case(case_path("case9.case"))


@pytest.fixture(scope="session")
def case2():
    return parse_case(case_path("case2.case"))


@pytest.fixture(scope="session")
def toy3():
    return parse_case(case_path("case3_toy.case"))


@pytest.fixture(scope="session")
def ieee39_base(ieee39):
    return solve_base_power_flow(ieee39, 1.0, partition=ieee39.partition())


@pytest.fixture(scope="session")
def default_config():
    return load_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
