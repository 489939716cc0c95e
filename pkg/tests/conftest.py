import numpy as np
import pytest

from nightrain import datasets

from _helpers import ACCEPTANCE_LINES


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def night_bg():
    return datasets.make_night_background(3, 48, 64)


@pytest.fixture(scope="session")
def backgrounds_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("backgrounds")
    datasets.write_night_backgrounds(d, 3, seed=10, height=40, width=48)
    return d


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
