import numpy as np
import pytest
import torch

from bridgeprompt.dataset_io import ActionVocab


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def vocab():
    return ActionVocab([(0, "take"), (1, "pour"), (2, "cut")])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = []


@pytest.fixture
def acceptance_log(request):
    """Record one acceptance line; lines are echoed now and repeated in the summary."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def log(line):
        _ACCEPTANCE.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)

    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
