import pytest

from imsim import dl
from imsim.phy import CellScenario
from imsim.training import TrainConfig
from imsim.txrx.link import DlLink


@pytest.fixture(scope="session")
def dl_link():
    return DlLink(CellScenario())


@pytest.fixture(scope="session")
def trained_dl(dl_link):
    """A small downlink network trained for a few seconds."""
    batch = dl.training_batch(dl_link, 2000, (-12.0, 10.0), seed=1)
    return dl.train_dl(dl_link, batch, TrainConfig(epochs=6, seed=0))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
