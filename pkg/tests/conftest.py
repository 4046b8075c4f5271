from pathlib import Path

import pytest

from gridsync.converter import converter_model, read_converter
from gridsync.netgraph import read_network

DATA = Path(__file__).resolve().parents[1] / "src" / "gridsync" / "data"
NET39 = DATA / "ieee39.net"
CONV_A = DATA / "reference.conv"

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def spec39():
    return read_network(NET39)


@pytest.fixture(scope="session")
def params():
    return read_converter(CONV_A)


@pytest.fixture(scope="session")
def model(params):
    return converter_model(params)


@pytest.fixture(scope="session")
def line(spec39):
    return spec39.line()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for text in ACCEPTANCE_LINES:
            terminalreporter.write_line(text)
