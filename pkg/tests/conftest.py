import os
from pathlib import Path

import numpy as np
import pytest

from minoverlap import oracle

DATA = Path(__file__).resolve().parents[1] / "src" / "minoverlap" / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"
LONG = os.environ.get("MINOVERLAP_LONG") == "1"

FIXTURES = ["constant_half", "shifted_step", "cosine_staircase"]


def load(name):
    return oracle.load_fixture(DATA / f"{name}.json")


@pytest.fixture(params=FIXTURES)
def fixture_fn(request):
    return request.param, load(request.param)


def pytest_collection_modifyitems(config, items):
    if LONG:
        return
    skip = pytest.mark.skip(reason="full-scale run; set MINOVERLAP_LONG=1")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)
