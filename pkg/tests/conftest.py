import numpy as np
import pytest

from endorestore.image import Image

_CRITERIA = {}


def record_criterion(number, description, passed, detail=""):
    _CRITERIA[number] = (description, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        description, passed, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] AC{number}: {description} {detail}".rstrip())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def rand_image(rng):
    def make(h=32, w=32, c=3):
        return Image(rng.random((c, h, w)))

    return make
