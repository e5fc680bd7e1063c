import numpy as np
import pytest

from vap.core import CategoryCatalog, Frame


@pytest.fixture(scope="session")
def catalog():
    return CategoryCatalog.default()


def make_frame(pixels, index=0, fps=25.0):
    return Frame(index, index / fps, np.asarray(pixels, dtype=float))


def gray(h=48, w=64, level=0.5):
    return np.full((h, w, 3), level)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
