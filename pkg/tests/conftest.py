"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from blockcs.rng import Rng


@pytest.fixture
def rng():
    """Fresh deterministic generator per test."""
    return Rng(20240717)


@pytest.fixture
def tiny_image(rng):
    """A small single-channel image with smooth plus blocky content."""
    yy, xx = np.mgrid[0:24, 0:32].astype(np.float64)
    img = 0.4 + 0.2 * np.sin(xx / 7.0) + 0.15 * (yy > 12)
    img += 0.05 * rng.normal((24, 32))
    return np.clip(img, 0.0, 1.0)[:, :, None]


def pytest_terminal_summary(terminalreporter):
    """Print one verdict line per acceptance criterion, if any ran."""
    import sys

    lines = []
    for name, module in sys.modules.items():
        if name.rpartition(".")[2] == "test_acceptance":
            lines = getattr(module, "REPORT", [])
            if lines:
                break
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for label, line in lines:
        terminalreporter.write_line(f"{label}: {line}")
