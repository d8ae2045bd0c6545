import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from flowscape import CoordinateSystem, SpatialGrid


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else "FAIL"
    sys.stderr.write(f"\nACCEPTANCE {name}: {outcome}\n")


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


@pytest.fixture
def square_grid():
    """3x3 planar grid with 1 km spacing, ids g0..g8 row-major."""
    ids = [f"g{k}" for k in range(9)]
    xy = [(1000.0 * (k % 3), 1000.0 * (k // 3)) for k in range(9)]
    return SpatialGrid(ids, np.array(xy), CoordinateSystem.planar_meters)


def write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path
