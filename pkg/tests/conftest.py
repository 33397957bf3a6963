from pathlib import Path

import numpy as np
import pytest

from pilotwave.massfield import MassParams
from pilotwave.wavefield import GaussianPacket, PlaneWaveSuperposition, StaticMode

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
DATA = Path(__file__).resolve().parent / "data"


@pytest.fixture
def params():
    return MassParams()


@pytest.fixture
def plane_wave():
    return PlaneWaveSuperposition([(1.0, 0.3)], "klein_gordon", 1.0)


@pytest.fixture
def standing_wave():
    # 2 cos(x) e^{-i w t}
    return PlaneWaveSuperposition([(1.0, 1.0), (1.0, -1.0)], "klein_gordon", 1.0)


@pytest.fixture
def static_gaussian():
    return GaussianPacket(0.0, 1.0, 0.0, "klein_gordon", 1.0)


@pytest.fixture
def sine_mode():
    return StaticMode("sin(x)", 1.0)


def two_mode_kg(m=1.0):
    return PlaneWaveSuperposition([(1.0, 1.0), (0.5, -2.0)], "klein_gordon", m)


def relerr(a, b):
    return abs(a - b) / max(abs(b), np.finfo(float).tiny)


ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def report(number, title, ok, detail):
        line = f"AC{number} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
