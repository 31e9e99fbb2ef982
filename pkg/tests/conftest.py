import numpy as np
import pytest

from rigidcharge.initial_data import coulomb_soliton
from rigidcharge.sources import ChargeShape, CouplingMatrix, System
from rigidcharge.spectral import FieldPair, Grid
from rigidcharge.state import ParticleState, PhaseSpacePoint
from rigidcharge.weights import make_weight


def random_fields(grid, rng, scale=1.0):
    """Band-limited random E and B."""
    def one():
        raw = rng.normal(0.0, scale, size=(3,) + grid.shape)
        return grid.ifft(grid.fft(raw) * grid.resolved)
    return FieldPair(grid, one(), one())


def soliton_state(grid, q=(0.0, 0.0, 0.0), R=1.0, e=1.0, m=1.0):
    pt = ParticleState(q, (0.0, 0.0, 0.0), m)
    shape = ChargeShape(R, e)
    return PhaseSpacePoint([pt], [coulomb_soliton(pt, shape, grid)], grid), shape


def two_charge(coupling="ML", weight="constant", L=12.8, n=32, R=1.0):
    """Two unit charges approaching each other, each in its own Coulomb field."""
    grid = Grid(L, n)
    parts = [
        ParticleState((-1.5, 0.3, 0.0), (0.5, 0.0, 0.0), 1.0),
        ParticleState((1.5, -0.3, 0.0), (-0.5, 0.0, 0.0), 1.0),
    ]
    shapes = [ChargeShape(R, 1.0), ChargeShape(R, 1.0)]
    fields = [coulomb_soliton(p, s, grid) for p, s in zip(parts, shapes)]
    system = System(grid, shapes, CouplingMatrix.from_preset(coupling, 2), make_weight(weight, grid))
    return system, PhaseSpacePoint(parts, fields, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(8.0, 16)


@pytest.fixture(scope="session")
def grid32():
    return Grid(12.8, 32)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
