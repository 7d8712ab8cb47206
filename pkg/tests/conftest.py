# tests/conftest.py
import numpy as np
import pytest

from app.database import db as database
from app.physics.circuit import (CapacitanceNetwork, circuit_from_charging_energies,
                                 measured_device_circuit)
from app.physics.solver import SolverSettings


DEVICE_EC = np.array([
    [0.2758, -0.1154, -0.0465],
    [-0.1154, 0.2758, -0.1154],
    [-0.0465, -0.1154, 0.2758],
])


@pytest.fixture
def measured_device():
    return measured_device_circuit(0.5)


@pytest.fixture
def symmetric_rhombus():
    """Measured-device charging matrix with four equal 13 GHz junctions."""
    return circuit_from_charging_energies(DEVICE_EC, [13.0, 13.0, 13.0, 13.0], phi_ext=0.5)


@pytest.fixture
def small_settings():
    """Fixed, small truncation for identities that hold at any cutoff."""
    return SolverSettings(n_max=3, converge=False, levels=4)


@pytest.fixture
def loop_network():
    """Four islands in a ring with weak diagonals and uneven environment couplings."""
    return CapacitanceNetwork.from_pairs(
        {(1, 2): 45.0, (2, 3): 47.0, (3, 4): 44.0, (1, 4): 46.0, (1, 3): 2.0, (2, 4): 1.5},
        ground=[20.0, 22.0, 19.0, 21.0],
        res=[4.0, 0.0, 0.0, 0.0],
        drive=[0.0, 0.0, 0.5, 0.0],
    )


@pytest.fixture
def ledger_db(tmp_path):
    """Point the run ledger at a throwaway sqlite file."""
    original = str(database.engine.url)
    database.configure(f"sqlite:///{tmp_path / 'ledger.db'}")
    yield database
    database.configure(original)
