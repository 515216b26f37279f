"""
Pytest configuration and shared fixtures.
Provides small Hilbert spaces, lattices, random operators and scenario helpers.
"""
import json
from pathlib import Path

import numpy as np
import pytest

from histories_sim.config import config
from histories_sim.hilbert.lattice import LatticeModel
from histories_sim.hilbert.operators import ProjectorFamily


def random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (a + a.conj().T)


def random_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_family(rng: np.random.Generator, dim: int, n_members: int) -> ProjectorFamily:
    """Projectors onto a random orthonormal basis, grouped into ``n_members`` blocks."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
    cuts = np.array_split(np.arange(dim), n_members)
    return ProjectorFamily(tuple(q[:, c] @ q[:, c].conj().T for c in cuts if c.size))


@pytest.fixture
def rng():
    """
    Seeded numpy generator for building random test instances.

    Returns:
        np.random.Generator: Generator seeded with a fixed value

    Example:
        >>> def test_example(rng):
        ...     h = random_hermitian(rng, 4)
    """
    return np.random.default_rng(20240601)


@pytest.fixture
def sigma():
    """
    Pauli matrices keyed by axis.

    Returns:
        dict: {"x": ..., "y": ..., "z": ...}
    """
    return {
        "x": np.array([[0, 1], [1, 0]], dtype=complex),
        "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "z": np.array([[1, 0], [0, -1]], dtype=complex),
    }


@pytest.fixture
def lowering():
    """Qubit lowering operator |0><1| (index 1 is the excited level)."""
    return np.array([[0, 1], [0, 0]], dtype=complex)


@pytest.fixture
def small_lattice():
    """
    Free lattice with 64 sites, centred on the origin.

    Returns:
        LatticeModel: n_sites=64, dx=0.25

    Example:
        >>> def test_example(small_lattice):
        ...     assert small_lattice.n_sites == 64
    """
    return LatticeModel.symmetric(64, 0.25)


@pytest.fixture
def scenario_dir() -> Path:
    """Directory of the bundled scenario files."""
    return config.SCENARIO_DIR


@pytest.fixture
def write_scenario(tmp_path):
    """
    Factory writing a scenario mapping to a JSON file under tmp_path.

    Returns:
        Callable[[dict, str], Path]

    Example:
        >>> def test_example(write_scenario):
        ...     path = write_scenario({"kind": "qbm"}, "bad.json")
    """

    def _write(data: dict, name: str = "scenario.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def bundled(scenario_dir):
    """
    Loader for a bundled scenario file as a plain mapping.

    Returns:
        Callable[[str], dict]
    """

    def _load(name: str) -> dict:
        return json.loads((scenario_dir / f"{name}.json").read_text(encoding="utf-8"))

    return _load


# Test markers

def pytest_configure(config):
    """
    Configure custom pytest markers.
    """
    config.addinivalue_line("markers", "integration: mark test as integration test")
    config.addinivalue_line("markers", "slow: mark test as slow running")
    config.addinivalue_line("markers", "unit: mark test as unit test")
