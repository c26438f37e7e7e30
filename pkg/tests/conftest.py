import numpy as np
import pytest

from higgslab.bundle import Connection, HiggsField, elem
from higgslab.geometry import make_torus


@pytest.fixture(scope="session")
def t2_32():
    return make_torus(1, (1.0, 1.0), (32, 32))


@pytest.fixture(scope="session")
def t2_16():
    return make_torus(1, (1.0, 1.0), (16, 16))


@pytest.fixture(scope="session")
def t2_8():
    return make_torus(1, (1.0, 1.0), (8, 8))


@pytest.fixture(scope="session")
def t4_8():
    return make_torus(2, (1.0,) * 4, (8,) * 4)


@pytest.fixture(scope="session")
def t4_12():
    return make_torus(2, (1.0,) * 4, (12,) * 4)


@pytest.fixture
def nilpotent(t2_32):
    """The exact pair (0, e_12 dz) on the unit flat T^2."""
    return Connection.zero(t2_32, 2), HiggsField.constant(t2_32, [elem(1, 2)])


def random_unitary_matrix(seed, rank=2):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((rank, rank)) + 1j * rng.standard_normal((rank, rank))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
