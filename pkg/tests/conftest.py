import numpy as np
import pytest

from heatfcs.confined import ConfinedMultisystem

SZ = np.diag([1.0, -1.0])
SX = np.array([[0.0, 1.0], [1.0, 0.0]])

ACCEPTANCE_LINES: list[str] = []


def two_qubit_system(beta=(1.0, 2.0)) -> ConfinedMultisystem:
    """H1 = s3 x id, H2 = id x s3, V = s1 x s1."""
    e = np.array([np.diag(np.kron(SZ, np.eye(2))), np.diag(np.kron(np.eye(2), SZ))])
    return ConfinedMultisystem(e, np.kron(SX, SX), beta, label="two-qubit")


def random_hermitian(rng, d, real=True, scale=1.0):
    a = rng.normal(size=(d, d))
    if not real:
        a = a + 1j * rng.normal(size=(d, d))
    return scale * (a + a.conj().T) / 2


def random_system(rng, d1=None, d2=None, real=True, integer_levels=False, vscale=0.7, beta=None):
    """Two reservoirs in tensor-product form with a generic interaction."""
    d1 = d1 or int(rng.integers(2, 5))
    d2 = d2 or int(rng.integers(2, 5))
    if integer_levels:
        l1 = rng.integers(-2, 3, size=d1).astype(float)
        l2 = rng.integers(-2, 3, size=d2).astype(float)
    else:
        l1 = rng.uniform(-1.5, 1.5, size=d1)
        l2 = rng.uniform(-1.5, 1.5, size=d2)
    e = np.array([np.kron(l1, np.ones(d2)), np.kron(np.ones(d1), l2)])
    v = random_hermitian(rng, d1 * d2, real, vscale / np.sqrt(d1 * d2))
    beta = rng.uniform(0.3, 2.5, size=2) if beta is None else beta
    return ConfinedMultisystem(e, v, beta, label="random")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def qubits():
    return two_qubit_system()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
