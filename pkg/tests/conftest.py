"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the package's own builders: operators
are assembled from explicit 2x2 Pauli matrices with ``np.kron`` so a bug in
the package's index conventions cannot cancel against itself.
"""

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ccrsp_sim.hamiltonian import single_term_instance, triangle_instance

settings.register_profile(
    "ci", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def pauli_string(ops: dict[int, np.ndarray], n: int) -> np.ndarray:
    """Kronecker product with ``ops[q]`` on qubit ``q`` (qubit 0 leftmost)."""
    out = np.ones((1, 1), dtype=complex)
    for q in range(n):
        out = np.kron(out, ops.get(q, I2))
    return out


def oracle_hamiltonian(h) -> np.ndarray:
    """``sum p/2 [(I + s XX)/2 + (I + s ZZ)/2]`` assembled term by term."""
    n = h.n_qubits
    eye = np.eye(2**n, dtype=complex)
    out = np.zeros_like(eye)
    for t in h.terms:
        xx = pauli_string({t.i: X, t.j: X}, n)
        zz = pauli_string({t.i: Z, t.j: Z}, n)
        out += t.p / 2 * ((eye + t.s * xx) / 2 + (eye + t.s * zz) / 2)
    return out


def oracle_hz(h) -> np.ndarray:
    n = h.n_qubits
    eye = np.eye(2**n, dtype=complex)
    out = np.zeros_like(eye)
    for t in h.terms:
        out += t.p * (eye + t.s * pauli_string({t.i: Z, t.j: Z}, n)) / 2
    return out


def oracle_teleport_element(e0: np.ndarray, x, z) -> np.ndarray:
    """Teleport POVM element by brute force: embed, project, partial inner product.

    Builds the full 2N-qubit Bell projector with pair ``j`` on
    ``(E0 qubit j, received qubit j)`` and contracts ``<E0|`` on the first
    register.
    """
    n = len(x)
    d = 2**n
    # product of pair projectors in (E0_0..E0_{n-1}, R_0..R_{n-1}) ordering
    full = np.eye(d * d, dtype=complex)
    for j in range(n):
        phi = np.kron(np.linalg.matrix_power(Z, z[j]), np.linalg.matrix_power(X, x[j])) @ (
            np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
        )
        pj = np.outer(phi, phi.conj()).reshape(2, 2, 2, 2)
        op = np.zeros((d * d, d * d), dtype=complex)
        for row in range(d * d):
            for col in range(d * d):
                rb = [(row >> (2 * n - 1 - q)) & 1 for q in range(2 * n)]
                cb = [(col >> (2 * n - 1 - q)) & 1 for q in range(2 * n)]
                if any(rb[q] != cb[q] for q in range(2 * n) if q not in (j, n + j)):
                    continue
                op[row, col] = pj[rb[j], rb[n + j], cb[j], cb[n + j]]
        full = full @ op
    contract = np.kron(e0.conj()[None, :], np.eye(d))
    return contract @ full @ contract.conj().T


@pytest.fixture
def singlet():
    return single_term_instance(1)


@pytest.fixture
def ferro():
    return single_term_instance(-1)


@pytest.fixture
def triangle():
    return triangle_instance()


@pytest.fixture
def fixtures():
    return {
        "singlet": single_term_instance(1),
        "singlet-ferro": single_term_instance(-1),
        "triangle": triangle_instance(),
    }


# --- acceptance reporting ----------------------------------------------------

_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def record(label: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        _CRITERIA.append(line)
        print(line, flush=True)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
