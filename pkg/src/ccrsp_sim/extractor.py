"""Low-energy-state extractors for the trusted-center protocol and its
measured-entangled ccRSP variant.

Each extractor is implemented twice: as the operational circuit (prepare,
measure the POVM into an outcome register, apply the controlled Pauli
correction, discard registers) and as the closed-form sum. Tests compare
the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonian import XxzzHamiltonian, build_hamiltonian_matrix
from .qmath import (
    DensityOperator,
    Povm,
    _X,
    _Z,
    conjugate_by_frame,
    kron_all,
    partial_trace_matrix,
    pauli_frame_matrix,
    validate_density,
)


DENSE_LIMIT = 256


class ExtractionError(AssertionError):
    """Extracted energy disagrees with the measured acceptance probability."""


@dataclass(frozen=True)
class ExtractionResult:
    eta: DensityOperator
    energy: float
    p_acc_input: float
    epsilon_bound: float

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "p_acc_input": self.p_acc_input,
            "epsilon_bound": self.epsilon_bound,
            "n_qubits": self.eta.n_qubits,
        }


def _outcome_register(k: int) -> int:
    """Qubits needed to index ``k`` outcome labels."""
    return max(1, int(np.ceil(np.log2(max(k, 2)))))


def _controlled(unitaries: list[np.ndarray], r: int) -> np.ndarray:
    """``sum_k U_k (x) |k><k|`` on (system, register); unused indices get ``I``."""
    d = unitaries[0].shape[0]
    out = np.zeros((d * r, d * r), dtype=complex)
    for idx in range(r):
        u = unitaries[idx] if idx < len(unitaries) else np.eye(d, dtype=complex)
        proj = np.zeros((r, r))
        proj[idx, idx] = 1.0
        out += np.kron(u, proj)
    return out


def _run_circuit(
    rho: np.ndarray, roots: np.ndarray, unitaries: list[np.ndarray], dense_limit: int
) -> np.ndarray:
    """Instrument ``{roots[k]}`` into an outcome register, controlled
    ``unitaries[k]``, then trace the register out.

    Below ``dense_limit`` (joint dimension) the register is carried as a
    full quantum register. Above it the joint state is kept as its
    register-diagonal blocks, which is exact because the instrument leaves
    the register classical.
    """
    d = rho.shape[0]
    k = len(roots)
    r = 2 ** _outcome_register(k)
    if d * r <= dense_limit:
        state = np.zeros((d * r, d * r), dtype=complex)
        for idx, root in enumerate(roots):
            reg = np.zeros((r, r))
            reg[idx, idx] = 1.0
            state += np.kron(root @ rho @ root.conj().T, reg)
        ctrl = _controlled(unitaries, r)
        state = ctrl @ state @ ctrl.conj().T
        return state.reshape(d, r, d, r).trace(axis1=1, axis2=3)
    blocks = roots @ rho @ roots.conj().transpose(0, 2, 1)
    u = np.array(unitaries)
    blocks = u @ blocks @ u.conj().transpose(0, 2, 1)
    return blocks.sum(axis=0)


def _zx_frame(x, z) -> np.ndarray:
    """``Z^z X^x`` as a dense matrix."""
    return kron_all(
        np.linalg.matrix_power(_Z, b) @ np.linalg.matrix_power(_X, a) for a, b in zip(x, z)
    )


def extract_tc(povm: Povm, dense_limit: int = DENSE_LIMIT) -> DensityOperator:
    """Operational extractor for the trusted-center protocol.

    Prepares ``I/2^N``, records the POVM outcome in a register, applies
    ``Z^z X^x`` controlled on that register, then traces the register out.
    """
    n = povm.n_qubits
    if povm.n_bits != n:
        raise ValueError("POVM must be labelled by N-bit strings on N qubits")
    povm.validate()
    d = 2**n
    mixed = np.eye(d, dtype=complex) / d
    unitaries = [_zx_frame(x, z) for x, z in povm.outcomes]
    eta = DensityOperator(n, _run_circuit(mixed, povm.sqrt_elements, unitaries, dense_limit))
    validate_density(eta)
    return eta


def extract_tc_closed_form(povm: Povm) -> DensityOperator:
    """``2^-N sum_{x,z} Z^z X^x Pi_{x,z} X^x Z^z``."""
    n = povm.n_qubits
    acc = np.zeros((2**n, 2**n), dtype=complex)
    for (x, z), el in zip(povm.outcomes, povm.elements):
        acc += conjugate_by_frame(el, x, z)
    return DensityOperator(n, acc / 2**n)


def extract_ccrsp(
    rho_b1b2: DensityOperator, povm: Povm, m_qubits: int, dense_limit: int = DENSE_LIMIT
) -> DensityOperator:
    """Operational extractor for the measured-entangled ccRSP variant.

    Measures the POVM on ``B1`` into an outcome register, applies
    ``X^x Z^z`` to ``B2`` controlled on the register, then traces out ``B1``
    and the register.
    """
    total = rho_b1b2.n_qubits
    n = total - m_qubits
    if povm.n_qubits != m_qubits or povm.n_bits != n or n < 1:
        raise ValueError("dimension mismatch between rho_b1b2, POVM and M")
    povm.validate()
    eye_n = np.eye(2**n, dtype=complex)
    eye_m = np.eye(2**m_qubits, dtype=complex)
    roots = np.array([np.kron(root, eye_n) for root in povm.sqrt_elements])
    unitaries = [np.kron(eye_m, pauli_frame_matrix(x, z)) for x, z in povm.outcomes]
    joint = _run_circuit(rho_b1b2.matrix, roots, unitaries, dense_limit)
    eta = DensityOperator(n, partial_trace_matrix(joint, total, range(m_qubits, total)))
    validate_density(eta)
    return eta


def extract_ccrsp_closed_form(rho_b1b2: DensityOperator, povm: Povm, m_qubits: int) -> DensityOperator:
    """``Tr_B1[ sum (sqrt(Pi) (x) X^x Z^z) rho (sqrt(Pi) (x) Z^z X^x) ]``."""
    total = rho_b1b2.n_qubits
    n = total - m_qubits
    acc = np.zeros((2**total, 2**total), dtype=complex)
    for (x, z), root in zip(povm.outcomes, povm.sqrt_elements):
        k = np.kron(root, pauli_frame_matrix(x, z))
        acc += k @ rho_b1b2.matrix @ k.conj().T
    return DensityOperator(n, partial_trace_matrix(acc, total, range(m_qubits, total)))


def verify_extraction(
    h: XxzzHamiltonian, eta: DensityOperator, p_acc: float, atol: float = 1e-9
) -> ExtractionResult:
    """Check ``Tr(eta H) == 1 - p_acc`` and record ``epsilon = 1 - p_acc``."""
    if eta.n_qubits != h.n_qubits:
        raise ValueError("eta and Hamiltonian sizes differ")
    e = float(np.trace(build_hamiltonian_matrix(h) @ eta.matrix).real)
    eps = 1.0 - p_acc
    if abs(e - eps) > atol:
        raise ExtractionError(f"Tr(eta H) = {e!r} but 1 - p_acc = {eps!r}")
    return ExtractionResult(eta, e, p_acc, eps)
