"""Closed-form acceptance probabilities.

Everything here is computed from operator identities only. Nothing calls
into the verifier rule or the protocol runners, so these values serve as
the independent side of every report comparison.
"""

from __future__ import annotations

import numpy as np

from .hamiltonian import XxzzHamiltonian, build_hamiltonian_matrix, build_hz_matrix
from .qmath import (
    ATOL,
    DensityOperator,
    Povm,
    PureState,
    State,
    _H,
    _X,
    _Z,
    bits_to_int,
    conjugate_by_frame,
    partial_trace_matrix,
    validate_density,
)


def _clamp(value: float) -> float:
    if value < -ATOL or value > 1 + ATOL:
        raise ValueError(f"acceptance probability {value} outside [0, 1]")
    return min(1.0, max(0.0, value))


def _trace_real(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.einsum("ij,ji->", a, b).real)


def _density_matrix(rho: State) -> np.ndarray:
    if isinstance(rho, PureState):
        return np.outer(rho.amplitudes, rho.amplitudes.conj())
    return rho.matrix


def cf_honest(h: XxzzHamiltonian, rho: State) -> float:
    """``Tr[rho (I - H)]``."""
    if rho.n_qubits != h.n_qubits:
        raise ValueError("state and Hamiltonian sizes differ")
    return _clamp(1.0 - _trace_real(build_hamiltonian_matrix(h), _density_matrix(rho)))


def soundness_state(povm: Povm) -> DensityOperator:
    """``sigma = 2^-N sum_{x,z} X^x Z^z Pi_{x,z} Z^z X^x``, validated."""
    if povm.n_bits != povm.n_qubits:
        raise ValueError("POVM must act on the N received qubits")
    povm.validate()
    acc = np.zeros_like(povm.elements[0])
    for (x, z), el in zip(povm.outcomes, povm.elements):
        acc += conjugate_by_frame(el, x, z)
    sigma = DensityOperator(povm.n_qubits, acc / 2**povm.n_qubits)
    validate_density(sigma)
    return sigma


def cf_povm_soundness(h: XxzzHamiltonian, povm: Povm) -> float:
    """``Tr[(I - H) sigma]`` for an arbitrary prover POVM."""
    if povm.n_qubits != h.n_qubits:
        raise ValueError("POVM and Hamiltonian sizes differ")
    return cf_honest(h, soundness_state(povm))


def _diag_mixture(d, n: int) -> np.ndarray:
    probs = np.zeros(2**n)
    for k, p in d.support.items():
        probs[bits_to_int(k)] += p
    return np.diag(probs).astype(complex)


def cf_attack(h: XxzzHamiltonian, d, p_succ: float) -> float:
    """``p_succ Tr[(I - H_Z) sum_k D(k) |k><k|]``."""
    if d.n_bits != h.n_qubits:
        raise ValueError("attack distribution length does not match instance")
    eye = np.eye(2**h.n_qubits)
    return p_succ * _clamp(_trace_real(eye - build_hz_matrix(h), _diag_mixture(d, h.n_qubits)))


def cf_ma_honest(h: XxzzHamiltonian, e0: PureState, p_succ: float) -> float:
    """``p_succ Tr[|E0><E0| (I - H)]``, computed basis by basis.

    Averages over the two measurement bases the probability of each outcome
    string times the weight of terms it satisfies; the Hadamard-conjugated
    ``H_Z`` gives the X-basis contribution.
    """
    if e0.n_qubits != h.n_qubits:
        raise ValueError("state and Hamiltonian sizes differ")
    n = h.n_qubits
    eye = np.eye(2**n)
    had = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        had = np.kron(had, _H)
    accept_z = eye - build_hz_matrix(h)
    total = 0.0
    for basis in (np.eye(2**n, dtype=complex), had):
        amps = basis.conj().T @ e0.amplitudes
        total += 0.5 * float(np.real(np.vdot(amps, accept_z @ amps)))
    return p_succ * _clamp(total)


def cf_ma_malicious(h: XxzzHamiltonian, d, p_succ: float) -> float:
    """``p_succ sum_m D(m) <m|(I - H_Z)|m>``, evaluated as a diagonal sum."""
    if d.n_bits != h.n_qubits:
        raise ValueError("distribution length does not match instance")
    diag = np.real(np.diag(build_hz_matrix(h)))
    total = 0.0
    for k, p in sorted(d.support.items()):
        total += p * (1.0 - diag[bits_to_int(k)])
    return p_succ * _clamp(total)


def _frame(x, z) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for a, b in zip(x, z):
        out = np.kron(out, np.linalg.matrix_power(_X, a) @ np.linalg.matrix_power(_Z, b))
    return out


def thm3_state(rho_b1b2: DensityOperator, povm: Povm) -> DensityOperator:
    """``eta = Tr_B1[ sum (sqrt(Pi) (x) X^x Z^z) rho (sqrt(Pi) (x) Z^z X^x) ]``."""
    m = povm.n_qubits
    total = rho_b1b2.n_qubits
    n = total - m
    if n != povm.n_bits or n < 1:
        raise ValueError("rho_b1b2 must have M + N qubits with M = POVM size, N = label length")
    povm.validate()
    acc = np.zeros((2**total, 2**total), dtype=complex)
    for (x, z), root in zip(povm.outcomes, povm.sqrt_elements):
        k = np.kron(root, _frame(x, z))
        acc += k @ rho_b1b2.matrix @ k.conj().T
    eta = DensityOperator(n, partial_trace_matrix(acc, total, range(m, total)))
    validate_density(eta)
    return eta


def cf_thm3(h: XxzzHamiltonian, rho_b1b2: DensityOperator, povm: Povm, p_succ: float = 1.0) -> float:
    """``p_succ (1 - Tr(H eta))`` for the measured-entangled model."""
    eta = thm3_state(rho_b1b2, povm)
    if eta.n_qubits != h.n_qubits:
        raise ValueError("state and Hamiltonian sizes differ")
    return p_succ * cf_honest(h, eta)


def bell_identity_check(
    rho: DensityOperator, alpha: int, beta: int, h: int, m: int
) -> tuple[float, float]:
    """Both sides of the single-qubit Bell projection identity.

    ``<phi_{a,b}| (rho (x) H^h|m><m|H^h) |phi_{a,b}>`` against
    ``(1/2) <m| H^h Z^b X^a rho X^a Z^b H^h |m>``.
    """
    seed = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    zb = np.linalg.matrix_power(_Z, beta)
    xa = np.linalg.matrix_power(_X, alpha)
    phi = np.kron(zb, xa) @ seed
    ket = np.zeros(2, dtype=complex)
    ket[m] = 1.0
    hh = np.linalg.matrix_power(_H, h)
    tau = hh @ np.outer(ket, ket) @ hh
    lhs = float(np.real(np.vdot(phi, np.kron(rho.matrix, tau) @ phi)))
    v = hh @ ket
    rhs = 0.5 * float(np.real(np.vdot(v, zb @ xa @ rho.matrix @ xa @ zb @ v)))
    return lhs, rhs
