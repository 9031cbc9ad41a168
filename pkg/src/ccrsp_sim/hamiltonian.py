"""Two-local XX+ZZ Hamiltonians used by the energy test.

Each term acts on a qubit pair ``(i, j)`` with weight ``p`` and sign ``s``::

    H = sum_{i<j} (p_ij / 2) [ (I + s_ij X_i X_j)/2 + (I + s_ij Z_i Z_j)/2 ]

``H_Z`` is the diagonal part taken with weight ``p_ij`` (i.e. doubled).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .qmath import (
    ATOL,
    MAX_STATE_QUBITS,
    Bits,
    PureState,
    State,
    _X,
    _Z,
    all_bitstrings,
    expectation,
    hadamard_all,
    int_to_bits,
    single_qubit_op,
)


class InstanceError(ValueError):
    """Invalid Hamiltonian instance."""


@dataclass(frozen=True)
class Term:
    i: int
    j: int
    p: float
    s: int


@dataclass(frozen=True, eq=False)
class XxzzHamiltonian:
    n_qubits: int
    terms: tuple[Term, ...]
    alpha: Optional[float] = None
    beta: Optional[float] = None
    min_gap: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        n = self.n_qubits
        if n < 2:
            raise InstanceError("need at least two qubits")
        if not self.terms:
            raise InstanceError("need at least one term")
        seen = set()
        for t in self.terms:
            if not (0 <= t.i < t.j < n):
                raise InstanceError(f"term ({t.i}, {t.j}) must satisfy 0 <= i < j < {n}")
            if (t.i, t.j) in seen:
                raise InstanceError(f"duplicate pair ({t.i}, {t.j})")
            seen.add((t.i, t.j))
            if not t.p > 0:
                raise InstanceError(f"weight of pair ({t.i}, {t.j}) must be positive")
            if t.s not in (1, -1):
                raise InstanceError(f"sign of pair ({t.i}, {t.j}) must be +1 or -1")
        total = math.fsum(t.p for t in self.terms)
        if abs(total - 1.0) > ATOL:
            raise InstanceError(f"weights sum to {total}, not 1")
        if (self.alpha is None) != (self.beta is None):
            raise InstanceError("alpha and beta must be given together")
        if self.alpha is not None:
            if not 0 <= self.alpha < self.beta:
                raise InstanceError("thresholds must satisfy 0 <= alpha < beta")
            if self.min_gap is not None and self.beta - self.alpha < self.min_gap:
                raise InstanceError(
                    f"gap beta - alpha = {self.beta - self.alpha} below {self.min_gap}"
                )

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([t.p for t in self.terms])

    # --- serialization ----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_qubits": self.n_qubits,
            "terms": [{"i": t.i, "j": t.j, "p": t.p, "s": t.s} for t in self.terms],
            "alpha": self.alpha,
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "XxzzHamiltonian":
        try:
            n = int(data["n_qubits"])
            raw_terms = data["terms"]
        except (KeyError, TypeError) as exc:
            raise InstanceError(f"missing field in Hamiltonian instance: {exc}") from None
        terms = []
        for k, t in enumerate(raw_terms):
            try:
                terms.append(Term(int(t["i"]), int(t["j"]), float(t["p"]), int(t["s"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise InstanceError(f"terms[{k}]: {exc}") from None
        total = math.fsum(t.p for t in terms)
        if abs(total - 1.0) > 1e-6:
            raise InstanceError(f"weights sum to {total}; refusing to renormalize")
        terms = [Term(t.i, t.j, t.p / total, t.s) for t in terms]
        alpha, beta = data.get("alpha"), data.get("beta")
        return cls(
            n,
            tuple(terms),
            None if alpha is None else float(alpha),
            None if beta is None else float(beta),
        )

    @classmethod
    def load(cls, path: str | Path) -> "XxzzHamiltonian":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


# --------------------------------------------------------------------------
# fixtures and generators


def single_term_instance(sign: int = 1) -> XxzzHamiltonian:
    return XxzzHamiltonian(2, (Term(0, 1, 1.0, sign),))


def triangle_instance() -> XxzzHamiltonian:
    """Antiferromagnetic triangle: three s=+1 terms of weight 1/3."""
    return XxzzHamiltonian(3, tuple(Term(i, j, 1 / 3, 1) for i, j in ((0, 1), (0, 2), (1, 2))))


def random_instance(
    n_qubits: int, rng: np.random.Generator, edge_prob: float = 0.6
) -> XxzzHamiltonian:
    """Random weights and signs on a random graph (at least one edge)."""
    pairs = list(combinations(range(n_qubits), 2))
    mask = rng.random(len(pairs)) < edge_prob
    if not mask.any():
        mask[rng.integers(len(pairs))] = True
    chosen = [pr for pr, keep in zip(pairs, mask) if keep]
    w = rng.random(len(chosen)) + 0.05
    w = w / w.sum()
    signs = rng.choice([-1, 1], size=len(chosen))
    terms = tuple(Term(i, j, float(p), int(s)) for (i, j), p, s in zip(chosen, w, signs))
    return XxzzHamiltonian(n_qubits, terms)


# --------------------------------------------------------------------------
# matrices


def _check_size(h: XxzzHamiltonian) -> None:
    if h.n_qubits > MAX_STATE_QUBITS:
        raise InstanceError(f"{h.n_qubits} qubits exceeds dense limit {MAX_STATE_QUBITS}")


def _pair_op(op: np.ndarray, i: int, j: int, n: int) -> np.ndarray:
    return single_qubit_op(op, i, n) @ single_qubit_op(op, j, n)


def build_hamiltonian_matrix(h: XxzzHamiltonian) -> np.ndarray:
    _check_size(h)
    n = h.n_qubits
    eye = np.eye(2**n, dtype=complex)
    out = np.zeros_like(eye)
    for t in h.terms:
        xx = _pair_op(_X, t.i, t.j, n)
        zz = _pair_op(_Z, t.i, t.j, n)
        out += (t.p / 2) * ((eye + t.s * xx) / 2 + (eye + t.s * zz) / 2)
    return out


def hz_diagonal(h: XxzzHamiltonian) -> np.ndarray:
    """Diagonal of ``H_Z`` indexed by basis state."""
    _check_size(h)
    n = h.n_qubits
    idx = np.arange(2**n)
    diag = np.zeros(2**n)
    for t in h.terms:
        bi = (idx >> (n - 1 - t.i)) & 1
        bj = (idx >> (n - 1 - t.j)) & 1
        zz = 1 - 2 * (bi ^ bj)
        diag += t.p * (1 + t.s * zz) / 2
    return diag


def build_hz_matrix(h: XxzzHamiltonian) -> np.ndarray:
    return np.diag(hz_diagonal(h)).astype(complex)


def build_hx_matrix(h: XxzzHamiltonian) -> np.ndarray:
    """``H_X``: the Hadamard conjugate of ``H_Z``."""
    had = hadamard_all(h.n_qubits)
    return had @ build_hz_matrix(h) @ had


def ground_state(h: XxzzHamiltonian) -> tuple[float, PureState]:
    """Lowest eigenpair; on degeneracy the first column returned by ``eigh``."""
    w, v = np.linalg.eigh(build_hamiltonian_matrix(h))
    return float(w[0]), PureState(h.n_qubits, v[:, 0])


def ground_energy(h: XxzzHamiltonian) -> float:
    return float(np.linalg.eigvalsh(build_hamiltonian_matrix(h))[0])


def energy(h: XxzzHamiltonian, rho: State) -> float:
    """``Tr(H rho)``; raises on dimension mismatch."""
    if rho.n_qubits != h.n_qubits:
        raise ValueError(f"state has {rho.n_qubits} qubits, Hamiltonian {h.n_qubits}")
    return expectation(build_hamiltonian_matrix(h), rho)


def min_diagonal_energy(h: XxzzHamiltonian) -> tuple[Bits, float]:
    """Minimum of ``<k|H_Z|k>``; ties go to the lexicographically smallest ``k``."""
    diag = hz_diagonal(h)
    k = int(np.argmin(diag))
    return int_to_bits(k, h.n_qubits), float(diag[k])


def hz_energy(h: XxzzHamiltonian, k: Bits) -> float:
    """``<k|H_Z|k>`` evaluated term by term."""
    return math.fsum(t.p * (1 + t.s * (1 - 2 * (k[t.i] ^ k[t.j]))) / 2 for t in h.terms)


def all_hz_energies(h: XxzzHamiltonian) -> dict[Bits, float]:
    return {k: hz_energy(h, k) for k in all_bitstrings(h.n_qubits)}
