"""Dense complex linear algebra for small qubit registers.

Qubit ordering is global: qubit 0 is the most significant bit of a basis
index, so ``|q0 q1 ... q_{n-1}>`` has index ``sum(q_k << (n - 1 - k))``.
Bitstrings are tuples of 0/1 ints in the same order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

ATOL = 1e-9
MAX_STATE_QUBITS = 10
MAX_POVM_BITS = 8

Bits = tuple[int, ...]
Label = tuple[Bits, Bits]

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


class QuantumStateError(ValueError):
    """Raised when an operator or vector violates a state invariant."""


class KindMismatchError(TypeError):
    pass


# --------------------------------------------------------------------------
# bitstring helpers


def bits_to_int(bits: Sequence[int]) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | (int(b) & 1)
    return value


def int_to_bits(value: int, n: int) -> Bits:
    return tuple((value >> (n - 1 - k)) & 1 for k in range(n))


def all_bitstrings(n: int) -> list[Bits]:
    return [int_to_bits(v, n) for v in range(2**n)]


def bits_str(bits: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in bits)


def parse_bits(text: str) -> Bits:
    if not text or any(c not in "01" for c in text):
        raise ValueError(f"not a bitstring: {text!r}")
    return tuple(int(c) for c in text)


def xor_bits(a: Sequence[int], b: Sequence[int]) -> Bits:
    if len(a) != len(b):
        raise ValueError("bitstring length mismatch")
    return tuple(int(u) ^ int(v) for u, v in zip(a, b))


def _popcount_parity(values: np.ndarray) -> np.ndarray:
    parity = np.zeros_like(values)
    v = values.copy()
    while np.any(v):
        parity ^= v & 1
        v >>= 1
    return parity


# --------------------------------------------------------------------------
# value types


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PureState:
    """Unit vector on ``n_qubits`` qubits."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = _readonly(np.asarray(self.amplitudes).reshape(-1))
        if amps.shape != (2**self.n_qubits,):
            raise QuantumStateError(
                f"expected {2**self.n_qubits} amplitudes, got {amps.shape[0]}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > ATOL:
            raise QuantumStateError(f"state norm^2 is {norm}, not 1")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "PureState":
        vec = np.asarray(vec, dtype=complex).reshape(-1)
        n = int(round(np.log2(vec.shape[0])))
        return cls(n, vec / np.linalg.norm(vec))

    def to_density(self) -> "DensityOperator":
        return DensityOperator(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Density matrix on ``n_qubits`` qubits.

    Construction checks only the shape; call :meth:`validate` (or
    :func:`validate_density`) to check Hermiticity, unit trace and
    positivity.
    """

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = _readonly(self.matrix)
        d = 2**self.n_qubits
        if mat.shape != (d, d):
            raise QuantumStateError(f"expected {d}x{d} matrix, got {mat.shape}")
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def validate(self, atol: float = ATOL) -> "DensityOperator":
        validate_density(self, atol)
        return self

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityOperator":
        d = 2**n_qubits
        return cls(n_qubits, np.eye(d, dtype=complex) / d)


def validate_density(op: DensityOperator, atol: float = ATOL) -> None:
    m = op.matrix
    herm_err = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if herm_err > atol:
        raise QuantumStateError(f"operator not Hermitian (max deviation {herm_err:.3e})")
    tr = np.trace(m)
    if abs(tr - 1.0) > atol:
        raise QuantumStateError(f"trace is {tr}, not 1")
    lam_min = float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0])
    if lam_min < -atol:
        raise QuantumStateError(f"operator not PSD (min eigenvalue {lam_min:.3e})")


@dataclass(frozen=True, eq=False)
class Povm:
    """POVM on ``n_qubits`` qubits with outcomes labelled by ``(x, z)``.

    ``elements[k]`` is the operator for ``outcomes[k]``; labels absent from
    ``outcomes`` carry the zero operator. ``n_bits`` is the length of each
    of ``x`` and ``z`` and need not equal ``n_qubits``.
    """

    n_qubits: int
    n_bits: int
    outcomes: tuple[Label, ...]
    elements: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        els = _readonly(self.elements)
        d = 2**self.n_qubits
        if els.ndim != 3 or els.shape[1:] != (d, d):
            raise QuantumStateError(f"POVM elements must have shape (K, {d}, {d})")
        outs = tuple((tuple(x), tuple(z)) for x, z in self.outcomes)
        if len(outs) != els.shape[0]:
            raise QuantumStateError("one label per POVM element required")
        if len(set(outs)) != len(outs):
            raise QuantumStateError("duplicate POVM outcome labels")
        for x, z in outs:
            if len(x) != self.n_bits or len(z) != self.n_bits:
                raise QuantumStateError(f"outcome label lengths must be {self.n_bits}")
        object.__setattr__(self, "outcomes", outs)
        object.__setattr__(self, "elements", els)

    @classmethod
    def from_mapping(
        cls, n_qubits: int, n_bits: int, elements: dict[Label, np.ndarray]
    ) -> "Povm":
        labels = sorted(elements)
        return cls(n_qubits, n_bits, tuple(labels), np.array([elements[k] for k in labels]))

    def __len__(self) -> int:
        return len(self.outcomes)

    def element(self, label: Label) -> np.ndarray:
        try:
            return self.elements[self.outcomes.index(label)]
        except ValueError:
            d = 2**self.n_qubits
            return np.zeros((d, d), dtype=complex)

    @cached_property
    def sqrt_elements(self) -> np.ndarray:
        return np.array([psd_sqrt(e) for e in self.elements])

    def validate(self, atol: float = ATOL) -> "Povm":
        total = self.elements.sum(axis=0)
        d = 2**self.n_qubits
        err = float(np.max(np.abs(total - np.eye(d))))
        if err > atol:
            raise QuantumStateError(f"POVM elements do not sum to identity (deviation {err:.3e})")
        for label, e in zip(self.outcomes, self.elements):
            if np.max(np.abs(e - e.conj().T)) > atol:
                raise QuantumStateError(f"POVM element {label} not Hermitian")
            if np.linalg.eigvalsh((e + e.conj().T) / 2)[0] < -atol:
                raise QuantumStateError(f"POVM element {label} not PSD")
        return self

    def probabilities(self, state: Union[PureState, DensityOperator]) -> np.ndarray:
        """Born probabilities ``Tr(Pi_k rho)`` for every listed outcome."""
        if state.n_qubits != self.n_qubits:
            raise QuantumStateError("POVM and state dimensions differ")
        if isinstance(state, PureState):
            v = state.amplitudes
            probs = np.einsum("i,kij,j->k", v.conj(), self.elements, v).real
        else:
            probs = np.einsum("kij,ji->k", self.elements, state.matrix).real
        return np.clip(probs, 0.0, None)


State = Union[PureState, DensityOperator]


# --------------------------------------------------------------------------
# basic gates and states


def basis_state(bits: Sequence[int]) -> PureState:
    n = len(bits)
    v = np.zeros(2**n, dtype=complex)
    v[bits_to_int(bits)] = 1.0
    return PureState(n, v)


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def single_qubit_op(op: np.ndarray, qubit: int, n: int) -> np.ndarray:
    return kron_all(op if k == qubit else _I2 for k in range(n))


def hadamard_all(n: int) -> np.ndarray:
    return kron_all([_H] * n)


def bb84_product_state(h: int, m: Sequence[int]) -> PureState:
    """``H^h|m_1> (x) ... (x) H^h|m_N>``."""
    return _bb84_cached(int(h), tuple(int(b) for b in m))


@lru_cache(maxsize=4096)
def _bb84_cached(h: int, m: Bits) -> PureState:
    n = len(m)
    k = bits_to_int(m)
    if h == 0:
        v = np.zeros(2**n, dtype=complex)
        v[k] = 1.0
    else:
        # <j|H^{(x)n}|k> = (-1)^{j.k} / sqrt(2^n)
        signs = 1 - 2 * _popcount_parity(np.arange(2**n) & k)
        v = signs.astype(complex) / np.sqrt(2**n)
    return PureState(n, v)


def draw_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Index ``k`` with probability ``probs[k] / sum(probs)``."""
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(k, len(probs) - 1)


def tensor_product(parts: Sequence[State]) -> State:
    if not parts:
        raise ValueError("tensor_product needs at least one part")
    kinds = {type(p) for p in parts}
    if len(kinds) != 1:
        raise KindMismatchError("cannot mix PureState and DensityOperator in a tensor product")
    n = sum(p.n_qubits for p in parts)
    if isinstance(parts[0], PureState):
        v = np.ones(1, dtype=complex)
        for p in parts:
            v = np.kron(v, p.amplitudes)
        return PureState(n, v)
    return DensityOperator(n, kron_all(p.matrix for p in parts))


def bell_state(alpha: int, beta: int) -> PureState:
    """``(Z^beta (x) X^alpha)(|00> + |11>)/sqrt(2)``."""
    seed = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    op = np.kron(np.linalg.matrix_power(_Z, beta), np.linalg.matrix_power(_X, alpha))
    return PureState(2, op @ seed)


def bell_povm() -> Povm:
    """Two-qubit Bell measurement with outcome label ``((alpha,), (beta,))``."""
    elements = {}
    for a in (0, 1):
        for b in (0, 1):
            v = bell_state(a, b).amplitudes
            elements[((a,), (b,))] = np.outer(v, v.conj())
    return Povm.from_mapping(2, 1, elements)


def computational_povm(n: int) -> Povm:
    """Projective Z measurement; outcome bits are stored in the ``x`` slot."""
    d = 2**n
    elements = np.zeros((d, d, d), dtype=complex)
    labels = []
    for k in range(d):
        elements[k, k, k] = 1.0
        labels.append((int_to_bits(k, n), (0,) * n))
    return Povm(n, n, tuple(labels), elements)


# --------------------------------------------------------------------------
# Pauli frames


def pauli_frame_matrix(x: Sequence[int], z: Sequence[int]) -> np.ndarray:
    """Dense ``(X^x1 Z^z1) (x) ... (x) (X^xN Z^zN)``."""
    if len(x) != len(z):
        raise ValueError("x and z must have equal length")
    return kron_all(
        np.linalg.matrix_power(_X, int(a)) @ np.linalg.matrix_power(_Z, int(b))
        for a, b in zip(x, z)
    )


def _frame_perm_phase(x: Sequence[int], z: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    n = len(x)
    idx = np.arange(2**n)
    phase = 1 - 2 * _popcount_parity(idx & bits_to_int(z))
    return idx ^ bits_to_int(x), phase


def conjugate_by_frame(mat: np.ndarray, x: Sequence[int], z: Sequence[int]) -> np.ndarray:
    """``P mat P^dagger`` with ``P = X^x Z^z`` via index permutation."""
    perm, phase = _frame_perm_phase(x, z)
    signed = mat * phase[:, None] * phase[None, :]
    out = np.empty_like(signed)
    out[np.ix_(perm, perm)] = signed
    return out


def apply_pauli_frame(state: DensityOperator, x: Sequence[int], z: Sequence[int]) -> DensityOperator:
    """Return ``X^x Z^z rho Z^z X^x``."""
    if len(x) != state.n_qubits or len(z) != state.n_qubits:
        raise ValueError(
            f"frame lengths ({len(x)}, {len(z)}) do not match {state.n_qubits} qubits"
        )
    return DensityOperator(state.n_qubits, conjugate_by_frame(state.matrix, x, z))


# --------------------------------------------------------------------------
# partial trace, measurement, distances


def partial_trace_matrix(mat: np.ndarray, n: int, keep: Iterable[int]) -> np.ndarray:
    keep = sorted(set(int(k) for k in keep))
    for k in keep:
        if not 0 <= k < n:
            raise IndexError(f"qubit index {k} out of range for {n} qubits")
    traced = [k for k in range(n) if k not in keep]
    t = mat.reshape((2,) * (2 * n))
    row = list(range(n))
    col = list(range(n, 2 * n))
    for k in traced:
        col[k] = row[k]
    out_idx = [row[k] for k in keep] + [col[k] for k in keep]
    d = 2 ** len(keep)
    return np.einsum(t, row + col, out_idx).reshape(d, d)


def partial_trace(op: DensityOperator, keep: Iterable[int]) -> DensityOperator:
    """Trace out every qubit not in ``keep``; kept qubits stay in ascending order."""
    keep = sorted(set(int(k) for k in keep))
    return DensityOperator(len(keep), partial_trace_matrix(op.matrix, op.n_qubits, keep))


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    mat = (mat + mat.conj().T) / 2
    w, v = np.linalg.eigh(mat)
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w) @ v.conj().T


def sample_povm(
    state: State, povm: Povm, rng: np.random.Generator
) -> tuple[Label, State]:
    """Measure ``povm`` on ``state``.

    Returns the outcome label drawn from ``Tr(Pi rho)`` and the normalized
    post-measurement state ``sqrt(Pi) rho sqrt(Pi) / p``. A pure input gives
    a pure post-measurement state.
    """
    probs = povm.probabilities(state)
    k = draw_index(probs, rng)
    p = probs[k]
    if p <= 0.0:
        raise RuntimeError("sampled a POVM outcome of zero probability")
    root = povm.sqrt_elements[k]
    if isinstance(state, PureState):
        v = root @ state.amplitudes
        post: State = PureState(state.n_qubits, v / np.linalg.norm(v))
    else:
        post = DensityOperator(state.n_qubits, root @ state.matrix @ root / p)
    return povm.outcomes[k], post


def trace_distance(a: DensityOperator, b: DensityOperator) -> float:
    """Half the trace norm of ``a - b``."""
    if a.matrix.shape != b.matrix.shape:
        raise ValueError("trace_distance: dimension mismatch")
    diff = a.matrix - b.matrix
    w = np.linalg.eigvalsh((diff + diff.conj().T) / 2)
    return float(min(1.0, 0.5 * np.abs(w).sum()))


def expectation(op: np.ndarray, state: State) -> float:
    if isinstance(state, PureState):
        v = state.amplitudes
        return float(np.vdot(v, op @ v).real)
    return float(np.trace(op @ state.matrix).real)


# --------------------------------------------------------------------------
# random objects (seeded)


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for stream ``index`` under master ``seed``."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))
    )


def random_pure_state(n: int, rng: np.random.Generator) -> PureState:
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return PureState(n, v / np.linalg.norm(v))


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    d = 2**n
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    m = g @ g.conj().T
    return DensityOperator(n, m / np.trace(m).real)


def random_povm(
    n_qubits: int,
    n_bits: int,
    rng: np.random.Generator,
    n_outcomes: int | None = None,
    rank: int | None = None,
) -> Povm:
    """Random POVM from normalized Wishart-like positive operators.

    ``n_outcomes`` distinct labels are drawn from the ``4**n_bits`` possible
    ``(x, z)`` pairs (all of them by default).
    """
    d = 2**n_qubits
    total_labels = 4**n_bits
    k = total_labels if n_outcomes is None else min(n_outcomes, total_labels)
    chosen = np.sort(rng.choice(total_labels, size=k, replace=False))
    r = d if rank is None else rank
    raw = []
    for _ in range(k):
        g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
        raw.append(g @ g.conj().T)
    raw = np.array(raw)
    s_inv_half = np.linalg.inv(psd_sqrt(raw.sum(axis=0)))
    elements = np.einsum("ij,kjl,lm->kim", s_inv_half, raw, s_inv_half)
    elements = (elements + elements.conj().transpose(0, 2, 1)) / 2
    labels = []
    for c in chosen:
        c = int(c)
        labels.append((int_to_bits(c >> n_bits, n_bits), int_to_bits(c & (2**n_bits - 1), n_bits)))
    return Povm(n_qubits, n_bits, tuple(labels), elements)


def trivial_povm(n_qubits: int, n_bits: int) -> Povm:
    """Single-element POVM ``{I}`` labelled ``(0...0, 0...0)``."""
    zero = (0,) * n_bits
    return Povm(n_qubits, n_bits, ((zero, zero),), np.eye(2**n_qubits, dtype=complex)[None])


def uniform_povm(n_qubits: int, n_bits: int) -> Povm:
    """``Pi_{x,z} = I / 4**n_bits`` for every label."""
    d = 2**n_qubits
    labels = [
        (x, z) for x in all_bitstrings(n_bits) for z in all_bitstrings(n_bits)
    ]
    els = np.broadcast_to(np.eye(d, dtype=complex) / len(labels), (len(labels), d, d))
    return Povm(n_qubits, n_bits, tuple(labels), els)
