"""A toy interactive remote-state-preparation protocol and its classical
simulation by an unbounded prover.

Registers (global qubit order): ``A`` = qubits ``0..N-1`` (measured),
``B`` = ``N..2N-1`` (kept, holds ``H^h|m>``), ``C`` = qubit ``2N`` (check).

Round 1: verifier sends ``a1 = h``. Prover prepares ``N`` Bell pairs on
``(A_j, B_j)``, rotates ``A`` by ``H^h`` and puts ``C`` into
``sqrt(p)|0> + sqrt(1-p)|1>``; it measures ``A`` and ``C`` and returns
``b1 = (m, c)``.
Round 2: verifier sends a nonce ``a2 = r``; prover applies ``X^r`` to ``C``,
measures it and returns ``b2``.
The verifier outputs ``(h, m)`` iff ``c == 0`` and ``b2 == r``.

This exercises the transcript machinery only; it is not a secure ccRSP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .qmath import (
    Bits,
    DensityOperator,
    Povm,
    PureState,
    _H,
    _I2,
    _X,
    all_bitstrings,
    bb84_product_state,
    bits_to_int,
    draw_index,
    int_to_bits,
    kron_all,
    partial_trace_matrix,
    sample_povm,
)
from .strategies import CenterMessage

Event = tuple[str, str, object]


@dataclass(frozen=True)
class Transcript:
    """Ordered protocol events ``(party, kind, value)``."""

    events: tuple[Event, ...] = ()

    def add(self, party: str, kind: str, value: object) -> "Transcript":
        return Transcript(self.events + ((party, kind, value),))

    def messages(self) -> tuple[object, ...]:
        return tuple(v for _, _, v in self.events)


@dataclass(frozen=True)
class RspRound:
    """Verifier sends a uniform message from ``alphabet``; the prover applies
    ``unitary(message, history)`` and measures ``measured`` qubits."""

    alphabet: tuple[int, ...]
    unitary: Callable[[int, tuple], np.ndarray]
    measured: tuple[int, ...]


@dataclass(frozen=True)
class ToyRsp:
    n_qubits: int
    p_succ: float = 1.0

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise ValueError("need N >= 1")
        if not 0.0 < self.p_succ <= 1.0:
            raise ValueError("p_succ must lie in (0, 1]")

    @property
    def total_qubits(self) -> int:
        return 2 * self.n_qubits + 1

    @property
    def kept(self) -> tuple[int, ...]:
        n = self.n_qubits
        return tuple(range(n, 2 * n))

    @property
    def check(self) -> int:
        return 2 * self.n_qubits

    def rounds(self) -> tuple[RspRound, ...]:
        n = self.n_qubits
        return (
            RspRound((0, 1), lambda a, hist: self._prepare(a), tuple(range(n)) + (self.check,)),
            RspRound((0, 1), lambda a, hist: self._flip_check(a), (self.check,)),
        )

    def _prepare(self, h: int) -> np.ndarray:
        return _prepare_unitary(self.n_qubits, self.p_succ, h)

    def _flip_check(self, r: int) -> np.ndarray:
        return kron_all([_I2] * (2 * self.n_qubits) + [_X if r else _I2])

    def verifier_output(self, transcript: Transcript) -> Optional[CenterMessage]:
        n = self.n_qubits
        h, b1, r, b2 = transcript.messages()
        m, c = b1[:n], b1[n]
        if c != 0 or b2 != (r,):
            return None
        return CenterMessage(h, m)


@lru_cache(maxsize=64)
def _prepare_unitary(n: int, p_succ: float, h: int) -> np.ndarray:
    # |0..0> -> Bell pairs on (A_j, B_j): H on A_j then CNOT A_j -> B_j
    dim = 2 ** (2 * n)
    u = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        bits = list(int_to_bits(col, 2 * n))
        a = bits[:n]
        b = bits[n:]
        # CNOT . (H (x) I) acting on basis |a, b>
        for a_new in all_bitstrings(n):
            amp = 1.0
            for j in range(n):
                amp *= _H[a_new[j], a[j]]
            if amp == 0:
                continue
            b_new = tuple(bb ^ aa for bb, aa in zip(b, a_new))
            u[bits_to_int(tuple(a_new) + b_new), col] += amp
    rot_a = kron_all([_H if h else _I2] * n + [_I2] * n)
    theta = 2 * math.acos(math.sqrt(p_succ))
    ry = np.array(
        [[math.cos(theta / 2), -math.sin(theta / 2)], [math.sin(theta / 2), math.cos(theta / 2)]],
        dtype=complex,
    )
    out = np.kron(rot_a @ u, ry)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _measurement_povm(total: int, measured: tuple[int, ...]) -> Povm:
    """Projective Z measurement on ``measured``, identity elsewhere.

    Outcome bits are stored in the ``x`` slot of the label.
    """
    k = len(measured)
    d = 2**total
    idx = np.arange(d)
    elements, labels = [], []
    for b in all_bitstrings(k):
        mask = np.ones(d, dtype=bool)
        for q, bit in zip(measured, b):
            mask &= ((idx >> (total - 1 - q)) & 1) == bit
        elements.append(np.diag(mask.astype(complex)))
        labels.append((b, (0,) * k))
    return Povm(total, k, tuple(labels), np.array(elements))


# --------------------------------------------------------------------------
# honest quantum execution (state vector, POVM sampling)


def quantum_run(rsp: ToyRsp, rng: np.random.Generator) -> tuple[Transcript, Optional[CenterMessage], PureState]:
    total = rsp.total_qubits
    psi = PureState(total, np.eye(2**total, dtype=complex)[0])
    tr = Transcript()
    for rnd in rsp.rounds():
        a = rnd.alphabet[int(rng.integers(len(rnd.alphabet)))]
        tr = tr.add("verifier", "message", a)
        psi = PureState(total, rnd.unitary(a, tr.messages()) @ psi.amplitudes)
        (b, _), psi = sample_povm(psi, _measurement_povm(total, rnd.measured), rng)
        tr = tr.add("prover", "outcome", tuple(b))
    return tr, rsp.verifier_output(tr), psi


def quantum_transcript_distribution(rsp: ToyRsp) -> dict[tuple, float]:
    """Exact transcript distribution of the honest quantum execution."""
    total = rsp.total_qubits
    rounds = rsp.rounds()
    povms = [_measurement_povm(total, r.measured) for r in rounds]
    out: dict[tuple, float] = {}

    def walk(k: int, vec: np.ndarray, tr: Transcript, weight: float) -> None:
        if k == len(rounds):
            out[tr.messages()] = out.get(tr.messages(), 0.0) + weight
            return
        rnd, povm = rounds[k], povms[k]
        for a in rnd.alphabet:
            t1 = tr.add("verifier", "message", a)
            w1 = weight / len(rnd.alphabet)
            v = rnd.unitary(a, t1.messages()) @ vec
            probs = povm.probabilities(PureState(total, v))
            for (b, _), p, root in zip(povm.outcomes, probs, povm.sqrt_elements):
                if p <= 1e-15:
                    continue
                post = root @ v / math.sqrt(p)
                walk(k + 1, post, t1.add("prover", "outcome", tuple(b)), w1 * p)

    walk(0, np.eye(2**total, dtype=complex)[0], Transcript(), 1.0)
    return out


# --------------------------------------------------------------------------
# classical simulation (density-matrix description, marginal sampling)


@dataclass(frozen=True)
class ClassicalDescription:
    """The prover's classical record of its would-be quantum state."""

    n_qubits: int
    matrix: np.ndarray


def _outcome_marginals(desc: ClassicalDescription, measured: tuple[int, ...]) -> dict[Bits, float]:
    """``Tr[(|b><b| (x) I) rho]`` for every ``b`` on the measured qubits."""
    reduced = partial_trace_matrix(desc.matrix, desc.n_qubits, measured)
    order = sorted(measured)
    diag = np.real(np.diag(reduced))
    out = {}
    for k, p in enumerate(diag):
        sorted_bits = int_to_bits(k, len(order))
        lookup = dict(zip(order, sorted_bits))
        out[tuple(lookup[q] for q in measured)] = float(p)
    return out


def _collapse(desc: ClassicalDescription, measured: tuple[int, ...], b: Bits) -> ClassicalDescription:
    n = desc.n_qubits
    idx = np.arange(2**n)
    keep = np.ones(2**n, dtype=bool)
    for q, bit in zip(measured, b):
        keep &= ((idx >> (n - 1 - q)) & 1) == bit
    m = desc.matrix * keep[:, None] * keep[None, :]
    return ClassicalDescription(n, m / np.trace(m).real)


def learn_message(rsp: ToyRsp, desc: ClassicalDescription) -> CenterMessage:
    """Read ``(h, m)`` off the description of ``sigma_{h,m} (x) rho_junk``:
    the BB84 product state of highest fidelity with the kept register."""
    sigma = partial_trace_matrix(desc.matrix, desc.n_qubits, rsp.kept)
    best, best_fid = None, -1.0
    for h in (0, 1):
        for m in all_bitstrings(rsp.n_qubits):
            phi = bb84_product_state(h, m).amplitudes
            fid = float(np.vdot(phi, sigma @ phi).real)
            if fid > best_fid:
                best, best_fid = CenterMessage(h, m), fid
    return best


def classical_simulate_ccrsp(
    rsp: ToyRsp, rng: np.random.Generator
) -> tuple[Transcript, Optional[CenterMessage], CenterMessage, ClassicalDescription]:
    """Run the toy RSP with a prover that only keeps classical descriptions.

    Returns the transcript, the verifier's output, the ``(h, m)`` the prover
    learned from its description, and the final description.
    """
    total = rsp.total_qubits
    init = np.zeros((2**total, 2**total), dtype=complex)
    init[0, 0] = 1.0
    desc = ClassicalDescription(total, init)
    tr = Transcript()
    for rnd in rsp.rounds():
        a = rnd.alphabet[int(rng.integers(len(rnd.alphabet)))]
        tr = tr.add("verifier", "message", a)
        u = rnd.unitary(a, tr.messages())
        desc = ClassicalDescription(total, u @ desc.matrix @ u.conj().T)
        marg = _outcome_marginals(desc, rnd.measured)
        keys = list(marg)
        probs = np.clip(np.array([marg[k] for k in keys]), 0.0, None)
        b = keys[draw_index(probs, rng)]
        desc = _collapse(desc, rnd.measured, b)
        tr = tr.add("prover", "outcome", b)
    return tr, rsp.verifier_output(tr), learn_message(rsp, desc), desc


def classical_transcript_distribution(rsp: ToyRsp) -> dict[tuple, float]:
    """Exact transcript distribution of the classical simulation."""
    return {k: w for k, (w, _, _) in classical_branches(rsp).items()}


def classical_branches(rsp: ToyRsp) -> dict[tuple, tuple[float, Optional[CenterMessage], CenterMessage]]:
    """Every transcript of the classical simulation with its probability,
    the verifier's output and the ``(h, m)`` the prover learns."""
    total = rsp.total_qubits
    rounds = rsp.rounds()
    out: dict[tuple, tuple[float, Optional[CenterMessage], CenterMessage]] = {}

    def walk(k: int, desc: ClassicalDescription, tr: Transcript, weight: float) -> None:
        if k == len(rounds):
            # transcripts fix every outcome, so each leaf is reached once
            out[tr.messages()] = (weight, rsp.verifier_output(tr), learn_message(rsp, desc))
            return
        rnd = rounds[k]
        for a in rnd.alphabet:
            t1 = tr.add("verifier", "message", a)
            u = rnd.unitary(a, t1.messages())
            d1 = ClassicalDescription(total, u @ desc.matrix @ u.conj().T)
            for b, p in _outcome_marginals(d1, rnd.measured).items():
                if p <= 1e-15:
                    continue
                walk(k + 1, _collapse(d1, rnd.measured, b), t1.add("prover", "outcome", b),
                     weight * p / len(rnd.alphabet))

    init = np.zeros((2**total, 2**total), dtype=complex)
    init[0, 0] = 1.0
    walk(0, ClassicalDescription(total, init), Transcript(), 1.0)
    return out


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def quantum_branches(rsp: ToyRsp) -> list[tuple[CenterMessage, float, DensityOperator]]:
    """Successful outputs ``(h, m)`` of the quantum execution with their
    total probability and the prover's averaged kept-register state."""
    total = rsp.total_qubits
    rounds = rsp.rounds()
    povms = [_measurement_povm(total, r.measured) for r in rounds]
    acc: dict[CenterMessage, list] = {}

    def walk(k: int, vec: np.ndarray, tr: Transcript, weight: float) -> None:
        if k == len(rounds):
            cm = rsp.verifier_output(tr)
            if cm is None:
                return
            rho = np.outer(vec, vec.conj())
            sigma = partial_trace_matrix(rho, total, rsp.kept)
            slot = acc.setdefault(cm, [0.0, np.zeros_like(sigma)])
            slot[0] += weight
            slot[1] = slot[1] + weight * sigma
            return
        rnd, povm = rounds[k], povms[k]
        for a in rnd.alphabet:
            t1 = tr.add("verifier", "message", a)
            v = rnd.unitary(a, t1.messages()) @ vec
            probs = povm.probabilities(PureState(total, v))
            for (b, _), p, root in zip(povm.outcomes, probs, povm.sqrt_elements):
                if p <= 1e-15:
                    continue
                walk(k + 1, root @ v / math.sqrt(p), t1.add("prover", "outcome", tuple(b)),
                     weight * p / len(rnd.alphabet))

    walk(0, np.eye(2**total, dtype=complex)[0], Transcript(), 1.0)
    return [
        (cm, w, DensityOperator(rsp.n_qubits, s / w)) for cm, (w, s) in sorted(acc.items(), key=lambda kv: (kv[0].h, kv[0].m))
    ]


@dataclass(frozen=True)
class ToyRspCcrsp:
    """The toy RSP used as the ccRSP channel of the modified protocol."""

    rsp: ToyRsp

    @property
    def p_succ(self) -> float:
        return math.fsum(w for _, w, _ in quantum_branches(self.rsp))

    def prover_qubits(self, n: int) -> int:
        return n

    def branches(self, n: int):
        from .strategies import Branch

        if n != self.rsp.n_qubits:
            raise ValueError(f"toy RSP prepares {self.rsp.n_qubits} qubits, instance needs {n}")
        found = quantum_branches(self.rsp)
        total = math.fsum(w for _, w, _ in found)
        return [Branch(cm, w / total, sigma) for cm, w, sigma in found]

    def sample(self, n: int, rng: np.random.Generator):
        _, cm, psi = quantum_run(self.rsp, rng)
        if cm is None:
            return False, None, None
        rho = np.outer(psi.amplitudes, psi.amplitudes.conj())
        sigma = partial_trace_matrix(rho, self.rsp.total_qubits, self.rsp.kept)
        return True, cm, DensityOperator(self.rsp.n_qubits, sigma)
