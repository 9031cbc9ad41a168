"""Protocol parties: trusted center, ccRSP channel models, provers, verifier."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .hamiltonian import XxzzHamiltonian, ground_state, min_diagonal_energy
from .qmath import (
    ATOL,
    Bits,
    DensityOperator,
    MAX_POVM_BITS,
    Povm,
    PureState,
    State,
    _X,
    _Z,
    all_bitstrings,
    bb84_product_state,
    bell_state,
    bits_str,
    draw_index,
    kron_all,
    parse_bits,
    single_qubit_op,
    trace_distance,
    xor_bits,
)


class StrategyError(ValueError):
    pass


@dataclass(frozen=True)
class CenterMessage:
    h: int
    m: Bits

    def __post_init__(self) -> None:
        object.__setattr__(self, "m", tuple(int(b) for b in self.m))
        if self.h not in (0, 1) or any(b not in (0, 1) for b in self.m):
            raise StrategyError("center message must consist of bits")


@dataclass(frozen=True)
class ProverOutcome:
    x: Bits
    z: Bits

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", tuple(int(b) for b in self.x))
        object.__setattr__(self, "z", tuple(int(b) for b in self.z))
        if len(self.x) != len(self.z):
            raise StrategyError("x and z must have equal length")


def all_center_messages(n: int) -> list[CenterMessage]:
    return [CenterMessage(h, m) for h in (0, 1) for m in all_bitstrings(n)]


# --------------------------------------------------------------------------
# attack distributions


@dataclass(frozen=True, eq=False)
class AttackDistribution:
    """Distribution ``D`` over ``{0,1}^N`` used by the classical attacks."""

    support: dict[Bits, float]

    def __post_init__(self) -> None:
        support = {tuple(int(b) for b in k): float(v) for k, v in self.support.items()}
        if not support:
            raise StrategyError("empty attack distribution")
        lengths = {len(k) for k in support}
        if len(lengths) != 1:
            raise StrategyError("bitstrings in D must share one length")
        if any(v < 0 for v in support.values()):
            raise StrategyError("negative probability in D")
        total = math.fsum(support.values())
        if abs(total - 1.0) > ATOL:
            raise StrategyError(f"D sums to {total}, not 1")
        object.__setattr__(self, "support", support)

    @property
    def n_bits(self) -> int:
        return len(next(iter(self.support)))

    @cached_property
    def _table(self) -> tuple[list[Bits], np.ndarray]:
        keys = sorted(self.support)
        probs = np.array([self.support[k] for k in keys])
        return keys, probs / probs.sum()

    def sample(self, rng: np.random.Generator) -> Bits:
        keys, probs = self._table
        return keys[draw_index(probs, rng)]

    @classmethod
    def point_mass(cls, k: Bits) -> "AttackDistribution":
        return cls({tuple(k): 1.0})

    @classmethod
    def uniform(cls, n: int) -> "AttackDistribution":
        return cls({k: 2.0**-n for k in all_bitstrings(n)})

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, support_size: int | None = None) -> "AttackDistribution":
        keys = all_bitstrings(n)
        size = len(keys) if support_size is None else min(support_size, len(keys))
        picks = rng.choice(len(keys), size=size, replace=False)
        w = rng.random(size) + 1e-3
        w = w / w.sum()
        return cls({keys[int(i)]: float(p) for i, p in zip(picks, w)})

    def to_dict(self) -> dict[str, float]:
        return {bits_str(k): v for k, v in sorted(self.support.items())}

    @classmethod
    def from_dict(cls, data: dict[str, float]) -> "AttackDistribution":
        return cls({parse_bits(k): float(v) for k, v in data.items()})

    @classmethod
    def load(cls, path: str | Path) -> "AttackDistribution":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def optimal_attack_distribution(h: XxzzHamiltonian) -> AttackDistribution:
    """Point mass on the bitstring minimizing ``<k|H_Z|k>``."""
    k, _ = min_diagonal_energy(h)
    return AttackDistribution.point_mass(k)


# --------------------------------------------------------------------------
# trusted center and ccRSP models


def trusted_center_sample(n: int, rng: np.random.Generator) -> tuple[CenterMessage, PureState]:
    if n < 1:
        raise StrategyError("need N >= 1")
    bits = rng.integers(0, 2, size=n + 1)
    cm = CenterMessage(int(bits[0]), tuple(int(b) for b in bits[1:]))
    return cm, bb84_product_state(cm.h, cm.m)


@dataclass(frozen=True)
class Branch:
    """One successful ccRSP outcome: verifier gets ``message`` with
    probability ``prob`` (conditioned on success), prover holds ``state``."""

    message: CenterMessage
    prob: float
    state: State


@dataclass(frozen=True)
class IdealCcrsp:
    p_succ: float = 1.0

    def __post_init__(self) -> None:
        _check_p_succ(self.p_succ)

    def prover_qubits(self, n: int) -> int:
        return n

    def branches(self, n: int) -> list[Branch]:
        w = 2.0 ** -(n + 1)
        return [Branch(cm, w, bb84_product_state(cm.h, cm.m)) for cm in all_center_messages(n)]

    def sample(self, n: int, rng: np.random.Generator) -> tuple[bool, Optional[CenterMessage], Optional[State]]:
        if rng.random() >= self.p_succ:
            return False, None, None
        cm, psi = trusted_center_sample(n, rng)
        return True, cm, psi


@dataclass(frozen=True)
class NoisyIdealCcrsp:
    """Ideal ccRSP followed by per-qubit noise on the prover's state.

    Depolarizing noise of strength ``depolarizing`` is applied first, then
    amplitude damping ``damping``. ``P(h, m)`` stays uniform.
    """

    p_succ: float = 1.0
    depolarizing: float = 0.0
    damping: float = 0.0

    def __post_init__(self) -> None:
        _check_p_succ(self.p_succ)
        for name in ("depolarizing", "damping"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise StrategyError(f"{name} must lie in [0, 1]")

    def prover_qubits(self, n: int) -> int:
        return n

    def kraus(self) -> list[np.ndarray]:
        """Single-qubit Kraus operators of damping after depolarizing."""
        lam, g = self.depolarizing, self.damping
        y = -1j * _Z @ _X
        depol = [math.sqrt(1 - 3 * lam / 4) * np.eye(2)] + [math.sqrt(lam / 4) * p for p in (_X, y, _Z)]
        damp = [
            np.array([[1, 0], [0, math.sqrt(1 - g)]], dtype=complex),
            np.array([[0, math.sqrt(g)], [0, 0]], dtype=complex),
        ]
        return [a @ b for a in damp for b in depol]

    def channel(self, rho: np.ndarray, qubit: int = 0, n_qubits: int = 1) -> np.ndarray:
        out = np.zeros_like(rho, dtype=complex)
        for k in self.kraus():
            full = single_qubit_op(k, qubit, n_qubits)
            out += full @ rho @ full.conj().T
        return out

    def noisy_state(self, cm: CenterMessage) -> DensityOperator:
        return _noisy_state(self, cm)

    def as_measured_entangled(self, n: int) -> "MeasuredEntangledCcrsp":
        """Equivalent measured-entangled model: Bell pairs with the noise on
        ``B1``. Projecting ``B2`` onto ``H^h|m>`` leaves the noisy BB84
        state on ``B1`` with uniform ``P(h, m)``."""
        rho = bell_pairs_state(n).matrix
        for q in range(n):
            rho = self.channel(rho, q, 2 * n)
        return MeasuredEntangledCcrsp(self.p_succ, DensityOperator(2 * n, rho), n)

    def branches(self, n: int) -> list[Branch]:
        w = 2.0 ** -(n + 1)
        return [Branch(cm, w, self.noisy_state(cm)) for cm in all_center_messages(n)]

    def epsilon(self, n: int) -> float:
        """Trace distance of the prover's average state from the ideal average."""
        mixed = sum(b.prob * b.state.matrix for b in self.branches(n))
        ideal = sum(
            2.0 ** -(n + 1) * np.outer(s.amplitudes, s.amplitudes.conj())
            for s in (bb84_product_state(cm.h, cm.m) for cm in all_center_messages(n))
        )
        return trace_distance(DensityOperator(n, mixed), DensityOperator(n, ideal))

    def sample(self, n: int, rng: np.random.Generator) -> tuple[bool, Optional[CenterMessage], Optional[State]]:
        if rng.random() >= self.p_succ:
            return False, None, None
        cm, _ = trusted_center_sample(n, rng)
        return True, cm, self.noisy_state(cm)


@lru_cache(maxsize=1024)
def _noisy_state(model: NoisyIdealCcrsp, cm: CenterMessage) -> DensityOperator:
    singles = []
    for b in cm.m:
        v = bb84_product_state(cm.h, (b,)).amplitudes
        singles.append(model.channel(np.outer(v, v.conj())))
    return DensityOperator(len(cm.m), kron_all(singles))


@dataclass(frozen=True, eq=False)
class MeasuredEntangledCcrsp:
    """ccRSP in which the verifier's register ``B2`` (last ``N`` qubits of
    ``rho_b1b2``) is projected onto ``H^h|m>`` and the prover keeps ``B1``
    (first ``m_qubits`` qubits)."""

    p_succ: float
    rho_b1b2: DensityOperator
    m_qubits: int

    def __post_init__(self) -> None:
        _check_p_succ(self.p_succ)
        self.rho_b1b2.validate()
        if not 1 <= self.m_qubits < self.rho_b1b2.n_qubits:
            raise StrategyError("need 1 <= M < total qubits")

    @property
    def n_bits(self) -> int:
        return self.rho_b1b2.n_qubits - self.m_qubits

    @cached_property
    def _table(self) -> tuple[list[CenterMessage], np.ndarray, dict]:
        dist = measured_entangled_distribution(self)
        keys = list(dist)
        return keys, np.array([dist[k][0] for k in keys]), dist

    def prover_qubits(self, n: int) -> int:
        return self.m_qubits

    def branches(self, n: int) -> list[Branch]:
        if n != self.n_bits:
            raise StrategyError(f"model prepares {self.n_bits} qubits, instance needs {n}")
        return [
            Branch(cm, p, sigma)
            for cm, (p, sigma) in measured_entangled_distribution(self).items()
            if p > 0
        ]

    def sample(self, n: int, rng: np.random.Generator) -> tuple[bool, Optional[CenterMessage], Optional[State]]:
        return measured_entangled_ccrsp(self, rng)


CcrspModel = Union[IdealCcrsp, NoisyIdealCcrsp, MeasuredEntangledCcrsp]


def _check_p_succ(p: float) -> None:
    if not 0.0 < p <= 1.0:
        raise StrategyError(f"p_succ must lie in (0, 1], got {p}")


def bell_pairs_state(n: int) -> DensityOperator:
    """``N`` Bell pairs laid out as ``B1 = qubits 0..N-1``, ``B2 = N..2N-1``
    with pair ``j`` on ``(j, N + j)``."""
    phi = bell_state(0, 0).amplitudes.reshape(2, 2)
    t = np.ones((), dtype=complex)
    for _ in range(n):
        t = np.multiply.outer(t, phi)
    # axes are (a0, b0, a1, b1, ...); regroup to (a0..a_{n-1}, b0..b_{n-1})
    order = [2 * k for k in range(n)] + [2 * k + 1 for k in range(n)]
    v = np.transpose(t, order).reshape(-1)
    return PureState(2 * n, v).to_density()


def measured_entangled_distribution(
    model: MeasuredEntangledCcrsp,
) -> dict[CenterMessage, tuple[float, Optional[DensityOperator]]]:
    """``P(h, m)`` and ``sigma_{h,m}`` for every center message.

    ``sigma`` is ``None`` where ``P(h, m)`` vanishes.
    """
    m_q, n = model.m_qubits, model.n_bits
    dm, dn = 2**m_q, 2**n
    r = model.rho_b1b2.matrix.reshape(dm, dn, dm, dn)
    out: dict[CenterMessage, tuple[float, Optional[DensityOperator]]] = {}
    for cm in all_center_messages(n):
        phi = bb84_product_state(cm.h, cm.m).amplitudes
        block = np.einsum("aibj,i,j->ab", r, phi.conj(), phi)
        p = 0.5 * float(np.trace(block).real)
        if p <= 1e-15:
            out[cm] = (max(p, 0.0), None)
        else:
            out[cm] = (p, DensityOperator(m_q, block / (2 * p)))
    return out


def measured_entangled_ccrsp(
    model: MeasuredEntangledCcrsp, rng: np.random.Generator
) -> tuple[bool, Optional[CenterMessage], Optional[DensityOperator]]:
    if rng.random() >= model.p_succ:
        return False, None, None
    keys, probs, dist = model._table
    k = draw_index(probs, rng)
    p, sigma = dist[keys[k]]
    if sigma is None:
        raise RuntimeError("sampled a center message of zero probability")
    return True, keys[k], sigma


# --------------------------------------------------------------------------
# honest prover


def _bell_matrix(alpha: int, beta: int) -> np.ndarray:
    return bell_state(alpha, beta).amplitudes.reshape(2, 2)


def honest_teleport_povm(e0: PureState) -> Povm:
    """Teleportation POVM on the received qubits.

    ``Pi_{x,z} = (<E0| (x) I) (prod_j |phi_{x_j z_j}><phi_{x_j z_j}|) (|E0> (x) I)``
    where pair ``j`` is (qubit ``j`` of ``E0``, received qubit ``j``).
    Each element is rank one: ``v v^dagger`` with ``v = B^T conj(E0)`` and
    ``B`` the Bell amplitudes arranged as an (E0 index, received index) matrix.
    """
    n = e0.n_qubits
    if n > MAX_POVM_BITS:
        raise StrategyError(f"{n} qubits exceeds POVM limit {MAX_POVM_BITS}")
    bell = {(a, b): _bell_matrix(a, b) for a in (0, 1) for b in (0, 1)}
    e0c = e0.amplitudes.conj()
    labels, elements = [], []
    for x in all_bitstrings(n):
        for z in all_bitstrings(n):
            pair_matrix = kron_all(bell[(a, b)] for a, b in zip(x, z))
            v = pair_matrix.T @ e0c
            labels.append((x, z))
            elements.append(np.outer(v, v.conj()))
    return Povm(n, n, tuple(labels), np.array(elements))


@dataclass(frozen=True, eq=False)
class HonestTeleport:
    """Teleports ``e0`` (the ground state when ``None``)."""

    e0: Optional[PureState] = None

    def state_for(self, h: XxzzHamiltonian) -> PureState:
        if self.e0 is not None:
            if self.e0.n_qubits != h.n_qubits:
                raise StrategyError("low-energy state size does not match instance")
            return self.e0
        return ground_state(h)[1]

    def povm(self, h: XxzzHamiltonian) -> Povm:
        return honest_teleport_povm(self.state_for(h))


@dataclass(frozen=True, eq=False)
class PovmProver:
    povm: Povm


@dataclass(frozen=True, eq=False)
class ClassicalAttack:
    distribution: AttackDistribution


@dataclass(frozen=True, eq=False)
class HonestMeasureE0:
    """Honest prover of the one-message protocol."""

    e0: Optional[PureState] = None

    def state_for(self, h: XxzzHamiltonian) -> PureState:
        return HonestTeleport(self.e0).state_for(h)


@dataclass(frozen=True, eq=False)
class DistributionProver:
    """Malicious prover of the one-message protocol: sends ``m ~ D``."""

    distribution: AttackDistribution


# --------------------------------------------------------------------------
# verifier


def decoded_bits(cm: CenterMessage, po: ProverOutcome) -> Bits:
    """``m'_i = m_i XOR (h z_i + (1 - h) x_i)``."""
    if not len(cm.m) == len(po.x) == len(po.z):
        raise StrategyError("message lengths differ")
    pad = po.z if cm.h else po.x
    return xor_bits(cm.m, pad)


def _pair_accepts(bits: Bits, i: int, j: int, s: int) -> bool:
    # (-1)^(b_i + b_j) == -s
    return (1 - 2 * (bits[i] ^ bits[j])) == -s


def verifier_decide(
    h: XxzzHamiltonian, cm: CenterMessage, po: ProverOutcome, rng: np.random.Generator
) -> tuple[bool, tuple[int, int]]:
    bits = decoded_bits(cm, po)
    t = h.terms[draw_index(h.weights, rng)]
    return _pair_accepts(bits, t.i, t.j, t.s), (t.i, t.j)


def energy_test_accept_probability(h: XxzzHamiltonian, bits: Bits) -> float:
    """Probability that the energy test accepts decoded string ``bits``."""
    if len(bits) != h.n_qubits:
        raise StrategyError("bitstring length does not match instance")
    return math.fsum(t.p for t in h.terms if _pair_accepts(bits, t.i, t.j, t.s))


def verifier_accept_probability(h: XxzzHamiltonian, cm: CenterMessage, po: ProverOutcome) -> float:
    return energy_test_accept_probability(h, decoded_bits(cm, po))


# --------------------------------------------------------------------------
# classical attack


def classical_attack_outcome(
    cm: CenterMessage, d: AttackDistribution, rng: np.random.Generator
) -> ProverOutcome:
    """Mask a draw from ``D`` with the learned ``m``; the other string is uniform."""
    n = len(cm.m)
    if d.n_bits != n:
        raise StrategyError("attack distribution length does not match message")
    k = d.sample(rng)
    other = tuple(int(b) for b in rng.integers(0, 2, size=n))
    if cm.h == 0:
        return ProverOutcome(xor_bits(k, cm.m), other)
    return ProverOutcome(other, xor_bits(k, cm.m))


def attack_outcome_distribution(
    cm: CenterMessage, d: AttackDistribution
) -> list[tuple[ProverOutcome, float]]:
    """Every outcome the attack can send for ``cm`` with its probability."""
    n = len(cm.m)
    u = 2.0**-n
    out = []
    for k, pk in sorted(d.support.items()):
        for other in all_bitstrings(n):
            if cm.h == 0:
                po = ProverOutcome(xor_bits(k, cm.m), other)
            else:
                po = ProverOutcome(other, xor_bits(k, cm.m))
            out.append((po, pk * u))
    return out

