"""End-to-end protocol runners.

Protocol ids:

* ``fig1-tc``      trusted center, prover POVM, energy test
* ``fig2-ccrsp``   trusted center replaced by a ccRSP channel model
* ``fig3-ma``      one classical message from prover to verifier
* ``fig7-offline`` prover ships half of its state, verifier measures it

Every runner works in two modes. ``enumerate`` sums over all center
messages, prover outcomes and (analytically) the verifier's pair draw.
``sample`` runs seeded trials, trial ``t`` drawing from its own stream
``trial_rng(seed, t)``. Either way the report also carries the closed-form
value, computed through :mod:`ccrsp_sim.closedform`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import cached_property
from typing import Callable, Iterable, Iterator, Optional, Union

import numpy as np

from . import closedform as cf
from .hamiltonian import XxzzHamiltonian
from .qmath import (
    DensityOperator,
    Povm,
    PureState,
    all_bitstrings,
    bb84_product_state,
    draw_index,
    hadamard_all,
    int_to_bits,
    partial_trace_matrix,
    sample_povm,
    trial_rng,
)
from .rsp import Transcript, ToyRspCcrsp, classical_branches, classical_simulate_ccrsp
from .strategies import (
    CcrspModel,
    ClassicalAttack,
    CenterMessage,
    DistributionProver,
    HonestMeasureE0,
    HonestTeleport,
    MeasuredEntangledCcrsp,
    NoisyIdealCcrsp,
    PovmProver,
    ProverOutcome,
    StrategyError,
    all_center_messages,
    attack_outcome_distribution,
    bell_pairs_state,
    classical_attack_outcome,
    energy_test_accept_probability,
    trusted_center_sample,
    verifier_accept_probability,
    verifier_decide,
)

__all__ = [
    "RunReport",
    "Transcript",
    "EnumerationBudgetError",
    "enumerate_acceptance",
    "run_tc_protocol",
    "run_ccrsp_protocol",
    "run_ma_protocol",
    "run_offline_protocol",
]

DEFAULT_BUDGET = 2**22
WORKERS_ENV = "CCRSP_SIM_WORKERS"

ENUMERATE = "enumerate"
SAMPLE = "sample"


class EnumerationBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunReport:
    protocol: str
    mode: str
    trials: Optional[int]
    acceptance_estimate: float
    std_error: Optional[float]
    exact_probability: Optional[float]
    closedform_value: float
    closedform_source: str
    deviation: float
    completeness_threshold: Optional[float] = None
    soundness_threshold: Optional[float] = None

    def __post_init__(self) -> None:
        # numpy scalars would leak their repr into CSV output
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.floating):
                object.__setattr__(self, f.name, float(v))
            elif isinstance(v, np.integer):
                object.__setattr__(self, f.name, int(v))

    @property
    def is_bound(self) -> bool:
        return self.closedform_source.endswith("upper-bound")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(**{f.name: data.get(f.name) for f in fields(cls)})

    @staticmethod
    def csv_header() -> list[str]:
        return [f.name for f in fields(RunReport)]

    def csv_row(self) -> list:
        return [getattr(self, name) for name in self.csv_header()]


def reports_to_csv(reports: Iterable[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RunReport.csv_header())
    for r in reports:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in r.csv_row()])
    return buf.getvalue()


# --------------------------------------------------------------------------
# shared machinery


def enumerate_acceptance(
    branches: Callable[[], Iterator[tuple[float, float]]],
    branch_count: int,
    budget: int = DEFAULT_BUDGET,
) -> float:
    """Exact acceptance: ``sum(weight * accept_prob)`` over every branch.

    ``branches`` is called only after ``branch_count`` passes the budget.
    """
    if branch_count > budget:
        raise EnumerationBudgetError(
            f"{branch_count} branches exceed the enumeration budget {budget}; use sample mode"
        )
    return math.fsum(w * a for w, a in branches())


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _count_accepts(trial: Callable[[np.random.Generator], bool], seed: int, start: int, stop: int) -> int:
    return sum(1 for t in range(start, stop) if trial(trial_rng(seed, t)))


def run_trials(trial: Callable[[np.random.Generator], bool], trials: int, seed: int) -> tuple[float, float]:
    """Acceptance frequency and its standard error over ``trials`` runs.

    Trials are partitioned by index across ``CCRSP_SIM_WORKERS`` processes;
    the result does not depend on the partition.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    workers = min(_worker_count(), trials)
    if workers == 1:
        accepts = _count_accepts(trial, seed, 0, trials)
    else:
        bounds = np.linspace(0, trials, workers + 1).astype(int)
        with ProcessPoolExecutor(workers) as pool:
            futs = [
                pool.submit(_count_accepts, trial, seed, int(a), int(b))
                for a, b in zip(bounds[:-1], bounds[1:])
            ]
            accepts = sum(f.result() for f in futs)
    p = accepts / trials
    return p, math.sqrt(p * (1 - p) / trials)


def _thresholds(h: XxzzHamiltonian) -> dict:
    if h.alpha is None:
        return {}
    return {"completeness_threshold": 1 - h.alpha, "soundness_threshold": 1 - h.beta}


def _report(
    protocol: str,
    mode: str,
    h: XxzzHamiltonian,
    value: float,
    std_error: Optional[float],
    trials: Optional[int],
    closed: float,
    source: str,
) -> RunReport:
    return RunReport(
        protocol=protocol,
        mode=mode,
        trials=trials if mode == SAMPLE else None,
        acceptance_estimate=value,
        std_error=std_error if mode == SAMPLE else None,
        exact_probability=value if mode == ENUMERATE else None,
        closedform_value=closed,
        closedform_source=source,
        deviation=abs(value - closed),
        **_thresholds(h),
    )


def _execute(mode, enum_fn, trial, trials, seed):
    if mode == ENUMERATE:
        return enum_fn(), None
    if mode == SAMPLE:
        if seed is None:
            raise ValueError("sample mode requires a seed")
        return run_trials(trial, trials, seed)
    raise ValueError(f"unknown mode {mode!r}")


# --------------------------------------------------------------------------
# fig1: trusted center


TcProver = Union[HonestTeleport, PovmProver]


def _tc_povm(h: XxzzHamiltonian, prover: TcProver) -> Povm:
    povm = prover.povm(h) if isinstance(prover, HonestTeleport) else prover.povm
    if povm.n_qubits != h.n_qubits or povm.n_bits != h.n_qubits:
        raise ValueError(
            f"prover POVM acts on {povm.n_qubits} qubits with {povm.n_bits}-bit labels; "
            f"instance has {h.n_qubits} qubits"
        )
    return povm


@dataclass(frozen=True, eq=False)
class _TcTrial:
    h: XxzzHamiltonian
    povm: Povm

    def __call__(self, rng: np.random.Generator) -> bool:
        cm, psi = trusted_center_sample(self.h.n_qubits, rng)
        (x, z), _ = sample_povm(psi, self.povm, rng)
        accept, _ = verifier_decide(self.h, cm, ProverOutcome(x, z), rng)
        return accept


def tc_branches(h: XxzzHamiltonian, povm: Povm) -> Iterator[tuple[float, float]]:
    n = h.n_qubits
    w = 2.0 ** -(n + 1)
    for cm in all_center_messages(n):
        probs = povm.probabilities(bb84_product_state(cm.h, cm.m))
        for (x, z), p in zip(povm.outcomes, probs):
            if p == 0.0:
                continue
            yield w * p, verifier_accept_probability(h, cm, ProverOutcome(x, z))


def run_tc_protocol(
    h: XxzzHamiltonian,
    prover: TcProver,
    mode: str = ENUMERATE,
    seed: Optional[int] = None,
    trials: int = 10_000,
    budget: int = DEFAULT_BUDGET,
) -> RunReport:
    povm = _tc_povm(h, prover)
    n = h.n_qubits
    value, se = _execute(
        mode,
        lambda: enumerate_acceptance(lambda: tc_branches(h, povm), 2 ** (n + 1) * len(povm), budget),
        _TcTrial(h, povm),
        trials,
        seed,
    )
    if isinstance(prover, HonestTeleport):
        closed, source = cf.cf_honest(h, prover.state_for(h)), "honest-energy"
    else:
        closed, source = cf.cf_povm_soundness(h, povm), "povm-soundness"
    return _report("fig1-tc", mode, h, value, se, trials, closed, source)


# --------------------------------------------------------------------------
# fig2: ccRSP replacement


CcrspProver = Union[HonestTeleport, PovmProver, ClassicalAttack]


def _ccrsp_povm(h: XxzzHamiltonian, model, prover) -> Povm:
    n = h.n_qubits
    m_qubits = model.prover_qubits(n)
    povm = prover.povm(h) if isinstance(prover, HonestTeleport) else prover.povm
    if povm.n_qubits != m_qubits or povm.n_bits != n:
        raise StrategyError(
            f"prover POVM ({povm.n_qubits} qubits, {povm.n_bits}-bit labels) incompatible with "
            f"a channel giving the prover {m_qubits} qubits for an {n}-qubit instance"
        )
    return povm


@dataclass(frozen=True, eq=False)
class _CcrspTrial:
    h: XxzzHamiltonian
    model: object
    prover: object
    povm: Optional[Povm]

    def __call__(self, rng: np.random.Generator) -> bool:
        n = self.h.n_qubits
        if isinstance(self.prover, ClassicalAttack):
            if isinstance(self.model, ToyRspCcrsp):
                _, verifier_cm, learned, _ = classical_simulate_ccrsp(self.model.rsp, rng)
                if verifier_cm is None:
                    return False
                po = classical_attack_outcome(learned, self.prover.distribution, rng)
                return verifier_decide(self.h, verifier_cm, po, rng)[0]
            ok, cm, _ = self.model.sample(n, rng)
            if not ok:
                return False
            po = classical_attack_outcome(cm, self.prover.distribution, rng)
            return verifier_decide(self.h, cm, po, rng)[0]
        ok, cm, state = self.model.sample(n, rng)
        if not ok:
            return False
        (x, z), _ = sample_povm(state, self.povm, rng)
        return verifier_decide(self.h, cm, ProverOutcome(x, z), rng)[0]


def _ccrsp_attack_branches(h, model, d) -> Iterator[tuple[float, float]]:
    n = h.n_qubits
    if isinstance(model, ToyRspCcrsp):
        for w, verifier_cm, learned in classical_branches(model.rsp).values():
            if verifier_cm is None:
                continue
            for po, q in attack_outcome_distribution(learned, d):
                yield w * q, verifier_accept_probability(h, verifier_cm, po)
        return
    for b in model.branches(n):
        for po, q in attack_outcome_distribution(b.message, d):
            yield model.p_succ * b.prob * q, verifier_accept_probability(h, b.message, po)


def _ccrsp_state_branches(h, model, povm) -> Iterator[tuple[float, float]]:
    n = h.n_qubits
    p_succ = model.p_succ
    for b in model.branches(n):
        probs = povm.probabilities(b.state)
        for (x, z), p in zip(povm.outcomes, probs):
            if p == 0.0:
                continue
            yield p_succ * b.prob * p, verifier_accept_probability(h, b.message, ProverOutcome(x, z))


def _ccrsp_closed_form(h, model, prover, povm) -> tuple[float, str]:
    n = h.n_qubits
    p_succ = model.p_succ
    if isinstance(prover, ClassicalAttack):
        return cf.cf_attack(h, prover.distribution, p_succ), "attack-diagonal"
    if isinstance(model, MeasuredEntangledCcrsp):
        return cf.cf_thm3(h, model.rho_b1b2, povm, p_succ), "measured-entangled"
    if isinstance(model, NoisyIdealCcrsp):
        if isinstance(prover, HonestTeleport):
            bound = p_succ * cf.cf_honest(h, prover.state_for(h)) + model.epsilon(n)
            return bound, "noisy-upper-bound"
        return cf.cf_thm3(h, model.as_measured_entangled(n).rho_b1b2, povm, p_succ), "measured-entangled"
    if isinstance(prover, HonestTeleport):
        return p_succ * cf.cf_honest(h, prover.state_for(h)), "honest-energy"
    return p_succ * cf.cf_povm_soundness(h, povm), "povm-soundness"


def run_ccrsp_protocol(
    h: XxzzHamiltonian,
    model: Union[CcrspModel, ToyRspCcrsp],
    prover: CcrspProver,
    mode: str = ENUMERATE,
    seed: Optional[int] = None,
    trials: int = 10_000,
    budget: int = DEFAULT_BUDGET,
) -> RunReport:
    n = h.n_qubits
    if isinstance(prover, ClassicalAttack):
        povm = None
        d = prover.distribution
        if d.n_bits != n:
            raise StrategyError("attack distribution length does not match instance")
        count = 2 ** (2 * n + 1) * len(d.support)
        enum = lambda: enumerate_acceptance(lambda: _ccrsp_attack_branches(h, model, d), count, budget)
    else:
        povm = _ccrsp_povm(h, model, prover)
        count = 2 ** (n + 1) * len(povm)
        enum = lambda: enumerate_acceptance(lambda: _ccrsp_state_branches(h, model, povm), count, budget)
    value, se = _execute(mode, enum, _CcrspTrial(h, model, prover, povm), trials, seed)
    closed, source = _ccrsp_closed_form(h, model, prover, povm)
    return _report("fig2-ccrsp", mode, h, value, se, trials, closed, source)


# --------------------------------------------------------------------------
# fig3: one-message protocol


MaProver = Union[HonestMeasureE0, DistributionProver]


@dataclass(frozen=True, eq=False)
class _MaTrial:
    h: XxzzHamiltonian
    prover: object
    p_succ: float
    e0: Optional[PureState]

    @cached_property
    def _basis_probs(self) -> tuple[np.ndarray, np.ndarray]:
        """Born distribution of the computational measurement in each basis."""
        vec = self.e0.amplitudes
        return np.abs(vec) ** 2, np.abs(hadamard_all(self.h.n_qubits) @ vec) ** 2

    def __call__(self, rng: np.random.Generator) -> bool:
        n = self.h.n_qubits
        if isinstance(self.prover, HonestMeasureE0):
            basis = int(rng.integers(0, 2))
            m = int_to_bits(draw_index(self._basis_probs[basis], rng), n)
        else:
            m = self.prover.distribution.sample(rng)
        if rng.random() >= self.p_succ:
            return False
        t = self.h.terms[draw_index(self.h.weights, rng)]
        return (1 - 2 * (m[t.i] ^ m[t.j])) == -t.s


def _ma_honest_branches(h, e0, p_succ) -> Iterator[tuple[float, float]]:
    n = h.n_qubits
    had = hadamard_all(n)
    for basis in (0, 1):
        amps = had @ e0.amplitudes if basis else e0.amplitudes
        for k, m in enumerate(all_bitstrings(n)):
            p = abs(amps[k]) ** 2
            yield 0.5 * p_succ * p, energy_test_accept_probability(h, m)


def run_ma_protocol(
    h: XxzzHamiltonian,
    prover: MaProver,
    p_succ: float = 1.0,
    mode: str = ENUMERATE,
    seed: Optional[int] = None,
    trials: int = 10_000,
    budget: int = DEFAULT_BUDGET,
) -> RunReport:
    n = h.n_qubits
    if not 0 < p_succ <= 1:
        raise ValueError("p_succ must lie in (0, 1]")
    if isinstance(prover, HonestMeasureE0):
        e0 = prover.state_for(h)
        branches = lambda: _ma_honest_branches(h, e0, p_succ)
        count = 2 ** (n + 1)
        closed, source = cf.cf_ma_honest(h, e0, p_succ), "honest-energy"
    else:
        e0 = None
        d = prover.distribution
        if d.n_bits != n:
            raise StrategyError("distribution length does not match instance")
        branches = lambda: (
            (p_succ * p, energy_test_accept_probability(h, m)) for m, p in sorted(d.support.items())
        )
        count = len(d.support)
        closed, source = cf.cf_ma_malicious(h, d, p_succ), "malicious-diagonal"
    value, se = _execute(
        mode,
        lambda: enumerate_acceptance(branches, count, budget),
        _MaTrial(h, prover, p_succ, e0),
        trials,
        seed,
    )
    return _report("fig3-ma", mode, h, value, se, trials, closed, source)


# --------------------------------------------------------------------------
# fig7: off-line prover-to-verifier


def _offline_inputs(h, prover_state, prover_povm, m_qubits):
    n = h.n_qubits
    if prover_state is None:
        rho = bell_pairs_state(n)
        m_qubits = n
        if prover_povm is None:
            prover_povm = HonestTeleport().povm(h)
    else:
        rho = prover_state
        if m_qubits is None:
            m_qubits = rho.n_qubits - n
    if rho.n_qubits != m_qubits + n or m_qubits < 1:
        raise ValueError(f"prover state has {rho.n_qubits} qubits; expected M + {n} with M >= 1")
    if prover_povm is None or prover_povm.n_qubits != m_qubits or prover_povm.n_bits != n:
        raise ValueError("prover POVM must act on the M kept qubits with N-bit labels")
    return rho, prover_povm, m_qubits


def _b2_projector(m_qubits: int, phi: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(2**m_qubits), np.outer(phi, phi.conj()))


def _offline_branches(h, rho, povm, m_qubits) -> Iterator[tuple[float, float]]:
    n = h.n_qubits
    total = m_qubits + n
    for cm in all_center_messages(n):
        proj = _b2_projector(m_qubits, bb84_product_state(cm.h, cm.m).amplitudes)
        post = proj @ rho.matrix @ proj
        q = float(np.trace(post).real)
        if q <= 1e-15:
            continue
        sigma = DensityOperator(m_qubits, partial_trace_matrix(post, total, range(m_qubits)) / q)
        probs = povm.probabilities(sigma)
        for (x, z), p in zip(povm.outcomes, probs):
            if p == 0.0:
                continue
            yield 0.5 * q * p, verifier_accept_probability(h, cm, ProverOutcome(x, z))


@dataclass(frozen=True, eq=False)
class _OfflineTrial:
    h: XxzzHamiltonian
    rho: DensityOperator
    povm: Povm
    m_qubits: int

    @cached_property
    def _verifier_outcomes(self) -> tuple[tuple[list, np.ndarray, list], ...]:
        """Per basis: messages, their probabilities and the prover's
        conditional states after the verifier measures ``B2``."""
        n = self.h.n_qubits
        total = self.m_qubits + n
        out = []
        for basis in (0, 1):
            msgs = [CenterMessage(basis, m) for m in all_bitstrings(n)]
            probs, sigmas = [], []
            for cm in msgs:
                proj = _b2_projector(self.m_qubits, bb84_product_state(cm.h, cm.m).amplitudes)
                post = proj @ self.rho.matrix @ proj
                q = max(float(np.trace(post).real), 0.0)
                probs.append(q)
                sigmas.append(
                    DensityOperator(self.m_qubits, partial_trace_matrix(post, total, range(self.m_qubits)) / q)
                    if q > 1e-15
                    else None
                )
            out.append((msgs, np.array(probs), sigmas))
        return tuple(out)

    def __call__(self, rng: np.random.Generator) -> bool:
        basis = int(rng.integers(0, 2))
        msgs, probs, sigmas = self._verifier_outcomes[basis]
        k = draw_index(probs, rng)
        sigma = sigmas[k]
        (x, z), _ = sample_povm(sigma, self.povm, rng)
        return verifier_decide(self.h, msgs[k], ProverOutcome(x, z), rng)[0]


def run_offline_protocol(
    h: XxzzHamiltonian,
    prover_state: Optional[DensityOperator] = None,
    prover_povm: Optional[Povm] = None,
    m_qubits: Optional[int] = None,
    mode: str = ENUMERATE,
    seed: Optional[int] = None,
    trials: int = 10_000,
    budget: int = DEFAULT_BUDGET,
) -> RunReport:
    """``prover_state=None`` selects the honest Bell-pair prover; with
    ``prover_povm=None`` as well it teleports the ground state."""
    rho, povm, m_qubits = _offline_inputs(h, prover_state, prover_povm, m_qubits)
    n = h.n_qubits
    value, se = _execute(
        mode,
        lambda: enumerate_acceptance(
            lambda: _offline_branches(h, rho, povm, m_qubits), 2 ** (n + 1) * len(povm), budget
        ),
        _OfflineTrial(h, rho, povm, m_qubits),
        trials,
        seed,
    )
    closed = cf.cf_thm3(h, rho, povm)
    return _report("fig7-offline", mode, h, value, se, trials, closed, "measured-entangled")
