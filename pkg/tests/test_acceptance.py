"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line through the ``criterion`` fixture;
the lines are repeated in the terminal summary. Run with ``-s`` to see them
as they happen.
"""

import time

import numpy as np
import pytest

from ccrsp_sim import closedform as cf
from ccrsp_sim.extractor import extract_ccrsp, extract_ccrsp_closed_form, extract_tc, extract_tc_closed_form
from ccrsp_sim.hamiltonian import random_instance
from ccrsp_sim.protocols import (
    run_ccrsp_protocol,
    run_ma_protocol,
    run_offline_protocol,
    run_tc_protocol,
)
from ccrsp_sim.qmath import DensityOperator, random_density, random_povm, trace_distance, trial_rng
from ccrsp_sim.rsp import (
    ToyRsp,
    classical_simulate_ccrsp,
    classical_transcript_distribution,
    quantum_transcript_distribution,
    total_variation,
)
from ccrsp_sim.strategies import (
    AttackDistribution,
    ClassicalAttack,
    DistributionProver,
    HonestMeasureE0,
    HonestTeleport,
    IdealCcrsp,
    MeasuredEntangledCcrsp,
    NoisyIdealCcrsp,
    PovmProver,
    bell_pairs_state,
    optimal_attack_distribution,
)

from conftest import HAD, X, Z, oracle_hamiltonian, pauli_string

SEED = 20240601


def _lambda_min(h) -> float:
    return float(np.linalg.eigvalsh(oracle_hamiltonian(h))[0])


def _energy(h, rho: np.ndarray) -> float:
    return float(np.trace(oracle_hamiltonian(h) @ rho).real)


def _frame(x, z, n) -> np.ndarray:
    """``X^x Z^z`` built qubit by qubit."""
    return pauli_string(
        {q: np.linalg.matrix_power(X, x[q]) @ np.linalg.matrix_power(Z, z[q]) for q in range(n)}, n
    )


def _bb84(h, m) -> np.ndarray:
    v = np.ones(1, dtype=complex)
    for b in m:
        k = np.eye(2, dtype=complex)[b]
        v = np.kron(v, HAD @ k if h else k)
    return np.outer(v, v.conj())


def _instances(seed, sizes, count):
    return [random_instance(sizes[t % len(sizes)], trial_rng(seed, t)) for t in range(count)]


def test_criterion_1_completeness(criterion, fixtures):
    start = time.perf_counter()
    instances = _instances(SEED + 1, (2, 3, 4), 20) + [fixtures["singlet"], fixtures["triangle"]]
    worst = 0.0
    for h in instances:
        e0 = HonestTeleport().state_for(h).amplitudes
        want = 1.0 - float(np.vdot(e0, oracle_hamiltonian(h) @ e0).real)
        got = run_tc_protocol(h, HonestTeleport()).exact_probability
        worst = max(worst, abs(got - want))
    elapsed = time.perf_counter() - start
    criterion(
        "criterion 1 (completeness identity)",
        worst < 1e-9 and elapsed < 60,
        f"{len(instances)} instances, max |p_acc - (1 - <E0|H|E0>)| = {worst:.2e}, {elapsed:.1f} s",
    )


def test_criterion_2_soundness_bound(criterion, fixtures):
    instances = [fixtures["singlet"], fixtures["singlet-ferro"], fixtures["triangle"]]
    instances += _instances(SEED + 2, (2, 3), 2)
    worst_gap = worst_excess = -np.inf
    for k, h in enumerate(instances):
        n = h.n_qubits
        hm = oracle_hamiltonian(h)
        bound = 1.0 - _lambda_min(h)
        for t in range(200):
            povm = random_povm(n, n, trial_rng(SEED + 2, 1000 * (k + 1) + t))
            p = run_tc_protocol(h, PovmProver(povm)).exact_probability
            sigma = sum(_frame(x, z, n) @ el @ _frame(x, z, n).conj().T for (x, z), el in zip(povm.outcomes, povm.elements))
            sigma = sigma / 2**n
            want = float(np.trace((np.eye(2**n) - hm) @ sigma).real)
            worst_gap = max(worst_gap, abs(p - want))
            worst_excess = max(worst_excess, p - bound)
    criterion(
        "criterion 2 (soundness bound)",
        worst_excess <= 1e-9 and worst_gap < 1e-12,
        f"{200 * len(instances)} POVMs, max p_acc - (1 - lambda_min) = {worst_excess:.2e}, "
        f"max |p_acc - Tr[(I-H)sigma]| = {worst_gap:.2e}",
    )


def test_criterion_3_reduction_equality(criterion):
    worst_eq = 0.0
    worst_noisy = -np.inf
    for t in range(100):
        rng = trial_rng(SEED + 3, t)
        h = random_instance(2 + t % 3, rng)
        n = h.n_qubits
        d = AttackDistribution.random(n, rng)
        p = float(rng.uniform(0.05, 1.0))
        a = run_ccrsp_protocol(h, IdealCcrsp(p), ClassicalAttack(d)).exact_probability
        b = run_ma_protocol(h, DistributionProver(d), p).exact_probability
        worst_eq = max(worst_eq, abs(a - b))
        if n <= 3:
            model = NoisyIdealCcrsp(p, float(rng.uniform(0, 0.5)), float(rng.uniform(0, 0.5)))
            noisy = run_ccrsp_protocol(h, model, HonestTeleport()).exact_probability
            honest = run_ma_protocol(h, HonestMeasureE0(), p).exact_probability
            worst_noisy = max(worst_noisy, noisy - honest - model.epsilon(n))
    criterion(
        "criterion 3 (reduction equality)",
        worst_eq < 1e-12 and worst_noisy <= 1e-12,
        f"100 triples, max |fig2 attack - fig3 malicious| = {worst_eq:.2e}, "
        f"max noisy-honest excess over fig3 honest + eps = {worst_noisy:.2e}",
    )


def test_criterion_4_triangle_witness(criterion, triangle):
    lam = _lambda_min(triangle)
    opt = optimal_attack_distribution(triangle)
    ok = lam > 0
    worst_closed = worst_shape = 0.0
    beats = []
    # on the triangle 1 - lambda_min is exactly 2/3, so compare with slack
    attack_wins = 2 / 3 >= 1 - lam - 1e-12
    for p in (1.0, 0.9, 0.75, 0.5, 0.2):
        attack = run_ccrsp_protocol(triangle, IdealCcrsp(p), ClassicalAttack(opt)).exact_probability
        honest = run_ccrsp_protocol(triangle, IdealCcrsp(p), HonestTeleport()).exact_probability
        worst_closed = max(worst_closed, abs(attack - cf.cf_attack(triangle, opt, p)))
        worst_shape = max(worst_shape, abs(attack - 2 / 3 * p), abs(honest - p * (1 - lam)))
        if attack_wins:
            beats.append(attack >= honest - 1e-9)
    ok = ok and worst_closed < 1e-12 and worst_shape < 1e-9 and all(beats)
    criterion(
        "criterion 4 (soundness-breaking witness)",
        ok,
        f"lambda_min = {lam:.6f}, 2/3 >= 1 - lambda_min: {attack_wins}, attack >= honest in "
        f"{sum(beats)}/{len(beats)} runs, max |attack - closed form| = {worst_closed:.2e}",
    )


def test_criterion_5_measured_entangled_model(criterion):
    worst_id = 0.0
    worst_excess = -np.inf
    # an instance needs two qubits, so the energy identity runs at N = 2 with M in {1, 2}
    for t in range(50):
        h = random_instance(2, trial_rng(SEED + 5, t))
        for m in (1, 2):
            rho = random_density(m + 2, trial_rng(SEED + 5, 100 + 2 * t + m))
            povm = random_povm(m, 2, trial_rng(SEED + 5, 300 + 2 * t + m))
            p = run_ccrsp_protocol(h, MeasuredEntangledCcrsp(1.0, rho, m), PovmProver(povm)).exact_probability
            eta = extract_ccrsp(rho, povm, m).matrix
            worst_id = max(worst_id, abs(p - (1 - _energy(h, eta))))
            worst_excess = max(worst_excess, p - (1 - _lambda_min(h)))
    worst_td = 0.0
    for n in (1, 2):
        got = {b.message: b for b in MeasuredEntangledCcrsp(1.0, bell_pairs_state(n), n).branches(n)}
        assert len(got) == 2 ** (n + 1)
        for cm, b in got.items():
            worst_td = max(worst_td, abs(b.prob - 2.0 ** -(n + 1)))
            worst_td = max(worst_td, trace_distance(b.state, DensityOperator(n, _bb84(cm.h, cm.m))))
    criterion(
        "criterion 5 (measured-entangled model soundness)",
        worst_id < 1e-12 and worst_excess <= 1e-9 and worst_td < 1e-9,
        f"100 (rho, POVM) pairs, max |p_acc - (1 - Tr H eta)| = {worst_id:.2e}, "
        f"max excess over 1 - lambda_min = {worst_excess:.2e}, Bell-pair per-(h,m) gap = {worst_td:.2e}",
    )


def test_criterion_6_extractor_identities(criterion, fixtures):
    worst_entry = worst_energy = worst_honest = 0.0
    for t in range(60):
        rng_seed = SEED + 6
        n = 2 + t % 2
        h = random_instance(n, trial_rng(rng_seed, t))
        povm = random_povm(n, n, trial_rng(rng_seed, 100 + t))
        eta = extract_tc(povm).matrix
        worst_entry = max(worst_entry, float(np.max(np.abs(eta - extract_tc_closed_form(povm).matrix))))
        p = run_tc_protocol(h, PovmProver(povm)).exact_probability
        worst_energy = max(worst_energy, abs(_energy(h, eta) - (1 - p)))
        if n == 2:
            m = 1 + t % 3 // 2
            rho = random_density(m + n, trial_rng(rng_seed, 200 + t))
            pv = random_povm(m, n, trial_rng(rng_seed, 300 + t))
            eta2 = extract_ccrsp(rho, pv, m).matrix
            worst_entry = max(worst_entry, float(np.max(np.abs(eta2 - extract_ccrsp_closed_form(rho, pv, m).matrix))))
            p2 = run_offline_protocol(h, rho, pv, m).exact_probability
            worst_energy = max(worst_energy, abs(_energy(h, eta2) - (1 - p2)))
    for h in fixtures.values():
        povm = HonestTeleport().povm(h)
        lam = _lambda_min(h)
        worst_honest = max(worst_honest, abs(_energy(h, extract_tc(povm).matrix) - lam))
        eta = extract_ccrsp(bell_pairs_state(h.n_qubits), povm, h.n_qubits).matrix
        worst_honest = max(worst_honest, abs(_energy(h, eta) - lam))
    criterion(
        "criterion 6 (extractor identities)",
        worst_entry < 1e-12 and worst_energy < 1e-9 and worst_honest < 1e-9,
        f"max entry gap = {worst_entry:.2e}, max |Tr(eta H) - (1 - p_acc)| = {worst_energy:.2e}, "
        f"max honest |Tr(eta H) - lambda_min| = {worst_honest:.2e}",
    )


def test_criterion_7_toy_rsp_simulation(criterion):
    rsp = ToyRsp(1, 1.0)
    tv = total_variation(quantum_transcript_distribution(rsp), classical_transcript_distribution(rsp))
    # a noisy instance exercises the failure branches too
    tv = max(tv, total_variation(quantum_transcript_distribution(ToyRsp(1, 0.6)), classical_transcript_distribution(ToyRsp(1, 0.6))))
    runs = 10_000
    matches = 0
    for t in range(runs):
        _, out, learned, _ = classical_simulate_ccrsp(rsp, trial_rng(SEED + 7, t))
        matches += out is not None and learned == out
    criterion(
        "criterion 7 (toy RSP classical simulation)",
        tv <= 1e-15 and matches == runs,
        f"total variation = {tv:.2e}, learned (h, m) matches verifier in {matches}/{runs} runs",
    )


def test_criterion_8_bell_identity(criterion):
    worst = worst_norm = 0.0
    for t in range(1000):
        rng = trial_rng(SEED + 8, t)
        rho = random_density(1, rng)
        a, b, hb, m = (int(v) for v in rng.integers(0, 2, size=4))
        lhs, rhs = cf.bell_identity_check(rho, a, b, hb, m)
        worst = max(worst, abs(lhs - rhs))
        # the four Bell outcomes exhaust the joint state
        total = sum(cf.bell_identity_check(rho, aa, bb, hb, m)[0] for aa in (0, 1) for bb in (0, 1))
        worst_norm = max(worst_norm, abs(total - 1))
    criterion(
        "criterion 8 (Bell identity)",
        worst < 1e-12 and worst_norm < 1e-12,
        f"1000 draws, max deviation = {worst:.2e}, max Bell-outcome normalization gap = {worst_norm:.2e}",
    )


@pytest.mark.parametrize("name", ["singlet", "singlet-ferro", "triangle"])
def test_criterion_9_statistical_consistency(criterion, fixtures, name):
    h = fixtures[name]
    n = h.n_qubits
    trials = 100_000
    runs = {
        "fig1 random POVM": lambda **kw: run_tc_protocol(h, PovmProver(random_povm(n, n, trial_rng(SEED + 9, n))), **kw),
        "fig3 honest p=0.8": lambda **kw: run_ma_protocol(h, HonestMeasureE0(), 0.8, **kw),
    }
    details = []
    ok = True
    for label, run in runs.items():
        exact = run().exact_probability
        est = run(mode="sample", seed=SEED, trials=trials)
        z = abs(est.acceptance_estimate - exact) / est.std_error if est.std_error else 0.0
        ok = ok and abs(est.acceptance_estimate - exact) <= 4 * est.std_error + 1e-12
        details.append(f"{label}: {est.acceptance_estimate:.5f} vs {exact:.5f} ({z:.2f} se)")
    again = runs["fig3 honest p=0.8"](mode="sample", seed=SEED, trials=trials).to_json()
    first = runs["fig3 honest p=0.8"](mode="sample", seed=SEED, trials=trials).to_json()
    ok = ok and again == first
    criterion(
        f"criterion 9 (statistical consistency, {name})",
        ok,
        "; ".join(details) + f"; byte-identical rerun: {again == first}",
    )
