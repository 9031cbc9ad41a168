"""Batch experiment harness.

An experiment is a JSON document (schema in the README) naming an instance,
a protocol, a prover and, for ``fig2-ccrsp``, a ccRSP model. ``run``
executes it and writes a report; every report is checked against its
closed form, and the exit status is nonzero if any check fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import closedform as cf
from .extractor import (
    ExtractionResult,
    extract_ccrsp,
    extract_ccrsp_closed_form,
    extract_tc,
    extract_tc_closed_form,
    verify_extraction,
)
from .hamiltonian import (
    InstanceError,
    XxzzHamiltonian,
    random_instance,
    single_term_instance,
    triangle_instance,
)
from .protocols import (
    ENUMERATE,
    SAMPLE,
    RunReport,
    reports_to_csv,
    run_ccrsp_protocol,
    run_ma_protocol,
    run_offline_protocol,
    run_tc_protocol,
)
from .qmath import (
    bell_povm,
    partial_trace,
    random_density,
    random_povm,
    trial_rng,
    validate_density,
)
from .rsp import ToyRsp, ToyRspCcrsp
from .strategies import (
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

PROTOCOLS = ("fig1-tc", "fig2-ccrsp", "fig3-ma", "fig7-offline")
PROVER_KINDS = ("honest", "random-povm", "attack")
MODEL_KINDS = ("ideal", "noisy", "measured-entangled", "toy-rsp")
BUILTINS = ("singlet", "singlet-ferro", "triangle")
FORMATS = ("json", "csv")
U64_MAX = 2**64 - 1

EXACT_TOL = 1e-12
SIGMA_TOL = 4.0


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Tolerances:
    exact: float = EXACT_TOL
    sigma: float = SIGMA_TOL

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ExperimentConfig:
    hamiltonian: Any
    protocol: str
    prover: dict
    model: Optional[dict] = None
    p_succ: float = 1.0
    mode: str = ENUMERATE
    trials: int = 10_000
    seed: Optional[int] = None
    output: Optional[str] = None
    format: str = "json"
    extract: bool = False
    paired: bool = False
    tolerances: Tolerances = field(default_factory=Tolerances)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tolerances"] = self.tolerances.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: Any, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        return _parse_config(data, base_dir)


def _fail(name: str, msg: str) -> ConfigError:
    return ConfigError(f"{name}: {msg}")


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _resolve_path(value: str, name: str, base_dir: Optional[Path]) -> str:
    p = Path(value)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    if not p.is_file():
        raise _fail(name, f"file not found: {p}")
    return str(p.resolve())


def _check_seed(v: Any, name: str) -> int:
    if not _is_int(v) or not 0 <= v <= U64_MAX:
        raise _fail(name, "must be an unsigned 64-bit integer")
    return v


def _parse_hamiltonian(v: Any, base_dir: Optional[Path]) -> Any:
    if isinstance(v, str):
        return _resolve_path(v, "hamiltonian", base_dir)
    if not isinstance(v, dict):
        raise _fail("hamiltonian", "expected a file path or an object")
    if "builtin" in v:
        if set(v) != {"builtin"} or v["builtin"] not in BUILTINS:
            raise _fail("hamiltonian.builtin", f"must be one of {BUILTINS}")
        return dict(v)
    if "random" in v:
        r = v["random"]
        if set(v) != {"random"} or not isinstance(r, dict):
            raise _fail("hamiltonian.random", "expected an object")
        n = r.get("n_qubits")
        if not _is_int(n) or not 2 <= n <= 5:
            raise _fail("hamiltonian.random.n_qubits", "must be an integer in [2, 5]")
        _check_seed(r.get("seed"), "hamiltonian.random.seed")
        ep = r.get("edge_prob", 0.7)
        if not _is_number(ep) or not 0 < ep <= 1:
            raise _fail("hamiltonian.random.edge_prob", "must lie in (0, 1]")
        return {"random": {"n_qubits": n, "seed": r["seed"], "edge_prob": float(ep)}}
    try:
        XxzzHamiltonian.from_dict(v)
    except (InstanceError, KeyError, TypeError, ValueError) as exc:
        raise _fail("hamiltonian", str(exc)) from exc
    return dict(v)


def _parse_distribution(v: Any, base_dir: Optional[Path]) -> Any:
    if v == "optimal":
        return v
    if isinstance(v, str):
        return _resolve_path(v, "prover.distribution", base_dir)
    if isinstance(v, dict):
        try:
            AttackDistribution.from_dict(v)
        except (ValueError, TypeError) as exc:
            raise _fail("prover.distribution", str(exc)) from exc
        return dict(v)
    raise _fail("prover.distribution", "expected \"optimal\", a file path or a mapping")


def _parse_prover(v: Any, base_dir: Optional[Path]) -> dict:
    if not isinstance(v, dict):
        raise _fail("prover", "expected an object")
    kind = v.get("kind")
    if kind not in PROVER_KINDS:
        raise _fail("prover.kind", f"must be one of {PROVER_KINDS}")
    out: dict = {"kind": kind}
    allowed = {"kind"}
    if kind == "random-povm":
        allowed |= {"seed", "rank", "m_qubits"}
        out["seed"] = _check_seed(v.get("seed"), "prover.seed")
        for key in ("rank", "m_qubits"):
            if v.get(key) is not None:
                if not _is_int(v[key]) or v[key] < 1:
                    raise _fail(f"prover.{key}", "must be a positive integer")
                out[key] = v[key]
    elif kind == "attack":
        allowed |= {"distribution"}
        out["distribution"] = _parse_distribution(v.get("distribution", "optimal"), base_dir)
    extra = set(v) - allowed
    if extra:
        raise _fail("prover", f"unknown keys {sorted(extra)}")
    return out


def _parse_p_succ(v: Any, name: str) -> float:
    if not _is_number(v) or not 0 < v <= 1:
        raise _fail(name, "must lie in (0, 1]")
    return float(v)


def _parse_model(v: Any) -> dict:
    if not isinstance(v, dict):
        raise _fail("model", "expected an object")
    kind = v.get("kind")
    if kind not in MODEL_KINDS:
        raise _fail("model.kind", f"must be one of {MODEL_KINDS}")
    out: dict = {"kind": kind, "p_succ": _parse_p_succ(v.get("p_succ", 1.0), "model.p_succ")}
    allowed = {"kind", "p_succ"}
    if kind == "noisy":
        allowed |= {"depolarizing", "damping"}
        for key in ("depolarizing", "damping"):
            x = v.get(key, 0.0)
            if not _is_number(x) or not 0 <= x <= 1:
                raise _fail(f"model.{key}", "must lie in [0, 1]")
            out[key] = float(x)
    elif kind == "measured-entangled":
        allowed |= {"rho", "seed", "m_qubits"}
        rho = v.get("rho", "bell")
        if rho not in ("bell", "random"):
            raise _fail("model.rho", "must be \"bell\" or \"random\"")
        out["rho"] = rho
        if rho == "random":
            out["seed"] = _check_seed(v.get("seed"), "model.seed")
            m = v.get("m_qubits")
            if m is not None and (not _is_int(m) or m < 1):
                raise _fail("model.m_qubits", "must be a positive integer")
            out["m_qubits"] = m
    extra = set(v) - allowed
    if extra:
        raise _fail("model", f"unknown keys {sorted(extra)}")
    return out


def _parse_config(data: Any, base_dir: Optional[Path]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"config: unknown keys {sorted(extra)}")
    for key in ("hamiltonian", "protocol", "prover"):
        if key not in data:
            raise _fail(key, "missing")
    protocol = data["protocol"]
    if protocol not in PROTOCOLS:
        raise _fail("protocol", f"must be one of {PROTOCOLS}")
    prover = _parse_prover(data["prover"], base_dir)
    model = data.get("model")
    if protocol == "fig2-ccrsp":
        model = _parse_model(model if model is not None else {"kind": "ideal"})
    elif model is not None:
        raise _fail("model", f"only used by fig2-ccrsp, not {protocol}")
    if protocol == "fig1-tc" and prover["kind"] == "attack":
        raise _fail("prover.kind", "fig1-tc takes a quantum prover (honest or random-povm)")
    if protocol == "fig3-ma" and prover["kind"] == "random-povm":
        raise _fail("prover.kind", "fig3-ma takes honest or attack")
    if protocol == "fig7-offline" and prover["kind"] == "attack":
        raise _fail("prover.kind", "fig7-offline takes honest or random-povm")
    mode = data.get("mode", ENUMERATE)
    if mode not in (ENUMERATE, SAMPLE):
        raise _fail("mode", "must be \"enumerate\" or \"sample\"")
    trials = data.get("trials", 10_000)
    if not _is_int(trials) or trials < 1:
        raise _fail("trials", "must be a positive integer")
    seed = data.get("seed")
    if seed is None:
        if mode == SAMPLE:
            raise _fail("seed", "required in sample mode")
    else:
        _check_seed(seed, "seed")
    fmt = data.get("format", "json")
    if fmt not in FORMATS:
        raise _fail("format", f"must be one of {FORMATS}")
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        raise _fail("output", "expected a path string")
    for key in ("extract", "paired"):
        if not isinstance(data.get(key, False), bool):
            raise _fail(key, "expected true or false")
    if data.get("paired") and not (protocol == "fig2-ccrsp" and model["kind"] in ("ideal", "noisy")):
        raise _fail("paired", "paired runs need fig2-ccrsp with an ideal or noisy model")
    if data.get("extract") and protocol not in ("fig1-tc", "fig7-offline"):
        raise _fail("extract", "extraction is defined for fig1-tc and fig7-offline")
    tol = data.get("tolerances", {})
    if isinstance(tol, Tolerances):
        tol = tol.to_dict()
    if not isinstance(tol, dict) or set(tol) - {"exact", "sigma"}:
        raise _fail("tolerances", "expected an object with keys exact, sigma")
    for key in ("exact", "sigma"):
        if key in tol and (not _is_number(tol[key]) or tol[key] <= 0):
            raise _fail(f"tolerances.{key}", "must be positive")
    return ExperimentConfig(
        hamiltonian=_parse_hamiltonian(data["hamiltonian"], base_dir),
        protocol=protocol,
        prover=prover,
        model=model,
        p_succ=_parse_p_succ(data.get("p_succ", 1.0), "p_succ"),
        mode=mode,
        trials=trials,
        seed=seed,
        output=output,
        format=fmt,
        extract=data.get("extract", False),
        paired=data.get("paired", False),
        tolerances=Tolerances(float(tol.get("exact", EXACT_TOL)), float(tol.get("sigma", SIGMA_TOL))),
    )


def load_experiment(path: str | Path) -> ExperimentConfig:
    """Parse and validate an experiment file.

    Relative file references resolve against the config's directory.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return _parse_config(data, path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------
# building objects from a config


def build_hamiltonian(spec: Any) -> XxzzHamiltonian:
    if isinstance(spec, str):
        return XxzzHamiltonian.load(spec)
    if "builtin" in spec:
        return {
            "singlet": lambda: single_term_instance(1),
            "singlet-ferro": lambda: single_term_instance(-1),
            "triangle": triangle_instance,
        }[spec["builtin"]]()
    if "random" in spec:
        r = spec["random"]
        return random_instance(r["n_qubits"], trial_rng(r["seed"], 0), r["edge_prob"])
    return XxzzHamiltonian.from_dict(spec)


def _distribution(spec: Any, h: XxzzHamiltonian) -> AttackDistribution:
    if spec == "optimal":
        return optimal_attack_distribution(h)
    if isinstance(spec, str):
        return AttackDistribution.load(spec)
    return AttackDistribution.from_dict(spec)


def _random_povm_prover(spec: dict, m_qubits: int, n_bits: int) -> PovmProver:
    rng = trial_rng(spec["seed"], 1)
    return PovmProver(random_povm(m_qubits, n_bits, rng, rank=spec.get("rank")))


def build_model(spec: dict, n: int):
    p = spec["p_succ"]
    kind = spec["kind"]
    if kind == "ideal":
        return IdealCcrsp(p)
    if kind == "noisy":
        return NoisyIdealCcrsp(p, spec["depolarizing"], spec["damping"])
    if kind == "toy-rsp":
        return ToyRspCcrsp(ToyRsp(n, p))
    if spec["rho"] == "bell":
        return MeasuredEntangledCcrsp(p, bell_pairs_state(n), n)
    m = spec.get("m_qubits") or n
    return MeasuredEntangledCcrsp(p, random_density(m + n, trial_rng(spec["seed"], 2)), m)


def _offline_inputs(cfg: ExperimentConfig, h: XxzzHamiltonian):
    if cfg.prover["kind"] == "honest":
        n = h.n_qubits
        return bell_pairs_state(n), HonestTeleport().povm(h), n
    m = cfg.prover.get("m_qubits") or h.n_qubits
    rho = random_density(m + h.n_qubits, trial_rng(cfg.prover["seed"], 2))
    return rho, _random_povm_prover(cfg.prover, m, h.n_qubits).povm, m


# --------------------------------------------------------------------------
# running


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "passed", bool(self.passed))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    report: RunReport
    extraction: Optional[ExtractionResult] = None
    paired: Optional[RunReport] = None
    checks: tuple[Check, ...] = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def reports(self) -> list[RunReport]:
        return [self.report] + ([self.paired] if self.paired is not None else [])

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "report": self.report.to_dict(),
            "extraction": None if self.extraction is None else self.extraction.to_dict(),
            "paired": None if self.paired is None else self.paired.to_dict(),
            "checks": [c.to_dict() for c in self.checks],
            "passed": self.passed,
        }

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return reports_to_csv(self.reports())
        return json.dumps(self.to_dict(), indent=2) + "\n"


def report_tolerance(report: RunReport, tol: Tolerances) -> float:
    """Allowed deviation: exact tolerance, plus ``sigma`` standard errors
    for sampled reports."""
    if report.mode == SAMPLE:
        return tol.sigma * (report.std_error or 0.0) + tol.exact
    return tol.exact


def check_report(report: RunReport, tol: Tolerances) -> Check:
    allowed = report_tolerance(report, tol)
    value = report.acceptance_estimate
    if report.is_bound:
        excess = value - report.closedform_value
        return Check(
            f"{report.protocol}:{report.closedform_source}",
            excess <= allowed,
            f"value {value!r} <= bound {report.closedform_value!r} (+{allowed:.3g})",
        )
    return Check(
        f"{report.protocol}:{report.closedform_source}",
        report.deviation <= allowed,
        f"deviation {report.deviation:.3e} <= {allowed:.3g}",
    )


def _run_main(cfg: ExperimentConfig, h: XxzzHamiltonian) -> tuple[RunReport, Any]:
    kw = dict(mode=cfg.mode, seed=cfg.seed, trials=cfg.trials)
    kind = cfg.prover["kind"]
    n = h.n_qubits
    if cfg.protocol == "fig1-tc":
        prover = HonestTeleport() if kind == "honest" else _random_povm_prover(cfg.prover, n, n)
        return run_tc_protocol(h, prover, **kw), prover
    if cfg.protocol == "fig2-ccrsp":
        model = build_model(cfg.model, n)
        if kind == "honest":
            prover = HonestTeleport()
        elif kind == "attack":
            prover = ClassicalAttack(_distribution(cfg.prover["distribution"], h))
        else:
            m = model.prover_qubits(n)
            prover = _random_povm_prover(cfg.prover, m, n)
        return run_ccrsp_protocol(h, model, prover, **kw), (model, prover)
    if cfg.protocol == "fig3-ma":
        if kind == "honest":
            prover = HonestMeasureE0()
        else:
            prover = DistributionProver(_distribution(cfg.prover["distribution"], h))
        return run_ma_protocol(h, prover, cfg.p_succ, **kw), prover
    rho, povm, m = _offline_inputs(cfg, h)
    return run_offline_protocol(h, rho, povm, m, **kw), (rho, povm, m)


def _run_paired(cfg: ExperimentConfig, h: XxzzHamiltonian, report: RunReport, objs) -> tuple[RunReport, Check]:
    model, prover = objs
    kw = dict(mode=cfg.mode, seed=cfg.seed, trials=cfg.trials)
    allowed = report_tolerance(report, cfg.tolerances)
    if isinstance(prover, ClassicalAttack):
        other = run_ma_protocol(h, DistributionProver(prover.distribution), model.p_succ, **kw)
        if cfg.mode == SAMPLE:
            allowed = cfg.tolerances.sigma * math.hypot(report.std_error or 0, other.std_error or 0)
            allowed += cfg.tolerances.exact
        gap = abs(report.acceptance_estimate - other.acceptance_estimate)
        return other, Check("paired:fig2-ccrsp=fig3-ma", gap <= allowed, f"gap {gap:.3e} <= {allowed:.3g}")
    other = run_ma_protocol(h, HonestMeasureE0(), model.p_succ, **kw)
    eps = model.epsilon(h.n_qubits) if isinstance(model, NoisyIdealCcrsp) else 0.0
    if cfg.mode == SAMPLE:
        allowed = cfg.tolerances.sigma * math.hypot(report.std_error or 0, other.std_error or 0)
        allowed += cfg.tolerances.exact
    excess = report.acceptance_estimate - other.acceptance_estimate - eps
    return other, Check(
        "paired:fig2-honest<=fig3-honest+eps",
        excess <= allowed,
        f"fig2 {report.acceptance_estimate!r} <= fig3 {other.acceptance_estimate!r} + eps {eps!r}",
    )


def _run_extraction(cfg: ExperimentConfig, h: XxzzHamiltonian, report: RunReport, objs) -> tuple[ExtractionResult, list[Check]]:
    tol = cfg.tolerances
    if cfg.protocol == "fig1-tc":
        povm = objs.povm(h) if isinstance(objs, HonestTeleport) else objs.povm
        eta = extract_tc(povm)
        closed = extract_tc_closed_form(povm)
    else:
        rho, povm, m = objs
        eta = extract_ccrsp(rho, povm, m)
        closed = extract_ccrsp_closed_form(rho, povm, m)
    agree = float(np.max(np.abs(eta.matrix - closed.matrix)))
    p_acc = report.exact_probability if report.exact_probability is not None else report.closedform_value
    result = verify_extraction(h, eta, p_acc, atol=max(tol.exact, 1e-9))
    checks = [
        Check("extract:operational=closed-form", agree <= tol.exact, f"max entry gap {agree:.3e}"),
        Check(
            "extract:energy=1-p_acc",
            abs(result.energy - result.epsilon_bound) <= max(tol.exact, 1e-9),
            f"Tr(eta H) {result.energy!r} vs 1 - p_acc {result.epsilon_bound!r}",
        ),
    ]
    return result, checks


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Run one experiment, check it, and write the report if an output path
    is configured."""
    h = build_hamiltonian(cfg.hamiltonian)
    report, objs = _run_main(cfg, h)
    checks = [check_report(report, cfg.tolerances)]
    paired = extraction = None
    if cfg.paired:
        paired, chk = _run_paired(cfg, h, report, objs)
        checks += [check_report(paired, cfg.tolerances), chk]
    if cfg.extract:
        extraction, more = _run_extraction(cfg, h, report, objs)
        checks += more
    result = ExperimentResult(cfg, report, extraction, paired, tuple(checks))
    if write and cfg.output:
        Path(cfg.output).write_text(result.render(cfg.format))
    return result


# --------------------------------------------------------------------------
# summaries

SUMMARY_COLUMNS = (
    "protocol",
    "mode",
    "exact_probability",
    "acceptance_estimate",
    "std_error",
    "closedform_value",
    "closedform_source",
    "deviation",
    "tolerance",
    "status",
)


@dataclass(frozen=True)
class Summary:
    rows: tuple[tuple[str, ...], ...]
    csv: str
    text: str

    @property
    def passed(self) -> bool:
        return all(r[-1] == "PASS" for r in self.rows)


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def emit_summary(reports: Sequence[RunReport], tolerances: Tolerances = Tolerances()) -> Summary:
    """One row per report with both value columns and a PASS/FAIL verdict."""
    if not reports:
        raise ValueError("need at least one report")
    rows = []
    for r in reports:
        chk = check_report(r, tolerances)
        rows.append(
            (
                r.protocol,
                r.mode,
                _fmt(r.exact_probability),
                _fmt(r.acceptance_estimate),
                _fmt(r.std_error),
                _fmt(r.closedform_value),
                r.closedform_source,
                _fmt(r.deviation),
                _fmt(report_tolerance(r, tolerances)),
                "PASS" if chk.passed else "FAIL",
            )
        )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    w.writerows(rows)
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(SUMMARY_COLUMNS)]
    lines = ["  ".join(c.ljust(widths[i]) for i, c in enumerate(SUMMARY_COLUMNS)).rstrip()]
    lines.append("  ".join("-" * wd for wd in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    return Summary(tuple(rows), buf.getvalue(), "\n".join(lines) + "\n")


def _load_reports(path: Path) -> list[RunReport]:
    data = json.loads(path.read_text())
    items = data if isinstance(data, list) else [data]
    out = []
    for item in items:
        if "report" in item:
            out.append(RunReport.from_dict(item["report"]))
            if item.get("paired"):
                out.append(RunReport.from_dict(item["paired"]))
        else:
            out.append(RunReport.from_dict(item))
    return out


# --------------------------------------------------------------------------
# identity sweeps


def check_identities(seed: int, count: int, tol: float = EXACT_TOL) -> list[Check]:
    """Bell identity, POVM completeness, state validity and extractor
    agreement over seeded random inputs."""
    checks = []
    worst = 0.0
    for t in range(count):
        rng = trial_rng(seed, t)
        rho = random_density(1, rng)
        a, b, hb, m = (int(v) for v in rng.integers(0, 2, size=4))
        lhs, rhs = cf.bell_identity_check(rho, a, b, hb, m)
        worst = max(worst, abs(lhs - rhs))
    checks.append(Check("bell-identity", worst < tol, f"{count} draws, max deviation {worst:.3e}"))

    worst = 0.0
    povms = [bell_povm()]
    for t in range(min(count, 200)):
        rng = trial_rng(seed, count + t)
        nq = 1 + t % 3
        povms.append(random_povm(nq, 1 + t % 2, rng))
    for p in povms:
        d = 2**p.n_qubits
        worst = max(worst, float(np.max(np.abs(p.elements.sum(axis=0) - np.eye(d)))))
        worst = max(worst, max(0.0, -float(min(np.linalg.eigvalsh(e).min() for e in p.elements))))
    checks.append(Check("povm-completeness", worst < 1e-9, f"{len(povms)} POVMs, max defect {worst:.3e}"))

    failures = 0
    n_states = min(count, 200)
    for t in range(n_states):
        rng = trial_rng(seed, 2 * count + t)
        rho = random_density(1 + t % 3, rng, rank=1 + t % 2)
        try:
            validate_density(rho)
            validate_density(partial_trace(rho, [0]))
        except ValueError:
            failures += 1
    checks.append(Check("state-validity", failures == 0, f"{n_states} states, {failures} invalid"))

    worst = 0.0
    for t in range(min(count, 50)):
        rng = trial_rng(seed, 3 * count + t)
        n = 1 + t % 2
        povm = random_povm(n, n, rng)
        worst = max(worst, float(np.max(np.abs(extract_tc(povm).matrix - extract_tc_closed_form(povm).matrix))))
        rho = random_density(2 * n, rng)
        diff = extract_ccrsp(rho, povm, n).matrix - extract_ccrsp_closed_form(rho, povm, n).matrix
        worst = max(worst, float(np.max(np.abs(diff))))
    checks.append(Check("extractor-agreement", worst < tol, f"max entry gap {worst:.3e}"))
    return checks


# --------------------------------------------------------------------------
# command line


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", type=Path, required=config_required, help="experiment JSON file")
    p.add_argument("--seed", type=int, help="unsigned 64-bit master seed")
    p.add_argument("--mode", choices=(ENUMERATE, SAMPLE))
    p.add_argument("--trials", type=int)
    p.add_argument("--out", type=Path, help="write the report here")
    p.add_argument("--format", choices=FORMATS)


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace, **extra) -> ExperimentConfig:
    data = cfg.to_dict()
    for key in ("seed", "mode", "trials", "format"):
        v = getattr(args, key, None)
        if v is not None:
            data[key] = v
    if getattr(args, "out", None) is not None:
        data["output"] = str(args.out)
    data.update(extra)
    return ExperimentConfig.from_dict(data)


def _print_checks(checks: Sequence[Check], out) -> None:
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}", file=out)


def _cmd_run(args, out) -> int:
    cfg = _apply_overrides(load_experiment(args.config), args, **({"extract": True} if args.extract_flag else {}))
    result = run_experiment(cfg)
    if not cfg.output:
        out.write(result.render(cfg.format))
    else:
        _print_checks(result.checks, out)
    return 0 if result.passed else 1


def _cmd_attack_demo(args, out) -> int:
    if args.config is not None:
        base = load_experiment(args.config)
        h_spec = base.hamiltonian
    elif args.hamiltonian is not None:
        h_spec = str(args.hamiltonian.resolve())
    else:
        h_spec = {"builtin": "triangle"}
    data = {
        "hamiltonian": h_spec,
        "protocol": "fig2-ccrsp",
        "prover": {"kind": "attack", "distribution": "optimal"},
        "model": {"kind": "ideal", "p_succ": args.p_succ},
        "paired": True,
    }
    cfg = _apply_overrides(ExperimentConfig.from_dict(data), args)
    h = build_hamiltonian(cfg.hamiltonian)
    result = run_experiment(cfg)
    honest = run_experiment(replace(cfg, prover={"kind": "honest"}, paired=False, output=None), write=False)
    d = optimal_attack_distribution(h)
    closed = cf.cf_attack(h, d, args.p_succ)
    print(f"instance            N={h.n_qubits}, {len(h.terms)} terms", file=out)
    print(f"attack string       {''.join(map(str, next(iter(d.support))))}", file=out)
    print(f"fig2 attack         {result.report.acceptance_estimate!r}", file=out)
    print(f"fig3 malicious      {result.paired.acceptance_estimate!r}", file=out)
    print(f"closed form         {closed!r}", file=out)
    print(f"fig2 honest         {honest.report.acceptance_estimate!r}", file=out)
    verdict = "breaks soundness" if result.report.acceptance_estimate >= honest.report.acceptance_estimate - 1e-9 else "does not beat honest"
    print(f"attack vs honest    {verdict}", file=out)
    _print_checks(result.checks + honest.checks, out)
    return 0 if result.passed and honest.passed else 1


def _cmd_extract(args, out) -> int:
    cfg = _apply_overrides(load_experiment(args.config), args, extract=True)
    result = run_experiment(cfg)
    if not cfg.output:
        out.write(result.render("json"))
    else:
        _print_checks(result.checks, out)
    return 0 if result.passed else 1


def _cmd_check_identities(args, out) -> int:
    checks = check_identities(args.seed, args.count)
    _print_checks(checks, out)
    return 0 if all(c.passed for c in checks) else 1


def _cmd_summarize(args, out) -> int:
    reports = []
    for p in args.reports:
        reports.extend(_load_reports(p))
    summary = emit_summary(reports, Tolerances(args.exact_tol, args.sigma))
    text = summary.csv if args.format == "csv" else summary.text
    if args.out is not None:
        args.out.write_text(text)
    out.write(text)
    return 0 if summary.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccrsp-sim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    _add_common(p)
    p.add_argument("--extract", dest="extract_flag", action="store_true", help="also run the extractor")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("attack-demo", help="show the ccRSP-replacement attack equality")
    _add_common(p, config_required=False)
    p.add_argument("--hamiltonian", type=Path, help="instance JSON (default: triangle)")
    p.add_argument("--p-succ", type=float, default=1.0)
    p.set_defaults(func=_cmd_attack_demo)

    p = sub.add_parser("extract", help="run an experiment with low-energy-state extraction")
    _add_common(p)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("check-identities", help="seeded identity sweeps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1000)
    p.set_defaults(func=_cmd_check_identities)

    p = sub.add_parser("summarize", help="tabulate report files")
    p.add_argument("reports", type=Path, nargs="+")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out", type=Path)
    p.add_argument("--exact-tol", type=float, default=EXACT_TOL)
    p.add_argument("--sigma", type=float, default=SIGMA_TOL)
    p.set_defaults(func=_cmd_summarize)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (ConfigError, InstanceError, ValueError, AssertionError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
