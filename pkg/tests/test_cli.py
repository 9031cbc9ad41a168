import io
import json
from dataclasses import replace

import pytest

from ccrsp_sim import cli
from ccrsp_sim.cli import (
    ConfigError,
    ExperimentConfig,
    Tolerances,
    check_identities,
    emit_summary,
    load_experiment,
    main,
    run_experiment,
)
from ccrsp_sim.hamiltonian import triangle_instance
from ccrsp_sim.qmath import trial_rng


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def _run(argv):
    buf = io.StringIO()
    code = main([str(a) for a in argv], out=buf)
    return code, buf.getvalue()


MINIMAL = {"hamiltonian": {"builtin": "singlet"}, "protocol": "fig1-tc", "prover": {"kind": "honest"}}


# --- load_experiment -------------------------------------------------------


def test_minimal_config_loads(tmp_path):
    cfg = load_experiment(_write(tmp_path, MINIMAL))
    assert cfg.protocol == "fig1-tc" and cfg.mode == "enumerate" and cfg.seed is None


def test_sample_mode_requires_seed(tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        load_experiment(_write(tmp_path, dict(MINIMAL, mode="sample")))


def test_parse_error_reports_line_and_column(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "protocol": "fig1-tc",\n  "prover": }\n')
    with pytest.raises(ConfigError, match=r"bad\.json:3:13"):
        load_experiment(p)


@pytest.mark.parametrize(
    "patch,field",
    [
        ({"protocol": "fig9"}, "protocol"),
        ({"trials": 0}, "trials"),
        ({"seed": -1}, "seed"),
        ({"seed": 2**64}, "seed"),
        ({"hamiltonian": "missing.json"}, "hamiltonian"),
        ({"prover": {"kind": "attack"}}, "prover.kind"),
        ({"extract": "yes"}, "extract"),
        ({"bogus": 1}, "unknown keys"),
        ({"protocol": "fig2-ccrsp", "model": {"kind": "noisy", "depolarizing": 2}}, "model.depolarizing"),
        ({"protocol": "fig2-ccrsp", "paired": True, "model": {"kind": "toy-rsp"}}, "paired"),
        ({"tolerances": {"exact": 0}}, "tolerances.exact"),
    ],
)
def test_invalid_fields_are_named(tmp_path, patch, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        load_experiment(_write(tmp_path, dict(MINIMAL, **patch)))


def test_relative_paths_resolve_against_config_dir(tmp_path):
    sub = tmp_path / "inst"
    sub.mkdir()
    triangle_instance().save(sub / "tri.json")
    (sub / "d.json").write_text(json.dumps({"000": 0.5, "111": 0.5}))
    cfg = load_experiment(
        _write(
            sub,
            {"hamiltonian": "tri.json", "protocol": "fig3-ma", "prover": {"kind": "attack", "distribution": "d.json"}},
        )
    )
    assert cfg.hamiltonian == str((sub / "tri.json").resolve())
    assert run_experiment(cfg).passed


def _random_config(rng):
    protocol = cli.PROTOCOLS[int(rng.integers(4))]
    kinds = {
        "fig1-tc": ["honest", "random-povm"],
        "fig2-ccrsp": ["honest", "random-povm", "attack"],
        "fig3-ma": ["honest", "attack"],
        "fig7-offline": ["honest", "random-povm"],
    }[protocol]
    kind = kinds[int(rng.integers(len(kinds)))]
    prover = {"kind": kind}
    if kind == "random-povm":
        prover.update(seed=int(rng.integers(2**63)), rank=int(rng.integers(1, 3)))
    if kind == "attack":
        prover["distribution"] = "optimal" if rng.random() < 0.5 else {"01": 0.25, "10": 0.75}
    h = [
        {"builtin": "singlet"},
        {"builtin": "triangle"},
        {"random": {"n_qubits": int(rng.integers(2, 5)), "seed": int(rng.integers(2**63)), "edge_prob": 0.5}},
        triangle_instance().to_dict(),
    ][int(rng.integers(4))]
    mode = ["enumerate", "sample"][int(rng.integers(2))]
    data = {
        "hamiltonian": h,
        "protocol": protocol,
        "prover": prover,
        "p_succ": float(rng.uniform(0.1, 1.0)),
        "mode": mode,
        "trials": int(rng.integers(1, 10**6)),
        "seed": int(rng.integers(2**63)) * 2 + int(rng.integers(2)),
        "format": ["json", "csv"][int(rng.integers(2))],
        "tolerances": {"exact": float(rng.uniform(1e-13, 1e-9)), "sigma": float(rng.uniform(1, 6))},
    }
    if protocol == "fig2-ccrsp":
        model_kind = cli.MODEL_KINDS[int(rng.integers(4))]
        model = {"kind": model_kind, "p_succ": float(rng.uniform(0.1, 1.0))}
        if model_kind == "noisy":
            model.update(depolarizing=float(rng.random()), damping=float(rng.random()))
        if model_kind == "measured-entangled":
            model.update(rho="random", seed=int(rng.integers(2**63)), m_qubits=1)
        data["model"] = model
        data["paired"] = model_kind in ("ideal", "noisy") and bool(rng.integers(2))
    if protocol in ("fig1-tc", "fig7-offline"):
        data["extract"] = bool(rng.integers(2))
    return data


def test_config_round_trip_fuzz():
    for t in range(100):
        data = _random_config(trial_rng(77, t))
        cfg = ExperimentConfig.from_dict(data)
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg
        assert again.to_dict() == cfg.to_dict()


# --- run_experiment --------------------------------------------------------


def test_fig1_honest_single_term():
    res = run_experiment(ExperimentConfig.from_dict(MINIMAL))
    assert res.report.exact_probability == pytest.approx(1.0, abs=1e-12)
    assert res.passed


def test_fig2_attack_triangle():
    cfg = ExperimentConfig.from_dict(
        {
            "hamiltonian": {"builtin": "triangle"},
            "protocol": "fig2-ccrsp",
            "prover": {"kind": "attack"},
            "model": {"kind": "ideal", "p_succ": 1.0},
        }
    )
    r = run_experiment(cfg).report
    assert r.closedform_value == pytest.approx(2 / 3, abs=1e-15)
    assert r.deviation < 1e-12


@pytest.mark.parametrize("model", [{"kind": "ideal", "p_succ": 0.8}, {"kind": "noisy", "p_succ": 0.9, "depolarizing": 0.1, "damping": 0.2}])
def test_paired_run_asserts_equality(model):
    cfg = ExperimentConfig.from_dict(
        {
            "hamiltonian": {"builtin": "triangle"},
            "protocol": "fig2-ccrsp",
            "prover": {"kind": "attack", "distribution": {"010": 0.5, "111": 0.5}},
            "model": model,
            "paired": True,
        }
    )
    res = run_experiment(cfg)
    assert res.paired.protocol == "fig3-ma"
    assert abs(res.report.acceptance_estimate - res.paired.acceptance_estimate) < 1e-12
    assert res.passed


@pytest.mark.parametrize("protocol,prover", [("fig1-tc", {"kind": "random-povm", "seed": 3}), ("fig7-offline", {"kind": "honest"})])
def test_extraction_checks(protocol, prover):
    cfg = ExperimentConfig.from_dict(
        {"hamiltonian": {"builtin": "triangle"}, "protocol": protocol, "prover": prover, "extract": True}
    )
    res = run_experiment(cfg)
    assert res.extraction is not None
    assert res.extraction.energy == pytest.approx(1 - res.report.acceptance_estimate, abs=1e-9)
    assert res.passed and len(res.checks) >= 3


def test_sample_mode_within_sigma():
    cfg = ExperimentConfig.from_dict(dict(MINIMAL, hamiltonian={"builtin": "triangle"}, mode="sample", seed=11, trials=3000))
    res = run_experiment(cfg)
    assert res.report.trials == 3000 and res.passed


def test_identical_config_gives_byte_identical_report(tmp_path):
    reports = []
    out = tmp_path / "report.json"
    for _ in range(2):
        cfg = _write(
            tmp_path,
            {
                "hamiltonian": {"builtin": "triangle"},
                "protocol": "fig2-ccrsp",
                "prover": {"kind": "honest"},
                "model": {"kind": "noisy", "p_succ": 0.9, "depolarizing": 0.05, "damping": 0.1},
                "mode": "sample",
                "seed": 2**64 - 1,
                "trials": 2000,
                "output": str(out),
            },
        )
        assert _run(["run", "--config", cfg])[0] == 0
        reports.append(out.read_bytes())
    assert reports[0] == reports[1]


# --- emit_summary ----------------------------------------------------------


def _report(**kw):
    cfg = ExperimentConfig.from_dict(dict(MINIMAL, hamiltonian={"builtin": "triangle"}, **kw))
    return run_experiment(cfg).report


def test_summary_one_row():
    s = emit_summary([_report()])
    assert len(s.rows) == 1
    assert s.csv.splitlines()[0].split(",") == list(cli.SUMMARY_COLUMNS)
    assert len(s.text.splitlines()) == 3 and s.passed


def test_summary_mixed_modes_render_both_columns():
    s = emit_summary([_report(), _report(mode="sample", seed=1, trials=500)])
    cols = cli.SUMMARY_COLUMNS
    exact, est = cols.index("exact_probability"), cols.index("acceptance_estimate")
    assert s.rows[0][exact] != "" and s.rows[1][exact] == ""
    assert s.rows[0][est] != "" and s.rows[1][est] != ""
    assert s.rows[1][cols.index("std_error")] != ""


def test_summary_flags_corrupted_report(tmp_path):
    good = _report()
    bad = replace(good, acceptance_estimate=good.acceptance_estimate + 1e-6, deviation=1e-6)
    s = emit_summary([good, bad])
    assert [r[-1] for r in s.rows] == ["PASS", "FAIL"] and not s.passed
    path = tmp_path / "reports.json"
    path.write_text(json.dumps([good.to_dict(), bad.to_dict()]))
    code, text = _run(["summarize", path])
    assert code == 1 and "FAIL" in text
    path.write_text(json.dumps([good.to_dict()]))
    assert _run(["summarize", path, "--format", "csv"])[0] == 0


def test_summary_tolerance_is_configurable():
    good = _report()
    bad = replace(good, deviation=1e-10)
    assert not emit_summary([bad]).passed
    assert emit_summary([bad], Tolerances(exact=1e-9)).passed


def test_summary_needs_a_report():
    with pytest.raises(ValueError):
        emit_summary([])


# --- subcommands -----------------------------------------------------------


def test_run_subcommand_writes_json_and_csv(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    code, text = _run(["run", "--config", cfg])
    assert code == 0 and json.loads(text)["passed"] is True
    out = tmp_path / "r.csv"
    code, _ = _run(["run", "--config", cfg, "--format", "csv", "--out", out])
    assert code == 0 and out.read_text().startswith("protocol,mode,")


def test_run_overrides(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    code, text = _run(["run", "--config", cfg, "--mode", "sample", "--seed", 4, "--trials", 100])
    rep = json.loads(text)["report"]
    assert code == 0 and rep["mode"] == "sample" and rep["trials"] == 100


def test_run_extract_flag(tmp_path):
    code, text = _run(["run", "--config", _write(tmp_path, MINIMAL), "--extract"])
    assert code == 0 and json.loads(text)["extraction"]["energy"] == pytest.approx(0, abs=1e-9)


def test_extract_subcommand(tmp_path):
    code, text = _run(["extract", "--config", _write(tmp_path, dict(MINIMAL, protocol="fig7-offline"))])
    assert code == 0 and json.loads(text)["extraction"] is not None


def test_attack_demo(tmp_path):
    code, text = _run(["attack-demo"])
    assert code == 0
    assert "breaks soundness" in text and "0.6666666666666666" in text
    h = tmp_path / "s.json"
    triangle_instance().save(h)
    assert _run(["attack-demo", "--hamiltonian", h, "--p-succ", "0.5"])[0] == 0


def test_check_identities_subcommand():
    code, text = _run(["check-identities", "--seed", 3, "--count", 60])
    assert code == 0
    assert [line.split()[1] for line in text.splitlines()] == [
        "bell-identity",
        "povm-completeness",
        "state-validity",
        "extractor-agreement",
    ]
    assert all(c.passed for c in check_identities(5, 30))


def test_errors_exit_nonzero(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{")
    assert _run(["run", "--config", p])[0] == 2
    assert "bad.json:1:2" in capsys.readouterr().err
    assert _run(["run", "--config", _write(tmp_path, dict(MINIMAL, mode="sample"))])[0] == 2
    budget = _write(tmp_path, dict(MINIMAL, trials=0))
    assert _run(["run", "--config", budget])[0] == 2


def test_failing_check_exits_one(tmp_path):
    # a sampled estimate cannot meet a near-zero tolerance
    data = dict(MINIMAL, hamiltonian={"builtin": "triangle"}, mode="sample", seed=1, trials=200)
    data["tolerances"] = {"exact": 1e-300, "sigma": 1e-300}
    code, text = _run(["run", "--config", _write(tmp_path, data)])
    assert code == 1 and json.loads(text)["passed"] is False
