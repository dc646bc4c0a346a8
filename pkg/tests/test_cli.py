"""Command-line driver: exit codes, artifacts, determinism."""

import json
import os

import pytest

from cns import cli
from cns.fileio import read_csv, read_field, read_surface


def write_config(tmp_path, **extra):
    doc = {"grid": {"N1": 8, "N2": 8, "Nz": 9},
           "time": {"dt": 1e-3, "T": 0.01}}
    doc.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


def run_cli(mode, cfg, out, *overrides):
    args = [mode, "--config", cfg, "--out", str(out)]
    for ov in overrides:
        args += ["--set", ov]
    return cli.main(args)


def test_config_error_exit_code_and_json(tmp_path, capsys):
    cfg = write_config(tmp_path)
    code = run_cli("simulate", cfg, tmp_path / "o", "grid.N1=0")
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["code"] == 2
    assert "N1" in err["error"]["message"]
    assert json.load(open(tmp_path / "o" / "error.json")) == err


def test_missing_config_file_is_config_error(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 2


def test_gen_data_writes_fields_and_report(tmp_path):
    cfg = write_config(tmp_path, data={"seed": 3, "amplitude": 0.01})
    out = tmp_path / "gd"
    assert run_cli("gen-data", cfg, out) == 0
    report = json.load(open(out / "compatibility.json"))
    assert all(v <= 1e-9 for v in report.values())
    w0, _ = read_field(out / "w_0.cnsf1")
    assert w0.shape == (8, 8, 9)
    eta0, _ = read_surface(out / "eta_0.cnss1")
    assert eta0.shape == (8, 8)


def test_simulate_zero_data_single_sweep(tmp_path):
    cfg = write_config(tmp_path, data={"seed": 0, "amplitude": 0.0})
    out = tmp_path / "s"
    assert run_cli("simulate", cfg, out) == 0
    rows = read_csv(out / "convergence.csv")
    assert len(rows) == 1
    assert float(rows[0]["diff_norm"]) == 0.0
    summary = json.load(open(out / "summary.json"))
    assert summary["sweeps"] == 1
    assert summary["oxygen_min"] > 0.0


def test_simulate_small_data_artifacts(tmp_path):
    cfg = write_config(tmp_path, data={"seed": 3, "amplitude": 0.01})
    out = tmp_path / "s"
    assert run_cli("simulate", cfg, out, "output.fields_every=5") == 0
    rows = read_csv(out / "convergence.csv")
    assert float(rows[-1]["diff_norm"]) <= 1e-8
    for tag in ("000000", "000005", "000010"):
        read_field(out / f"w_{tag}.cnsf1")
        read_surface(out / f"eta_{tag}.cnss1")
    energy = read_csv(out / "energy.csv")
    assert energy[-1]["component"] == "total"
    assert float(energy[-1]["value"]) > 0.0


def test_compatibility_failure_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, data={"seed": 3, "amplitude": 0.01})
    code = run_cli("simulate", cfg, tmp_path / "o",
                   "picard.compat_tol=1e-16")
    assert code == 3
    assert json.loads(capsys.readouterr().err)["error"]["kind"] \
        == "compatibility"


def test_no_convergence_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, data={"seed": 3, "amplitude": 0.01})
    code = run_cli("simulate", cfg, tmp_path / "o", "picard.max_sweeps=1")
    assert code == 4
    assert json.loads(capsys.readouterr().err)["error"]["kind"] \
        == "no-convergence"


def test_energy_report_nonincreasing(tmp_path):
    cfg = write_config(tmp_path, data={"seed": 0, "amplitude": 0.05})
    out = tmp_path / "er"
    assert run_cli("energy-report", cfg, out) == 0
    rows = read_csv(out / "energy_trace.csv")
    assert rows[-1]["drop"] == "nonincreasing"
    drops = [float(r["drop"]) for r in rows[1:-1]]
    assert all(d <= 1e-12 for d in drops)


def test_stationary_temporal_mms_rejected(tmp_path):
    cfg = write_config(tmp_path,
                       mms={"solver": "stationary", "kind": "temporal"})
    assert run_cli("mms", cfg, tmp_path / "o") == 2


def _simulate_artifact_bytes(tmp_path, name, threads):
    cfg = write_config(tmp_path, data={"seed": 3, "amplitude": 0.01})
    out = tmp_path / name
    old = os.environ.get("CNS_THREADS")
    os.environ["CNS_THREADS"] = str(threads)
    try:
        assert run_cli("simulate", cfg, out) == 0
    finally:
        if old is None:
            os.environ.pop("CNS_THREADS", None)
        else:
            os.environ["CNS_THREADS"] = old
    blobs = {}
    for f in sorted(os.listdir(out)):
        if f.endswith((".cnsf1", ".cnss1", ".csv")):
            blobs[f] = (out / f).read_bytes()
    return blobs


def test_runs_bit_identical_across_thread_caps(tmp_path):
    a = _simulate_artifact_bytes(tmp_path, "run1", 1)
    b = _simulate_artifact_bytes(tmp_path, "run4", 4)
    assert a.keys() == b.keys()
    for name in a:
        assert a[name] == b[name], name


def test_divergent_data_generation_is_no_convergence(tmp_path, capsys):
    cfg = write_config(tmp_path, data={"seed": 3, "amplitude": 0.2})
    code = run_cli("gen-data", cfg, tmp_path / "o")
    assert code == 4
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["kind"] == "no-convergence"
    assert "amplitude" in err["error"]["message"]


def test_jacobian_violation_exit_code(tmp_path, capsys, monkeypatch):
    # the window cannot be violated from within the converging
    # data-generation regime, so exercise the exit-code mapping directly
    from cns.picard import JacobianWindowError

    def boom(cfg):
        raise JacobianWindowError("flattening Jacobian left (0.5, 1.5)")

    monkeypatch.setattr(cli, "run", boom)
    cfg = write_config(tmp_path, data={"seed": 3, "amplitude": 0.01})
    assert run_cli("simulate", cfg, tmp_path / "o") == 5
    assert json.loads(capsys.readouterr().err)["error"]["kind"] \
        == "jacobian-window"
