import csv
import io as stdio
import json
import subprocess
import sys

import numpy as np
import pytest

from rotor_tf import io
from rotor_tf.cli import main
from rotor_tf.pipeline import RunConfig, run_pipeline, thread_count
from rotor_tf.errors import ConfigError

from . import frozen


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_bounds_default_table(capsys):
    code, out, _ = _run(capsys, "bounds")
    assert code == 0
    rows = list(csv.DictReader(stdio.StringIO(out)))
    assert len(rows) == 12
    assert float(rows[0]["kappa"]) == pytest.approx(0.2)
    assert float(rows[-1]["kappa"]) == pytest.approx(8.0)


def test_bounds_json_values(capsys):
    code, out, _ = _run(capsys, "bounds", "--kappa", "1", "--format", "json")
    assert code == 0
    row = json.loads(out)["bounds"][0]
    assert row["state_product"] == pytest.approx(frozen.BOUNDS[1.0][0], rel=1e-12)
    assert row["meas_product"] == pytest.approx(frozen.BOUNDS[1.0][1], rel=1e-12)


def test_bounds_to_directory(tmp_path, capsys):
    code, out, _ = _run(capsys, "bounds", "--kappa", "0.5,2", "--out", str(tmp_path))
    assert code == 0
    assert len(io.read_table(tmp_path / "bounds.csv")) == 2


def test_state_saturates(capsys):
    code, out, _ = _run(capsys, "state", "--kappa", "0.7", "--format", "json", "--n", "2", "--alpha", "0.4")
    assert code == 0
    r = json.loads(out)["states"][0]
    assert r["product"] == pytest.approx(r["bound_state_product"], abs=1e-10)
    assert r["mean_L"] == pytest.approx(2, abs=1e-12)


def test_config_errors(tmp_path, capsys):
    assert _run(capsys, "bounds", "--config", str(tmp_path / "missing.json"))[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kappa_list": [-1.0]}))
    assert _run(capsys, "bounds", "--config", str(bad))[0] == 2
    bad.write_text("{not json")
    assert _run(capsys, "bounds", "--config", str(bad))[0] == 2
    with pytest.raises(SystemExit) as ex:
        main(["bounds", "--kappa", "abc"])
    assert ex.value.code == 2
    assert _run(capsys, "simulate")[0] == 2


def test_numerical_failure_exit(tmp_path, capsys):
    _run(capsys, "simulate", "--kappa", "1", "--out", str(tmp_path))
    c = io.read_counts(tmp_path / "counts.csv")
    io.write_counts(c.with_counts(np.zeros_like(c.counts)), tmp_path / "empty.csv")
    code, _, err = _run(capsys, "reconstruct", str(tmp_path / "empty.csv"), "--trunc", "9")
    assert code == 3 and "numerical failure" in err


def test_kappa_out_of_range_is_config_error(capsys):
    assert _run(capsys, "bounds", "--kappa", "80")[0] == 2


def test_simulate_reconstruct_wigner_chain(tmp_path, capsys):
    code, out, _ = _run(capsys, "simulate", "--kappa", "1", "--seed", "4", "--out", str(tmp_path))
    assert code == 0
    counts = tmp_path / "counts.csv"
    c = io.read_counts(counts)
    assert c.total > 1e6 and c.meta["kappa_a"] == 1.0
    code, out, _ = _run(capsys, "reconstruct", str(counts), "--trunc", "15")
    assert code == 0
    rho_path = tmp_path / "counts_rho.json"
    rho = io.read_rho(rho_path)
    assert rho.dim == 15
    meas = json.loads(out[out.index("{"):])["measurement"]
    assert meas["kind"] == "measurement"
    code, out, _ = _run(capsys, "wigner", str(rho_path))
    assert code == 0
    w = io.read_wigner(tmp_path / "counts_rho_wigner.csv")
    assert w.values.sum() * w.dtheta == pytest.approx(1.0, abs=1e-10)
    st = json.loads(out[out.index("{"):])["state"]
    assert st["product"] > 0


def test_reconstruct_with_bootstrap(tmp_path, capsys):
    _run(capsys, "simulate", "--kappa", "2", "--seed", "1", "--out", str(tmp_path), "--background", "5")
    code, _, _ = _run(capsys, "reconstruct", str(tmp_path / "counts.csv"), "--trunc", "11", "--reps", "4", "--subtract", "5")
    assert code == 0
    b = json.loads((tmp_path / "counts_rho_bootstrap.json").read_text())
    assert b["replicates"] == 4
    assert set(b["ci_lo"]) == {"state", "measurement"}


def test_reconstruct_needs_kappa_without_sidecar(tmp_path, capsys):
    _run(capsys, "simulate", "--kappa", "1", "--out", str(tmp_path))
    (tmp_path / "counts.json").unlink()
    assert _run(capsys, "reconstruct", str(tmp_path / "counts.csv"), "--trunc", "9")[0] == 2
    assert _run(capsys, "reconstruct", str(tmp_path / "counts.csv"), "--trunc", "9", "--kappa", "1")[0] == 0


def test_fisher_flat(capsys):
    code, out, _ = _run(capsys, "fisher", "--flat", "--samples", "10,100", "--demo-reps", "20")
    assert code == 0
    d = json.loads(out)
    assert d["fisher"] == pytest.approx(28.6**2 / 3, rel=5e-3)
    assert d["cr_product"] >= 0.25 - 1e-6
    assert [r["n_samples"] for r in d["divergence_demo"]] == [10, 100]


def test_fisher_von_mises(capsys):
    code, out, _ = _run(capsys, "fisher", "--kappa", "2", "--samples", "10", "--demo-reps", "5")
    assert code == 0
    d = json.loads(out)
    assert d["second_term"] <= 1e-9
    assert d["cr_product"] >= 0.25 - 1e-6


def test_thread_env(monkeypatch):
    monkeypatch.setenv("ROTOR_TF_THREADS", "3")
    assert thread_count(12) == 3
    assert thread_count(2) == 2
    monkeypatch.setenv("ROTOR_TF_THREADS", "0")
    with pytest.raises(ConfigError):
        thread_count(4)
    monkeypatch.setenv("ROTOR_TF_THREADS", "many")
    with pytest.raises(ConfigError):
        thread_count(4)


def test_thread_env_cli_exit(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("ROTOR_TF_THREADS", "-2")
    assert _run(capsys, "pipeline", "--kappa", "1", "--out", str(tmp_path))[0] == 2


SMALL = {"kappa_list": [0.5, 2.0], "n_reps": 3, "mean_total": 2e5, "trunc": 11, "max_iter": 300, "seed": 9}


def test_pipeline_deterministic(tmp_path, monkeypatch):
    cfg = RunConfig.from_dict(SMALL)
    a = run_pipeline(cfg, tmp_path / "a", threads=1)
    b = run_pipeline(cfg, tmp_path / "b", threads=2)
    assert all(r["status"] == "ok" for r in a)
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["files"] == mb["files"]
    assert "kappa_01/bootstrap.json" in ma["files"]
    assert ma["config"]["seed"] == 9


def test_pipeline_rerun_from_manifest(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(SMALL))
    assert _run(capsys, "pipeline", "--config", str(cfg_path), "--out", str(tmp_path / "a"))[0] == 0
    manifest = tmp_path / "a" / "manifest.json"
    assert _run(capsys, "pipeline", "--config", str(manifest), "--out", str(tmp_path / "b"))[0] == 0
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()
    rows = io.read_table(tmp_path / "a" / "summary.csv")
    assert [r["index"] for r in rows] == [0, 1]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "rotor_tf", "bounds", "--kappa", "1"], capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.splitlines()[0].startswith("kappa,")
