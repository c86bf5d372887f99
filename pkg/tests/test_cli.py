import csv
import json
import subprocess
import sys
from pathlib import Path


from fractodamp.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _data(out, experiment):
    (path,) = Path(out, experiment).glob("*/data.csv")
    return list(csv.DictReader(path.open()))


def test_classify_constant_blows_up(tmp_path, capsys):
    assert main(["classify", str(CONFIGS / "classify_constant.toml"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "verdict: BlowUp" in out
    assert "lifespan_bound(eps=0.5)" in out


def test_classify_powerlog_global(tmp_path, capsys):
    assert main(["classify", str(CONFIGS / "classify_powerlog.toml"), "--out", str(tmp_path)]) == 0
    assert "verdict: GlobalExistence" in capsys.readouterr().out
    rows = _data(tmp_path, "classify")
    assert rows[0]["value"] == "GlobalExistence"


def test_off_curve_is_config_error(tmp_path, capsys):
    cfg = _write(tmp_path, "[system]\nsigma = 0.0\nn = 1\np_star = 3.0\nq_star = 4.0\n")
    assert main(["classify", cfg, "--out", str(tmp_path)]) == 1
    assert "critical curve" in capsys.readouterr().err


def test_unknown_key_named(tmp_path, capsys):
    cfg = _write(tmp_path, "[kernels]\nsigma = 0.25\nxi_maxx = 3.0\n")
    assert main(["kernels", cfg, "--out", str(tmp_path)]) == 1
    assert "xi_maxx" in capsys.readouterr().err


def test_missing_config_for_classify(tmp_path):
    assert main(["classify", "--out", str(tmp_path)]) == 1
    assert main(["classify", str(tmp_path / "absent.toml"), "--out", str(tmp_path)]) == 1


def test_kernels_initial_rows(tmp_path):
    assert main(["kernels", str(CONFIGS / "kernels.toml"), "--out", str(tmp_path)]) == 0
    rows = _data(tmp_path, "kernels")
    first = [r for r in rows if float(r["t"]) == 0.0]
    assert first and all(float(r["K0"]) == 1.0 and float(r["K1"]) == 0.0 for r in first)


def test_simulate_zero_data(tmp_path, capsys):
    text = (CONFIGS / "simulate.toml").read_text().replace("eps = 0.5", "eps = 0.0")
    text = text.replace("Tmax = 20.0", "Tmax = 2.0")
    assert main(["simulate", _write(tmp_path, text), "--out", str(tmp_path)]) == 0
    assert "status: ReachedTmax" in capsys.readouterr().out
    for row in _data(tmp_path, "simulate"):
        assert all(float(row[k]) == 0.0 for k in row if k not in ("manifest", "t"))


def test_lifespan_short_ladder_rejected(tmp_path, capsys):
    cfg = _write(tmp_path, "[system]\nsigma = 0.0\nn = 1\np_star = 3.0\nq_star = 3.0\n"
                           "[lifespan]\neps = [0.5, 0.4]\n")
    assert main(["lifespan", cfg, "--out", str(tmp_path)]) == 1
    assert "at least 4" in capsys.readouterr().err


def test_testfn_reduced(tmp_path, capsys):
    cfg = _write(tmp_path, "[testfn]\nfraclap_bound = [[1, 0.5]]\nfraclap_points = 40\n"
                           "derivative_bound = [[4, 1]]\nscaling_count = 1\nmoments = [[1, 0.25]]\n"
                           "envelopes = [[1, 0.5]]\n")
    assert main(["testfn", cfg, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count(": pass") == 5


def test_dry_run_writes_nothing(tmp_path, capsys):
    out_dir = tmp_path / "out"
    assert main(["decay", str(CONFIGS / "decay.toml"), "--dry-run", "--out", str(out_dir)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["subcommand"] == "decay" and len(doc["params"]["cases"]) == 2
    assert not out_dir.exists()


def test_options_before_subcommand(tmp_path, capsys):
    assert main(["--dry-run", "kernels"]) == 0
    assert json.loads(capsys.readouterr().out)["params"]["sigma"] == 0.25


def test_threads_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("FRACTODAMP_THREADS", "many")
    assert main(["kernels", "--dry-run"]) == 1
    monkeypatch.setenv("FRACTODAMP_THREADS", "2")
    assert main(["kernels", "--dry-run"]) == 0
    assert json.loads(capsys.readouterr().out)["threads"] == 2


def test_acceptance_failure_exit(tmp_path, capsys):
    cfg = _write(tmp_path, "[decay]\nl2_tol = 1e-6\nlinf_tol = 1e-6\n[[decay.cases]]\nn = 1\nsigma = 0.0\n")
    assert main(["decay", cfg, "--out", str(tmp_path)]) == 3
    assert "FAIL:" in capsys.readouterr().out


def test_reuse_and_refuse(tmp_path, capsys):
    args = ["kernels", str(CONFIGS / "kernels.toml"), "--out", str(tmp_path)]
    assert main(args) == 0
    assert main(args) == 0
    assert "reused" in capsys.readouterr().out
    assert main(args + ["--on-exists", "refuse"]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fractodamp", "kernels", "--dry-run"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and '"subcommand": "kernels"' in proc.stdout
