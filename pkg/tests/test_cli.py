import json
import os
import subprocess
import sys

from srblab.cli import main


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "preimages" in capsys.readouterr().out
    assert main(["srb", "--help"]) == 0
    assert "measure.csv" in capsys.readouterr().out


def test_usage_errors_exit_one():
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["srb", "--iters", "abc"]) == 1


def test_invalid_config_exits_one(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('[model]\nfamily = "pitchfork"\nrho = 0.3\n')
    assert main(["srb", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "model.rho" in capsys.readouterr().err
    assert main(["srb", "--config", str(tmp_path / "missing.toml")]) == 1


def test_runtime_failure_exits_two(tmp_path, capsys):
    # the output directory cannot be created below a regular file
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rc = main(["preimages", "--model", "cat", "--out", str(blocker / "sub")])
    assert rc == 2
    assert "srblab:" in capsys.readouterr().err


def test_preimages_run(tmp_path):
    out = tmp_path / "pre"
    assert main(["preimages", "--model", "doubling", "--starts", "4", "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    names = {f["name"] for f in man["files"]}
    assert {"preimages.csv", "summary.json", "preimages.png", "preimages.dat"} <= names
    assert "wall_time" not in man
    summary = json.loads((out / "summary.json").read_text())
    assert summary["degree"] == 2


def test_env_var_sets_output_dir(tmp_path):
    env = dict(os.environ, SRBLAB_OUT=str(tmp_path / "envout"))
    r = subprocess.run([sys.executable, "-m", "srblab.cli", "preimages", "--model", "cat",
                        "--starts", "2"], env=env, capture_output=True, text=True, cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "envout" / "preimages.csv").exists()
