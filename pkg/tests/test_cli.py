import subprocess
import sys

import pytest

from scaledecide.cli import main
from scaledecide.report import read_table


def _run(*argv):
    return subprocess.run([sys.executable, "-m", "scaledecide", *map(str, argv)], capture_output=True, text=True)


def cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out-dir", str(out), "--items"]) == 0
    return out


def test_bundled_noiseless_pipeline(sim, capsys):
    pts = sim / "ipoints.csv"
    assert main(["metrics", "--items", str(sim / "items.jsonl"), "--out", str(pts)]) == 0
    assert main(["fit", "--manifest", str(sim / "manifest.json"), "--points", str(pts), "--out", str(sim / "fits.csv")]) == 0
    capsys.readouterr()
    assert cli("decide", "--manifest", sim / "manifest.json", "--points", pts,
               "--fits", sim / "fits.csv", "--out", sim / "dec.csv") == 0
    assert "decision_accuracy=1.0000" in capsys.readouterr().out
    (row,) = read_table((sim / "dec.csv").read_text())
    assert float(row["decision_accuracy"]) == 1.0
    assert row["method"] == "three_param:all"


def test_rank_frontier_analyze_validate(sim, tmp_path):
    m, p = sim / "manifest.json", sim / "points.csv"
    assert cli("rank", "--manifest", m, "--points", p, "--out", tmp_path / "pred.csv") == 0
    assert cli("decide", "--manifest", m, "--points", p, "--predictions", tmp_path / "pred.csv",
               "--out", tmp_path / "dec.csv") == 0
    rows = read_table((tmp_path / "dec.csv").read_text())
    assert rows and all(float(r["decision_accuracy"]) == 1.0 for r in rows)
    assert {r["n_attempts"] for r in rows} >= {"1", "3"}
    assert cli("frontier", "--decisions", tmp_path / "dec.csv", "--out-dir", tmp_path / "fr") == 0
    assert list((tmp_path / "fr").glob("frontier-*.svg"))
    assert cli("analyze", "--manifest", m, "--points", p, "--out-dir", tmp_path / "an") == 0
    assert (tmp_path / "an" / "noise-1B.csv").exists()
    assert cli("validate", "--manifest", m, "--points", p) == 0


def test_mismatched_recipes_exit_1(sim, tmp_path):
    m, p = sim / "manifest.json", sim / "points.csv"
    cli("rank", "--manifest", m, "--points", p, "--sizes", "4M", "--out", tmp_path / "pred.csv")
    lines = (tmp_path / "pred.csv").read_text().splitlines()
    (tmp_path / "bad.csv").write_text("\n".join(l for l in lines if ",recipe-03," not in l) + "\n")
    r = _run("decide", "--manifest", m, "--points", p, "--predictions", tmp_path / "bad.csv", "--out", tmp_path / "d.csv")
    assert r.returncode == 1
    assert "recipe-03" in r.stderr


def test_usage_errors_exit_2(sim, tmp_path):
    assert _run("frobnicate").returncode == 2
    assert _run("fit", "--variant", "nine_param").returncode == 2
    r = _run("decide", "--manifest", sim / "manifest.json", "--points", sim / "points.csv", "--out", tmp_path / "x.csv")
    assert r.returncode == 2


def test_missing_file_exit_1(tmp_path):
    r = _run("fit", "--manifest", tmp_path / "nope.yaml", "--points", tmp_path / "p.csv", "--out", tmp_path / "f.csv")
    assert r.returncode == 1
    assert "no such file" in r.stderr


def test_validate_flags_undeclared_runs(sim, tmp_path):
    text = (sim / "points.csv").read_text().splitlines()
    extra = text[1].replace("recipe-00", "ghost", 1)
    (tmp_path / "p.csv").write_text("\n".join(text + [extra]) + "\n")
    assert main(["validate", "--manifest", str(sim / "manifest.json"), "--points", str(tmp_path / "p.csv")]) == 1


def test_bad_manifest_exit_1(tmp_path):
    (tmp_path / "m.yaml").write_text("ladder: []\n")
    r = _run("simulate", "--manifest", tmp_path / "m.yaml", "--out-dir", tmp_path / "o")
    assert r.returncode == 1
    assert "ladder" in r.stderr
