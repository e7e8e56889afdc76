import csv
import json
import subprocess
import sys

import pytest

from cfsmote.cli import EXIT_DATA, EXIT_METHOD, EXIT_OK, EXIT_USAGE, main
from cfsmote.data import class_stats, read_csv


def run(*args):
    return main([str(a) for a in args])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("CFSMOTE_SEED", raising=False)


@pytest.fixture
def small(tmp_path):
    out = tmp_path / "small"
    assert run("gen", "--majority", 120, "--minority", 12, "--test-per-slice", 10, "--out", out) == EXIT_OK
    return out


def test_gen_table1_preset(tmp_path):
    out = tmp_path / "grid"
    assert run("gen", "--preset", "table1", "--scale", 0.02, "--out", out) == EXIT_OK
    names = sorted(p.name for p in out.glob("D*.csv"))
    assert len(names) == 12
    assert (out / "test.csv").is_file()
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == "gen" and set(m["files"]) == {*names, "test.csv"}


def test_gen_balanced(tmp_path):
    assert run("gen", "--majority", 100, "--minority", 100, "--out", tmp_path) == EXIT_OK
    assert class_stats(read_csv(tmp_path / "train.csv")).imbalance_ratio == 1.0


def test_gen_same_seed_identical(tmp_path):
    for name in ("a", "b"):
        run("gen", "--majority", 50, "--minority", 5, "--seed", 7, "--out", tmp_path / name)
    for f in ("train.csv", "test.csv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes().replace(b"/a", b"/b") == (tmp_path / "b" / f).read_bytes()


def test_seed_env_and_flag_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("CFSMOTE_SEED", "7")
    run("gen", "--majority", 50, "--minority", 5, "--out", tmp_path / "env")
    run("gen", "--majority", 50, "--minority", 5, "--seed", 7, "--out", tmp_path / "flag")
    run("gen", "--majority", 50, "--minority", 5, "--seed", 8, "--out", tmp_path / "other")
    env, flag, other = ((tmp_path / n / "train.csv").read_bytes() for n in ("env", "flag", "other"))
    assert env == flag != other


def test_bad_seed_env_is_usage_error(tmp_path, monkeypatch):
    monkeypatch.setenv("CFSMOTE_SEED", "abc")
    assert run("gen", "--out", tmp_path) == EXIT_USAGE


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"majority": 40, "minority": 10, "seed": 3}))
    run("gen", "--config", cfg, "--minority", 20, "--out", tmp_path / "o")
    s = class_stats(read_csv(tmp_path / "o" / "train.csv"))
    assert (s.majority_count, s.minority_count) == (40, 20)
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["settings"]["seed"] == 3


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"majorty": 40}))
    assert run("gen", "--config", cfg, "--out", tmp_path) == EXIT_USAGE


def test_usage_errors(tmp_path, capsys):
    assert run("gen") == EXIT_USAGE
    assert run("augment", "--bogus") == EXIT_USAGE
    assert run("nope") == EXIT_USAGE
    assert run("augment", "--input", "x.csv", "--out", "y.csv", "--method", "adasyn") == EXIT_USAGE


def test_data_errors(tmp_path):
    assert run("augment", "--input", tmp_path / "missing.csv", "--out", tmp_path / "o.csv") == EXIT_DATA
    bad = tmp_path / "bad.csv"
    bad.write_text("id,rainfall,growth\na,zz,1\n")
    assert run("augment", "--input", bad, "--out", tmp_path / "o.csv") == EXIT_DATA


def test_method_fatal_error(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("id,rainfall,growth,label\na,1,1,majority\nb,2,1,majority\nc,9,1,minority\n")
    assert run("augment", "--input", p, "--out", tmp_path / "o.csv", "--method", "smote") == EXIT_METHOD


def test_augment_target_count(small, tmp_path):
    out = tmp_path / "aug.csv"
    assert run("augment", "--input", small / "train.csv", "--out", out, "--method", "smote", "--target-count", 50) == EXIT_OK
    rows = read_rows(out)
    assert sum(r["synthetic"] == "1" for r in rows) == 50
    assert len(rows) == 132 + 50
    diag = json.loads((tmp_path / "aug.diagnostics.json").read_text())
    assert diag["diagnostics"]["n_synthetic"] == 50 and "seconds" not in diag["diagnostics"]


def test_augment_baseline_copies_input(small, tmp_path):
    out = tmp_path / "copy.csv"
    assert run("augment", "--input", small / "train.csv", "--out", out, "--method", "baseline") == EXIT_OK
    assert out.read_bytes() == (small / "train.csv").read_bytes()


def test_augment_balanced_is_identical_modulo_provenance(tmp_path):
    run("gen", "--majority", 30, "--minority", 30, "--out", tmp_path / "bal")
    src = tmp_path / "bal" / "train.csv"
    out = tmp_path / "aug.csv"
    assert run("augment", "--input", src, "--out", out, "--method", "cfa-smote") == EXIT_OK
    original = read_rows(src)
    augmented = read_rows(out)
    assert [{k: r[k] for k in original[0]} for r in augmented] == original


def test_augment_parity_and_provenance(small, tmp_path):
    out = tmp_path / "cfa.csv"
    assert run("augment", "--input", small / "train.csv", "--out", out) == EXIT_OK
    d = read_csv(out)
    s = class_stats(d)
    assert s.majority_count == s.minority_count
    gens = {r["generator"] for r in read_rows(out) if r["synthetic"] == "1"}
    assert gens <= {"cfa", "smote"} and "cfa" in gens


def test_label_command(tmp_path):
    src = tmp_path / "big"
    run("gen", "--majority", 3000, "--minority", 300, "--test-per-slice", 10, "--out", src)
    out = tmp_path / "labeled.csv"
    assert run("label", "--input", src / "test.csv", "--boundary-from", src / "train.csv", "--out", out) == EXIT_OK
    assert read_csv(out).is_labeled
    b = json.loads((tmp_path / "labeled.boundary.json").read_text())
    assert b["mode"] == "seasonal" and b["multiplier"] == 2.0


def test_label_unseen_week_is_data_error(small, tmp_path):
    # the small training set does not cover every test week
    args = ("label", "--input", small / "test.csv", "--boundary-from", small / "train.csv", "--out", tmp_path / "l.csv")
    assert run(*args) == EXIT_DATA
    assert run(*args, "--mode", "global") == EXIT_OK


def test_unlabeled_input_gets_labeled(tmp_path):
    p = tmp_path / "u.csv"
    lines = ["id,rainfall,growth"] + [f"r{i},{v},{i}" for i, v in enumerate([0, 0.1, -0.1, 0.2, -0.2, 0.05, 0.0, 0.1, 9, 9.5])]
    p.write_text("\n".join(lines) + "\n")
    out = tmp_path / "o.csv"
    assert run("augment", "--input", p, "--out", out, "--method", "smote", "--mode", "global", "--multiplier", 1.0) == EXIT_OK
    assert class_stats(read_csv(out)).minority_count > 2


def test_train_eval(small, tmp_path, capsys):
    out = tmp_path / "res.json"
    assert run("train-eval", "--train", small / "train.csv", "--test", small / "test.csv", "--method", "smote", "--out", out) == EXIT_OK
    res = json.loads(out.read_text())
    assert [r["slice"] for r in res["results"]] == ["march", "july", "october"]
    assert "MAE=" in capsys.readouterr().out


def toy_dir(tmp_path):
    d = tmp_path / "toy"
    for name, (a, b) in {"A": (60, 6), "B": (60, 12)}.items():
        run("gen", "--majority", a, "--minority", b, "--test-per-slice", 5, "--seed", len(name) + a + b, "--out", tmp_path / name)
        d.mkdir(exist_ok=True)
        (d / f"{name}.csv").write_bytes((tmp_path / name / "train.csv").read_bytes())
    # one-slice test set
    rows = (tmp_path / "A" / "test.csv").read_text().splitlines()
    header = rows[0].split(",")
    keep = [",".join(r.split(",")[: header.index("slice")]) for r in rows]
    (d / "test.csv").write_text("\n".join(keep) + "\n")
    return d


def test_toy_sweep_and_rerun(tmp_path):
    data = toy_dir(tmp_path)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert run("sweep", "--data-dir", data, "--methods", "baseline,cfa-smote", "--out", out1, "--seed", 5) == EXIT_OK
    assert len(read_rows(out1 / "report.csv")) == 4
    assert run("sweep", "--manifest", out1 / "manifest.json", "--out", out2) == EXIT_OK
    for name in ("report.csv", "wilcoxon.csv", "mae_all.csv", "mae_vs_ir.svg"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_sweep_needs_a_source(tmp_path):
    assert run("sweep", "--out", tmp_path) == EXIT_USAGE
    assert run("sweep", "--out", tmp_path, "--data-dir", tmp_path, "--preset", "table1") == EXIT_USAGE


def test_sweep_without_baseline_is_usage_error(tmp_path):
    data = toy_dir(tmp_path)
    assert run("sweep", "--data-dir", data, "--methods", "smote,cfa-smote", "--out", tmp_path / "r") == EXIT_USAGE


def test_stats_command(tmp_path, capsys):
    report = tmp_path / "r.csv"
    lines = ["dataset_id,ir,method,slice,mae,runtime_s"]
    for d, delta in zip("ABC", (1, 2, 3)):
        lines += [f"{d},2.0,CFA-SMOTE,all,{10 + delta},", f"{d},2.0,Baseline,all,10,"]
    report.write_text("\n".join(lines) + "\n")
    assert run("stats", "--report", report, "--out", tmp_path / "w.csv") == EXIT_OK
    (row,) = read_rows(tmp_path / "w.csv")
    assert float(row["p_value"]) == 0.25 and row["stars"] == "NS"
    capsys.readouterr()
    assert run("stats", "--report", report) == EXIT_OK
    assert "CFA-SMOTE,Baseline,all,3" in capsys.readouterr().out


def test_stats_malformed_report(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,b\n1,2\n")
    assert run("stats", "--report", p) == EXIT_DATA


def test_bench_command(small, tmp_path):
    out = tmp_path / "bench"
    assert run("bench", "--input", small / "train.csv", "--methods", "smote,cfa-smote", "--repetitions", 3, "--out", out) == EXIT_OK
    rows = read_rows(out / "bench.csv")
    assert [r["method"] for r in rows] == ["SMOTE", "CFA-SMOTE"]
    assert all(r["repetitions"] == "3" for r in rows)
    assert (out / "runtime.svg").is_file()


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "cfsmote.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("gen", "label", "augment", "train-eval", "sweep", "stats", "bench"):
        assert cmd in res.stdout
