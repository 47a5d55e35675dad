import json
import subprocess
import sys
import time

import pytest

from relu_constructor import cli, erm

EXIT_OK, EXIT_INVALID, EXIT_COMPUTE, EXIT_CERT = 0, 1, 2, 3


def run(args, capsys=None):
    code = cli.main([str(a) for a in args])
    out = capsys.readouterr().out if capsys is not None else ""
    return code, out


def write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def read_dir(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


BATCH = [{"beta": b, "d": d, "N": n, "M": n, "target": "cosine_product"}
         for b, d, n in [(0.5, 1, 1), (0.5, 2, 2), (1.0, 1, 2), (1.0, 2, 1), (1.0, 3, 1), (2.0, 1, 1),
                         (2.0, 1, 3), (2.0, 2, 1), (3.0, 1, 1), (3.0, 1, 2), (0.5, 3, 2), (1.0, 1, 3)]]


def test_constant_target_builds_and_passes(tmp_path, capsys):
    code, out = run(["approx-build", "--target", "constant", "--N", 1, "--M", 1, "--out", tmp_path], capsys)
    assert code == EXIT_OK
    assert "PASS" in out
    cert = json.loads((tmp_path / "case_00_certificate.json").read_text())
    assert cert["pass"] and cert["network_file"] == "case_00_network.json"


def test_batch_of_twelve_rows(tmp_path, capsys):
    cfg = write_json(tmp_path / "cfg.json", {"cases": BATCH, "out": str(tmp_path / "out"), "jobs": 1})
    code, out = run(["approx-build", "--config", cfg], capsys)
    assert code == EXIT_OK
    rows = (tmp_path / "out" / "certificates.txt").read_text().strip().splitlines()
    assert len(rows) == 1 + 12
    assert len(json.loads((tmp_path / "out" / "certificates.json").read_text())) == 12
    assert all(line.split()[10] == "PASS" for line in rows[1:])


def test_parallel_batch_matches_serial(tmp_path):
    for jobs, name in ((1, "a"), (3, "b")):
        cfg = write_json(tmp_path / f"{name}.json", {"cases": BATCH[:4], "out": str(tmp_path / name), "jobs": jobs})
        assert run(["approx-build", "--config", cfg])[0] == EXIT_OK
    assert read_dir(tmp_path / "a") == read_dir(tmp_path / "b")


def test_approx_build_is_byte_identical(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_SEED, "7")
    for name in ("a", "b"):
        args = ["approx-build", "--target", "poly", "--d", 2, "--beta", 2.0, "--N", 2, "--M", 1,
                "--kind", "uniform", "--out", tmp_path / name, "--jobs", 1]
        assert run(args)[0] == EXIT_OK
    a, b = read_dir(tmp_path / "a"), read_dir(tmp_path / "b")
    assert a == b
    assert json.loads(a["case_00_certificate.json"])["grid"]["seed"] == 7


def test_verify_accepts_and_detects_tampering(tmp_path, capsys):
    assert run(["approx-build", "--beta", 2.0, "--N", 2, "--M", 2, "--out", tmp_path])[0] == EXIT_OK
    cert_path = tmp_path / "case_00_certificate.json"
    code, out = run(["approx-verify", cert_path], capsys)
    assert code == EXIT_OK and out.splitlines()[-1].startswith("OK")
    cert = json.loads(cert_path.read_text())
    for field, value in (("bound", cert["bound"] * 2), ("measured", cert["measured"] * 0.5 + 1e-6),
                         ("pass", not cert["pass"])):
        bad = dict(cert, **{field: value})
        bad_path = write_json(tmp_path / f"bad_{field}.json", bad)
        code, out = run(["approx-verify", bad_path], capsys)
        assert code == EXIT_CERT, field
        assert "FAIL" in out


def test_verify_detects_swapped_network(tmp_path):
    assert run(["approx-build", "--beta", 1.0, "--N", 2, "--M", 2, "--out", tmp_path / "a"])[0] == EXIT_OK
    assert run(["approx-build", "--beta", 1.0, "--N", 1, "--M", 1, "--out", tmp_path / "b"])[0] == EXIT_OK
    code, _ = run(["approx-verify", tmp_path / "a" / "case_00_certificate.json",
                   "--network", tmp_path / "b" / "case_00_network.json"])
    assert code == EXIT_CERT


def test_verify_rejects_garbage(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert run(["approx-verify", p])[0] == EXIT_INVALID
    assert run(["approx-verify", tmp_path / "missing.json"])[0] == EXIT_INVALID


def test_invalid_inputs_exit_one(tmp_path):
    assert run(["approx-build", "--target", "nope", "--out", tmp_path])[0] == EXIT_INVALID
    assert run(["approx-build", "--target", "abs_power", "--beta", 2.0, "--out", tmp_path])[0] == EXIT_INVALID
    assert run(["plan", "--profile", "nope"])[0] == EXIT_INVALID
    assert run(["nre", "1", "10"])[0] == EXIT_INVALID
    assert run(["frobnicate"])[0] == EXIT_INVALID


def test_config_unknown_key_and_conflict(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"beta": 1.0, "d": 2, "bogus": 1})
    assert run(["plan", "--config", cfg])[0] == EXIT_INVALID
    cfg = write_json(tmp_path / "c2.json", {"d": 2})
    assert run(["plan", "--config", cfg, "--d", 3])[0] == EXIT_INVALID
    assert run(["plan", "--config", cfg, "--d", 2])[0] == EXIT_OK
    cfg = write_json(tmp_path / "c3.json", {"cases": [{"beta": 1.0, "colour": "red"}]})
    assert run(["approx-build", "--config", cfg, "--out", tmp_path])[0] == EXIT_INVALID


def test_config_replaces_flags(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"beta": 1.0, "d": 2, "n": 1024, "as_json": True})
    code, out = run(["plan", "--config", cfg], capsys)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert (doc["W"], doc["D"]) == (228, 672)


def test_construction_too_large_exits_two(tmp_path, capsys):
    code, _ = run(["approx-build", "--target", "cosine_product", "--d", 3, "--beta", 3.0, "--N", 10, "--M", 10,
                   "--kind", "uniform", "--out", tmp_path], capsys)
    assert code == EXIT_COMPUTE


def test_plan_and_nre_outputs(capsys):
    code, out = run(["plan", "--beta", 1, "--d", 2, "--n", 1024, "--profile", "rectangle_min_size"], capsys)
    assert code == EXIT_OK
    assert out.splitlines()[1].split()[1:3] == ["228", "672"]
    code, out = run(["nre", "100", "10000"], capsys)
    assert code == EXIT_OK and float(out) == pytest.approx(2.0, rel=1e-15)
    code, out = run(["nre", "deep_fixed_width", "deep_and_wide"], capsys)
    assert float(out) == 1.5


def test_project_and_minkowski(tmp_path, capsys):
    code, out = run(["project", "--d", 20, "--d0", 10, "--out", tmp_path / "proj.json"], capsys)
    assert code == EXIT_OK and "min_ratio" in out
    assert json.loads((tmp_path / "proj.json").read_text())["input_dim"] == 20
    code, out = run(["minkowski", "--sample", "segment", "--out", tmp_path / "m.csv"], capsys)
    assert code == EXIT_OK
    slope = float(out.strip().splitlines()[-1].split()[1])
    assert abs(slope - 1.0) <= 0.2
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "radius,count"
    pts = tmp_path / "pts.csv"
    pts.write_text("x,y\n" + "".join(f"{i / 100},{i / 100}\n" for i in range(101)))
    assert run(["minkowski", "--points-file", pts, "--radii", "0.2,0.1"])[0] == EXIT_OK
    assert run(["minkowski", "--radii", "0.1"])[0] == EXIT_INVALID
    assert run(["project", "--d", 4, "--d0", 8])[0] == EXIT_INVALID


def test_dataset_gen_is_deterministic(tmp_path):
    for name in ("a", "b"):
        code, _ = run(["dataset-gen", "--d", 3, "--n", 40, "--seed", 5, "--out", tmp_path / name / "data.csv"])
        assert code == EXIT_OK
    assert read_dir(tmp_path / "a") == read_dir(tmp_path / "b")
    text = (tmp_path / "a" / "data.csv").read_bytes()
    assert b"\r" not in text and text.count(b"\n") == 41
    assert json.loads((tmp_path / "a" / "data.json").read_text())["seed"] == 5


SWEEP_TRAIN = {"width": 6, "depth": 2, "epochs": 5, "min_steps": 0, "eval_samples": 2000}


def test_sweep_rate_outputs_and_determinism(tmp_path):
    for name in ("a", "b"):
        cfg = write_json(tmp_path / f"{name}.json", {"n_values": "32,64,128,256", "replicates": 3,
                                                     "train": SWEEP_TRAIN, "out": str(tmp_path / name),
                                                     "jobs": 1})
        assert run(["sweep-rate", "--config", cfg])[0] == EXIT_OK
    a, b = read_dir(tmp_path / "a"), read_dir(tmp_path / "b")
    assert a == b
    assert set(a) == {"rate.csv", "rate_summary.json", "rate.dat", "rate.gp"}
    assert len(a["rate.csv"].decode().strip().splitlines()) == 1 + 4 * 3
    summary = json.loads(a["rate_summary.json"])
    assert summary["target_exponent"] == pytest.approx(-2 / 3)


def test_sweep_rate_parallel_matches_serial(tmp_path):
    for name, jobs in (("a", 1), ("b", 2)):
        cfg = write_json(tmp_path / f"{name}.json", {"n_values": "16,32,48,64", "replicates": 3,
                                                     "train": SWEEP_TRAIN, "out": str(tmp_path / name)})
        assert run(["sweep-rate", "--config", cfg, "--jobs", jobs])[0] == EXIT_OK
    assert read_dir(tmp_path / "a")["rate.csv"] == read_dir(tmp_path / "b")["rate.csv"]


def test_sweep_rate_projection_config(tmp_path):
    cfg = write_json(tmp_path / "c.json", {
        "n_values": "16,32,48,64", "replicates": 3, "train": SWEEP_TRAIN, "out": str(tmp_path / "o"),
        "target": {"name": "abs_power", "d": 6}, "support": {"kind": "manifold_neighborhood"},
        "projection": {"d0": 3}, "jobs": 1})
    assert run(["sweep-rate", "--config", cfg])[0] == EXIT_OK
    summary = json.loads((tmp_path / "o" / "rate_summary.json").read_text())
    assert summary["settings"]["projector"]["d0"] == 3
    bad = write_json(tmp_path / "bad.json", {"projection": {"d0": 3, "axes": 1}, "target": {"d": 6}})
    assert run(["sweep-rate", "--config", bad, "--out", tmp_path / "x"])[0] == EXIT_INVALID


def test_sweep_rate_errors(tmp_path, monkeypatch):
    assert run(["sweep-rate", "--n-values", "8,16,32", "--out", tmp_path])[0] == EXIT_INVALID
    bad = write_json(tmp_path / "b.json", {"target": {"name": "cosine_product", "wiggle": 2}})
    assert run(["sweep-rate", "--config", bad, "--out", tmp_path])[0] == EXIT_INVALID

    def boom(*a, **k):
        raise erm.TrainingDiverged("forced")

    monkeypatch.setattr(erm, "train_erm", boom)
    cfg = write_json(tmp_path / "c.json", {"n_values": "8,16,24,32", "replicates": 3, "jobs": 1})
    assert run(["sweep-rate", "--config", cfg, "--out", tmp_path / "o"])[0] == EXIT_COMPUTE


def test_smoke_sweep_with_default_training_is_quick(tmp_path):
    start = time.monotonic()
    code = run(["sweep-rate", "--n-values", "64,128,256,512", "--replicates", 3, "--jobs", 1,
                "--out", tmp_path])[0]
    assert code == EXIT_OK
    assert time.monotonic() - start < 300


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "relu_constructor.cli", "nre", "100", "10000"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and float(res.stdout) == 2.0
    res = subprocess.run([sys.executable, "-m", "relu_constructor.cli", "plan", "--d", "0"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 1
