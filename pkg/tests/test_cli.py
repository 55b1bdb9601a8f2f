"""Command-line interface: exit codes, file round trips, byte determinism.

Everything goes through main(argv) so the documented exit-code mapping
(0 success, 1 usage error, 2 tolerance breach) is what gets exercised.
"""

import json

import numpy as np
import pytest

from symcompress import (
    WeightedSet,
    load_dataset_csv,
    load_weighted_set_csv,
    make_teacher_student,
    moment_vector,
    save_dataset_csv,
    save_weighted_set_csv,
)
from symcompress.cli import main


def moment_gap(a, b, k):
    va = moment_vector(a, k).values
    vb = moment_vector(b, k).values
    return float(np.max(np.abs(vb - va) / (1.0 + np.abs(va))))


def small_set(tmp_path, n=40, m=2, seed=0):
    rng = np.random.default_rng(seed)
    ws = WeightedSet.uniform(rng.uniform(-1.0, 1.0, size=(n, m)))
    path = tmp_path / "in.csv"
    save_weighted_set_csv(ws, path)
    return ws, path


# ---------------------------------------------------------------- compress


def test_compress_roundtrip(tmp_path, capsys):
    ws, inp = small_set(tmp_path)
    out = tmp_path / "out.csv"
    rc = main(["compress", str(inp), "--k", "2", "--target", "10", "--seed", "3",
               "--out", str(out)])
    assert rc == 0
    assert "->" in capsys.readouterr().out
    result = load_weighted_set_csv(out)
    assert result.n <= 10
    assert np.all(result.weights > 0.0)
    assert moment_gap(ws, result, 2) <= 1e-8


def test_compress_rerun_is_byte_identical(tmp_path):
    _, inp = small_set(tmp_path, seed=4)
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["compress", str(inp), "--k", "2", "--target", "12", "--seed", "1"]
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_compress_floored_target_notes_and_succeeds(tmp_path, capsys):
    _, inp = small_set(tmp_path, seed=5)
    out = tmp_path / "out.csv"
    with pytest.warns(UserWarning, match="floor"):
        rc = main(["compress", str(inp), "--k", "2", "--target", "3", "--out", str(out)])
    assert rc == 0
    assert "floored" in capsys.readouterr().err
    assert load_weighted_set_csv(out).n <= 6  # stops at C(4,2)


# ---------------------------------------------------------------- exit codes


def test_usage_errors_exit_1(tmp_path, capsys):
    _, inp = small_set(tmp_path)
    assert main(["compress", str(inp), "--target", "5", "--out", "x.csv"]) == 1  # no --k
    assert main(["no-such-command"]) == 1
    assert main(["compress", str(tmp_path / "missing.csv"), "--k", "1",
                 "--target", "5", "--out", "x.csv"]) == 1
    assert main(["compress-dataset", "--in-csv", str(inp)]) == 1  # --out required
    bad = tmp_path / "bad.csv"
    bad.write_text("c,w_1\n1,not-a-number\n")
    assert main(["compress", str(bad), "--k", "1", "--target", "5",
                 "--out", str(tmp_path / "y.csv")]) == 1
    capsys.readouterr()


def test_help_exits_0_and_documents_columns(capsys):
    assert main(["--help"]) == 0
    top = capsys.readouterr().out
    for sub in ("compress", "error-scaling", "compress-dataset", "lth", "nsl",
                "grad-check", "selftest"):
        assert sub in top
    for sub, cols in (
        ("error-scaling", "m, k, d, trial, seed"),
        ("compress-dataset", "seed, arm"),
        ("lth", "seed, rule"),
        ("nsl", "seed, d, d_prime"),
    ):
        assert main([sub, "--help"]) == 0
        assert cols in capsys.readouterr().out


def test_grad_check_exit_codes(capsys):
    assert main(["grad-check"]) == 0
    assert "gradient deviation" in capsys.readouterr().out
    assert main(["grad-check", "--tol", "1e-18"]) == 2
    assert "error:" in capsys.readouterr().err


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    assert "selftest passed" in capsys.readouterr().out


# ---------------------------------------------------------------- reports


ES_ARGS = ["error-scaling", "--m-list", "1", "--k-list", "1", "--d-grid", "32,64,128",
           "--trials", "2", "--seed", "3"]


def test_error_scaling_csv_report(tmp_path, capsys):
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(ES_ARGS + ["--out", str(out_a)]) == 0
    assert "alpha" in capsys.readouterr().err
    assert main(ES_ARGS + ["--out", str(out_b)]) == 0
    text = out_a.read_text()
    assert text.splitlines()[0] == "m,k,d,trial,seed,target_size,support,floored,error"
    assert out_a.read_bytes() == out_b.read_bytes()


def test_error_scaling_json_report(tmp_path):
    out = tmp_path / "r.json"
    assert main(ES_ARGS + ["--format", "json", "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["name"] == "error_scaling"
    assert "wall_time_s" not in payload["metadata"]
    assert payload["metadata"]["d_grid"] == [32, 64, 128]


def test_error_scaling_stdout_default(capsys):
    assert main(ES_ARGS) == 0
    cap = capsys.readouterr()
    assert cap.out.splitlines()[0].startswith("m,k,d,")


def test_compress_dataset_in_csv_mode(tmp_path, capsys):
    ds, _ = make_teacher_student(80, seed=1)
    inp, out = tmp_path / "ds.csv", tmp_path / "small.csv"
    save_dataset_csv(ds, inp)
    rc = main(["compress-dataset", "--in-csv", str(inp), "--k", "2",
               "--d-prime", "12", "--out", str(out)])
    assert rc == 0
    assert "rows" in capsys.readouterr().out
    comp = load_dataset_csv(out)
    assert comp.n <= 12
    assert moment_gap(ds.as_weighted_set(), comp.as_weighted_set(), 2) <= 1e-8


def test_compress_dataset_tiny_run(tmp_path):
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["compress-dataset", "--d", "60", "--d-prime", "20", "--k", "2",
            "--n-seeds", "1", "--epochs", "2", "--batch-size", "16",
            "--eval-every", "2", "--seed", "1"]
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    lines = out_a.read_text().splitlines()
    assert lines[0] == "seed,arm,epoch,test_mse,signal_var"
    assert len(lines) > 1
    assert out_a.read_bytes() == out_b.read_bytes()


def test_lth_tiny_run(tmp_path):
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["lth", "--width", "12", "--width-prime", "6", "--k", "1",
            "--rules", "sgd", "--n-seeds", "1", "--epochs", "2",
            "--batch-size", "16", "--d-train", "60", "--eval-every", "1"]
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    assert out_a.read_text().splitlines()[0] == "seed,rule,arm,epoch,test_mse"
    assert out_a.read_bytes() == out_b.read_bytes()


def test_nsl_tiny_run(tmp_path):
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["nsl", "--d-grid", "200", "--n-seeds", "1", "--epochs", "2", "--k", "2"]
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    lines = out_a.read_text().splitlines()
    assert lines[0] == "seed,d,d_prime,arm,floored,final_test_mse"
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert row["floored"] == "1"  # ceil(16*sqrt(200)) = 227 >= 200
    assert row["arm"] == "0"
    assert out_a.read_bytes() == out_b.read_bytes()
