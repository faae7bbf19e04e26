import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from fusion_lab.cli import COMPARE_COLUMNS, SIMULATE_COLUMNS, main, parse_sweep
from fusion_lab.model import write_report_matrix


@pytest.fixture
def zeros_file(tmp_path):
    path = tmp_path / "zeros.txt"
    write_report_matrix(path, np.zeros((10, 20), np.uint8))
    return path


@pytest.fixture
def noisy_file(tmp_path):
    rng = np.random.default_rng(0)
    s = rng.integers(0, 2, 6)
    R = s[:, None] ^ (rng.random((6, 8)) < 0.2)
    path = tmp_path / "noisy.txt"
    write_report_matrix(path, R)
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestFuse:
    def test_unanimous_zeros(self, zeros_file, capsys):
        code, out, _ = run(["fuse", zeros_file, "--scheme", "mp", "--alpha", "0"], capsys)
        assert code == 0
        assert out.splitlines()[0] == "decisions: 0000000000"

    @pytest.mark.parametrize("scheme", ["mp", "optimal", "majority", "hard", "soft"])
    def test_json_fields(self, noisy_file, scheme, capsys):
        code, out, _ = run(["fuse", noisy_file, "--scheme", scheme, "--alpha", "0.2", "--json"], capsys)
        assert code == 0
        obj = json.loads(out)
        assert set(obj) >= {"decisions", "state_posteriors", "honesty_posteriors", "iterations", "converged"}
        assert len(obj["decisions"]) == 6

    def test_window_too_large(self, zeros_file, capsys):
        code, _, err = run(["fuse", zeros_file, "--scheme", "optimal", "--m", "25"], capsys)
        assert code == 2
        assert "window too large for exact oracle" in err

    def test_shape_mismatch(self, zeros_file, capsys):
        code, _, err = run(["fuse", zeros_file, "--n", "3"], capsys)
        assert code == 2 and err

    @pytest.mark.parametrize("argv", [["fuse", "/nonexistent/file"], ["fuse"], ["bogus"]])
    def test_bad_invocations(self, argv, capsys):
        assert run(argv, capsys)[0] == 2

    def test_bad_file(self, tmp_path, capsys):
        path = tmp_path / "bad.txt"
        path.write_text("0 1\n2 0\n")
        assert run(["fuse", path], capsys)[0] == 2

    def test_repeatable(self, noisy_file, capsys):
        argv = ["fuse", noisy_file, "--alpha", "0.3", "--rho", "0.9"]
        assert run(argv, capsys)[1] == run(argv, capsys)[1]

    def test_output_file(self, noisy_file, tmp_path, capsys):
        out_path = tmp_path / "out.txt"
        code, out, _ = run(["fuse", noisy_file, "--alpha", "0.2", "-o", out_path], capsys)
        assert code == 0 and out == ""
        assert out_path.read_text().startswith("decisions:")


class TestOracle:
    def test_naive_agrees(self, noisy_file, capsys):
        base = ["oracle", noisy_file, "--alpha", "0.3", "--rho", "0.8", "--json"]
        a = json.loads(run(base, capsys)[1])
        b = json.loads(run(base + ["--naive"], capsys)[1])
        np.testing.assert_allclose(a["state_posteriors"], b["state_posteriors"], atol=1e-12)
        assert a["decisions"] == b["decisions"]


class TestSimulate:
    def test_columns_and_rows(self, capsys):
        code, out, _ = run(
            ["simulate", "--sweep", "alpha=0:0.15:0.45", "--schemes", "mp,majority,hard,soft",
             "--m", "6", "--pmal", "1", "--trials", "50"],
            capsys,
        )
        assert code == 0
        assert out.splitlines()[0] == ",".join(SIMULATE_COLUMNS)
        table = rows(out)
        assert len(table) == 16
        assert [r["scheme"] for r in table[::4]] == ["mp", "majority", "hard", "soft"]
        assert {r["alpha"] for r in table} == {"0.0", "0.15", "0.3", "0.45"}
        assert all(r["mean_iters"] == "" for r in table if r["scheme"] != "mp")

    def test_pmal_list_and_m_sweep(self, capsys):
        code, out, _ = run(
            ["simulate", "--sweep", "m=5:1:7", "--alpha", "0.45", "--rho", "0.95",
             "--pmal", "1,0.5", "--trials", "20"],
            capsys,
        )
        assert code == 0
        table = rows(out)
        assert len(table) == 6
        assert sorted({(r["m"], r["pmal"]) for r in table}) == sorted(
            {(str(m), p) for m in (5, 6, 7) for p in ("1.0", "0.5")}
        )

    def test_round_trip_parameters(self, capsys):
        argv = ["simulate", "--sweep", "epsilon=0.1:0.05:0.2", "--alpha", "0.3", "--rho", "0.7",
                "--pmal", "0.8", "--pmal-fc", "0.6", "--n", "7", "--m", "4", "--trials", "30",
                "--seed", "11"]
        row = rows(run(argv, capsys)[1])[1]
        assert float(row["epsilon"]) == 0.15 and float(row["rho"]) == 0.7
        assert float(row["alpha"]) == 0.3 and float(row["pmal"]) == 0.8
        assert float(row["pmal_fc"]) == 0.6
        assert (int(row["n"]), int(row["m"]), int(row["trials"]), int(row["seed"])) == (7, 4, 30, 11)
        pe = float(row["pe"])
        assert float(row["ci_low"]) <= pe <= float(row["ci_high"])
        assert len(row["pe"].replace(".", "").lstrip("0")) >= 1

    def test_seventeen_digits(self, capsys):
        out = run(["simulate", "--alpha", "0.45", "--m", "3", "--trials", "7"], capsys)[1]
        row = rows(out)[0]
        errors = round(float(row["pe"]) * 21)
        assert row["pe"] == f"{errors / 21:.17g}"

    def test_byte_identical_across_runs_and_workers(self, tmp_path, capsys):
        argv = ["simulate", "--sweep", "alpha=0.3:0.15:0.45", "--schemes", "mp,soft", "--m", "5",
                "--trials", "2100"]
        a = run(argv + ["--workers", "1"], capsys)[1]
        b = run(argv + ["--workers", "1"], capsys)[1]
        c = run(argv + ["--workers", "2"], capsys)[1]
        assert a == b == c

    @pytest.mark.parametrize(
        "extra",
        [
            ["--trials", "0"],
            ["--sweep", "alpha=0:-1:1"],
            ["--sweep", "foo=0:1:2"],
            ["--sweep", "alpha=oops"],
            ["--schemes", "mp,bogus"],
            ["--alpha", "0.7"],
            ["--pmal", "x"],
            ["--schemes", "optimal", "--m", "25"],
            ["--workers", "0"],
        ],
    )
    def test_config_errors(self, extra, capsys):
        code, out, err = run(["simulate", "--trials", "5", "--m", "3"] + extra, capsys)
        assert code == 2 and out == "" and err


class TestCompare:
    def test_columns(self, capsys):
        code, out, _ = run(
            ["compare", "--sweep", "alpha=0:0.45:0.45", "--m", "4", "--trials", "100"], capsys
        )
        assert code == 0
        assert out.splitlines()[0] == ",".join(COMPARE_COLUMNS)
        table = rows(out)
        assert len(table) == 2
        honest = table[0]
        assert honest["pe_mp"] == honest["pe_opt"] and float(honest["pe_gap"]) == 0.0

    def test_single_slot_grid(self, capsys):
        out = run(["compare", "--m", "1", "--alpha", "0.4", "--trials", "500"], capsys)[1]
        row = rows(out)[0]
        assert float(row["pe_gap"]) == 0.0 and float(row["differ_fraction"]) == 0.0

    def test_window_guard(self, capsys):
        code, _, err = run(["compare", "--m", "21", "--trials", "5"], capsys)
        assert code == 2 and "window too large for exact oracle" in err


def test_sweep_parser():
    assert parse_sweep("alpha=0:0.05:0.45")[1][-1] == 0.45
    assert len(parse_sweep("alpha=0:0.05:0.45")[1]) == 10
    assert parse_sweep("m=5:1:20") == ("m", list(range(5, 21)))


def test_module_entry_point(tmp_path):
    path = tmp_path / "z.txt"
    write_report_matrix(path, np.zeros((3, 4), np.uint8))
    ok = subprocess.run([sys.executable, "-m", "fusion_lab", "fuse", str(path)],
                        capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stdout.startswith("decisions: 000")
    bad = subprocess.run([sys.executable, "-m", "fusion_lab", "simulate", "--trials", "0"],
                         capture_output=True, text=True)
    assert bad.returncode == 2


def test_numerical_failure_exit_code(noisy_file, monkeypatch, capsys):
    from fusion_lab import cli, mp

    def boom(*a, **k):
        raise mp.NumericalError("NaN in messages")

    monkeypatch.setattr(cli.mp, "fuse_mp", boom)
    code, out, err = run(["fuse", noisy_file], capsys)
    assert code == 3 and out == "" and "numerical failure" in err
