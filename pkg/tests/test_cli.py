"""Command-line interface: outputs, golden tables, exit codes, determinism."""

import csv
import json
from pathlib import Path

import pytest

from srkweak import cli
from srkweak import trees as T

GOLDEN = Path(__file__).parent / "golden"


def run_cli(capsys, *argv):
    code = cli.run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _canonical_rows(text: str, value_fields):
    rows = {}
    reader = csv.DictReader(text.splitlines())
    for row in reader:
        key = T.canonical(T.parse_tree(row["tree"]))
        rows[key] = (row["rho"], tuple(row[f] for f in value_fields))
    return rows


def test_delta_table_matches_golden(capsys):
    code, out, _ = run_cli(capsys, "trees", "enumerate", "--set", "delta",
                           "--max-order", "2.5")
    assert code == 0
    got = _canonical_rows(out, ["alpha_delta"])
    want = _canonical_rows(GOLDEN.joinpath("ts_delta_rho25.csv").read_text(),
                           ["alpha_delta"])
    assert got == want
    assert len(got) == 87


def test_star_table_matches_golden(capsys):
    code, out, _ = run_cli(capsys, "trees", "enumerate", "--set", "strat",
                           "--max-order", "2")
    assert code == 0
    got = _canonical_rows(out, ["alpha_ito", "alpha_strat"])
    want = _canonical_rows(GOLDEN.joinpath("ts_star_rho2.csv").read_text(),
                           ["alpha_ito", "alpha_strat"])
    assert got == want
    assert len(got) == 28


def test_ito_table_is_restriction_of_strat(capsys):
    _, out_i, _ = run_cli(capsys, "trees", "enumerate", "--set", "ito",
                          "--max-order", "2")
    _, out_s, _ = run_cli(capsys, "trees", "enumerate", "--set", "strat",
                          "--max-order", "2")
    got_i = _canonical_rows(out_i, ["alpha_ito", "alpha_strat"])
    got_s = _canonical_rows(out_s, ["alpha_ito", "alpha_strat"])
    assert set(got_i) <= set(got_s)
    assert all(got_s[k] == v for k, v in got_i.items())


def test_conditions_generate_row_count(capsys):
    code, out, _ = run_cli(capsys, "conditions", "generate", "--calculus", "ito",
                           "--order", "2", "--m", "1")
    assert code == 0
    assert len(out.splitlines()) == 1 + 87


def test_verify_exit_codes(capsys):
    code, out, _ = run_cli(capsys, "conditions", "verify", "--scheme", "ri1wm",
                           "--order", "2", "--m", "2")
    assert code == 0 and "max order passed: 2" in out
    code, out, _ = run_cli(capsys, "conditions", "verify", "--scheme", "euler",
                           "--order", "3", "--m", "1")
    assert code == 1 and "VIOLATED" in out
    code, _, err = run_cli(capsys, "conditions", "verify", "--scheme", "missing",
                           "--order", "2", "--m", "1")
    assert code == 2 and "missing" in err


def test_usage_error_exit_code(capsys):
    code, _, _ = run_cli(capsys, "trees", "enumerate", "--set", "nope",
                         "--max-order", "1")
    assert code == 2
    code, _, err = run_cli(capsys, "trees", "enumerate", "--set", "delta",
                           "--max-order", "x")
    assert code == 2 and "order" in err


def test_oracle_command(capsys):
    code, out, _ = run_cli(capsys, "conditions", "oracle", "--scheme", "rs1wm",
                           "--order", "2", "--m", "1", "--csv")
    assert code == 0
    assert out.splitlines()[0].startswith("rho,tree,exact_coeff")


def test_expand_command(capsys):
    code, out, _ = run_cli(capsys, "expand", "exact", "--problem", "gbm",
                           "--f", "x2", "--order", "2",
                           "--dt-grid", "0.125,0.0625,0.03125")
    assert code == 0
    assert out.splitlines()[0] == "dt,truncated,exact,error"
    assert "slope" in out.splitlines()[-1]


def test_expand_unknown_functional(capsys):
    code, _, err = run_cli(capsys, "expand", "exact", "--problem", "gbm",
                           "--f", "cube", "--order", "2", "--dt-grid", "0.1")
    assert code == 2 and "cube" in err


def test_scheme_show(capsys):
    code, out, _ = run_cli(capsys, "scheme", "show", "--scheme", "rs1wm")
    assert code == 0
    assert "stages: 4" in out and '"calculus": "strat"' in out


def test_problem_file_loading(tmp_path, capsys):
    spec = {"kind": "gbm", "mu": 0.5, "sigma": 0.2, "x0": 1.0}
    path = tmp_path / "prob.json"
    path.write_text(json.dumps(spec))
    code, out, _ = run_cli(capsys, "expand", "exact", "--problem", str(path),
                           "--f", "x", "--order", "1", "--dt-grid", "0.25,0.125,0.0625")
    assert code == 0


def test_convergence_csv_deterministic(tmp_path):
    args = ["simulate", "convergence", "--scheme", "euler", "--problem", "gbm",
            "--f", "x2", "--T", "1", "--steps", "2,4", "--samples", "40000",
            "--seed", "31", "--csv", "--chunk-size", "9000"]
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert cli.run(args + ["--out", str(a)]) == 0
    assert cli.run(args + ["--out", str(b)]) == 0
    assert cli.run(args + ["--threads", "4", "--out", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_trees_csv_deterministic(tmp_path):
    args = ["trees", "enumerate", "--set", "delta", "--max-order", "2.5"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.run(args + ["--out", str(a)]) == 0
    assert cli.run(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_convergence_inconclusive_exit(capsys):
    code, out, _ = run_cli(capsys, "simulate", "convergence", "--scheme", "ri1wm",
                           "--problem", "gbm", "--f", "x", "--T", "1",
                           "--steps", "8,16", "--samples", "2000", "--seed", "1")
    assert code == 1
    assert "inconclusive" in out
