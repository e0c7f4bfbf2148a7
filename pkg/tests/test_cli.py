import json
import subprocess
import sys

import numpy as np
import pytest

from quasisphere.cli import EXIT_FAIL, EXIT_INPUT, EXIT_PASS, canonical_json, main
from quasisphere.constructions import equilateral_grid
from quasisphere.finite_metric import FiniteMetric


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def grid_file(tmp_path):
    return write(tmp_path / "grid.json", equilateral_grid(2, 2).to_json())


@pytest.fixture
def line_metric(tmp_path):
    return write(tmp_path / "line.json", FiniteMetric.from_coords(np.arange(6.0)[:, None]).to_json())


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


# canonical JSON


def test_canonical_json_sorted_and_exact():
    text = canonical_json({"b": 0.1, "a": [1, 2.0, float("inf")], "c": np.float64(1 / 3), "d": True})
    assert text == '{"a": [1, 2.0, Infinity], "b": 0.10000000000000001, "c": 0.33333333333333331, "d": true}\n'
    assert json.loads(text)["c"] == 1 / 3


def test_canonical_json_nan():
    assert canonical_json([float("nan"), -float("inf")]) == "[NaN, -Infinity]\n"


# subcommands


def test_snowsphere_writes_files(tmp_path, capsys):
    code, out = run(["snowsphere", "1", "--out", str(tmp_path)], capsys)
    assert code == EXIT_PASS
    rep = json.loads(out.out)
    assert rep["squares"] == 78 and rep["euler_characteristic"] == 2
    assert (tmp_path / "snowsphere_1.json").exists()
    assert (tmp_path / "snowsphere_1.obj").read_text().startswith("v ")


def test_snowsphere_guard_is_input_error(capsys):
    code, out = run(["snowsphere", "5"], capsys)
    assert code == EXIT_INPUT
    assert "guard" in out.err


def test_verify_grid_passes(grid_file, capsys):
    code, out = run(["verify", "--complex", grid_file], capsys)
    assert code == EXIT_PASS
    assert json.loads(out.out)["ok"] is True


def test_verify_with_tiny_L_fails(grid_file, capsys):
    code, out = run(["verify", "--complex", grid_file, "--L", "0.5"], capsys)
    assert code == EXIT_FAIL
    assert json.loads(out.out)["ok"] is False


def test_approximate_self_target(grid_file, tmp_path, capsys):
    out_dir = tmp_path / "run"
    code, out = run(["approximate", "--base", grid_file, "--out", str(out_dir)], capsys)
    assert code == EXIT_PASS
    rep = json.loads(out.out)
    assert rep["passed"] and rep["alpha"] == pytest.approx(1.0)
    for name in ("Y.json", "Y.obj", "d_tilde.json", "certificates.json"):
        assert (out_dir / name).exists()


def test_reports_are_byte_identical(grid_file, capsys):
    argv = ["approximate", "--base", grid_file, "--distortion", "qs", "--seed", "7"]
    first = run(argv, capsys)[1].out
    second = run(argv, capsys)[1].out
    assert first == second


def test_modulus_fixture(capsys):
    code, out = run(["modulus", "--fixture", "rectangle", "--mesh-level", "8"], capsys)
    assert code == EXIT_PASS
    rep = json.loads(out.out)
    assert rep["ok"] and abs(rep["value"] - 1 / 3) < 0.01


def test_modulus_family(grid_file, tmp_path, capsys):
    fam = write(tmp_path / "fam.json", {"E": [0], "F": [8], "G": "all"})
    code, out = run(["modulus", "--complex", grid_file, "--family", fam, "--mesh-level", "4", "--dump-rho"], capsys)
    assert code == EXIT_PASS
    rep = json.loads(out.out)
    assert rep["certificate"]["min_length"] >= 1 - 1e-6
    assert len(rep["rho"]) > 9


def test_modulus_bad_family_is_input_error(grid_file, tmp_path, capsys):
    fam = write(tmp_path / "fam.json", {"E": [0], "F": [0]})
    code, _ = run(["modulus", "--complex", grid_file, "--family", fam], capsys)
    assert code == EXIT_INPUT


def test_distortion_identity_is_linear(line_metric, capsys):
    code, out = run(["distortion", "--src", line_metric, "--eta-linear", "1"], capsys)
    assert code == EXIT_PASS
    assert json.loads(out.out)["bilip"] == pytest.approx(1.0)


def test_distortion_scaling_fails_linear_bound(line_metric, tmp_path, capsys):
    dst = write(tmp_path / "sq.json", FiniteMetric.from_coords((np.arange(6.0) ** 2)[:, None]).to_json())
    code, _ = run(["distortion", "--src", line_metric, "--dst", dst, "--eta-linear", "1"], capsys)
    assert code == EXIT_FAIL


def test_glue_three_points(tmp_path, capsys):
    base = write(tmp_path / "b.json", FiniteMetric.from_coords(np.array([[0.0], [1.0], [4.0]])).to_json())
    sub = write(tmp_path / "s.json", {"S": [0, 2], "d_S": [[0, 1], [1, 0]]})
    code, out = run(["glue", "--base", base, "--subset", sub], capsys)
    assert code == EXIT_PASS
    d = json.loads(out.out)["result"]["dist"]
    assert d[0][2] == 1.0 and d[1][2] == 2.0


def test_glue_precondition_is_input_error(tmp_path, capsys):
    base = write(tmp_path / "b.json", FiniteMetric.from_coords(np.array([[0.0], [1.0]])).to_json())
    sub = write(tmp_path / "s.json", {"S": [0, 1], "d_S": [[0, 5], [5, 0]]})
    assert run(["glue", "--base", base, "--subset", sub], capsys)[0] == EXIT_INPUT
    bad = write(tmp_path / "bad.json", {"T": []})
    assert run(["glue", "--base", base, "--subset", bad], capsys)[0] == EXIT_INPUT


def test_missing_and_malformed_files(tmp_path, capsys):
    assert run(["export-obj", str(tmp_path / "nope.json")], capsys)[0] == EXIT_INPUT
    junk = tmp_path / "junk.json"
    junk.write_text("{not json")
    assert run(["export-obj", str(junk)], capsys)[0] == EXIT_INPUT
    assert run(["verify", "--complex", write(tmp_path / "x.json", {"vertices": [0]})], capsys)[0] == EXIT_INPUT


def test_export_obj(grid_file, tmp_path, capsys):
    target = tmp_path / "o" / "grid.obj"
    assert run(["export-obj", grid_file, "--out", str(target)], capsys)[0] == EXIT_PASS
    lines = target.read_text().splitlines()
    assert sum(line.startswith("f ") for line in lines) == 8


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "quasisphere", "snowsphere", "0"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["triangles"] == 12


def test_unknown_subcommand_exits_with_input_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
