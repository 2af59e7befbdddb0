import csv
import io
import json
import math
import subprocess
import sys

import pytest

from diffinv import cli


def run(tmp_path, config, *args, name="cfg.json"):
    path = tmp_path / name
    path.write_text(config if isinstance(config, str) else json.dumps(config))
    out = io.StringIO()
    code = cli.main([args[0], "--config", str(path), *args[1:]], stdout=out)
    return code, out.getvalue()


def _fields(text):
    return {k: json.loads(v) for k, v in (line.split(": ", 1) for line in text.splitlines())}


def test_classify_bm_interval(tmp_path):
    code, out = run(tmp_path, {"diffusion": {"kind": "brownian", "domain": [1, 4]}, "x0": 2},
                    "classify")
    assert code == 0
    f = _fields(out)
    assert f["type"] == "Type1"
    assert f["h_geometric_mean"] == pytest.approx(2.0)
    assert f["h_arithmetic_mean"] == pytest.approx(2.5)


@pytest.mark.parametrize("diffusion,label", [
    ({"kind": "bessel", "params": {"delta": 3}}, "Type3"),
    ({"kind": "brownian_drift", "params": {"mu": -1, "domain": [0, "inf"]}}, "Type2"),
    ({"kind": "brownian", "domain": ["-inf", "inf"]}, "Type4"),
])
def test_classify_types(tmp_path, diffusion, label):
    code, out = run(tmp_path, {"diffusion": diffusion}, "classify")
    assert code == 0 and _fields(out)["type"] == label


def _invert_rows(out):
    dump, table = out.split("\n\n", 1)
    json.loads(dump)
    rows = list(csv.reader(io.StringIO(table)))
    assert rows[0] == ["x", "I_x", "h_x"]
    return {float(r[0]): (float(r[1]), float(r[2])) for r in rows[1:]}


def test_invert_examples(tmp_path):
    code, out = run(tmp_path, {"diffusion": {"kind": "brownian_drift", "params": {"mu": -1}},
                               "x0": 0.5 * math.log(1 + math.sqrt(2)), "x_points": [1.0]},
                    "invert")
    assert code == 0
    ix, _ = _invert_rows(out)[1.0]
    assert ix == pytest.approx(0.5 * math.log(1 / math.tanh(1.0)), rel=1e-12)
    code, out = run(tmp_path, {"diffusion": "bessel", "x0": 1, "x_points": [2.0]}, "invert")
    assert _invert_rows(out)[2.0][0] == pytest.approx(0.5, rel=1e-12)
    code, out = run(tmp_path, {"diffusion": {"kind": "brownian", "domain": [0, 3]}, "x0": 1,
                               "x_points": [2.0]}, "invert")
    assert _invert_rows(out)[2.0][0] == pytest.approx(1 / 3, rel=1e-12)


def test_invert_writes_files(tmp_path):
    outdir = tmp_path / "out"
    code, out = run(tmp_path, {"diffusion": "bessel", "x0": 1, "grid": 5}, "invert",
                    "--out", str(outdir))
    assert code == 0
    assert json.loads((outdir / "inversion.json").read_text()) == json.loads(out)
    rows = list(csv.reader(io.StringIO((outdir / "inversion.csv").read_text())))
    assert rows[0] == ["x", "I_x", "h_x"] and len(rows) == 6


def test_simulate_csv_and_binary(tmp_path):
    outdir = tmp_path / "sim"
    cfg = {"diffusion": "bessel", "x0": 1, "dt": 0.01, "max_time": 0.1, "n_paths": 3,
           "output": {"paths_bin": "paths.bin"}}
    code, _ = run(tmp_path, cfg, "simulate", "--out", str(outdir), "--workers", "2")
    assert code == 0
    rows = list(csv.reader(io.StringIO((outdir / "paths.csv").read_text())))
    assert rows[0] == ["path_id", "t", "x", "A_t"]
    assert {r[0] for r in rows[1:]} == {"0", "1", "2"}
    assert (outdir / "paths.bin").read_bytes()[:8] == b"DIFFPATH"


def test_output_is_byte_stable_and_seed_override(tmp_path):
    cfg = {"diffusion": "bessel", "x0": 1, "dt": 0.01, "max_time": 0.1, "n_paths": 2}
    _, a = run(tmp_path, cfg, "simulate")
    _, b = run(tmp_path, cfg, "simulate", "--workers", "2")
    _, c = run(tmp_path, cfg, "simulate", "--seed", "5")
    assert a == b and a != c


def test_verify_pass(tmp_path):
    outdir = tmp_path / "rep"
    cfg = {"diffusion": {"kind": "brownian", "domain": [0, 3]}, "x0": 1, "dt": 0.01,
           "n_paths": 20000, "x_points": [0.5], "checks": ["hitting_symmetry"], "seed": 1}
    code, out = run(tmp_path, cfg, "verify", "--out", str(outdir))
    assert code == 0
    assert out.startswith("hitting_symmetry: Pass")
    rows = list(csv.reader(io.StringIO((outdir / "report.csv").read_text())))
    assert rows[0] == ["identity", "D", "p_value", "verdict"]
    assert json.loads((outdir / "report.json").read_text())["verdict"] == "Pass"
    assert (outdir / "hitting_symmetry.txt").read_text() == out


def test_verify_fail_exit_code(tmp_path):
    cfg = {"diffusion": "bessel", "n_paths": 200, "checks": ["calibration"],
           "thresholds": {"alpha": 0.5}}
    code, out = run(tmp_path, cfg, "verify")
    assert code == 1 and "Fail" in out


@pytest.mark.parametrize("config", [
    "{not json",
    json.dumps({"diffusion": "ou"}),
    json.dumps({"diffusion": "bessel", "dt": -1}),
    json.dumps({"diffusion": "bessel", "checks": []}),
])
def test_config_errors_exit_2(tmp_path, config, capsys):
    cmd = "verify" if "checks" in config else "classify"
    code, _ = run(tmp_path, config, cmd)
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_and_bad_args(tmp_path):
    assert cli.main(["classify", "--config", str(tmp_path / "nope.json")],
                    stdout=io.StringIO()) == 2
    assert cli.main(["explode"], stdout=io.StringIO()) == 2
    code, _ = run(tmp_path, {"diffusion": "bessel"}, "classify", "--workers", "0")
    assert code == 2


def test_runtime_error_exit_3(tmp_path, capsys):
    code, _ = run(tmp_path, {"diffusion": {"kind": "brownian", "domain": [0, 3]}, "x0": 5},
                  "invert")
    assert code == 3
    assert "DomainError" in capsys.readouterr().err


def test_custom_diffusion(tmp_path):
    cfg = {"diffusion": {"kind": "custom", "domain": [0, "inf"], "sigma": "1",
                         "drift": "1/x"}, "x0": 1, "x_points": [4.0]}
    code, out = run(tmp_path, cfg, "invert")
    assert code == 0 and _invert_rows(out)[4.0][0] == pytest.approx(0.25, rel=1e-9)


def test_module_entry_point(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"diffusion": "bessel"}))
    p = subprocess.run([sys.executable, "-m", "diffinv.cli", "classify", "--config", str(path)],
                       capture_output=True, text=True)
    assert p.returncode == 0 and "Type3" in p.stdout
    h = subprocess.run([sys.executable, "-m", "diffinv.cli", "--help"],
                       capture_output=True, text=True)
    assert "hyperbolic_bessel3" in h.stdout
