import json
import subprocess
import sys

import pytest

from evgp.cli import RunConfig, build_parser, main, resolve_config
from evgp.cycles import VehicleParams
from evgp.powertrain import MotorParams


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestConfig:
    def test_defaults_are_reference(self):
        cfg = RunConfig()
        assert cfg.vehicle_params() == VehicleParams()
        assert cfg.motor_params() == MotorParams()
        assert cfg.ratio_bounds == (1.0, 18.0)

    def test_single_override(self):
        cfg = RunConfig()
        cfg.update({"vehicle.base_mass": 1000})
        vp = cfg.vehicle_params()
        assert vp.mass == 1700
        assert vp == VehicleParams(base_mass=1000)

    def test_layering(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"k": 6, "seed": 4, "motor.max_speed": 12000}))
        args = build_parser().parse_args(["preprocess", "--config", str(p), "--set", "seed=5", "--k", "7"])
        cfg = resolve_config(args)
        assert (cfg.k, cfg.seed, cfg.motor["max_speed"]) == (7, 5, 12000)

    @pytest.mark.parametrize("flat", [{"bogus": 1}, {"vehicle.wings": 2}])
    def test_unknown_keys(self, flat):
        with pytest.raises(ValueError):
            RunConfig().update(flat)

    def test_nested_file_rejected(self, tmp_path, capsys):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"vehicle": {"mass": 1}}))
        code, _, err = run(["preprocess", "--config", str(p)], capsys)
        assert code == 1 and "flat object" in err


class TestCommands:
    def test_preprocess(self, tmp_path, capsys, wltc_loads):
        out = tmp_path / "s.csv"
        code, _, err = run(["preprocess", "--cycle", "wltc.csv", "--out", str(out)], capsys)
        assert code == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "torque_nm,speed_rpm,weight,is_guard"
        n = len(wltc_loads)
        assert sum(r.endswith(",0") for r in rows[1:]) == n
        assert f"{n} scenarios, 2 guards" in err

    def test_preprocess_file_and_unit(self, tmp_path, capsys):
        c = tmp_path / "c.csv"
        c.write_text("t,v\n0,0\n1,18\n2,36\n3,36\n")
        code, out, _ = run(["preprocess", "--cycle", str(c), "--velocity-unit", "km/h", "--no-guards"], capsys)
        assert code == 0 and len(out.splitlines()) == 3

    def test_optimize_cvt_and_rerun(self, tmp_path, capsys):
        argv = ["optimize", "--cycle", "wltc", "--k", "10", "--topology", "cvt"]
        assert run(argv + ["--out", str(tmp_path / "a.json")], capsys)[0] == 0
        assert run(argv + ["--out", str(tmp_path / "b.json")], capsys)[0] == 0
        a = (tmp_path / "a.json").read_bytes()
        assert a == (tmp_path / "b.json").read_bytes()
        d = json.loads(a)
        assert d["topology"] == "cvt" and len(d["ratios"]) == 12

    def test_optimize_rejects_fixed(self, capsys):
        code, _, err = run(["optimize", "--cycle", "wltc", "--set", "topology=fixed"], capsys)
        assert code == 1 and "migp" in err

    @pytest.mark.parametrize("engine", ["benders", "heuristic", "bruteforce", "benders+heuristic"])
    def test_migp(self, tmp_path, capsys, engine):
        out = tmp_path / engine
        code, _, _ = run(["migp", "--cycle", "wltc", "--k", "6", "--engine", engine, "--out", str(out)], capsys)
        assert code == 0
        res = json.loads((out / "result.json").read_text())
        assert len(res["assignment"]) == 6 and res["assignment"][0] == 1
        assert (out / "cut_log.csv").exists() == engine.startswith("benders")
        assert (out / "trace.json").exists() == (engine == "heuristic")

    def test_migp_byte_identical(self, tmp_path, capsys):
        for d in ("a", "b"):
            run(["migp", "--k", "6", "--seed", "2", "--engine", "benders", "--out", str(tmp_path / d)], capsys)
        for f in ("result.json", "cut_log.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_bruteforce_refusal(self, tmp_path, capsys):
        code, _, err = run(["migp", "--engine", "bruteforce", "--k", "20", "--out", str(tmp_path / "x")], capsys)
        assert code == 1 and "capped at n <= 16" in err
        assert not (tmp_path / "x").exists()

    def test_compare_markdown(self, capsys):
        code, out, _ = run(["compare", "--cycles", "hwfet", "--ks", "6", "--seeds", "1", "--format", "markdown"],
                           capsys)
        assert code == 0
        lines = out.splitlines()
        assert lines[0].startswith("| ID | BF/P | B/P |") and lines[2].endswith("| hwfet |")

    def test_effmap(self, capsys):
        code, out, _ = run(["effmap", "--n-torque", "3", "--n-speed", "4", "--power-factor", "2"], capsys)
        assert code == 0 and len(out.splitlines()) == 13


class TestErrors:
    def test_unknown_cycle(self, capsys):
        code, _, err = run(["preprocess", "--cycle", "nycc"], capsys)
        assert code == 1 and "available fixtures" in err and "wltc" in err

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["optimize", "--bogus"])
        assert e.value.code == 2

    def test_missing_config(self, capsys):
        code, _, err = run(["effmap", "--config", "/nonexistent.json"], capsys)
        assert code == 1 and "not found" in err

    def test_fixture_env(self, tmp_path, capsys, monkeypatch):
        (tmp_path / "flat.csv").write_text("t,v\n0,0\n1,1\n2,2\n3,2\n")
        monkeypatch.setenv("EVGP_FIXTURE_DIR", str(tmp_path))
        code, out, _ = run(["preprocess", "--cycle", "flat", "--no-guards"], capsys)
        assert code == 0 and len(out.splitlines()) == 3


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "evgp.cli", "effmap", "--n-torque", "2", "--n-speed", "2"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and r.stdout.startswith("torque_nm,")
