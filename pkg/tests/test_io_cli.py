import json
import math
import struct

import numpy as np
import pytest

from fracperiod.cli import EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_OK, EXIT_VERIFY, main
from fracperiod.config import ConfigError, load_config, parse_config
from fracperiod.io import FormatError, dumps, read_fhst, write_csv, write_fhst

SMALL = {"grid": {"cutoff": 12}, "solve": {"sweep_cutoff": 8}}


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


class TestFhst:
    def test_layout_matches_hand_packed_bytes(self, tmp_path):
        samples = np.arange(6, dtype=float).reshape(2, 3) / 7
        p = write_fhst(tmp_path / "a.fhst", samples, 2 * math.pi, 1.0, 0.5)
        expected = (b"FHST" + struct.pack("<II", 1, 2) + struct.pack("<2Q", 2, 3)
                    + struct.pack("<3d", 2 * math.pi, 1.0, 0.5) + struct.pack("<6d", *samples.ravel()))
        assert p.read_bytes() == expected

    def test_round_trip(self, tmp_path, rng):
        samples = rng.normal(size=(5, 7, 3))
        back = read_fhst(write_fhst(tmp_path / "b.fhst", samples, 1.3, 0.2, 0.75))
        assert np.array_equal(back.samples, samples)
        assert (back.T, back.m, back.s, back.y_nodes) == (1.3, 0.2, 0.75, None)
        assert back.grid_sizes == (5, 7, 3)

    def test_round_trip_with_y(self, tmp_path, rng):
        y = np.linspace(0, 2, 4)
        samples = rng.normal(size=(4, 5, 5))
        back = read_fhst(write_fhst(tmp_path / "c.fhst", samples, 1.0, 1.0, 0.5, y_nodes=y))
        assert np.array_equal(back.samples, samples) and np.array_equal(back.y_nodes, y)
        assert back.grid_sizes == (5, 5)

    def test_errors(self, tmp_path):
        with pytest.raises(FormatError):
            write_fhst(tmp_path / "d.fhst", np.zeros((3, 4)), 1.0, 1.0, 0.5, y_nodes=[0.0, 1.0])
        with pytest.raises(FormatError):
            write_fhst(tmp_path / "d.fhst", np.zeros(3, dtype=complex), 1.0, 1.0, 0.5)
        bad = tmp_path / "bad.fhst"
        bad.write_bytes(b"XXXX" + bytes(40))
        with pytest.raises(FormatError):
            read_fhst(bad)
        good = write_fhst(tmp_path / "e.fhst", np.ones((3, 3)), 1.0, 1.0, 0.5).read_bytes()
        bad.write_bytes(good[:-4])
        with pytest.raises(FormatError):
            read_fhst(bad)


class TestJson:
    def test_seventeen_digits(self):
        text = dumps({"x": 0.1, "y": [1 / 3, 2.0], "z": np.float64(math.pi)})
        doc = json.loads(text)
        assert doc["x"] == 0.1 and doc["y"][0] == 1 / 3 and doc["z"] == math.pi
        assert "0.10000000000000001" in text and "3.1415926535897931" in text

    def test_deterministic_ordering(self):
        assert dumps({"b": 1, "a": 2}) == dumps({"a": 2, "b": 1})
        assert dumps({"a": 1}).endswith("\n")

    def test_numpy_and_nonfinite(self):
        doc = json.loads(dumps({"arr": np.array([1.5, 2.5]), "n": np.int64(3), "t": np.bool_(True),
                                "inf": math.inf}))
        assert doc == {"arr": [1.5, 2.5], "n": 3, "t": True, "inf": "inf"}

    def test_csv(self, tmp_path):
        p = write_csv(tmp_path / "t.csv", ["a", "b"], [[0.1, 2], [1 / 3, 4]])
        lines = p.read_text().splitlines()
        assert lines[0] == "a,b" and float(lines[2].split(",")[0]) == 1 / 3


class TestConfig:
    def test_defaults(self):
        run = load_config()
        assert run.torus.lambda_inf == 2.0 and run.torus.T == 2 * math.pi
        assert run.nonlinearity["kind"] == "rational_odd"

    def test_pi_strings(self):
        assert parse_config({"torus": {"T": "2pi"}}).torus.T == 2 * math.pi
        assert parse_config({"torus": {"T": "0.5*pi"}}).torus.T == 0.5 * math.pi

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="lamda_inf"):
            parse_config({"torus": {"lamda_inf": 2}})

    @pytest.mark.parametrize("doc", [{"torus": {"s": 1.5}}, {"torus": {"N": "two"}},
                                     {"nonlinearity": {"kind": "cubic"}}, {"solver": {"tol": -1}},
                                     {"grid": {"half_extents": [4]}}])
    def test_invalid(self, doc):
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_overrides(self):
        run = parse_config({"seed": 3}, seed=9, output_dir="x")
        assert run.seed == 9 and run.solver.seed == 9 and run.output_dir == "x"


class TestCliErrors:
    def test_malformed_json(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text('{"torus": {"T": 1,,}}')
        assert main(["spectrum", "--config", str(p), "--output-dir", str(tmp_path)]) == EXIT_CONFIG
        assert "line 1, column" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"torus": {"speed": 1}})
        assert main(["check", "--config", cfg, "--output-dir", str(tmp_path)]) == EXIT_CONFIG
        assert "speed" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["check", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG


class TestCliCommands:
    def test_spectrum(self, tmp_path):
        assert main(["spectrum", "--output-dir", str(tmp_path), "--emit-csv"]) == EXIT_OK
        doc = json.loads((tmp_path / "spectrum.json").read_text())
        lams = [row["lambda"] for row in doc["spectrum"] for _ in range(row["multiplicity"])]
        assert lams[:9] == pytest.approx([1.0] + [math.sqrt(2)] * 4 + [math.sqrt(3)] * 4, abs=1e-15)
        assert (tmp_path / "spectrum.csv").exists()
        assert "output_dir" not in doc["config"]

    def test_spectrum_resonant(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"torus": {"lambda_inf": 1.0}})
        assert main(["spectrum", "--config", cfg, "--output-dir", str(tmp_path)]) == EXIT_OK
        assert "reson" in (capsys.readouterr().err + (tmp_path / "spectrum.json").read_text()).lower()
        assert main(["spectrum", "--config", cfg, "--output-dir", str(tmp_path), "--strict"]) == EXIT_HYPOTHESIS

    def test_check(self, tmp_path):
        assert main(["check", "--output-dir", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "hypotheses.json").read_text())
        assert doc["hypotheses"]["branch"] == "multiplicity"
        cfg = write_cfg(tmp_path, {"torus": {"lambda_inf": math.sqrt(3)}})
        assert main(["check", "--config", cfg, "--output-dir", str(tmp_path), "--strict"]) == EXIT_HYPOTHESIS

    def test_solve_constant(self, tmp_path):
        cfg = write_cfg(tmp_path, {"grid": {"cutoff": 4}, "solve": {"initial_constant": 0.6}})
        assert main(["solve", "--config", cfg, "--output-dir", str(tmp_path), "--emit-csv"]) == EXIT_OK
        doc = json.loads((tmp_path / "manifest.json").read_text())
        (rec,) = doc["records"]
        u = read_fhst(tmp_path / rec["file"]).samples
        assert np.allclose(u, math.sqrt(0.5), rtol=0, atol=1e-10)
        assert rec["residual"] <= 1e-10 and (tmp_path / "solution_000.csv").exists()

    def test_solve_sweep(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL)
        assert main(["solve", "--config", cfg, "--output-dir", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert doc["status"] == "ok" and doc["sweep"]["distinct_pairs"] >= 3
        consts = [r for r in doc["records"] if np.ptp(read_fhst(tmp_path / r["file"]).samples) < 1e-10]
        vals = sorted(float(read_fhst(tmp_path / r["file"]).samples.mean()) for r in consts)
        assert vals == pytest.approx([-math.sqrt(0.5), math.sqrt(0.5)], abs=1e-10)
        for r in doc["records"]:
            assert r["weak_form_defect"] <= 1e-10 and r["residual"] <= 1e-10

    def test_solve_strict_resonant(self, tmp_path):
        cfg = write_cfg(tmp_path, {"torus": {"lambda_inf": 1.0}, "grid": {"cutoff": 4}})
        assert main(["solve", "--config", cfg, "--output-dir", str(tmp_path), "--strict"]) == EXIT_HYPOTHESIS
        assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "no_solution"

    def test_extend(self, tmp_path):
        cfg = write_cfg(tmp_path, {"extend": {"cutoff": 4, "y_count": 5}})
        assert main(["extend", "--config", cfg, "--output-dir", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "extension.json").read_text())
        assert doc["energy_ratio"] == pytest.approx(1.0, abs=1e-6)
        assert doc["conormal_relative_error"] <= 1e-5 and doc["trace_error"] <= 1e-12
        data = read_fhst(tmp_path / "extension.fhst")
        assert data.samples.shape == (5, 9, 9) and data.y_nodes[-1] == 5.0

    def test_extend_from_solution(self, tmp_path):
        cfg = write_cfg(tmp_path, {"grid": {"cutoff": 4}, "solve": {"initial_constant": 0.6}})
        assert main(["solve", "--config", cfg, "--output-dir", str(tmp_path)]) == EXIT_OK
        cfg2 = write_cfg(tmp_path, {"extend": {"input": str(tmp_path / "solution_000.fhst")}}, "c2.json")
        assert main(["extend", "--config", cfg2, "--output-dir", str(tmp_path)]) == EXIT_OK
        v = read_fhst(tmp_path / "extension.fhst")
        # a constant trace c extends as c * theta(m y), theta(y) = e^{-y} at s = 1/2
        assert np.allclose(v.samples[:, 0, 0], math.sqrt(0.5) * np.exp(-v.y_nodes), atol=1e-10)

    def test_extend_bad_input(self, tmp_path):
        cfg = write_cfg(tmp_path, {"extend": {"input": str(tmp_path / "missing.fhst")}})
        assert main(["extend", "--config", cfg, "--output-dir", str(tmp_path)]) == EXIT_CONFIG

    def test_gradcheck(self, tmp_path):
        assert main(["gradcheck", "--output-dir", str(tmp_path), "--seed", "42"]) == EXIT_OK
        doc = json.loads((tmp_path / "gradcheck.json").read_text())
        assert doc["max_gradient_rel_error"] < 1e-6 and doc["max_hessian_rel_error"] < 1e-6

    def test_gradcheck_failure_exit(self, tmp_path):
        cfg = write_cfg(tmp_path, {"gradcheck": {"trials": 2, "tolerance": 1e-16}})
        assert main(["gradcheck", "--config", cfg, "--output-dir", str(tmp_path)]) == EXIT_VERIFY

    def test_verify(self, tmp_path):
        assert main(["verify", "--output-dir", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "verify.json").read_text())
        assert doc["failed"] == 0 and doc["passed"] == len(doc["checks"]) > 40
