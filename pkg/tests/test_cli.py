import csv
import json
from pathlib import Path

import numpy as np
import pytest

import apfx
from apfx.cli import ExperimentConfig, load_config, main, save_config
from apfx.errors import ConfigError


def base_config(out_dir, **overrides):
    cfg = {
        "grid": {"a": 0.0, "b": 1.0, "N": 16},
        "monte_carlo": {"M": 200, "seed": 7, "d_w": 1},
        "problem": {"preset": "gbm", "params": {"mu": 0.0, "sigma": 0.0, "x0": 1.0}},
        "scheme": {"levels": [4, 8, 16], "box": {"rule": "radius_growth", "base_radius": 1.0}},
        "diagnostics": {"battery_count": 6, "battery_seed": 1,
                        "check_trials": 40, "check_m": 16,
                        "tightness": {"deltas": [0.25, 0.125], "rho_values": [0.4, 0.2],
                                      "trials": 2, "family_count": 2, "pair_count": 24}},
        "output_dir": str(out_dir),
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, data, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def tree_bytes(root):
    return {p.name: p.read_bytes() for p in sorted(Path(root).iterdir())}


class TestConfig:
    def test_round_trip_identity(self, tmp_path):
        cfg = ExperimentConfig.from_dict(base_config(tmp_path / "out"))
        p = tmp_path / "rt.json"
        save_config(cfg, p)
        again = load_config(p)
        assert again == cfg
        save_config(again, tmp_path / "rt2.json")
        assert (tmp_path / "rt.json").read_bytes() == (tmp_path / "rt2.json").read_bytes()

    def test_unknown_keys_rejected(self, tmp_path):
        data = base_config(tmp_path / "out")
        data["grid"]["gamma"] = 2
        with pytest.raises(ConfigError, match="unknown keys"):
            ExperimentConfig.from_dict(data)
        data = base_config(tmp_path / "out")
        data["extra_section"] = {}
        with pytest.raises(ConfigError, match="unknown keys"):
            ExperimentConfig.from_dict(data)

    def test_missing_section(self, tmp_path):
        data = base_config(tmp_path / "out")
        del data["scheme"]
        with pytest.raises(ConfigError, match="missing required section"):
            ExperimentConfig.from_dict(data)

    def test_level_divisibility_validated(self, tmp_path):
        data = base_config(tmp_path / "out")
        data["scheme"]["levels"] = [5, 16]
        with pytest.raises(ConfigError, match="divide"):
            ExperimentConfig.from_dict(data)

    def test_empty_levels_rejected(self, tmp_path):
        data = base_config(tmp_path / "out")
        data["scheme"]["levels"] = []
        with pytest.raises(ConfigError, match="levels"):
            ExperimentConfig.from_dict(data)

    def test_preset_xor_operator(self, tmp_path):
        data = base_config(tmp_path / "out")
        data["problem"] = {"preset": "gbm", "operator": "ito"}
        with pytest.raises(ConfigError, match="exactly one"):
            ExperimentConfig.from_dict(data)


class TestSolve:
    def test_zero_coefficient_gbm(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, base_config(out))
        assert main(["solve", "--config", cfg]) == 0
        for name in ("levels.csv", "pairwise.csv", "summary.csv", "exceedance.csv",
                     "solution.bin", "alpha_4.bin", "alpha_8.bin", "alpha_16.bin"):
            assert (out / name).exists(), name
        rows = read_csv(out / "summary.csv")
        assert all(float(r["mean_0"]) == 1.0 for r in rows)
        sol = apfx.load_ensemble(out / "solution.bin", 0.0, 1.0)
        assert np.all(sol.values == 1.0)

    def test_run_twice_bit_identical(self, tmp_path):
        data = base_config(tmp_path / "ignored")
        data["problem"]["params"] = {"mu": 0.05, "sigma": 0.2, "x0": 1.0}
        cfg = write_config(tmp_path, data)
        assert main(["solve", "--config", cfg, "--output", str(tmp_path / "a")]) == 0
        assert main(["solve", "--config", cfg, "--output", str(tmp_path / "b")]) == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_threads_flag_does_not_change_results(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path / "ignored"))
        assert main(["solve", "--config", cfg, "--output", str(tmp_path / "t1"),
                     "--threads", "1"]) == 0
        assert main(["solve", "--config", cfg, "--output", str(tmp_path / "t4"),
                     "--threads", "4"]) == 0
        assert tree_bytes(tmp_path / "t1") == tree_bytes(tmp_path / "t4")

    def test_seed_override_changes_solution(self, tmp_path):
        data = base_config(tmp_path / "ignored")
        data["problem"]["params"] = {"mu": 0.05, "sigma": 0.2, "x0": 1.0}
        cfg = write_config(tmp_path, data)
        main(["solve", "--config", cfg, "--output", str(tmp_path / "s7")])
        main(["solve", "--config", cfg, "--output", str(tmp_path / "s8"), "--seed", "8"])
        a = (tmp_path / "s7" / "solution.bin").read_bytes()
        b = (tmp_path / "s8" / "solution.bin").read_bytes()
        assert a != b

    def test_flagged_nonconvergence_exit_code(self, tmp_path):
        # Picard route (coarse level) starved of iterations: flagged, exit 2
        data = base_config(tmp_path / "out")
        data["problem"]["params"] = {"mu": 0.5, "sigma": 0.4, "x0": 1.0}
        data["scheme"] = {"levels": [4], "box": {"rule": "radius_growth", "base_radius": 1.0},
                          "max_iter": 1, "tol": 1e-12}
        cfg = write_config(tmp_path, data)
        assert main(["solve", "--config", cfg]) == 2
        assert (tmp_path / "out" / "levels.csv").exists()

    def test_divisibility_error_exit_code(self, tmp_path, capsys):
        data = base_config(tmp_path / "out")
        data["scheme"]["levels"] = [3]
        cfg = write_config(tmp_path, data)
        assert main(["solve", "--config", cfg]) == 1
        assert "divide" in capsys.readouterr().err

    def test_malformed_json_exit_code(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert main(["solve", "--config", str(p)]) == 1
        assert "config" in capsys.readouterr().err


class TestScheme:
    def test_narrow_artifacts_written(self, tmp_path):
        out = tmp_path / "out"
        data = base_config(out)
        data["problem"]["params"] = {"mu": 0.05, "sigma": 0.2, "x0": 1.0}
        cfg = write_config(tmp_path, data)
        assert main(["scheme", "--config", cfg]) == 0
        for name in ("narrow.csv", "narrow_flags.csv", "strong_limit.csv",
                     "levels.csv", "solution.bin"):
            assert (out / name).exists(), name
        rows = read_csv(out / "narrow.csv")
        assert {r["functional"] for r in rows} >= {"endpoint_abs", "sup_norm", "time_average"}
        verdicts = {r["verdict"] for r in read_csv(out / "strong_limit.csv")}
        assert verdicts <= {"strong-limit-candidate", "inconclusive"}

    def test_deterministic(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path / "ignored"))
        main(["scheme", "--config", cfg, "--output", str(tmp_path / "a")])
        main(["scheme", "--config", cfg, "--output", str(tmp_path / "b")])
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


class TestCheckOp:
    def run_op(self, tmp_path, name, out_name):
        out = tmp_path / out_name
        data = base_config(out)
        data["problem"] = {"operator": name}
        cfg = write_config(tmp_path, data, name=f"{out_name}.json")
        code = main(["check-op", "--config", cfg])
        return code, out

    def test_ito_passes(self, tmp_path):
        code, out = self.run_op(tmp_path, "ito", "ito")
        assert code == 0
        rows = read_csv(out / "check_op.csv")
        assert all(int(r["failures"]) == 0 for r in rows)
        assert {r["check"] for r in rows} == {"locality", "adaptedness"}

    def test_nonlocal_demo_fails(self, tmp_path):
        code, out = self.run_op(tmp_path, "nonlocal_mean", "nonlocal")
        assert code == 3
        loc_rows = [r for r in read_csv(out / "check_op.csv") if r["check"] == "locality"]
        assert int(loc_rows[0]["failures"]) > 0
        assert loc_rows[0]["counterexample"]

    def test_anticipating_demo_fails(self, tmp_path):
        code, out = self.run_op(tmp_path, "anticipating_endpoint", "anticipating")
        assert code == 3

    def test_unknown_operator_config_error(self, tmp_path):
        code, _ = self.run_op(tmp_path, "wormhole", "unknown")
        assert code == 1

    def test_deterministic(self, tmp_path):
        data = base_config(tmp_path / "ignored")
        data["problem"] = {"operator": "ito"}
        cfg = write_config(tmp_path, data)
        main(["check-op", "--config", cfg, "--output", str(tmp_path / "a")])
        main(["check-op", "--config", cfg, "--output", str(tmp_path / "b")])
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


class TestTightness:
    def test_ito_reports(self, tmp_path):
        out = tmp_path / "out"
        data = base_config(out)
        data["problem"] = {"operator": "ito"}
        cfg = write_config(tmp_path, data)
        assert main(["tightness", "--config", cfg]) == 0
        for name in ("modulus.csv", "kolmogorov.csv", "tightprobe.csv", "ucontinuity.csv"):
            assert (out / name).exists(), name
        probe = read_csv(out / "tightprobe.csv")[0]
        assert float(probe["exceedance"]) < 0.05
        kol = read_csv(out / "kolmogorov.csv")
        assert all(r["degenerate"] == "0" for r in kol)

    def test_constant_operator_degenerate_flag_exit_zero(self, tmp_path):
        out = tmp_path / "out"
        data = base_config(out)
        data["problem"] = {"operator": "constant_unit"}
        cfg = write_config(tmp_path, data)
        assert main(["tightness", "--config", cfg]) == 0
        kol = read_csv(out / "kolmogorov.csv")
        assert all(r["degenerate"] == "1" for r in kol)

    def test_deterministic(self, tmp_path):
        data = base_config(tmp_path / "ignored")
        data["problem"] = {"operator": "ito"}
        cfg = write_config(tmp_path, data)
        main(["tightness", "--config", cfg, "--output", str(tmp_path / "a")])
        main(["tightness", "--config", cfg, "--output", str(tmp_path / "b")])
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


class TestLocalize:
    def test_ramp_stopping_nodes(self, tmp_path):
        out = tmp_path / "out"
        data = base_config(out)
        data["grid"] = {"a": 0.0, "b": 1.0, "N": 64}
        data["scheme"]["levels"] = [64]
        data["problem"] = {"preset": "gbm", "params": {"mu": 0.05, "sigma": 0.2, "x0": 1.0}}
        data["localization"] = {"radii": [0.5, 1.0, 2.0]}
        cfg = write_config(tmp_path, data)
        assert main(["localize", "--config", cfg]) == 0
        rows = read_csv(out / "stopping.csv")
        assert len(rows) == 200
        assert (out / "solution.bin").exists()

    def test_missing_radii_config_error(self, tmp_path):
        cfg = write_config(tmp_path, base_config(tmp_path / "out"))
        assert main(["localize", "--config", cfg]) == 1

    def test_deterministic(self, tmp_path):
        data = base_config(tmp_path / "ignored")
        data["localization"] = {"radii": [1.0, 2.0]}
        cfg = write_config(tmp_path, data)
        main(["localize", "--config", cfg, "--output", str(tmp_path / "a")])
        main(["localize", "--config", cfg, "--output", str(tmp_path / "b")])
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
