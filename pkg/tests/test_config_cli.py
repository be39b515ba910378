import csv
import os

import numpy as np
import pytest
import yaml
from scipy.io import mmwrite

from ssr.cli import fmt, main, summary_path
from ssr.config import DEFAULTS, config_from_dict, parse_config
from ssr.errors import ConfigError

HERE = os.path.dirname(__file__)
CONFIGS = os.path.join(HERE, "..", "configs")


def base(**extra):
    data = {"system": {"model": "two_dof", "params": {"c": 0.3},
                       "nonlinearity": {"type": "cubic", "coeff": 0.5}},
            "forcing": {"type": "harmonic", "amplitudes": [0.01, 0.01], "omega": 0.5}}
    data.update(extra)
    return data


def write(tmp_path, data, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = [l for l in lines if l.startswith("#")]
    rows = list(csv.DictReader([l for l in lines if not l.startswith("#")]))
    return header, rows


class TestConfig:
    def test_defaults(self):
        cfg = config_from_dict(base())
        assert cfg.solver == DEFAULTS["solver"]
        assert cfg.sweep["points"] == 100
        assert cfg.build_system().n == 2
        assert cfg.build_forcing().Omega[0] == 0.5

    def test_all_problems_reported(self):
        data = base(solver={"method": "secant", "m": 4, "tol": -1}, extra={})
        with pytest.raises(ConfigError) as info:
            config_from_dict(data)
        text = "\n".join(info.value.problems)
        for needle in ("solver.method", "solver.m", "solver.tol", "unknown section 'extra'"):
            assert needle in text

    def test_missing_matrix_file(self, tmp_path):
        data = {"system": {"model": "matrices", "M": "M.mtx", "C": "C.mtx", "K": "K.mtx"},
                "forcing": {"type": "harmonic", "amplitudes": [1.0, 0.0]}}
        with pytest.raises(ConfigError) as info:
            config_from_dict(data, str(tmp_path))
        assert any(str(tmp_path / "M.mtx") in p for p in info.value.problems)

    def test_matrix_market(self, tmp_path):
        K = np.array([[2.0, -1.0], [-1.0, 2.0]])
        for name, mat in (("M", np.eye(2)), ("C", 0.1 * K), ("K", K)):
            mmwrite(str(tmp_path / f"{name}.mtx"), mat)
        data = {"system": {"model": "matrices", "M": "M.mtx", "C": "C.mtx", "K": "K.mtx"},
                "forcing": {"type": "harmonic", "amplitudes": [1.0, 0.0]}}
        sys = parse_config(write(tmp_path, data)).build_system()
        assert np.allclose(sys.K, K) and np.allclose(sys.C, 0.1 * K)

    def test_echo_round_trip(self):
        cfg = parse_config(os.path.join(CONFIGS, "chain.yaml"))
        again = config_from_dict(yaml.safe_load(cfg.echo()), cfg.base_dir)
        assert again.to_dict() == cfg.to_dict()
        assert again.build_system().n == 20

    def test_yaml_error_position(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("system: [unclosed\n")
        with pytest.raises(ConfigError) as info:
            parse_config(str(path))
        assert "line" in str(info.value)

    def test_play_requires_parameters(self):
        data = base()
        data["system"]["nonlinearity"] = {"type": "play", "alpha": 0.1}
        with pytest.raises(ConfigError, match="1 configuration"):
            config_from_dict(data)


class TestFormatting:
    def test_fmt(self):
        assert fmt(0.1) == "0.10000000000000001"
        assert fmt(True) == "true" and fmt(np.bool_(False)) == "false"
        assert fmt(3) == "3"

    def test_summary_path(self):
        assert summary_path("/a/b/run.csv") == "/a/b/run.summary.yaml"


class TestCommands:
    def test_solve(self, tmp_path):
        out = str(tmp_path / "solve.csv")
        assert main(["solve", "--config", write(tmp_path, base()), "--out", out]) == 0
        header, rows = read_csv(out)
        assert "# command: solve" in header
        assert rows[0]["converged"] == "true" and float(rows[0]["residual"]) <= 1e-8
        summary = yaml.safe_load(open(summary_path(out)))
        assert summary["points"][0]["converged"]

    def test_sweep(self, tmp_path):
        out = str(tmp_path / "sweep.csv")
        data = base(sweep={"omega_start": 0.3, "omega_stop": 2.2, "points": 12}, solver={"m": 64})
        assert main(["sweep", "--config", write(tmp_path, data), "--out", out]) == 0
        _, rows = read_csv(out)
        assert len(rows) == 12
        assert all(r["converged"] == "true" for r in rows)
        assert list(rows[0]) == ["omega", "T", "amp_dof1", "amp_dof2", "converged", "method",
                                 "iterations", "residual"]

    def test_continue_reports_fold(self, tmp_path):
        out = str(tmp_path / "branch.csv")
        cfg = os.path.join(CONFIGS, "two_dof_fold.yaml")
        assert main(["continue", "--config", cfg, "--out", out]) == 0
        _, rows = read_csv(out)
        assert sum(r["fold"] == "true" for r in rows) >= 2
        assert {"arc_param", "tangent_T_sign", "fold"} <= set(rows[0])

    def test_qp_sweep(self, tmp_path):
        out = str(tmp_path / "qp.csv")
        data = {"system": base()["system"],
                "forcing": {"type": "quasiperiodic", "amplitude": 0.01},
                "qp_sweep": {"omega1": [0.8, 1.2, 3], "omega2": [1.5, 1.9, 2], "K": 1}}
        assert main(["qp-sweep", "--config", write(tmp_path, data), "--out", out]) == 0
        _, rows = read_csv(out)
        assert len(rows) == 6
        assert [float(r["omega1"]) for r in rows] == [0.8, 0.8, 1.0, 1.0, 1.2, 1.2]
        assert list(rows[0]) == ["omega1", "omega2", "max_amp", "converged", "method", "iterations"]
        # (1.0, 1.5) is commensurate and is reported per point
        bad = [r for r in rows if r["converged"] == "false"]
        assert [(r["omega1"], r["omega2"]) for r in bad] == [("1", "1.5")]
        summary = yaml.safe_load(open(summary_path(out)))
        assert any("commensurate" in w for w in summary["warnings"])

    def test_backbone(self, tmp_path):
        out = str(tmp_path / "bb.csv")
        data = {"system": {"model": "two_dof", "params": {"c": 0.0},
                           "nonlinearity": {"type": "cubic", "coeff": 0.5}},
                "forcing": {"type": "harmonic", "amplitudes": [0.0, 0.0]},
                "solver": {"m": 32}, "backbone": {"max_points": 5, "dp": 0.05}}
        assert main(["backbone", "--config", write(tmp_path, data), "--out", out]) == 0
        _, rows = read_csv(out)
        assert len(rows) == 6 and "d" in rows[0]

    def test_deterministic(self, tmp_path):
        cfg = write(tmp_path, base(sweep={"omega_start": 0.5, "omega_stop": 1.5, "points": 5}))
        a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        main(["sweep", "--config", cfg, "--out", a])
        main(["sweep", "--config", cfg, "--out", b])
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = write(tmp_path, base(solver={"method": "secant"}))
        assert main(["solve", "--config", cfg]) == 2
        assert "solver.method" in capsys.readouterr().err

    def test_wrong_forcing_for_command(self, tmp_path):
        assert main(["qp-sweep", "--config", write(tmp_path, base()),
                     "--out", str(tmp_path / "x.csv")]) == 2

    def test_overrides_and_echo(self, tmp_path, capsys):
        out = str(tmp_path / "o.csv")
        assert main(["solve", "--config", write(tmp_path, base()), "--out", out, "--nt", "32",
                     "--method", "newton", "--echo"]) == 0
        text = capsys.readouterr().out
        assert "m: 32" in text and "method: newton" in text
        header, rows = read_csv(out)
        assert "# m: 32" in header and rows[0]["method"] == "newton"

    def test_parallel_qp_sweep_identical(self, tmp_path):
        data = {"system": base()["system"],
                "forcing": {"type": "quasiperiodic", "amplitude": 0.01},
                "qp_sweep": {"omega1": [0.81, 1.21, 2], "omega2": [1.51, 1.91, 2], "K": 1}}
        cfg = write(tmp_path, data)
        a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        assert main(["qp-sweep", "--config", cfg, "--out", a]) == 0
        assert main(["qp-sweep", "--config", cfg, "--out", b, "--jobs", "2"]) == 0
        assert open(a, "rb").read() == open(b, "rb").read()
