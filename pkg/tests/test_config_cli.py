import json
import math
from pathlib import Path

import numpy as np
import pytest

from rstokes import cli
from rstokes.config import ConfigError, parse_config
from rstokes.spectral import spectrum_from_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
[model]
alpha = 0.5
gamma = 1.0

[spectrum]
generator = "interval_dirichlet"
n_modes = 4

[problem]
kind = "{kind}"
data = {{ profile = "coefficients", values = [1.0, 0.5, 0.25, 0.125] }}

[time_grid]
kind = "geometric"
n_nodes = 16
"""


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestConfig:
    def test_minimal(self):
        cfg = parse_config(SMALL.format(kind="forward"))
        assert cfg.spectrum.n_modes == 4 and cfg.kind == "forward"
        assert cfg.time_grid.size == 16 and cfg.time_grid[0] == 0.0
        assert cfg.source.is_zero

    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")))
    def test_shipped_configs_parse(self, path):
        from rstokes.config import load_config

        cfg = load_config(path)
        assert cfg.problem().spectrum.n_modes == cfg.spectrum.n_modes

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="alhpa"):
            parse_config(SMALL.format(kind="forward").replace("alpha", "alhpa"))

    def test_unknown_key_before_missing_table(self):
        text = "[model]\nalpha = 0.5\ngamma = 1.0\nbogus = 1\n"
        with pytest.raises(ConfigError, match="bogus"):
            parse_config(text)

    @pytest.mark.parametrize("old,new,match", [
        ('kind = "forward"', 'kind = "sideways"', "kind"),
        ("alpha = 0.5", "alpha = 1.5", "alpha"),
        ("n_modes = 4", "n_modes = 3", "length|data"),
        ("[model]", "[model]\nhorizon_T = -1.0", "horizon_T"),
        ("[model]", "[modle]", "modle"),
    ])
    def test_rejects(self, old, new, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(SMALL.format(kind="forward").replace(old, new, 1))

    def test_syntax_error(self):
        with pytest.raises(ConfigError, match="syntax"):
            parse_config("[model\n")

    def test_random_profile_seed_override(self):
        text = SMALL.format(kind="forward").replace(
            'data = { profile = "coefficients", values = [1.0, 0.5, 0.25, 0.125] }',
            'data = { profile = "random", seed = 1 }')
        a = parse_config(text).data
        b = parse_config(text, seed=2).data
        assert np.array_equal(a, parse_config(text).data)
        assert not np.array_equal(a, b)

    def test_constant_source(self):
        text = SMALL.format(kind="forward") + (
            '\n[source]\nspatial = { profile = "single_mode", mode = 2, amplitude = 3.0 }\ntime = [1.0]\n')
        cfg = parse_config(text)
        assert cfg.source.is_constant
        assert cfg.source.constant_values.tolist() == [0.0, 3.0, 0.0, 0.0]


class TestCli:
    def test_kernel_eval(self, tmp_path):
        rc = cli.main(["kernel-eval", "--config", str(CONFIGS / "kernel.toml"), "--out", str(tmp_path),
                       "--lambdas", "1,100", "--times", "0,0.5"])
        assert rc == 0
        lines = (tmp_path / "kernel.csv").read_text().splitlines()
        assert lines[0] == "lambda,t,B,A,est_error,status"
        assert len(lines) == 5
        assert lines[1].startswith("1,0,1,1,")

    def test_solve_outputs(self, tmp_path):
        cfg = _write(tmp_path, SMALL.format(kind="forward"))
        out = tmp_path / "o"
        assert cli.main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
        for name in ("trajectories.csv", "spectrum.csv", "coercive.csv", "samples.csv", "diagnostics.json"):
            assert (out / name).exists()
        sp = spectrum_from_csv((out / "spectrum.csv").read_text())
        assert sp.eigenvalues.tolist() == [1, 4, 9, 16]
        diag = json.loads((out / "diagnostics.json").read_text())
        assert diag["kind"] == "forward" and "coercive_check" in diag

    def test_backward_writes_recovered(self, tmp_path):
        cfg = _write(tmp_path, SMALL.format(kind="backward"))
        assert cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "recovered_initial.csv").exists()

    def test_deterministic_bytes(self, tmp_path):
        cfg = _write(tmp_path, SMALL.format(kind="nonlocal"))
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert cli.main(["solve", "--config", str(cfg), "--out", str(d), "--seed", "5"]) == 0
        for f in sorted(a.iterdir()):
            assert f.read_bytes() == (b / f.name).read_bytes(), f.name

    def test_exit_config_error(self, tmp_path):
        cfg = _write(tmp_path, SMALL.format(kind="forward").replace("alpha", "alhpa"))
        assert cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert cli.main(["solve", "--config", str(tmp_path / "missing.toml")]) == 2

    def test_exit_numeric(self, tmp_path):
        cfg = _write(tmp_path, SMALL.format(kind="forward"))
        assert cli.main(["kernel-eval", "--config", str(cfg), "--out", str(tmp_path),
                         "--lambdas", "-1", "--times", "0.5"]) == 3
        assert "DomainError" in (tmp_path / "kernel.csv").read_text()

    def test_verify_failure_exit(self, tmp_path, monkeypatch):
        cfg = _write(tmp_path, SMALL.format(kind="nonlocal"))
        monkeypatch.setattr(cli.checks, "nonlocal_suite",
                            lambda spec: [{"name": "forced", "passed": False}])
        assert cli.main(["verify", "--suite", "nonlocal", "--config", str(cfg), "--out", str(tmp_path)]) == 1
        rep = json.loads((tmp_path / "verify.json").read_text())
        assert rep["passed"] is False

    def test_verify_backward_passes(self, tmp_path):
        cfg = _write(tmp_path, SMALL.format(kind="backward"))
        assert cli.main(["verify", "--suite", "backward", "--config", str(cfg), "--out", str(tmp_path)]) == 0

    def test_demo_illposed(self, tmp_path):
        cfg = _write(tmp_path, SMALL.format(kind="backward"))
        rc = cli.main(["demo-illposed", "--config", str(cfg), "--out", str(tmp_path), "--modes", "1,2,4"])
        assert rc == 0
        rows = (tmp_path / "illposed.csv").read_text().splitlines()
        assert rows[0].startswith("k,lambda_k,psi_norm,phi_norm")
        assert len(rows) == 4
        assert cli.main(["demo-illposed", "--config", str(cfg), "--modes", "9"]) == 2
        assert cli.main(["demo-illposed", "--config", str(cfg), "--eps", "1.5"]) == 2

    def test_bad_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2
