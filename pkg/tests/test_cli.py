"""Command-line driver: exit codes, output text, config merging."""
import json
from pathlib import Path

import numpy as np

from dotscatter.cli import main
from dotscatter.scattering import load_wavefunction

FAST = dict(
    system="qd_2p",
    t0_min_mev=13.0,
    t0_max_mev=15.0,
    num_steps=3,
    length_nm=400.0,
)


def write_config(tmp: Path, **extra) -> str:
    path = tmp / "config.json"
    path.write_text(json.dumps({**FAST, **extra}))
    return str(path)


def sweep_args(tmp: Path, config: str, *more: str) -> list[str]:
    return [
        "sweep",
        "--config", config,
        "--channels-csv", str(tmp / "ch.csv"),
        "--entropy-csv", str(tmp / "en.csv"),
        "--provenance-json", str(tmp / "prov.json"),
        *more,
    ]


class TestConfigErrors:
    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["spectrum", "--config", str(tmp_path / "nope.json")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["spectrum", "--config", str(path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        config = write_config(tmp_path, wel_depth_mev=100.0)
        assert main(["spectrum", "--config", config]) == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_bad_grid_via_flags(self, tmp_path, capsys):
        config = write_config(tmp_path)
        args = sweep_args(tmp_path, config, "--t0-min", "5.0", "--t0-max", "1.0")
        assert main(args) == 1
        assert "t0_max_mev" in capsys.readouterr().err

    def test_negative_incident_energy(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["solve-one", "--config", config, "--t0", "-5.0"]) == 1
        assert "error:" in capsys.readouterr().err


class TestSpectrum:
    def test_reports_levels_and_threshold(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["spectrum", "--config", config]) == 0
        out = capsys.readouterr().out
        assert "level" in out
        assert "gap" in out
        assert "channel  1:" in out

    def test_undeepened_well_has_no_levels(self, tmp_path, capsys):
        config = write_config(tmp_path, well_depth_mev=0.0)
        assert main(["spectrum", "--config", config]) == 0
        assert "no bound states" in capsys.readouterr().out


class TestSolveOne:
    def test_prints_channel_table(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["solve-one", "--config", config, "--t0", "14.5"]) == 0
        out = capsys.readouterr().out
        assert "unitarity defect" in out
        assert "xi =" in out
        assert "channel 0:" in out
        # 14.5 meV sits above the first inelastic threshold of this well
        assert "channel 1:" in out

    def test_dump_roundtrips(self, tmp_path, capsys):
        config = write_config(tmp_path)
        dump = tmp_path / "psi.npz"
        code = main(
            ["solve-one", "--config", config, "--t0", "14.5", "--dump", str(dump)]
        )
        assert code == 0
        assert str(dump) in capsys.readouterr().out
        meta, psi = load_wavefunction(dump)
        assert tuple(int(s) for s in meta["shape"].split()) == psi.shape
        assert np.all(np.isfinite(psi))
        assert np.max(np.abs(psi)) > 0

    def test_solver_failure_exits_2(self, tmp_path, capsys):
        # 104.5 meV nearly ionizes the highest level; its slow evanescent
        # tail still pollutes the lead window at L = 400 and the channel
        # fit refuses to sign off on the solution.
        config = write_config(tmp_path)
        assert main(["solve-one", "--config", config, "--t0", "104.5"]) == 2
        assert "solve failed" in capsys.readouterr().err


class TestSweepCommand:
    def test_clean_sweep_exit_0(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(sweep_args(tmp_path, config)) == 0
        out = capsys.readouterr().out
        assert out.count("status=ok") == 3
        assert (tmp_path / "ch.csv").exists()
        assert (tmp_path / "en.csv").exists()

    def test_quiet_suppresses_progress(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(sweep_args(tmp_path, config, "--quiet")) == 0
        out = capsys.readouterr().out
        assert "status=ok" not in out
        assert "3 rows (0 failed)" in out

    def test_mostly_failed_sweep_exits_2(self, tmp_path, capsys):
        # grid 50, 105.5, 161: the last two ionize the target -> 2/3 failed
        config = write_config(
            tmp_path, t0_min_mev=50.0, t0_max_mev=161.0, num_steps=3
        )
        assert main(sweep_args(tmp_path, config, "--quiet")) == 2
        assert "2 failed" in capsys.readouterr().out

    def test_set_overrides_config_file(self, tmp_path):
        config = write_config(tmp_path, length_nm=474.0)
        args = sweep_args(
            tmp_path, config, "--quiet", "--set", "length_nm=400.0",
            "--set", "num_steps=2", "--set", "t0_max_mev=14.0",
        )
        assert main(args) == 0
        prov = json.loads((tmp_path / "prov.json").read_text())
        assert prov["config"]["length_nm"] == 400.0
        assert prov["config"]["num_steps"] == 2
