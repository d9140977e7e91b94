import json

import pytest

from quadmpc.cli import main
from quadmpc.config import flatten_config, save_config

from scenarios import walk_config


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    save_config(cfg, path)
    return str(path)


@pytest.fixture
def quick_cfg(tmp_path):
    cfg = walk_config("nominal", duration=0.3)
    return write_cfg(tmp_path, cfg)


class TestRun:
    def test_run_writes_outputs(self, tmp_path, quick_cfg, capsys):
        out = tmp_path / "out"
        code = main(["run", "--config", quick_cfg, "--out-dir", str(out),
                     "--format", "csv,summary,svg"])
        assert code == 0
        assert (out / "walk_nominal.csv").exists()
        assert (out / "walk_nominal.json").exists()
        assert (out / "walk_nominal.svg").exists()

    def test_missing_config_is_config_error(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json")]) == 1

    def test_bad_config_is_config_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"variant": "sorcery"}')
        assert main(["run", "--config", str(path)]) == 1

    def test_failed_run_exit_code(self, tmp_path):
        cfg = walk_config("nominal", duration=6.0, kg_equivalent=12.0)
        path = write_cfg(tmp_path, cfg)
        code = main(["run", "--config", path, "--out-dir", str(tmp_path / "o")])
        assert code == 2


class TestSweep:
    def test_sweep_table_and_exit(self, tmp_path, capsys):
        base = flatten_config(walk_config("nominal", duration=0.3))
        sweep = {
            "base": base,
            "runs": [
                {"name": "a_nominal", "overrides": {"variant": "nominal"}},
                {"name": "b_l1", "overrides": {"variant": "l1"}},
            ],
        }
        spec = tmp_path / "sweep.json"
        spec.write_text(json.dumps(sweep))
        code = main(["sweep", "--config", str(spec), "--out-dir", str(tmp_path / "o")])
        assert code == 0
        out = capsys.readouterr().out
        assert "a_nominal" in out and "b_l1" in out
        assert (tmp_path / "o" / "a_nominal_nominal.csv").exists()

    def test_sweep_failure_exit_code(self, tmp_path):
        base = flatten_config(walk_config("nominal", duration=6.0, kg_equivalent=12.0))
        sweep = {"base": base, "runs": [{"name": "fails", "overrides": {}}]}
        spec = tmp_path / "sweep.json"
        spec.write_text(json.dumps(sweep))
        assert main(["sweep", "--config", str(spec), "--out-dir", str(tmp_path / "o")]) == 2


class TestRegret:
    def test_regret_pairs_runs(self, tmp_path, capsys):
        cfg = walk_config("rff", duration=0.3)
        path = write_cfg(tmp_path, cfg)
        code = main(["regret", "--config", path, "--out-dir", str(tmp_path / "o")])
        assert code == 0
        assert "dynamic regret" in capsys.readouterr().out
        summary = json.loads((tmp_path / "o" / "walk_rff.json").read_text())
        assert "dynamic_regret" in summary


class TestVerify:
    def test_verify_passes(self, capsys):
        assert main(["verify", "--quick"]) == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out and "[FAIL]" not in out


def test_show_config(capsys):
    assert main(["show-config"]) == 0
    out = capsys.readouterr().out
    assert '"mpc.dt_s"' in out
