import csv
import filecmp
import json
from pathlib import Path

import pytest
import yaml

from randhenon.cli import EXIT_BUDGET, EXIT_CERTIFICATION, EXIT_CONFIG, main
from randhenon.config import build_config, load_config
from randhenon.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SMALL_WALK = {
    "measure": {"kind": "ping_pong"},
    "seeds": {"start": 0, "count": 3},
    "budgets": {"N_max": 300, "K": 2, "stride": 50, "n_conv": 3},
}


def write_config(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return str(path)


def artifacts(out: Path) -> list[str]:
    return sorted(p.name for p in out.iterdir() if p.name != "run.log")


class TestConfig:
    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            build_config({"measure": {"kind": "ping_pong", "colour": 3}})
        with pytest.raises(ConfigError):
            build_config({"budgets": {"N_mx": 10}})
        with pytest.raises(ConfigError):
            build_config({"extra": 1})

    def test_rationals_must_be_exact(self):
        with pytest.raises(ConfigError):
            build_config({"measure": {"kind": "henon", "p": [0, 0.5, 1]}})
        cfg = build_config({"measure": {"kind": "henon", "p": ["1/3", 0, 1], "jacobian": "1/2"}})
        assert len(cfg.measure) == 1

    def test_seed_forms(self):
        assert build_config({"seeds": {"start": 5, "count": 3}}).seeds == [5, 6, 7]
        assert build_config({"seeds": [4, 2]}).seeds == [4, 2]
        assert build_config({}, {"seed": 9}).seeds == [9]

    def test_bad_budgets(self):
        with pytest.raises(ConfigError):
            build_config({"budgets": {"K": 0}})
        with pytest.raises(ConfigError):
            build_config({"budgets": {"tol": -1}})

    def test_hash_ignores_threads_and_outputs(self):
        a = build_config(SMALL_WALK, {"threads": 1, "out": "x"})
        b = build_config(SMALL_WALK, {"threads": 8, "out": "y"})
        c = build_config(SMALL_WALK, {"budget": 7})
        assert a.config_hash == b.config_hash != c.config_hash

    def test_shipped_configs_load(self):
        for path in sorted(CONFIGS.glob("*.yaml")):
            load_config(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.yaml"))


class TestExitCodes:
    def test_config_error_is_two(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"measure": {"kind": "ping_pong"}, "bogus": True})
        assert main(["walk", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "unknown key" in capsys.readouterr().err

    def test_missing_section_is_two(self, tmp_path):
        cfg = write_config(tmp_path, {"seeds": [0]})
        assert main(["green", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_degenerate_family_is_three(self, tmp_path):
        out = tmp_path / "deg"
        code = main(["filtration", "--config", str(CONFIGS / "degenerate.yaml"), "--out", str(out)])
        assert code == EXIT_CERTIFICATION
        witness = json.loads((out / "witness.json").read_text())
        assert witness["error"] == "ConeObstruction" and witness["witness"]

    def test_budget_exhaustion_is_four(self, tmp_path):
        raw = dict(SMALL_WALK, budgets={"N_max": 40, "K": 30, "stride": 10, "n_conv": 2})
        out = tmp_path / "short"
        assert main(["walk", "--config", write_config(tmp_path, raw), "--out", str(out)]) == EXIT_BUDGET
        summary = json.loads((out / "walk_summary.json").read_text())
        assert summary["partial"] is True

    def test_unresolved_walk_depth_is_four_even_with_threads(self, tmp_path):
        raw = dict(SMALL_WALK, budgets={"N_max": 40, "K": 30, "stride": 10, "n_conv": 2})
        out = tmp_path / "short4"
        cfg = write_config(tmp_path, raw)
        assert main(["walk", "--config", cfg, "--out", str(out), "--threads", "3"]) == EXIT_BUDGET
        assert (out / "walk.csv").exists()

    def test_basepoints_of_a_quintic(self, tmp_path):
        raw = {"input": {"henon": {"p": [0, 0, 0, 0, 0, 1]}}, "budgets": {"L": 3}}
        out = tmp_path / "chain"
        assert main(["basepoints", "--config", write_config(tmp_path, raw), "--out", str(out)]) == 0
        body = json.loads((out / "basepoints.json").read_text())["input"]
        assert body["noether_ok"] is True and body["weighted_count"] == 12


class TestSubcommands:
    def test_decompose(self, tmp_path, capsys):
        out = tmp_path / "henon"
        assert main(["decompose", "--config", str(CONFIGS / "henon.yaml"), "--out", str(out)]) == 0
        assert "round-trip OK" in capsys.readouterr().out
        body = json.loads((out / "decompose.json").read_text())
        assert body["round_trip"] == "OK" and len(body["word"]) == 2

    def test_classify(self, tmp_path):
        out = tmp_path / "cls"
        assert main(["classify", "--config", str(CONFIGS / "henon.yaml"), "--out", str(out)]) == 0
        body = json.loads((out / "classify.json").read_text())
        assert (body["kind"], body["dynamical_degree"], body["translation_length"]) == ("Loxodromic", 2, 2)

    def test_walk_csv(self, tmp_path):
        out = tmp_path / "walk"
        assert main(["walk", "--config", write_config(tmp_path, SMALL_WALK), "--out", str(out)]) == 0
        raw = (out / "walk.csv").read_bytes()
        assert b"\r\n" in raw
        rows = list(csv.DictReader(raw.decode().splitlines()))
        assert list(rows[0])[:3] == ["config_hash", "seed", "n"]
        assert len(rows) == 3 * 6
        summary = json.loads((out / "walk_summary.json").read_text())
        assert rows[0]["config_hash"] == summary["config_hash"]
        assert summary["partial"] is False and set(summary["t_k_at_horizon"]) == {"0", "1", "2"}

    def test_green_and_render(self, tmp_path):
        raw = {"measure": {"kind": "ping_pong"}, "seeds": [1], "points": [[5, 7], [0, 0]],
               "budgets": {"budget": 200},
               "render": {"base": [0, 0], "direction": [1, [0, 1]], "re_range": [-3, 3], "im_range": [-3, 3],
                          "resolution": [6, 4]}}
        cfg = write_config(tmp_path, raw)
        out = tmp_path / "green"
        assert main(["green", "--config", cfg, "--out", str(out)]) == 0
        rows = list(csv.DictReader((out / "green.csv").read_text().splitlines()))
        assert [r["status"] for r in rows] == ["Escaped", "BoundedAtBudget"]
        assert main(["green", "--render", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "green_seed1.f32").stat().st_size == 6 * 4 * 4
        meta = json.loads((out / "green_seed1.json").read_text())
        assert meta["shape"] == [4, 6] and meta["seed"] == 1

    def test_ergodic(self, tmp_path):
        out = tmp_path / "erg"
        raw = {"measure": {"kind": "disjoint_k"}, "seeds": [0], "points": {"count": 5, "seed": 1},
               "budgets": {"N_max": 200}}
        assert main(["ergodic", "--config", write_config(tmp_path, raw), "--out", str(out)]) == 0
        summary = json.loads((out / "ergodic_summary.json").read_text())
        assert summary["classification"] == "Conservative" and summary["escaped"] == summary["total"] == 5

    def test_basepoints_divergence(self, tmp_path):
        raw = {"measure": {"kind": "ping_pong"}, "seeds": {"start": 0, "count": 4}, "budgets": {"L": 2}}
        out = tmp_path / "bp"
        assert main(["basepoints", "--config", write_config(tmp_path, raw), "--out", str(out)]) == 0
        body = json.loads((out / "basepoints.json").read_text())
        assert body["divergence"]["pairs"] == [[0, 1], [2, 3]]


class TestDeterminism:
    def test_rerun_and_thread_count_give_identical_bytes(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_WALK)
        dirs = []
        for i, threads in enumerate(["1", "1", "4"]):
            out = tmp_path / f"run{i}"
            assert main(["walk", "--config", cfg, "--out", str(out), "--threads", threads]) == 0
            dirs.append(out)
        names = artifacts(dirs[0])
        assert names == ["walk.csv", "walk_summary.json"]
        for other in dirs[1:]:
            assert artifacts(other) == names
            match, mismatch, errors = filecmp.cmpfiles(dirs[0], other, names, shallow=False)
            assert mismatch == [] and errors == []

    def test_timestamps_only_in_log(self, tmp_path):
        out = tmp_path / "log"
        main(["walk", "--config", write_config(tmp_path, SMALL_WALK), "--out", str(out)])
        log = (out / "run.log").read_text()
        assert "config_hash=" in log and "finished in" in log
