import csv
import json
import subprocess
import sys

import pytest

from vap import suites
from vap.cli import main, parse_ablate_set
from vap.report import RUN_FILES
from vap.scenario import save_scenarios


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.json"
    save_scenarios(p, [suites.single_object("car", frames=25)])
    return p


@pytest.fixture
def fast_config(tmp_path):
    p = tmp_path / "fast.json"
    p.write_text(json.dumps({"pipeline": {"gist_pathway": False}, "classifiers": {"bottom_up": "oracle"}}))
    return p


class TestRun:
    def test_missing_scenario(self, tmp_path, capsys):
        missing = tmp_path / "nope.json"
        assert main(["run", "--scenario", str(missing), "--out", str(tmp_path / "o")]) == 2
        assert str(missing) in capsys.readouterr().err

    def test_bad_config(self, tiny, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"itc": {"bogus": 1}}))
        assert main(["run", "--config", str(cfg), "--scenario", str(tiny), "--out", str(tmp_path / "o")]) == 2
        assert "itc.bogus" in capsys.readouterr().err

    def test_invalid_scenario(self, tmp_path, capsys):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"frames": 5, "objects": [{"id": "a", "category": "unicorn", "waypoints": [[0, 1, 1]]}]}))
        assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2
        assert "unicorn" in capsys.readouterr().err

    @pytest.mark.slow
    def test_artifacts_with_defaults(self, tiny, tmp_path):
        out = tmp_path / "run"
        assert main(["run", "--scenario", str(tiny), "--out", str(out)]) == 0
        for name in RUN_FILES:
            path = out / name
            assert path.is_file(), name
            if name.endswith(".csv"):
                rows = read_csv(path)
                assert rows or name == "refinements.csv"
            else:
                json.loads(path.read_text())
        model = json.loads((out / "model.json").read_text())
        assert model["format"] == "vap-models" and model["gist"] is not None
        summary = {r["key"]: r["value"] for r in read_csv(out / "summary.csv")}
        assert int(summary["instances"]) == len(read_csv(out / "cumulative_error.csv"))

    def test_f1_recomputed(self, tmp_path, fast_config):
        scen = tmp_path / "amb.json"
        save_scenarios(scen, suites.ambiguity_suite(clips_per_scene=1, frames=30))
        out = tmp_path / "run"
        cfg = tmp_path / "conf.json"
        cfg.write_text(json.dumps({"pipeline": {"gist_pathway": False}}))
        assert main(["run", "--config", str(cfg), "--scenario", str(scen), "--out", str(out)]) == 0
        rows = read_csv(out / "metrics.csv")
        assert rows
        for r in rows:
            p, rc, f1 = float(r["precision"]), float(r["recall"]), float(r["f1"])
            expected = 0.0 if p + rc == 0 else 2 * p * rc / (p + rc)
            assert f1 == pytest.approx(expected, abs=1e-6)

    def test_cumulative_error_matches_rows(self, tmp_path, tiny, fast_config):
        out = tmp_path / "run"
        assert main(["run", "--config", str(fast_config), "--scenario", str(tiny), "--out", str(out)]) == 0
        wrong = 0
        for k, r in enumerate(read_csv(out / "cumulative_error.csv")):
            wrong += r["correct"] == "0"
            assert float(r["cumulative_error"]) == pytest.approx(wrong / (k + 1), abs=1e-6)

    def test_byte_identical(self, tmp_path, tiny, fast_config):
        outs = [tmp_path / "a", tmp_path / "b"]
        for o in outs:
            assert main(["run", "--config", str(fast_config), "--scenario", str(tiny), "--out", str(o), "--seed", "5"]) == 0
        for name in RUN_FILES:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name

    def test_seed_override(self, tmp_path, tiny, fast_config):
        out = tmp_path / "a"
        main(["run", "--config", str(fast_config), "--scenario", str(tiny), "--out", str(out), "--seed", "9"])
        assert (out / "summary.csv").is_file()


class TestAblate:
    def test_zero_noise_curves_identical(self, tmp_path, tiny, fast_config):
        out = tmp_path / "abl"
        assert main(["ablate", "--config", str(fast_config), "--scenario", str(tiny), "--out", str(out)]) == 0
        rows = read_csv(out / "ablation.csv")
        assert rows and list(rows[0]) == ["instance", "bottom_up", "context", "object_files", "full"]
        for r in rows[10:]:
            vals = {r[k] for k in ("bottom_up", "context", "object_files", "full")}
            assert len(vals) == 1
        last = rows[-1]
        # the first frames precede motion detection; once tracked, nothing is ever wrong again
        assert float(last["full"]) == float(last["bottom_up"])
        decided = read_csv(out / "full" / "cumulative_error.csv")
        first_ok = next(k for k, r in enumerate(decided) if r["correct"] == "1")
        assert all(r["correct"] == "1" for r in decided[first_ok:])

    def test_ablate_set(self):
        assert parse_ablate_set("full,bottom-up") == ["bottom_up", "full"]
        assert parse_ablate_set(None) == ["bottom_up", "context", "object_files", "full"]

    def test_bad_ablate_set(self, tmp_path, tiny, capsys):
        assert main(["ablate", "--scenario", str(tiny), "--out", str(tmp_path), "--ablate-set", "magic"]) == 2
        assert "--ablate-set" in capsys.readouterr().err


class TestOtherCommands:
    def test_generate_and_bootstrap(self, tmp_path):
        scen = tmp_path / "co.json"
        assert main(["generate", "co-appearance", "--out", str(scen)]) == 0
        ctx = tmp_path / "ctx.json"
        assert main(["bootstrap", "--scenario", str(scen), "--out", str(ctx)]) == 0
        d = json.loads(ctx.read_text())
        assert "street" in json.dumps(d)

    def test_render(self, tmp_path, tiny):
        out = tmp_path / "frames"
        assert main(["render", "--scenario", str(tiny), "--out", str(out)]) == 0
        assert len(list(out.glob("*.ppm"))) == 25
        truth = json.loads((out / "truth.json").read_text())
        assert len(truth) == 25 and truth[10]["objects"][0]["category"] == "car"

    def test_console_entry(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "vap.cli", "run", "--scenario", str(tmp_path / "x.json"),
                            "--out", str(tmp_path / "o")], capture_output=True, text=True,
                           env={"VAP_LOG_LEVEL": "bogus", "PATH": ""})
        assert r.returncode == 2 and "x.json" in r.stderr
