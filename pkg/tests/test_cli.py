import importlib
import json

import pandas as pd

from coopsync import config
from coopsync import constants as const
from coopsync.harness.cli import build_parser, main, resolve_scenario
from coopsync.simkit import moving_object_scene


def test_selftest():
    assert main(["selftest"]) == 0


def test_parser_defaults():
    args = build_parser().parse_args(["sweep"])
    assert args.latencies == list(const.LATENCY_GRID_MS)
    assert args.mode is None


def test_output_dir_and_workers_ignore_the_environment(monkeypatch):
    monkeypatch.setenv("COOPSYNC_WORKERS", "bogus")
    monkeypatch.setenv("COOPSYNC_OUTPUT_DIR", "/elsewhere")
    importlib.reload(config)
    assert not hasattr(config, "WORKERS")
    assert not hasattr(config, "OUTPUT_DIR")
    args = build_parser().parse_args(["sweep"])
    assert args.workers == 1
    assert args.out == "runs"
    assert build_parser().parse_args(["align", "--scenario", "moving"]).out == "runs"


def test_resolve_fixture_and_file(tmp_path):
    assert resolve_scenario("moving", seed=3).seed == 3
    path = tmp_path / "s.json"
    path.write_text(json.dumps(moving_object_scene().to_dict()))
    assert resolve_scenario(str(path)) == moving_object_scene()


def test_params(tmp_path):
    assert main(["params", "--oracle", "--out", str(tmp_path / "p.npz")]) == 0
    assert (tmp_path / "p.npz").exists()
    assert (tmp_path / "p.manifest.json").exists()


def test_simulate_align_eval_render(tmp_path):
    assert main(["simulate", "--scenario", "moving", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "moving" / "scenario.json").exists()

    args = ["--scenario", "moving", "--latency-ms", "400"]
    assert main(["align", *args, "--frames", str(tmp_path / "moving"), "--out", str(tmp_path)]) == 0
    run_dir = tmp_path / "moving_oracle"
    metrics = pd.read_csv(run_dir / const.METRICS_CSV, dtype={"latency_ms": str})
    assert metrics.loc[0, "ap50"] == 1.0
    assert metrics.loc[0, "latency_ms"] == "400"

    detections = run_dir / const.DETECTIONS_FILE
    assert main(["eval", *args, "--detections", str(detections), "--out", str(tmp_path / "eval")]) == 0
    scored = pd.read_csv(tmp_path / "eval" / const.METRICS_CSV)
    assert scored.loc[0, "ap50"] == 1.0

    assert main(["render", "--run", str(run_dir), "--out", str(tmp_path / "figs")]) == 0
    assert list((tmp_path / "figs").glob("*.svg"))


def test_sweep(tmp_path):
    argv = ["sweep", "--scenario", "static", "--mode", "oracle", "--latencies", "0", "400", "--out", str(tmp_path)]
    assert main(argv) == 0
    table = pd.read_csv(tmp_path / const.SWEEP_CSV)
    assert len(table) == 2


def test_errors_return_two(tmp_path, captured_logs):
    assert main(["align", "--scenario", str(tmp_path / "missing.json")]) == 2
    assert "Could not read scenario" in captured_logs.text
    assert main(["render", "--run", str(tmp_path)]) == 2
