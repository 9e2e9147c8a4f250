import json
from dataclasses import replace

import numpy as np
import pytest
import torch

from coopsync import constants as const
from coopsync.exceptions import ConfigError, PipelineError
from coopsync.featuremap import FeatureMap
from coopsync.fusion import fuse_agents
from coopsync.geometry import OrientedBox
from coopsync.offsets import gt_offset_map
from coopsync.harness.pipeline import (
    Pipeline,
    evaluate_detections,
    peak_displacement,
    read_detections,
    run_pipeline,
)
from coopsync.harness.render import render_run
from coopsync.simkit import FIXTURES, LatencySpec, ObjectConfig, ground_truth_at, moving_object_scene

from .conftest import tiny_scenario

T_EVAL = [1_000_000]


def short(cfg, duration_s=1.2):
    return replace(cfg, duration_s=duration_s)


class TestAlignmentRecoversPosition:
    def test_oracle_moves_delayed_object_to_its_current_cell(self):
        result = run_pipeline(moving_object_scene(), "oracle", latency=400, eval_times_us=T_EVAL)
        assert result.peak_displacement["infra"] == pytest.approx(0.0, abs=1e-9)
        assert result.ap50 == 1.0

    def test_unaligned_lags_by_two_cells(self):
        result = run_pipeline(moving_object_scene(), "unaligned", latency=400, eval_times_us=T_EVAL)
        shift = result.peak_displacement["infra"]
        assert shift >= 3.2 - 1e-9
        assert shift == pytest.approx(3.2, abs=1e-9)
        assert result.ap50 == 0.0

    def test_no_latency_needs_no_alignment(self):
        result = run_pipeline(moving_object_scene(), "unaligned", latency=0, eval_times_us=T_EVAL)
        assert result.peak_displacement["infra"] == pytest.approx(0.0, abs=1e-9)


class TestRun:
    def test_static_scene_oracle(self):
        result = run_pipeline(short(FIXTURES["static"](0)), "oracle", latency=300)
        assert result.ap50 == 1.0
        assert result.n_gt == 3 * 2
        assert result.latency_ms == "300"

    def test_deterministic(self):
        cfg = short(FIXTURES["convoy"](0))
        a = run_pipeline(cfg, "oracle", latency="0:400", seed=7)
        b = run_pipeline(cfg, "oracle", latency="0:400", seed=7)
        assert a.to_bytes() == b.to_bytes()
        assert a.latency_ms == "0:400"
        assert "runtime_ms" not in a.to_record()

    def test_ego_only_ignores_latency(self):
        cfg = short(FIXTURES["convoy"](0))
        rows = [run_pipeline(cfg, "ego-only", latency=lat).to_record() for lat in (0, 200, 400)]
        assert len({(r["ap50"], r["ap70"], r["n_det"]) for r in rows}) == 1
        assert [r["latency_ms"] for r in rows] == ["0", "200", "400"]
        assert rows[0]["peak_displacement"] == {}

    def test_metrics_row_columns(self):
        result = run_pipeline(moving_object_scene(), "oracle", eval_times_us=T_EVAL)
        assert tuple(result.metrics_row()) == const.METRICS_COLUMNS

    def test_errors_carry_timestamp(self, monkeypatch):
        def broken(self, t_us, frames):
            raise ValueError("boom")

        monkeypatch.setattr(Pipeline, "step", broken)
        with pytest.raises(PipelineError) as info:
            run_pipeline(moving_object_scene(), "oracle", eval_times_us=T_EVAL)
        assert info.value.timestamp_us == 1_000_000
        assert isinstance(info.value.cause, ValueError)


class TestConfiguration:
    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            Pipeline(moving_object_scene(), "magic")

    def test_ablation_outside_predicted(self):
        with pytest.raises(ConfigError):
            Pipeline(moving_object_scene(), "oracle", ablate=["field"])

    def test_unknown_ablation(self):
        with pytest.raises(ConfigError):
            Pipeline(moving_object_scene(), "predicted", ablate=["everything"])

    def test_eval_times_start_at_eval_start(self):
        pipe = Pipeline(moving_object_scene(), "oracle")
        times = pipe.eval_times()
        assert times[0] == 1_000_000 and times[-1] == 2_000_000


class TestPredicted:
    def test_losses_reported(self):
        result = run_pipeline(moving_object_scene(), "predicted", latency=200, eval_times_us=T_EVAL)
        assert set(result.losses) == {"loss", "detection", "field", "offset"}
        assert all(np.isfinite(v) for v in result.losses.values())
        expected = result.losses["detection"] + 0.05 * result.losses["field"] + 0.05 * result.losses["offset"]
        assert result.losses["loss"] == pytest.approx(expected)

    def test_all_components_ablated(self):
        result = run_pipeline(
            moving_object_scene(),
            "predicted",
            latency=200,
            ablate=["field", "offsets", "attention"],
            eval_times_us=T_EVAL,
        )
        assert np.isfinite(result.losses["loss"])


class TestPeakDisplacement:
    def test_empty_map(self):
        cfg = moving_object_scene()
        f = FeatureMap.zeros(5, cfg.feature_grid(), 0, "infra")
        assert peak_displacement(f, ground_truth_at(cfg, 1_000_000)) is None

    def test_peak_on_box(self):
        cfg = moving_object_scene()
        grid = cfg.feature_grid()
        gts = ground_truth_at(cfg, 1_000_000)
        data = torch.zeros((5,) + grid.shape, dtype=torch.float64)
        data[0][grid.cell_of(gts[0].box.cx, gts[0].box.cy)] = 1.0
        assert peak_displacement(FeatureMap(data, grid, 0, "infra"), gts) == pytest.approx(0.0, abs=1e-9)
        assert peak_displacement(FeatureMap(data, grid, 0, "infra"), []) is None


class TestArtifacts:
    def test_dumps_and_replay(self, tmp_path):
        cfg = moving_object_scene().with_latency(400)
        result = run_pipeline(cfg, "oracle", out_dir=tmp_path, eval_times_us=[1_000_000, 1_100_000])
        for name in (const.METRICS_CSV, const.PR_CSV, const.DETECTIONS_FILE, const.OFFSETS_FILE, const.FIELDS_FILE):
            assert (tmp_path / name).exists(), name

        detections = read_detections(tmp_path / const.DETECTIONS_FILE)
        assert sorted(detections) == [1_000_000, 1_100_000]
        ap50, ap70 = evaluate_detections(cfg, detections)
        assert ap50.ap == pytest.approx(result.ap50)
        assert ap70.ap == pytest.approx(result.ap70)

        with np.load(tmp_path / const.FIELDS_FILE) as data:
            assert "infra@1000000/time_index" in data.files
            assert data["infra@1000000/position"].shape == (1, 32, 32)

    def test_render(self, tmp_path):
        run_pipeline(moving_object_scene(), "oracle", latency=400, out_dir=tmp_path, eval_times_us=T_EVAL)
        written = render_run(tmp_path, tmp_path / "figs")
        names = {p.name for p in written}
        assert {"infra@1000000_field.svg", "infra@1000000_offsets.svg", "infra@1000000_sinkhorn.svg", "pr.svg"} <= names
        assert all(p.read_text().lstrip().startswith("<?xml") for p in written)

    def test_predicted_offsets_dump_has_ground_truth(self, tmp_path):
        run_pipeline(moving_object_scene(), "predicted", latency=400, out_dir=tmp_path, eval_times_us=T_EVAL)
        records = [json.loads(line) for line in (tmp_path / const.OFFSETS_FILE).read_text().splitlines()]
        assert records
        assert all(r["flavor"] == "predicted" and len(r["gt_positions"]) == const.NUM_OFFSETS for r in records)


def _spy_fusion(monkeypatch):
    seen = []

    def spy(maps, module):
        seen.append([(m.agent_id, bool(torch.all(m.data == 0))) for m in maps])
        return fuse_agents(maps, module)

    monkeypatch.setattr("coopsync.harness.pipeline.fuse_agents", spy)
    return seen


class TestFusionSlots:
    def test_silent_agent_keeps_its_slot(self, monkeypatch):
        base = moving_object_scene()
        ego, infra = base.agents
        cfg = replace(
            base,
            agents=(
                ego,
                replace(infra, agent_id="a_slow", latency=LatencySpec(2000, 2000)),
                replace(infra, agent_id="b_fast"),
            ),
        )
        seen = _spy_fusion(monkeypatch)
        result = Pipeline(cfg, "oracle").run(eval_times_us=T_EVAL)
        assert [agent for agent, _ in seen[0]] == ["ego", "a_slow", "b_fast"]
        assert seen[0][1] == ("a_slow", True)
        assert seen[0][2] == ("b_fast", False)
        assert result.ap50 == pytest.approx(1.0)

    def test_ego_fused_first_whatever_the_declared_order(self, monkeypatch):
        base = moving_object_scene()
        ego, infra = base.agents
        cfg = replace(base, agents=(replace(infra, agent_id="zeta"), replace(infra, agent_id="alpha"), ego))
        seen = _spy_fusion(monkeypatch)
        Pipeline(cfg, "oracle").run(eval_times_us=T_EVAL)
        assert [agent for agent, _ in seen[0]] == ["ego", "alpha", "zeta"]


def _random_scene(seed):
    rng = np.random.default_rng(seed)
    objects = tuple(
        ObjectConfig(
            k + 1,
            OrientedBox(
                float(rng.uniform(-8, 8)), float(rng.uniform(-8, 8)), float(rng.uniform(-np.pi, np.pi)), 4.5, 2.0
            ),
            "ct",
            float(rng.uniform(0.0, 12.0)),
            float(rng.uniform(-0.5, 0.5)),
        )
        for k in range(int(rng.integers(1, 4)))
    )
    return replace(tiny_scenario(latency_ms=float(rng.uniform(0, 400)), seed=seed), objects=objects)


class TestGroundTruthOffsetsOnSimulatedScenes:
    def test_every_offset_lies_on_an_older_cell_of_the_same_object(self, monkeypatch):
        fields = []
        original = Pipeline.ground_truth_field

        def recording(self, agent_id, t_us, frames):
            field = original(self, agent_id, t_us, frames)
            fields.append(field)
            return field

        monkeypatch.setattr(Pipeline, "ground_truth_field", recording)
        for seed in range(100):
            Pipeline(_random_scene(seed), "oracle").run(eval_times_us=[900_000])
        assert len(fields) == 200

        checked = 0
        for field in fields:
            positions = gt_offset_map(field).positions
            ages, owners, heat = field.time_index, field.object_id, field.position[0]
            for r, c in field.covered.nonzero().tolist():
                older_exists = bool(((owners == owners[r, c]) & (ages > ages[r, c]) & (heat > 0)).any())
                for pr, pc in positions[r, c].long().tolist():
                    if not older_exists:
                        assert (pr, pc) == (r, c)
                        continue
                    assert heat[pr, pc] > 0
                    assert owners[pr, pc] == owners[r, c]
                    assert ages[pr, pc] > ages[r, c]
                checked += 1
        assert checked > 0
