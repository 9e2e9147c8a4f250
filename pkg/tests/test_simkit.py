import math

import numpy as np
import pytest

from coopsync import simkit
from coopsync.exceptions import ConfigError, ScenarioError, SerializationError
from coopsync.simkit import AgentConfig, LatencySpec, ScenarioConfig

from .conftest import tiny_scenario


class TestLatencySpec:
    def test_parse_forms(self):
        assert LatencySpec.parse("400") == LatencySpec(400.0, 400.0)
        assert LatencySpec.parse("0:400") == LatencySpec(0.0, 400.0)
        assert LatencySpec.parse(100) == LatencySpec(100.0, 100.0)
        assert str(LatencySpec(0.0, 400.0)) == "0:400"
        assert LatencySpec(400.0, 400.0).lo_us == 400_000

    @pytest.mark.parametrize("bad", ["abc", "400:100", "-5"])
    def test_parse_rejects(self, bad):
        with pytest.raises(ConfigError):
            LatencySpec.parse(bad)

    def test_uniform_draw_in_range(self):
        rng = np.random.default_rng(0)
        draws = [LatencySpec(100, 300).sample_us(rng) for _ in range(200)]
        assert min(draws) >= 100_000 and max(draws) <= 300_000


class TestScenarioConfig:
    def test_requires_single_ego(self):
        with pytest.raises(ScenarioError):
            ScenarioConfig("bad", agents=(AgentConfig("a"), AgentConfig("b")))
        with pytest.raises(ScenarioError):
            ScenarioConfig("bad", agents=(AgentConfig("a", ego=True), AgentConfig("b", ego=True)))

    def test_grid_must_fit_strides(self):
        with pytest.raises(ConfigError):
            ScenarioConfig("bad", agents=(AgentConfig("a", ego=True),), base_grid_cells=100)

    def test_with_latency_leaves_ego(self):
        cfg = tiny_scenario().with_latency("0:200")
        assert cfg.ego.latency == LatencySpec()
        assert cfg.agent("coop").latency == LatencySpec(0, 200)

    def test_with_frames_and_ego_only(self):
        cfg = tiny_scenario().with_frames(3, 5)
        assert cfg.ego.cache_capacity == 3
        assert cfg.agent("coop").cache_capacity == 5
        assert [a.agent_id for a in cfg.ego_only().agents] == ["ego"]

    def test_fusion_order_puts_ego_first_then_ids(self):
        base = tiny_scenario()
        ego, coop = base.agents
        cfg = ScenarioConfig(
            "order",
            agents=(AgentConfig("zeta"), coop, AgentConfig("alpha"), ego),
            base_grid_cells=base.base_grid_cells,
        )
        assert [a.agent_id for a in cfg.fusion_order] == ["ego", "alpha", "coop", "zeta"]

    def test_json_round_trip(self, tmp_path):
        cfg = tiny_scenario(latency_ms=300)
        path = simkit.save_scenario(cfg, tmp_path / "s.json")
        assert simkit.load_scenario(path) == cfg

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text('{"name": "x"}')
        with pytest.raises(SerializationError):
            simkit.load_scenario(path)


class TestGeneration:
    def test_deterministic(self):
        a = simkit.generate_scenario(tiny_scenario(seed=3))
        b = simkit.generate_scenario(tiny_scenario(seed=3))
        assert a.keys() == b.keys()
        for agent_id in a:
            for fa, fb in zip(a[agent_id], b[agent_id]):
                assert fa.timestamp_us == fb.timestamp_us
                np.testing.assert_array_equal(fa.points, fb.points)

    def test_frame_times(self):
        cfg = tiny_scenario()
        assert simkit.frame_times_us(cfg, cfg.ego) == list(range(0, 1_000_001, 100_000))

    def test_ground_truth_follows_motion(self):
        cfg = tiny_scenario(speed=5.0)
        (gt,) = simkit.ground_truth_at(cfg, 1_000_000)
        assert gt.box.cx == pytest.approx(0.0, abs=1e-9)
        assert gt.box.cy == pytest.approx(4.0)

    def test_ground_truth_in_earlier_ego_frame(self):
        cfg = simkit.moving_object_scene()
        (now,) = simkit.ground_truth_at(cfg, 1_000_000)
        (then,) = simkit.ground_truth_at(cfg, 600_000)
        assert now.box.cx - then.box.cx == pytest.approx(4.0, abs=1e-9)

    def test_time_outside_scenario(self):
        with pytest.raises(ScenarioError):
            simkit.ground_truth_at(tiny_scenario(), 5_000_000)

    def test_moving_fixture_lands_on_lattice(self):
        (gt,) = simkit.ground_truth_at(simkit.moving_object_scene(), 1_000_000)
        assert gt.box.cx == pytest.approx(simkit.lattice(13), abs=1e-9)
        assert gt.box.cy == pytest.approx(simkit.lattice(22), abs=1e-9)
        assert simkit.lattice(13) == pytest.approx(-25.6 + 13.5 * 1.6)

    def test_standard_suite(self):
        suite = simkit.standard_suite()
        assert [s.name for s in suite] == list(simkit.STANDARD_SUITE)
        assert all(math.isclose(s.agent("infra").start_pose.x, 12.8) for s in suite)


class TestDelivery:
    def test_fixed_latency_orders_by_arrival(self):
        cfg = tiny_scenario(latency_ms=400)
        streams = simkit.generate_scenario(cfg)
        msgs = simkit.schedule_delivery(streams, {a.agent_id: a.latency for a in cfg.agents})
        arrivals = [m.arrives_at_us for m in msgs]
        assert arrivals == sorted(arrivals)
        coop = [m for m in msgs if m.agent_id == "coop"]
        assert all(m.delay_us == 400_000 for m in coop)

    def test_latest_available_is_four_frames_stale(self):
        cfg = tiny_scenario(latency_ms=400)
        streams = simkit.generate_scenario(cfg)
        msgs = simkit.schedule_delivery(streams, {"coop": cfg.agent("coop").latency})
        arrived = [m for m in msgs if m.agent_id == "coop" and m.arrives_at_us <= 1_000_000]
        assert max(m.sent_at_us for m in arrived) == 600_000

    def test_seeded_uniform_delays_repeat(self):
        cfg = tiny_scenario()
        streams = simkit.generate_scenario(cfg)
        spec = {"coop": LatencySpec(0, 400)}
        a = [m.delay_us for m in simkit.schedule_delivery(streams, spec, seed=5)]
        b = [m.delay_us for m in simkit.schedule_delivery(streams, spec, seed=5)]
        assert a == b


class TestFrameFiles:
    def test_write_read(self, tmp_path):
        streams = simkit.generate_scenario(tiny_scenario())
        paths = simkit.write_frames(streams, tmp_path, "tiny")
        again = simkit.write_frames(streams, tmp_path / "second", "tiny")
        assert [p.read_bytes() for p in paths] == [p.read_bytes() for p in again]
        loaded = simkit.read_scenario_frames(tmp_path / "tiny")
        assert set(loaded) == {"ego", "coop"}
        assert len(loaded["coop"]) == len(streams["coop"])
        np.testing.assert_allclose(loaded["coop"][-1].points, streams["coop"][-1].points)

    def test_bad_line(self, tmp_path):
        (tmp_path / "a.frames").write_text("not json\n")
        with pytest.raises(SerializationError):
            simkit.read_frames(tmp_path / "a.frames")

    def test_empty_directory(self, tmp_path):
        with pytest.raises(SerializationError):
            simkit.read_scenario_frames(tmp_path)
