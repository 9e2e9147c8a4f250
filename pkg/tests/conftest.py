"""Shared builders for the coopsync tests."""

from __future__ import annotations

import logging

import pytest
import torch

from coopsync import logger
from coopsync.featuremap import FeatureMap
from coopsync.geometry import GridSpec, OrientedBox, Pose2
from coopsync.simkit import AgentConfig, BoxAnnotation, LatencySpec, ObjectConfig, ScenarioConfig


@pytest.fixture(autouse=True)
def fresh_logger():
    logger.reset_logger()
    yield
    logger.reset_logger()


@pytest.fixture
def captured_logs(caplog):
    """caplog wired to the package logger (which does not propagate)."""
    log = logger.get_logger()
    log.addHandler(caplog.handler)
    caplog.set_level(logging.DEBUG, logger=log.name)
    log.setLevel(logging.DEBUG)
    yield caplog
    log.removeHandler(caplog.handler)


@pytest.fixture
def small_grid() -> GridSpec:
    """8 x 8 cells of 1 m with the origin at the lower-left corner."""
    return GridSpec(0.0, 0.0, 1.0, 8, 8)


def make_map(data: torch.Tensor, grid: GridSpec, t_us: int = 0, agent: str = "a", pose: Pose2 | None = None) -> FeatureMap:
    return FeatureMap(data.to(torch.float64), grid, t_us, agent, source_frame=f"{agent}@{t_us}", pose=pose)


def impulse(grid: GridSpec, row: int, col: int, channels: int = 4, value: float = 1.0) -> torch.Tensor:
    data = torch.zeros((channels,) + grid.shape, dtype=torch.float64)
    data[:, row, col] = value
    return data


def car(object_id: int, t_us: int, cx: float, cy: float, yaw: float = 0.0) -> BoxAnnotation:
    return BoxAnnotation(object_id, t_us, OrientedBox(cx, cy, yaw, 4.5, 2.0))


def tiny_scenario(latency_ms: float = 0.0, speed: float = 5.0, seed: int = 0) -> ScenarioConfig:
    """Ego and one collaborator 10 m apart, one object driving +x between them."""
    return ScenarioConfig(
        name="tiny",
        agents=(
            AgentConfig("ego", ego=True, cache_capacity=2, sensor_range=30.0),
            AgentConfig(
                "coop",
                start_pose=Pose2(10.0, 0.0, 0.0),
                cache_capacity=4,
                latency=LatencySpec(latency_ms, latency_ms),
                sensor_range=30.0,
            ),
        ),
        objects=(ObjectConfig(1, OrientedBox(-5.0, 4.0, 0.0, 4.5, 2.0), "cv", speed),),
        duration_s=1.0,
        seed=seed,
        base_grid_cells=64,
        eval_start_s=0.5,
    )
