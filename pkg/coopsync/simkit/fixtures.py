"""
Standard desk scenarios.

All fixtures share one layout: a static ego at the origin with a short
sensor range and a static roadside agent ``infra`` 12.8 m ahead with a long
range, so most objects are only visible to the delayed agent. Both sensor
grids sit on the same 1.6 m feature lattice, and every moving object
travels along a lattice row or column, which keeps its cross-track position
exact at feature resolution.
"""

from __future__ import annotations

import math
from typing import Callable

from .. import constants as const
from ..geometry import OrientedBox, Pose2
from .scenario import AgentConfig, LatencySpec, ObjectConfig, ScenarioConfig

CAR_LENGTH = 4.5
CAR_WIDTH = 2.0
MOVER_SPEED = 12.0


def lattice(index: int) -> float:
    """World coordinate of feature-cell centre ``index`` on the ego grid."""
    half = const.BASE_GRID_CELLS * const.BASE_CELL_SIZE / 2.0
    return -half + (index + 0.5) * const.FEATURE_CELL_SIZE


def _agents(latency_ms: float = 0.0) -> tuple[AgentConfig, ...]:
    return (
        AgentConfig(
            "ego",
            ego=True,
            start_pose=Pose2(0.0, 0.0, 0.0),
            cache_capacity=const.EGO_FRAMES,
            sensor_range=10.0,
        ),
        AgentConfig(
            "infra",
            start_pose=Pose2(8 * const.FEATURE_CELL_SIZE, 0.0, 0.0),
            cache_capacity=const.COOP_FRAMES,
            latency=LatencySpec(latency_ms, latency_ms),
            sensor_range=45.0,
        ),
    )


def _car(object_id: int, x: float, y: float, yaw: float = 0.0, speed: float = 0.0) -> ObjectConfig:
    return ObjectConfig(object_id, OrientedBox(x, y, yaw, CAR_LENGTH, CAR_WIDTH), "cv", speed)


def static_scene(seed: int = 0) -> ScenarioConfig:
    """Two parked cars, one near the ego and one only the roadside agent sees."""
    return ScenarioConfig(
        name="static",
        agents=_agents(),
        objects=(
            _car(1, lattice(13), lattice(14)),
            _car(2, lattice(28), lattice(8)),
        ),
        seed=seed,
    )


def convoy_scene(seed: int = 0) -> ScenarioConfig:
    """Two cars driving +x in parallel lanes past a parked car."""
    return ScenarioConfig(
        name="convoy",
        agents=_agents(),
        objects=(
            _car(1, -14.0, lattice(22), speed=MOVER_SPEED),
            _car(2, -14.0, lattice(24), speed=MOVER_SPEED),
            _car(3, lattice(13), lattice(14)),
        ),
        seed=seed + 1,
    )


def oncoming_scene(seed: int = 0) -> ScenarioConfig:
    """Opposing traffic on two lanes."""
    return ScenarioConfig(
        name="oncoming",
        agents=_agents(),
        objects=(
            _car(1, -14.0, lattice(8), speed=MOVER_SPEED),
            _car(2, 22.0, lattice(22), yaw=math.pi, speed=MOVER_SPEED),
        ),
        seed=seed + 2,
    )


def crossing_scene(seed: int = 0) -> ScenarioConfig:
    """One car along +y on a lattice column, one along +x."""
    return ScenarioConfig(
        name="crossing",
        agents=_agents(),
        objects=(
            _car(1, lattice(28), -20.0, yaw=math.pi / 2, speed=MOVER_SPEED),
            _car(2, -14.0, lattice(8), speed=MOVER_SPEED),
        ),
        seed=seed + 3,
    )


def mixed_scene(seed: int = 0) -> ScenarioConfig:
    """Fast and slow movers plus a parked car."""
    return ScenarioConfig(
        name="mixed",
        agents=_agents(),
        objects=(
            _car(1, -14.0, lattice(24), speed=10.0),
            _car(2, 22.0, lattice(10), yaw=math.pi, speed=14.0),
            _car(3, lattice(28), lattice(8)),
        ),
        seed=seed + 4,
    )


def moving_object_scene(seed: int = 0) -> ScenarioConfig:
    """
    One car at 10 m/s seen only by the roadside agent.

    At t = 1.0 s its centre sits exactly on a feature-cell centre.
    """
    return ScenarioConfig(
        name="moving",
        agents=_agents(),
        objects=(_car(1, lattice(13) - 10.0, lattice(22), speed=10.0),),
        seed=seed,
    )


FIXTURES: dict[str, Callable[[int], ScenarioConfig]] = {
    "static": static_scene,
    "convoy": convoy_scene,
    "oncoming": oncoming_scene,
    "crossing": crossing_scene,
    "mixed": mixed_scene,
    "moving": moving_object_scene,
}

STANDARD_SUITE: tuple[str, ...] = ("static", "convoy", "oncoming", "crossing", "mixed")


def standard_suite(seed: int = 0) -> list[ScenarioConfig]:
    """The five scenarios used for latency sweeps."""
    return [FIXTURES[name](seed) for name in STANDARD_SUITE]
