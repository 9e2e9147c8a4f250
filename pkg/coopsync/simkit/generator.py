"""
Scene generation: kinematics, point sampling and analytic ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .. import constants as const
from .. import logger
from ..exceptions import ScenarioError
from ..geometry import OrientedBox, Pose2, wrap_angle
from .scenario import AgentConfig, BoxAnnotation, ObjectConfig, ScenarioConfig

# Step used to locate the first instant an object leaves the world bounds.
DESPAWN_SCAN_US = 10_000


@dataclass(frozen=True)
class PointCloudFrame:
    """One LiDAR sweep of one agent, everything in the sensor frame."""

    agent_id: str
    timestamp_us: int
    sensor_pose: Pose2
    points: np.ndarray = field(repr=False)
    boxes: tuple[BoxAnnotation, ...] = ()

    def __repr__(self) -> str:
        return (
            f"PointCloudFrame(agent='{self.agent_id}', t={self.timestamp_us}us, "
            f"points={len(self.points)}, boxes={len(self.boxes)})"
        )


def pose_at(start: Pose2, speed: float, yaw_rate: float, t_s: float) -> Pose2:
    """
    Constant-velocity / constant-turn kinematics evaluated in closed form.

    Examples:
        >>> pose_at(Pose2(0, 0, 0), 10.0, 0.0, 0.1)
        Pose2(x=1.0, y=0.0, yaw=0.0)
    """
    if abs(yaw_rate) < 1e-12:
        return Pose2(
            start.x + speed * t_s * math.cos(start.yaw),
            start.y + speed * t_s * math.sin(start.yaw),
            start.yaw,
        )
    yaw_t = start.yaw + yaw_rate * t_s
    radius = speed / yaw_rate
    return Pose2(
        start.x + radius * (math.sin(yaw_t) - math.sin(start.yaw)),
        start.y - radius * (math.cos(yaw_t) - math.cos(start.yaw)),
        yaw_t,
    )


def agent_pose_at(agent: AgentConfig, t_us: int) -> Pose2:
    return pose_at(agent.start_pose, agent.speed, agent.yaw_rate, t_us / const.US_PER_SECOND)


def object_box_at(obj: ObjectConfig, t_us: int) -> OrientedBox:
    """World-frame box of an object at ``t_us``."""
    yaw_rate = obj.yaw_rate if obj.motion == "ct" else 0.0
    p = pose_at(Pose2(obj.box.cx, obj.box.cy, obj.box.yaw), obj.speed, yaw_rate, t_us / const.US_PER_SECOND)
    return OrientedBox(p.x, p.y, p.yaw, obj.box.length, obj.box.width)


@lru_cache(maxsize=4096)
def _despawn_time_us(obj: ObjectConfig, half_extent: float, duration_us: int) -> Optional[int]:
    for t in range(0, duration_us + DESPAWN_SCAN_US, DESPAWN_SCAN_US):
        b = object_box_at(obj, min(t, duration_us))
        if abs(b.cx) > half_extent or abs(b.cy) > half_extent:
            return min(t, duration_us)
    return None


def despawn_time_us(cfg: ScenarioConfig, obj: ObjectConfig) -> Optional[int]:
    """First scanned time the object's centre is outside the world bounds, if any."""
    return _despawn_time_us(obj, cfg.world_half_extent, cfg.duration_us)


def object_present(cfg: ScenarioConfig, obj: ObjectConfig, t_us: int) -> bool:
    gone = despawn_time_us(cfg, obj)
    return gone is None or t_us < gone


def frame_times_us(cfg: ScenarioConfig, agent: AgentConfig) -> list[int]:
    """Capture timestamps of an agent: 0, 1/w, 2/w, ... up to the duration."""
    return list(range(0, cfg.duration_us + 1, agent.period_us))


def _visible_objects(
    cfg: ScenarioConfig, agent: AgentConfig, sensor: Pose2, t_us: int
) -> list[tuple[ObjectConfig, OrientedBox]]:
    """Objects in sensor range at ``t_us``, boxes in the sensor frame."""
    to_sensor = sensor.inverse()
    visible: list[tuple[ObjectConfig, OrientedBox, float, float, float]] = []
    for obj in cfg.objects:
        if not object_present(cfg, obj, t_us):
            continue
        local = object_box_at(obj, t_us).transformed(to_sensor)
        rng = math.hypot(local.cx, local.cy)
        if rng > agent.sensor_range:
            continue
        half_span = math.atan2(max(local.length, local.width) / 2.0, max(rng, 1e-6))
        visible.append((obj, local, rng, math.atan2(local.cy, local.cx), half_span))

    if not cfg.occlusion:
        return [(o, b) for o, b, _, _, _ in visible]

    kept = []
    for obj, box, rng, bearing, _ in visible:
        hidden = any(
            other_rng < rng and abs(wrap_angle(bearing - other_bearing)) < other_span
            for o2, _, other_rng, other_bearing, other_span in visible
            if o2.object_id != obj.object_id
        )
        if hidden:
            logger.debug(f"Object {obj.object_id} occluded for '{agent.agent_id}' at t={t_us}us")
        else:
            kept.append((obj, box))
    return kept


def _sample_object_points(box: OrientedBox, count: int, rng: np.random.Generator) -> np.ndarray:
    """Half the points on the box perimeter, half on its footprint (box frame)."""
    n_perim = count // 2
    n_foot = count - n_perim
    hl, hw = box.length / 2.0, box.width / 2.0
    perimeter = 2.0 * (box.length + box.width)

    u = rng.uniform(0.0, perimeter, n_perim)
    px = np.empty(n_perim)
    py = np.empty(n_perim)
    edges = np.cumsum([box.length, box.width, box.length, box.width])
    e0 = u < edges[0]
    e1 = (u >= edges[0]) & (u < edges[1])
    e2 = (u >= edges[1]) & (u < edges[2])
    e3 = u >= edges[2]
    px[e0], py[e0] = -hl + u[e0], -hw
    px[e1], py[e1] = hl, -hw + (u[e1] - edges[0])
    px[e2], py[e2] = hl - (u[e2] - edges[1]), hw
    px[e3], py[e3] = -hl, hw - (u[e3] - edges[2])

    fx = rng.uniform(-hl, hl, n_foot)
    fy = rng.uniform(-hw, hw, n_foot)
    xy = np.concatenate([np.stack([px, py], 1), np.stack([fx, fy], 1)])
    z = rng.uniform(-const.SENSOR_HEIGHT, -const.SENSOR_HEIGHT + const.OBJECT_HEIGHT, count)
    world_xy = Pose2(box.cx, box.cy, box.yaw).apply(xy)
    return np.column_stack([world_xy, z])


def _render_frame(
    cfg: ScenarioConfig, agent: AgentConfig, t_us: int, rng: np.random.Generator
) -> PointCloudFrame:
    sensor = agent_pose_at(agent, t_us)
    visible = _visible_objects(cfg, agent, sensor, t_us)
    chunks = [_sample_object_points(box, cfg.points_per_object, rng) for _, box in visible]

    if cfg.clutter_points > 0:
        r = agent.sensor_range
        clutter = np.column_stack(
            [
                rng.uniform(-r, r, cfg.clutter_points),
                rng.uniform(-r, r, cfg.clutter_points),
                np.full(cfg.clutter_points, -const.SENSOR_HEIGHT),
            ]
        )
        chunks.append(clutter)

    points = np.concatenate(chunks) if chunks else np.zeros((0, 3))
    if cfg.noise_sigma > 0 and len(points):
        points = points + rng.normal(0.0, cfg.noise_sigma, points.shape)

    boxes = tuple(BoxAnnotation(obj.object_id, t_us, box) for obj, box in visible)
    return PointCloudFrame(agent.agent_id, t_us, sensor, points, boxes)


def generate_scenario(cfg: ScenarioConfig) -> dict[str, list[PointCloudFrame]]:
    """
    Simulate every agent's frame stream.

    Deterministic given ``cfg.seed``: each agent draws from its own
    generator seeded by (seed, agent index).

    Args:
        cfg: Scenario configuration

    Returns:
        Mapping of agent id to its frames, oldest first, in config agent order.
    """
    for obj in cfg.objects:
        gone = despawn_time_us(cfg, obj)
        if gone is not None:
            logger.warning(
                f"Object {obj.object_id} left the world bounds at t={gone / 1e6:.2f}s, despawned"
            )

    streams: dict[str, list[PointCloudFrame]] = {}
    for index, agent in enumerate(cfg.agents):
        rng = np.random.default_rng([cfg.seed, index])
        streams[agent.agent_id] = [_render_frame(cfg, agent, t, rng) for t in frame_times_us(cfg, agent)]
        logger.debug(f"Generated {len(streams[agent.agent_id])} frames for '{agent.agent_id}'")
    return streams


def ground_truth_at(
    cfg: ScenarioConfig,
    t_us: int,
    reference_us: Optional[int] = None,
    object_ids: Optional[set[int]] = None,
) -> list[BoxAnnotation]:
    """
    Analytic object boxes at ``t_us`` in the ego sensor frame.

    Args:
        cfg: Scenario configuration
        t_us: Time at which object motion is evaluated
        reference_us: Time of the ego frame to express boxes in (default ``t_us``)
        object_ids: Restrict to these objects

    Returns:
        One annotation per present object, stamped ``t_us``.

    Raises:
        ScenarioError: If a time lies outside [0, duration]
    """
    reference_us = t_us if reference_us is None else reference_us
    for value in (t_us, reference_us):
        if value < 0 or value > cfg.duration_us:
            raise ScenarioError("Time outside scenario", f"t={value}us, duration={cfg.duration_us}us")
    to_ego = agent_pose_at(cfg.ego, reference_us).inverse()
    out = []
    for obj in cfg.objects:
        if object_ids is not None and obj.object_id not in object_ids:
            continue
        if not object_present(cfg, obj, t_us):
            continue
        out.append(BoxAnnotation(obj.object_id, t_us, object_box_at(obj, t_us).transformed(to_ego)))
    return out
