"""
Scenario configuration types.

A scenario is a set of agents (exactly one ego) and objects moving under
constant-velocity or constant-turn kinematics. Configurations round-trip
through JSON field-for-field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .. import constants as const
from ..exceptions import ConfigError, ScenarioError, SerializationError
from ..geometry import GridSpec, OrientedBox, Pose2

MOTION_MODELS = ("cv", "ct")


@dataclass(frozen=True)
class LatencySpec:
    """
    Per-agent transmission delay: fixed when lo == hi, else uniform on [lo, hi].

    Values are milliseconds on the outside and integer microseconds inside.
    """

    lo_ms: float = 0.0
    hi_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.lo_ms < 0 or self.hi_ms < 0:
            raise ConfigError("Latency must be non-negative", f"{self.lo_ms}:{self.hi_ms} ms", field="latency")
        if self.hi_ms < self.lo_ms:
            raise ConfigError("Latency range is inverted", f"{self.lo_ms}:{self.hi_ms} ms", field="latency")

    @classmethod
    def parse(cls, value: Union[str, int, float, LatencySpec]) -> LatencySpec:
        """
        Parse ``"400"``, ``"0:400"`` or a number (milliseconds).

        Examples:
            >>> LatencySpec.parse("0:400")
            LatencySpec(lo_ms=0.0, hi_ms=400.0)
        """
        if isinstance(value, LatencySpec):
            return value
        if isinstance(value, (int, float)):
            return cls(float(value), float(value))
        text = str(value).strip()
        try:
            if ":" in text:
                lo, hi = text.split(":", 1)
                return cls(float(lo), float(hi))
            return cls(float(text), float(text))
        except ValueError as e:
            raise ConfigError("Malformed latency spec", f"'{value}' (use ms or lo:hi)", field="latency") from e

    @property
    def fixed(self) -> bool:
        return self.lo_ms == self.hi_ms

    @property
    def lo_us(self) -> int:
        return int(round(self.lo_ms * 1000))

    @property
    def hi_us(self) -> int:
        return int(round(self.hi_ms * 1000))

    def sample_us(self, rng: np.random.Generator) -> int:
        if self.fixed:
            return self.lo_us
        return int(rng.integers(self.lo_us, self.hi_us + 1))

    def __str__(self) -> str:
        if self.fixed:
            return f"{self.lo_ms:g}"
        return f"{self.lo_ms:g}:{self.hi_ms:g}"


@dataclass(frozen=True)
class BoxAnnotation:
    """An oriented box labelled with its object id and capture time."""

    object_id: int
    timestamp_us: int
    box: OrientedBox

    def transformed(self, pose: Pose2) -> BoxAnnotation:
        return replace(self, box=self.box.transformed(pose))

    def to_record(self) -> dict[str, Any]:
        b = self.box
        return {"id": self.object_id, "cx": b.cx, "cy": b.cy, "yaw": b.yaw, "l": b.length, "w": b.width}


@dataclass(frozen=True)
class AgentConfig:
    """One sensing agent; its sensor moves with the same kinematics as objects."""

    agent_id: str
    ego: bool = False
    start_pose: Pose2 = field(default_factory=Pose2)
    speed: float = 0.0
    yaw_rate: float = 0.0
    frequency_hz: float = const.DEFAULT_FREQUENCY_HZ
    cache_capacity: int = const.COOP_FRAMES
    latency: LatencySpec = field(default_factory=LatencySpec)
    sensor_range: float = 50.0

    def __post_init__(self) -> None:
        if not self.frequency_hz > 0:
            raise ConfigError("Sampling frequency must be positive", f"agent '{self.agent_id}'", field="frequency_hz")
        if self.cache_capacity < 1:
            raise ConfigError("Cache capacity must be at least 1", f"agent '{self.agent_id}'", field="cache_capacity")

    @property
    def period_us(self) -> int:
        return int(round(const.US_PER_SECOND / self.frequency_hz))


@dataclass(frozen=True)
class ObjectConfig:
    """One object; ``box`` is its initial world-frame box."""

    object_id: int
    box: OrientedBox
    motion: str = "cv"
    speed: float = 0.0
    yaw_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.motion not in MOTION_MODELS:
            raise ConfigError("Unknown motion model", f"'{self.motion}' (use cv or ct)", field="motion")


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Full description of a simulated scene.

    Attributes:
        name: Scenario name, used for output directories
        agents: Agents; exactly one has ``ego=True``
        objects: Objects in the scene
        duration_s: Scene length in seconds
        seed: RNG seed for point sampling and latency draws
        world_half_extent: Objects leaving [-E, E]^2 are despawned
        base_cell_size: Pillar grid resolution in meters
        base_grid_cells: Pillar grid side length in cells (agent-centred)
        z_range: Pillar z-range in the sensor frame
        points_per_object: Points sampled on each visible object per frame
        clutter_points: Background points per frame
        noise_sigma: Gaussian sensor noise in meters
        occlusion: Drop objects hidden behind nearer ones
        eval_start_s: First ego time evaluated by the harness
    """

    name: str
    agents: tuple[AgentConfig, ...]
    objects: tuple[ObjectConfig, ...] = ()
    duration_s: float = 2.0
    seed: int = 0
    world_half_extent: float = const.WORLD_HALF_EXTENT
    base_cell_size: float = const.BASE_CELL_SIZE
    base_grid_cells: int = const.BASE_GRID_CELLS
    z_range: tuple[float, float] = const.Z_RANGE
    points_per_object: int = const.POINTS_PER_OBJECT
    clutter_points: int = const.CLUTTER_POINTS
    noise_sigma: float = const.POINT_NOISE_SIGMA
    occlusion: bool = False
    eval_start_s: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "objects", tuple(self.objects))
        egos = [a.agent_id for a in self.agents if a.ego]
        if len(egos) != 1:
            raise ScenarioError("Exactly one ego agent required", f"found {len(egos)}: {egos}")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ScenarioError("Agent ids must be unique", str(ids))
        oids = [o.object_id for o in self.objects]
        if len(set(oids)) != len(oids):
            raise ScenarioError("Object ids must be unique", str(oids))
        if not self.duration_s > 0:
            raise ConfigError("Duration must be positive", str(self.duration_s), field="duration_s")
        if self.base_grid_cells % (const.FEATURE_STRIDE * 2**const.UNET_DEPTH):
            raise ConfigError(
                "Grid side must be divisible by the backbone and field-predictor strides",
                str(self.base_grid_cells),
                field="base_grid_cells",
            )

    @property
    def ego(self) -> AgentConfig:
        return next(a for a in self.agents if a.ego)

    @property
    def fusion_order(self) -> tuple[AgentConfig, ...]:
        """Ego first, then the other agents by agent id; one fusion slot each."""
        others = sorted((a for a in self.agents if not a.ego), key=lambda a: a.agent_id)
        return (self.ego, *others)

    @property
    def duration_us(self) -> int:
        return int(round(self.duration_s * const.US_PER_SECOND))

    def agent(self, agent_id: str) -> AgentConfig:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise ScenarioError("Unknown agent", agent_id)

    def base_grid(self) -> GridSpec:
        """Pillar grid, centred on each agent's sensor."""
        return GridSpec.centered(self.base_cell_size, self.base_grid_cells, self.base_grid_cells)

    def feature_grid(self) -> GridSpec:
        return self.base_grid().downsampled(const.FEATURE_STRIDE)

    def with_latency(self, coop: Union[str, float, LatencySpec], ego: Union[str, float, LatencySpec, None] = None) -> ScenarioConfig:
        """Copy with every non-ego agent on ``coop`` latency (and optionally the ego on ``ego``)."""
        coop_spec = LatencySpec.parse(coop)
        agents = []
        for a in self.agents:
            if a.ego:
                agents.append(a if ego is None else replace(a, latency=LatencySpec.parse(ego)))
            else:
                agents.append(replace(a, latency=coop_spec))
        return replace(self, agents=tuple(agents))

    def with_frames(self, ego_frames: Optional[int] = None, coop_frames: Optional[int] = None) -> ScenarioConfig:
        """Copy with the cache capacities overridden."""
        agents = []
        for a in self.agents:
            count = ego_frames if a.ego else coop_frames
            agents.append(a if count is None else replace(a, cache_capacity=int(count)))
        return replace(self, agents=tuple(agents))

    def ego_only(self) -> ScenarioConfig:
        return replace(self, agents=(self.ego,))

    # ------------------------------------------------------------------
    # JSON round trip
    # ------------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "agents": [
                {
                    "agent_id": a.agent_id,
                    "ego": a.ego,
                    "start_pose": a.start_pose.as_list(),
                    "speed": a.speed,
                    "yaw_rate": a.yaw_rate,
                    "frequency_hz": a.frequency_hz,
                    "cache_capacity": a.cache_capacity,
                    "latency_ms": str(a.latency),
                    "sensor_range": a.sensor_range,
                }
                for a in self.agents
            ],
            "objects": [
                {
                    "object_id": o.object_id,
                    "box": [o.box.cx, o.box.cy, o.box.yaw, o.box.length, o.box.width],
                    "motion": o.motion,
                    "speed": o.speed,
                    "yaw_rate": o.yaw_rate,
                }
                for o in self.objects
            ],
            "duration_s": self.duration_s,
            "seed": self.seed,
            "world_half_extent": self.world_half_extent,
            "base_cell_size": self.base_cell_size,
            "base_grid_cells": self.base_grid_cells,
            "z_range": list(self.z_range),
            "points_per_object": self.points_per_object,
            "clutter_points": self.clutter_points,
            "noise_sigma": self.noise_sigma,
            "occlusion": self.occlusion,
            "eval_start_s": self.eval_start_s,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ScenarioConfig:
        try:
            agents = tuple(
                AgentConfig(
                    agent_id=str(a["agent_id"]),
                    ego=bool(a.get("ego", False)),
                    start_pose=Pose2(*a.get("start_pose", [0.0, 0.0, 0.0])),
                    speed=float(a.get("speed", 0.0)),
                    yaw_rate=float(a.get("yaw_rate", 0.0)),
                    frequency_hz=float(a.get("frequency_hz", const.DEFAULT_FREQUENCY_HZ)),
                    cache_capacity=int(a.get("cache_capacity", const.COOP_FRAMES)),
                    latency=LatencySpec.parse(a.get("latency_ms", 0)),
                    sensor_range=float(a.get("sensor_range", 50.0)),
                )
                for a in data["agents"]
            )
            objects = tuple(
                ObjectConfig(
                    object_id=int(o["object_id"]),
                    box=OrientedBox(*[float(v) for v in o["box"]]),
                    motion=str(o.get("motion", "cv")),
                    speed=float(o.get("speed", 0.0)),
                    yaw_rate=float(o.get("yaw_rate", 0.0)),
                )
                for o in data.get("objects", [])
            )
            defaults = cls(name="_", agents=(AgentConfig("_", ego=True),))
            return cls(
                name=str(data["name"]),
                agents=agents,
                objects=objects,
                duration_s=float(data.get("duration_s", defaults.duration_s)),
                seed=int(data.get("seed", defaults.seed)),
                world_half_extent=float(data.get("world_half_extent", defaults.world_half_extent)),
                base_cell_size=float(data.get("base_cell_size", defaults.base_cell_size)),
                base_grid_cells=int(data.get("base_grid_cells", defaults.base_grid_cells)),
                z_range=tuple(data.get("z_range", defaults.z_range)),  # type: ignore[arg-type]
                points_per_object=int(data.get("points_per_object", defaults.points_per_object)),
                clutter_points=int(data.get("clutter_points", defaults.clutter_points)),
                noise_sigma=float(data.get("noise_sigma", defaults.noise_sigma)),
                occlusion=bool(data.get("occlusion", defaults.occlusion)),
                eval_start_s=float(data.get("eval_start_s", defaults.eval_start_s)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SerializationError("Malformed scenario config", f"{type(e).__name__}: {e}") from e


def save_scenario(cfg: ScenarioConfig, path: Union[str, Path]) -> Path:
    """Write a scenario config as indented JSON."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise SerializationError("Could not write scenario", f"{path}: {e}") from e
    return path


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """Read a scenario config written by :func:`save_scenario`."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise SerializationError("Could not read scenario", f"{path}: {e}") from e
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SerializationError("Scenario file is not valid JSON", f"{path}: {e}", raw_data=raw[:200]) from e
    return ScenarioConfig.from_dict(data)
