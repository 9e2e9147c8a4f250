"""
Synthetic multi-agent scenes.

- Scenario configuration (agents, objects, latency specs) with JSON round trip
- Deterministic point-cloud frame generation with analytic ground truth
- Latency-delayed delivery of frames to the ego
- Frame serialization and the standard desk fixtures
"""

from .delivery import DelayedMessage, schedule_delivery
from .fixtures import FIXTURES, STANDARD_SUITE, lattice, moving_object_scene, standard_suite
from .generator import (
    PointCloudFrame,
    agent_pose_at,
    frame_times_us,
    generate_scenario,
    ground_truth_at,
    object_box_at,
    pose_at,
)
from .io import read_frames, read_scenario_frames, write_frames
from .scenario import (
    AgentConfig,
    BoxAnnotation,
    LatencySpec,
    ObjectConfig,
    ScenarioConfig,
    load_scenario,
    save_scenario,
)

__all__ = [
    # Configuration
    "AgentConfig",
    "BoxAnnotation",
    "LatencySpec",
    "ObjectConfig",
    "ScenarioConfig",
    "load_scenario",
    "save_scenario",
    # Generation
    "PointCloudFrame",
    "agent_pose_at",
    "frame_times_us",
    "generate_scenario",
    "ground_truth_at",
    "object_box_at",
    "pose_at",
    # Delivery
    "DelayedMessage",
    "schedule_delivery",
    # Files
    "read_frames",
    "read_scenario_frames",
    "write_frames",
    # Fixtures
    "FIXTURES",
    "STANDARD_SUITE",
    "lattice",
    "moving_object_scene",
    "standard_suite",
]
