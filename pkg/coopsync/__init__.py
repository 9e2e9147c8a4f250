"""
coopsync - Latency-aware feature alignment for cooperative perception.

Several agents observe one scene with LiDAR and share bird's-eye-view
feature maps; messages from collaborators arrive late. coopsync rebuilds
each delayed map at the ego's current time from the agent's recent history
before fusing, and measures how detection accuracy holds up as latency
grows.

Basic Usage:
    >>> import coopsync as cs

    # One condition on the moving-object fixture
    >>> result = cs.run("moving", latency_ms=400, mode="oracle")
    >>> result.ap50, result.peak_displacement

    # Latency sweep over the standard suite
    >>> table = cs.latency_sweep(cs.simkit.standard_suite(), ["oracle", "unaligned"])

    # Building blocks
    >>> frames = cs.simkit.generate_scenario(cs.simkit.moving_object_scene())
    >>> field = cs.trajfield.rasterize_field(trajs, grid)

Features:
    - Deterministic multi-agent scene simulator with latency-delayed delivery
    - Pillar encoder, temporal embedding and ego-motion warping
    - Trajectory fields, ground-truth and learned attention offsets
    - Sinkhorn transport loss, trajectory-aware attention and agent fusion
    - AP50/AP70 evaluation, latency sweeps and SVG rendering
"""

from __future__ import annotations

from typing import Optional, Union

__version__ = "0.1.0"
__license__ = "Apache-2.0"

from . import offsets, pillars, simkit, trajfield
from .attention import AttentionConfig, AttentionStack, align_agent, attend, gather_response
from .cache import AgentCache, CacheSet
from .exceptions import (
    CacheOrderError,
    ConfigError,
    CoopSyncError,
    DuplicateAnnotationError,
    MissingPoseError,
    NonFiniteError,
    ParamsError,
    PipelineError,
    ScenarioError,
    SerializationError,
    ShapeError,
    SinkhornError,
)
from .featuremap import FeatureMap
from .fusion import Detection, LossWeights, decode_detections, fuse_agents, total_loss
from .geometry import GridSpec, OrientedBox, Pose2, rotated_iou, warp_feature_map
from .harness import EvalResult, average_precision, latency_sweep, run_pipeline
from .logger import disable_logging, enable_debug, get_logger, set_log_level
from .params import ParamBundle, load_params, save_params
from .temporal import assemble_history, temporal_embed

__all__ = [
    # Version
    "__version__",
    # Core types
    "FeatureMap",
    "GridSpec",
    "OrientedBox",
    "Pose2",
    "AgentCache",
    "CacheSet",
    "Detection",
    "EvalResult",
    "ParamBundle",
    # Operations
    "align_agent",
    "assemble_history",
    "attend",
    "average_precision",
    "decode_detections",
    "fuse_agents",
    "gather_response",
    "latency_sweep",
    "load_params",
    "rotated_iou",
    "run",
    "run_pipeline",
    "save_params",
    "temporal_embed",
    "total_loss",
    "warp_feature_map",
    "AttentionConfig",
    "AttentionStack",
    "LossWeights",
    # Logging
    "disable_logging",
    "enable_debug",
    "get_logger",
    "set_log_level",
    # Exceptions
    "CoopSyncError",
    "CacheOrderError",
    "ConfigError",
    "DuplicateAnnotationError",
    "MissingPoseError",
    "NonFiniteError",
    "ParamsError",
    "PipelineError",
    "ScenarioError",
    "SerializationError",
    "ShapeError",
    "SinkhornError",
    # Subpackages
    "offsets",
    "pillars",
    "simkit",
    "trajfield",
]


def run(
    scenario: Union[str, simkit.ScenarioConfig] = "moving",
    latency_ms: Union[str, float, None] = None,
    mode: str = "oracle",
    seed: Optional[int] = None,
) -> EvalResult:
    """
    Run one condition on a fixture name or scenario config.

    Args:
        scenario: Fixture name (see ``simkit.FIXTURES``) or ScenarioConfig
        latency_ms: Non-ego latency, e.g. 400 or "0:400"
        mode: "oracle", "predicted", "unaligned" or "ego-only"
        seed: Fixture and parameter seed

    Returns:
        EvalResult of the condition
    """
    if isinstance(scenario, str):
        if scenario not in simkit.FIXTURES:
            raise ConfigError("Unknown fixture", f"'{scenario}' (have {', '.join(simkit.FIXTURES)})", field="scenario")
        scenario = simkit.FIXTURES[scenario](0 if seed is None else seed)
    return run_pipeline(scenario, mode, latency=latency_ms, seed=seed)
