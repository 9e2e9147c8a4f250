"""
Constants for the coopsync pipeline.

This module contains every fixed value the pipeline relies on:
- BEV grid geometry (base grid, feature stride, z-range)
- Temporal embedding and frame-count defaults
- Trajectory field rasterization settings
- Offset generation and Sinkhorn matching settings
- Attention stack shape
- Loss weights, detection decoding and evaluation protocol

`check_constants()` is the configuration self-test exposed as
``coopsync selftest``.
"""

from __future__ import annotations

from typing import Final

# =============================================================================
# BEV Grid
# =============================================================================

BASE_CELL_SIZE: Final[float] = 0.4  # meters per base pillar cell
FEATURE_STRIDE: Final[int] = 4  # backbone output is one-fourth of the base grid
FEATURE_CELL_SIZE: Final[float] = BASE_CELL_SIZE * FEATURE_STRIDE
BASE_GRID_CELLS: Final[int] = 128  # 51.2 m square detection range
Z_RANGE: Final[tuple[float, float]] = (-3.0, 1.0)

# =============================================================================
# Feature Channels
# =============================================================================

FEATURE_CHANNELS: Final[int] = 32
DECORATION_DIM: Final[int] = 9  # [x, y, z, x_c, y_c, z_c, x_p, y_p, z_p]
PAINT_CHANNELS: Final[int] = 5  # [1, log l, log w, cos yaw, sin yaw]

# =============================================================================
# Temporal
# =============================================================================

TE_BASE: Final[float] = 8.0
EGO_FRAMES: Final[int] = 2
COOP_FRAMES: Final[int] = 4
DEFAULT_FREQUENCY_HZ: Final[float] = 10.0
US_PER_SECOND: Final[int] = 1_000_000

# =============================================================================
# Trajectory Field
# =============================================================================

FIELD_SIGMA_CELLS: Final[float] = 1.0
FIELD_TRUNCATE_SIGMAS: Final[float] = 3.0
FIELD_ORIENTATION_THRESHOLD: Final[float] = 0.5
UNET_DEPTH: Final[int] = 3
UNET_BASE_WIDTH: Final[int] = 32
FOCAL_ALPHA: Final[float] = 2.0
FOCAL_BETA: Final[float] = 4.0

# =============================================================================
# Offsets & Sinkhorn
# =============================================================================

NUM_OFFSETS: Final[int] = 18
OFFSET_HIDDEN: Final[int] = 64
SINKHORN_REG: Final[float] = 0.1
SINKHORN_MAX_ITER: Final[int] = 200
SINKHORN_TOL: Final[float] = 1e-9

# =============================================================================
# Attention
# =============================================================================

ATTENTION_LAYERS: Final[int] = 2
ATTENTION_HEADS: Final[int] = 4
FFN_RATIO: Final[int] = 4

# =============================================================================
# Losses
# =============================================================================

FIELD_LOSS_WEIGHT: Final[float] = 0.05  # alpha
OFFSET_LOSS_WEIGHT: Final[float] = 0.05  # beta

# =============================================================================
# Detection & Evaluation
# =============================================================================

SCORE_THRESHOLD: Final[float] = 0.1
NMS_IOU: Final[float] = 0.5
AP_IOU_THRESHOLDS: Final[tuple[float, float]] = (0.5, 0.7)
LATENCY_GRID_MS: Final[tuple[int, ...]] = (0, 100, 200, 300, 400)
HEAD_CHANNELS: Final[int] = 7  # score, dx, dy, log l, log w, cos, sin

# =============================================================================
# Simulation
# =============================================================================

POINT_NOISE_SIGMA: Final[float] = 0.02
SENSOR_HEIGHT: Final[float] = 1.8
OBJECT_HEIGHT: Final[float] = 1.5
POINTS_PER_OBJECT: Final[int] = 64
CLUTTER_POINTS: Final[int] = 200
WORLD_HALF_EXTENT: Final[float] = 60.0

# =============================================================================
# Command Line Defaults
# =============================================================================

DEFAULT_OUTPUT_DIR: Final[str] = "runs"
DEFAULT_WORKERS: Final[int] = 1

# =============================================================================
# Output File Names
# =============================================================================

FRAMES_SUFFIX: Final[str] = ".frames"
METRICS_CSV: Final[str] = "metrics.csv"
SWEEP_CSV: Final[str] = "sweep.csv"
PR_CSV: Final[str] = "pr.csv"
DETECTIONS_FILE: Final[str] = "detections.jsonl"
OFFSETS_FILE: Final[str] = "offsets.jsonl"
FIELDS_FILE: Final[str] = "fields.npz"
METRICS_COLUMNS: Final[tuple[str, ...]] = (
    "mode",
    "latency_ms",
    "ap50",
    "ap70",
    "n_gt",
    "n_det",
)


def check_constants() -> dict[str, bool]:
    """
    Verify the method defaults against their reference values.

    Returns:
        Mapping of check name to pass/fail. All entries are True for an
        unmodified install.
    """
    checks = {
        "num_offsets": NUM_OFFSETS == 18,
        "te_base": TE_BASE == 8.0,
        "loss_weights": FIELD_LOSS_WEIGHT == 0.05 and OFFSET_LOSS_WEIGHT == 0.05,
        "attention_shape": ATTENTION_LAYERS == 2 and ATTENTION_HEADS == 4,
        "heads_divide_channels": FEATURE_CHANNELS % ATTENTION_HEADS == 0,
        "base_grid": BASE_CELL_SIZE == 0.4,
        "feature_stride": FEATURE_STRIDE == 4,
        "feature_cell": abs(FEATURE_CELL_SIZE - 1.6) < 1e-12,
        "latency_grid": LATENCY_GRID_MS == (0, 100, 200, 300, 400),
        "frame_counts": EGO_FRAMES == 2 and COOP_FRAMES == 4,
        "sinkhorn": SINKHORN_REG == 0.1
        and SINKHORN_MAX_ITER == 200
        and SINKHORN_TOL == 1e-9,
        "ap_thresholds": AP_IOU_THRESHOLDS == (0.5, 0.7),
    }
    return checks
