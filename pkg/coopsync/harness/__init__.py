"""
Experiment driver.

- metrics: greedy IoU matching and all-point AP
- pipeline: one (scenario, mode, latency) condition end to end, with dumps
- sweep: latency grids over scenarios and modes
- render: SVG figures of run artifacts
- cli: the ``coopsync`` command
"""

from .metrics import APResult, all_point_ap, average_precision, average_precision_frames, match_detections
from .pipeline import (
    ABLATIONS,
    MODES,
    EvalResult,
    FrameOutput,
    Pipeline,
    evaluate_detections,
    peak_displacement,
    read_detections,
    run_pipeline,
)
from .sweep import latency_drop, latency_sweep, summarize_sweep, write_sweep

__all__ = [
    # Metrics
    "APResult",
    "all_point_ap",
    "average_precision",
    "average_precision_frames",
    "match_detections",
    # Pipeline
    "ABLATIONS",
    "MODES",
    "EvalResult",
    "FrameOutput",
    "Pipeline",
    "evaluate_detections",
    "peak_displacement",
    "read_detections",
    "run_pipeline",
    # Sweeps
    "latency_drop",
    "latency_sweep",
    "summarize_sweep",
    "write_sweep",
]
