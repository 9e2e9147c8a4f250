"""
Latency sweeps: every (scenario, mode, latency) condition run independently.

Conditions share nothing but read-only parameters, so they run on a thread
pool; the table is assembled in condition order regardless of completion
order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence, Union

import pandas as pd

from .. import constants as const
from .. import logger
from ..exceptions import SerializationError
from ..params import ParamBundle
from ..simkit import ScenarioConfig
from .pipeline import EvalResult, run_pipeline

SWEEP_COLUMNS = ("scenario",) + const.METRICS_COLUMNS


def _run_condition(
    scenario: ScenarioConfig,
    mode: str,
    latency_ms: float,
    seed: Optional[int],
    params: Optional[ParamBundle],
) -> EvalResult:
    result = run_pipeline(scenario, mode, params=params, latency=latency_ms, seed=seed)
    logger.info(
        f"Sweep condition scenario={result.scenario} mode={mode} latency={result.latency_ms}ms "
        f"ap50={result.ap50:.3f} ap70={result.ap70:.3f}"
    )
    return result


def latency_sweep(
    scenarios: Sequence[ScenarioConfig],
    modes: Sequence[str] = ("oracle", "unaligned"),
    latencies: Sequence[float] = const.LATENCY_GRID_MS,
    seed: Optional[int] = None,
    params: Optional[ParamBundle] = None,
    workers: int = const.DEFAULT_WORKERS,
) -> pd.DataFrame:
    """
    Run every condition and tabulate the results.

    Args:
        scenarios: Scenarios to sweep
        modes: Pipeline modes
        latencies: Non-ego latencies in ms
        seed: Overrides each scenario's seed
        params: Shared parameter bundle (default: per-mode seeded or oracle settings)
        workers: Thread pool size

    Returns:
        DataFrame with columns scenario, mode, latency_ms, ap50, ap70, n_gt, n_det,
        one row per condition in (scenario, mode, latency) order; empty when
        any of the inputs is empty
    """
    conditions = [(s, m, lat) for s in scenarios for m in modes for lat in latencies]
    if not conditions:
        return pd.DataFrame(columns=list(SWEEP_COLUMNS))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_condition, s, m, lat, seed, params) for s, m, lat in conditions]
            results = [f.result() for f in futures]
    else:
        results = [_run_condition(s, m, lat, seed, params) for s, m, lat in conditions]

    rows = [{"scenario": r.scenario, **r.metrics_row()} for r in results]
    return pd.DataFrame(rows, columns=list(SWEEP_COLUMNS))


def summarize_sweep(table: pd.DataFrame) -> pd.DataFrame:
    """Mean AP50/AP70 per (mode, latency) over scenarios, in first-seen order."""
    if table.empty:
        return pd.DataFrame(columns=["mode", "latency_ms", "ap50", "ap70"])
    return table.groupby(["mode", "latency_ms"], sort=False)[["ap50", "ap70"]].mean().reset_index()


def latency_drop(summary: pd.DataFrame, mode: str) -> pd.Series:
    """AP50 loss at each latency relative to the first latency of ``mode``, indexed by latency."""
    rows = summary[summary["mode"] == mode]
    ap = rows.set_index("latency_ms")["ap50"]
    return ap.iloc[0] - ap


def write_sweep(table: pd.DataFrame, out_dir: Union[str, Path]) -> Path:
    """
    Write the sweep table as CSV; byte-identical for identical tables.

    Raises:
        SerializationError: If the file cannot be written
    """
    path = Path(out_dir) / const.SWEEP_CSV
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(path, index=False, float_format="%.10f", lineterminator="\n")
    except OSError as e:
        raise SerializationError("Failed to write sweep table", f"{path}: {e}") from e
    logger.info(f"Wrote {len(table)} sweep rows to {path}")
    return path
