"""
Figures for run artifacts.

Reads what a pipeline run wrote (fields.npz, offsets.jsonl, pr.csv) and
renders SVGs next to them:
    <agent>@<t>_field.svg     position field (gray) and orientation (HSV)
    <agent>@<t>_offsets.svg   attention positions over the feature norm
    <agent>@<t>_sinkhorn.svg  transport cost and plan for one query
    pr.svg                    precision-recall curve
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import torch  # noqa: E402
from matplotlib.colors import hsv_to_rgb  # noqa: E402

from .. import constants as const  # noqa: E402
from .. import logger  # noqa: E402
from ..exceptions import SerializationError  # noqa: E402
from ..offsets import offset_cost, sinkhorn  # noqa: E402

PathLike = Union[str, Path]


def orientation_rgb(orientation: np.ndarray, position: np.ndarray) -> np.ndarray:
    """(2, H, W) unit vectors to an RGB image: hue = heading, value = position response."""
    hue = (np.arctan2(orientation[1], orientation[0]) + np.pi) / (2 * np.pi)
    value = np.clip(position, 0.0, 1.0)
    hsv = np.stack([hue, np.ones_like(hue), value], axis=-1)
    return hsv_to_rgb(hsv)


def render_field(position: np.ndarray, orientation: np.ndarray, path: PathLike, title: str = "") -> Path:
    fig, (ax_pos, ax_ori) = plt.subplots(1, 2, figsize=(9, 4.5))
    im = ax_pos.imshow(position[0], cmap="gray", vmin=0.0, vmax=1.0, origin="lower")
    fig.colorbar(im, ax=ax_pos, fraction=0.046)
    ax_pos.set_title("position")
    ax_ori.imshow(orientation_rgb(orientation, position[0]), origin="lower")
    ax_ori.set_title("orientation")
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def render_offsets(norm: np.ndarray, records: list[dict[str, Any]], path: PathLike, title: str = "") -> Path:
    """Feature norm with each query (dot) linked to its attention positions (crosses)."""
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    ax.imshow(norm, cmap="viridis", origin="lower")
    for rec in records:
        qr, qc = rec["query"]
        pos = np.asarray(rec["positions"])
        for r, c in pos:
            ax.plot([qc, c], [qr, r], color="white", linewidth=0.4, alpha=0.6)
        ax.scatter(pos[:, 1], pos[:, 0], marker="x", s=12, color="orange")
        ax.scatter([qc], [qr], s=16, color="red")
    ax.set_title(title or "attention positions")
    return _save(fig, path)


def render_sinkhorn(record: dict[str, Any], path: PathLike, reg: float = const.SINKHORN_REG) -> Path:
    """Cost and transport plan between a query's positions and its ground truth."""
    pred = torch.tensor(record["positions"], dtype=torch.float64)
    gt = torch.tensor(record.get("gt_positions", record["positions"]), dtype=torch.float64)
    cost = offset_cost(pred, gt)
    plan = sinkhorn(cost, reg)
    fig, (ax_c, ax_p) = plt.subplots(1, 2, figsize=(9, 4.5))
    im_c = ax_c.imshow(cost.numpy(), cmap="magma")
    fig.colorbar(im_c, ax=ax_c, fraction=0.046)
    ax_c.set_title("cost")
    im_p = ax_p.imshow(plan.plan.numpy(), cmap="Blues")
    fig.colorbar(im_p, ax=ax_p, fraction=0.046)
    ax_p.set_title(f"plan ({plan.iterations} it)")
    for ax in (ax_c, ax_p):
        ax.set_xlabel("ground truth")
        ax.set_ylabel("predicted")
    return _save(fig, path)


def render_pr(table: pd.DataFrame, path: PathLike, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    ax.plot(table["recall"], table["precision"], marker=".", label="precision")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.grid(True)
    ax.set_title(title or "precision x recall")
    return _save(fig, path)


def _save(fig: Any, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg")
    except OSError as e:
        raise SerializationError("Failed to write figure", f"{path}: {e}") from e
    finally:
        plt.close(fig)
    return path


def _read_offsets(path: Path) -> list[dict[str, Any]]:
    if not path.exists():
        return []
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise SerializationError("Malformed offsets line", f"{path}:{line_no}", raw_data=line[:200]) from e
    return records


def render_run(run_dir: PathLike, out_dir: Optional[PathLike] = None, key: Optional[str] = None) -> list[Path]:
    """
    Render a run directory's artifacts.

    Args:
        run_dir: Directory written by a pipeline run
        out_dir: Where to put the SVGs (default: ``run_dir``)
        key: ``<agent>@<t_us>`` to draw; defaults to the last one in fields.npz

    Returns:
        Paths of the figures written

    Raises:
        SerializationError: If the run directory holds no fields or malformed files
    """
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir
    fields_path = run_dir / const.FIELDS_FILE
    if not fields_path.exists():
        raise SerializationError("No fields dump in run directory", str(run_dir))

    written: list[Path] = []
    with np.load(fields_path) as data:
        keys = sorted({name.split("/")[0] for name in data.files}, key=lambda k: (int(k.split("@")[1]), k))
        if not keys:
            raise SerializationError("Fields dump is empty", str(fields_path))
        key = key or keys[-1]
        if key not in keys:
            raise SerializationError("Unknown field key", f"'{key}' (have {keys[:4]}...)")
        position = data[f"{key}/position"]
        orientation = data[f"{key}/orientation"]
        norm = data[f"{key}/norm"]

    agent, t_us = key.split("@")
    written.append(render_field(position, orientation, out / f"{key}_field.svg", title=key))
    records = [r for r in _read_offsets(run_dir / const.OFFSETS_FILE) if r["agent"] == agent and r["t_us"] == int(t_us)]
    written.append(render_offsets(norm, records, out / f"{key}_offsets.svg", title=key))
    if records:
        written.append(render_sinkhorn(records[0], out / f"{key}_sinkhorn.svg"))

    pr_path = run_dir / const.PR_CSV
    if pr_path.exists():
        written.append(render_pr(pd.read_csv(pr_path), out / "pr.svg"))
    logger.info(f"Rendered {len(written)} figures to {out}")
    return written
