"""
Frame serialization: one JSON record per line, one file per agent.

Record fields: agent_id, timestamp_us, pose [x, y, yaw],
points [[x, y, z], ...], boxes [{id, cx, cy, yaw, l, w}, ...].
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

import numpy as np

from .. import constants as const
from .. import logger
from ..exceptions import SerializationError
from ..geometry import OrientedBox, Pose2
from .generator import PointCloudFrame
from .scenario import BoxAnnotation


def frame_to_record(frame: PointCloudFrame) -> dict[str, Any]:
    return {
        "agent_id": frame.agent_id,
        "timestamp_us": frame.timestamp_us,
        "pose": frame.sensor_pose.as_list(),
        "points": np.asarray(frame.points, dtype=np.float64).tolist(),
        "boxes": [b.to_record() for b in frame.boxes],
    }


def frame_from_record(record: Mapping[str, Any]) -> PointCloudFrame:
    try:
        t = int(record["timestamp_us"])
        points = np.asarray(record["points"], dtype=np.float64).reshape(-1, 3)
        boxes = tuple(
            BoxAnnotation(
                int(b["id"]),
                t,
                OrientedBox(float(b["cx"]), float(b["cy"]), float(b["yaw"]), float(b["l"]), float(b["w"])),
            )
            for b in record["boxes"]
        )
        return PointCloudFrame(str(record["agent_id"]), t, Pose2(*record["pose"]), points, boxes)
    except (KeyError, TypeError, ValueError) as e:
        raise SerializationError("Malformed frame record", f"{type(e).__name__}: {e}") from e


def write_frames(
    streams: Mapping[str, Iterable[PointCloudFrame]], out_dir: Union[str, Path], scenario: str
) -> list[Path]:
    """
    Write ``<out_dir>/<scenario>/<agent_id>.frames``.

    Output is byte-identical for identical input.
    """
    target = Path(out_dir) / scenario
    written = []
    try:
        target.mkdir(parents=True, exist_ok=True)
        for agent_id, frames in streams.items():
            path = target / f"{agent_id}{const.FRAMES_SUFFIX}"
            with path.open("w", encoding="utf-8") as fh:
                for frame in frames:
                    fh.write(json.dumps(frame_to_record(frame), separators=(",", ":")) + "\n")
            written.append(path)
    except OSError as e:
        raise SerializationError("Could not write frames", f"{target}: {e}") from e
    logger.info(f"Wrote {len(written)} frame files to {target}")
    return written


def read_frames(path: Union[str, Path]) -> list[PointCloudFrame]:
    """Read one ``.frames`` file."""
    path = Path(path)
    frames = []
    try:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise SerializationError(
                        "Frame line is not valid JSON", f"{path}:{lineno}: {e}", raw_data=line[:200]
                    ) from e
                frames.append(frame_from_record(record))
    except OSError as e:
        raise SerializationError("Could not read frames", f"{path}: {e}") from e
    return frames


def read_scenario_frames(directory: Union[str, Path]) -> dict[str, list[PointCloudFrame]]:
    """Read every ``.frames`` file of a scenario directory, keyed by agent id."""
    directory = Path(directory)
    files = sorted(directory.glob(f"*{const.FRAMES_SUFFIX}"))
    if not files:
        raise SerializationError("No frame files found", str(directory))
    return {p.name[: -len(const.FRAMES_SUFFIX)]: read_frames(p) for p in files}
