"""
Ground-truth trajectories and their rasterized fields.

A trajectory connects an object's box centres over the window an agent's
cache spans plus its delay, ending at the ego time t. Rasterization walks
each trajectory at half-cell steps; every visited point tags the cell that
contains it with the frame age of the sample it belongs to (the older
endpoint until the next sample is reached), the local tangent and its
arc-length distance from the newest sample.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from itertools import chain
from typing import Iterable, Optional, Sequence

import numpy as np
import torch

from .. import constants as const
from .. import logger
from ..exceptions import DuplicateAnnotationError, ShapeError
from ..geometry import GridSpec
from ..simkit.scenario import BoxAnnotation
from ..utils import frame_age, period_us, trajectory_length

EMPTY = -1


@dataclass(frozen=True)
class TrajectorySample:
    timestamp_us: int
    cx: float
    cy: float
    yaw: float


@dataclass(frozen=True)
class Trajectory:
    """
    Time-ordered box centres of one object in the ego frame at t.

    Attributes:
        object_id: Annotated object
        samples: Oldest first; the newest is stamped with the ego time
        frequency_hz: Sampling rate used to convert timestamps to frame ages
    """

    object_id: int
    samples: tuple[TrajectorySample, ...]
    frequency_hz: float = const.DEFAULT_FREQUENCY_HZ

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def end_us(self) -> int:
        return self.samples[-1].timestamp_us

    def ages(self) -> list[int]:
        """Frames each sample lies behind the newest one."""
        return [frame_age(self.end_us, s.timestamp_us, self.frequency_hz) for s in self.samples]

    def spacing(self) -> list[float]:
        return [
            math.hypot(b.cx - a.cx, b.cy - a.cy) for a, b in zip(self.samples[:-1], self.samples[1:])
        ]


def window_timestamps(t_us: int, delay_us: int, frequency_hz: float, capacity: int) -> list[int]:
    """
    Timestamps a trajectory samples, oldest first and ending at ``t_us``.

    Examples:
        >>> window_timestamps(1_000_000, 400_000, 10.0, 4)[:2]
        [300000, 400000]
    """
    step = period_us(frequency_hz)
    length = trajectory_length(delay_us, frequency_hz, capacity)
    return [t_us - k * step for k in reversed(range(length)) if t_us - k * step >= 0]


def build_trajectories(
    annotations: Iterable[Sequence[BoxAnnotation]],
    delay_us: int,
    frequency_hz: float,
    capacity: int,
    t_us: int,
) -> list[Trajectory]:
    """
    Group per-frame annotations into one trajectory per object.

    Args:
        annotations: Per-frame annotation lists, boxes in the ego frame at t
        delay_us: Delay of the agent the trajectories supervise
        frequency_hz: Sampling rate of that agent
        capacity: Cache capacity m of that agent
        t_us: Ego time; trajectories not reaching it are dropped

    Returns:
        Trajectories sorted by object id, samples oldest first

    Raises:
        DuplicateAnnotationError: If an object is annotated twice at one timestamp
    """
    window = window_timestamps(t_us, delay_us, frequency_hz, capacity)
    start = window[0]
    grouped: dict[int, dict[int, BoxAnnotation]] = defaultdict(dict)
    for ann in chain.from_iterable(annotations):
        if ann.timestamp_us in grouped[ann.object_id]:
            raise DuplicateAnnotationError(ann.object_id, ann.timestamp_us)
        grouped[ann.object_id][ann.timestamp_us] = ann

    out = []
    for object_id in sorted(grouped):
        by_time = grouped[object_id]
        times = sorted(ts for ts in by_time if start <= ts <= t_us)
        if not times or times[-1] != t_us:
            logger.debug(f"Object {object_id} absent at t={t_us}us, no trajectory")
            continue
        samples = tuple(
            TrajectorySample(ts, by_time[ts].box.cx, by_time[ts].box.cy, by_time[ts].box.yaw) for ts in times
        )
        out.append(Trajectory(object_id, samples, frequency_hz))
    return out


@dataclass
class TrajectoryField:
    """
    Position / orientation field on the feature grid.

    Attributes:
        grid: Feature grid (ego frame at t)
        position: (1, H, W) heatmap in [0, 1]
        orientation: (2, H, W) unit (cos, sin) on covered cells, zero elsewhere in GT
        time_index: (H, W) frame age of the occupying sample, -1 when empty; None for predictions
        object_id: (H, W) occupying object, -1 when empty
        distance: (H, W) arc length from the occupying point to its trajectory's newest sample
        skipped: Trajectories that never touched the grid
    """

    grid: GridSpec
    position: torch.Tensor
    orientation: torch.Tensor
    time_index: Optional[torch.Tensor] = None
    object_id: Optional[torch.Tensor] = None
    distance: Optional[torch.Tensor] = None
    skipped: int = 0
    timestamp_us: int = 0

    def __post_init__(self) -> None:
        h, w = self.grid.shape
        if tuple(self.position.shape) != (1, h, w) or tuple(self.orientation.shape) != (2, h, w):
            raise ShapeError(
                "Field planes do not match the grid",
                expected=((1, h, w), (2, h, w)),
                actual=(tuple(self.position.shape), tuple(self.orientation.shape)),
            )

    @property
    def covered(self) -> torch.Tensor:
        if self.time_index is None:
            return torch.zeros(self.grid.shape, dtype=torch.bool)
        return self.time_index >= 0

    @property
    def num_peaks(self) -> int:
        return int((self.position == 1.0).sum())

    def stacked(self) -> torch.Tensor:
        """(3, H, W) planes: position, cos, sin."""
        return torch.cat([self.position, self.orientation], dim=0)


def _walk(traj: Trajectory, half_cell: float) -> list[tuple[float, float, int, float, float, float]]:
    """
    Interpolated points of a trajectory.

    Returns:
        (x, y, sample index, tangent x, tangent y, distance to the newest sample)
    """
    s = traj.samples
    heading = (math.cos(s[-1].yaw), math.sin(s[-1].yaw))
    if len(s) == 1:
        return [(s[0].cx, s[0].cy, 0, heading[0], heading[1], 0.0)]

    seg = traj.spacing()
    remaining = [sum(seg[k:]) for k in range(len(seg))] + [0.0]
    points = []
    for k, d in enumerate(seg):
        a, b = s[k], s[k + 1]
        if d > 1e-12:
            tx, ty = (b.cx - a.cx) / d, (b.cy - a.cy) / d
        else:
            tx, ty = math.cos(b.yaw), math.sin(b.yaw)
        steps = max(1, math.ceil(d / half_cell))
        for i in range(0 if k == 0 else 1, steps + 1):
            u = i / steps
            owner = k if i < steps else k + 1
            points.append(
                (a.cx + u * (b.cx - a.cx), a.cy + u * (b.cy - a.cy), owner, tx, ty, remaining[k] - u * d)
            )
    return points


def _kernel(sigma: float, truncate: float) -> list[tuple[int, int, float]]:
    radius = int(math.floor(truncate * sigma))
    out = []
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            d2 = dr * dr + dc * dc
            if d2 <= (truncate * sigma) ** 2:
                out.append((dr, dc, math.exp(-d2 / (2.0 * sigma * sigma))))
    return out


def rasterize_field(
    trajs: Sequence[Trajectory],
    grid: GridSpec,
    sigma: float = const.FIELD_SIGMA_CELLS,
    truncate: float = const.FIELD_TRUNCATE_SIGMAS,
    binary: bool = False,
    timestamp_us: int = 0,
) -> TrajectoryField:
    """
    Rasterize trajectories into a ground-truth field.

    A cell's occupant is the visiting point with the most recent sample;
    ties go to the point closer (along its trajectory) to the newest
    sample, then to the smaller object id, so the result does not depend on
    input order.

    Args:
        trajs: Trajectories in the grid's frame
        grid: Feature grid
        sigma: Heatmap kernel width in cells
        truncate: Kernel support in multiples of sigma
        binary: Occupancy (1 on covered cells) instead of a Gaussian heatmap
        timestamp_us: Ego time the field describes

    Returns:
        TrajectoryField with time_index, object_id and distance planes
    """
    h, w = grid.shape
    position = np.zeros((h, w))
    orientation = np.zeros((2, h, w))
    time_index = np.full((h, w), EMPTY, dtype=np.int64)
    owner_id = np.full((h, w), EMPTY, dtype=np.int64)
    distance = np.zeros((h, w))
    best: dict[tuple[int, int], tuple[int, float, int]] = {}
    kernel = _kernel(sigma, truncate)
    skipped = 0

    for traj in trajs:
        ages = traj.ages()
        touched = False
        for x, y, owner, tx, ty, dist in _walk(traj, grid.cell_size / 2.0):
            cell = grid.cell_of(x, y)
            if cell is None:
                continue
            touched = True
            r, c = cell
            key = (-traj.samples[owner].timestamp_us, dist, traj.object_id)
            if cell not in best or key < best[cell]:
                best[cell] = key
                time_index[r, c] = ages[owner]
                owner_id[r, c] = traj.object_id
                distance[r, c] = dist
                orientation[:, r, c] = (tx, ty)
            if binary:
                position[r, c] = 1.0
                continue
            for dr, dc, value in kernel:
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and value > position[rr, cc]:
                    position[rr, cc] = value
        if not touched:
            skipped += 1
            logger.debug(f"Trajectory of object {traj.object_id} lies outside the grid, skipped")

    return TrajectoryField(
        grid,
        torch.from_numpy(position).unsqueeze(0),
        torch.from_numpy(orientation),
        time_index=torch.from_numpy(time_index),
        object_id=torch.from_numpy(owner_id),
        distance=torch.from_numpy(distance),
        skipped=skipped,
        timestamp_us=timestamp_us,
    )
