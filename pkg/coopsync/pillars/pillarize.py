"""
Pillarization: assign points to BEV cells and decorate them.

Each point becomes [x, y, z, x_c, y_c, z_c, x_p, y_p, z_p] where (x_c, y_c)
is the pillar's geometric centre (or the pillar point mean), z_c the
midpoint of the z-range (or the mean height) and the last three entries are
the point's offsets from that centre.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import constants as const
from .. import logger
from ..exceptions import ConfigError
from ..geometry import GridSpec

CENTER_MODES = ("geometric", "mean")


@dataclass
class PillarSet:
    """
    Decorated points grouped by cell.

    Attributes:
        grid: Base grid the pillars live on
        pillars: (row, col) -> (N, 9) array of decorated points
        dropped: Points outside the grid or z-range
    """

    grid: GridSpec
    pillars: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.pillars)

    @property
    def num_points(self) -> int:
        return sum(len(p) for p in self.pillars.values())


def pillarize(
    points: np.ndarray,
    grid: GridSpec,
    z_range: tuple[float, float] = const.Z_RANGE,
    center_mode: str = "geometric",
) -> PillarSet:
    """
    Group points into pillars by floor division and decorate them.

    Args:
        points: (N, 3) sensor-frame points
        grid: Base grid covering the detection range
        z_range: Inclusive-exclusive height range kept
        center_mode: "geometric" pillar centre or PointPillars-style "mean"

    Returns:
        PillarSet with every in-range point in exactly one pillar.

    Examples:
        >>> grid = GridSpec(0.0, 0.0, 0.4, 10, 10)
        >>> ps = pillarize(np.array([[1.0, 1.0, 0.5]]), grid)
        >>> list(ps.pillars)
        [(2, 2)]
    """
    if center_mode not in CENTER_MODES:
        raise ConfigError("Unknown pillar centre mode", center_mode, field="center_mode")

    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    result = PillarSet(grid)
    if len(pts) == 0:
        return result

    rows, cols = grid.cell_indices(pts[:, 0], pts[:, 1])
    z_lo, z_hi = z_range
    keep = grid.in_bounds(rows, cols) & (pts[:, 2] >= z_lo) & (pts[:, 2] < z_hi)
    result.dropped = int((~keep).sum())
    if result.dropped:
        logger.debug(f"Pillarization dropped {result.dropped} out-of-range points")

    pts, rows, cols = pts[keep], rows[keep], cols[keep]
    flat = rows * grid.width_cells + cols
    order = np.argsort(flat, kind="stable")
    flat_sorted = flat[order]
    starts = np.flatnonzero(np.r_[True, flat_sorted[1:] != flat_sorted[:-1]])
    ends = np.r_[starts[1:], len(flat_sorted)]
    z_mid = (z_lo + z_hi) / 2.0

    for s, e in zip(starts, ends):
        idx = order[s:e]
        cell = pts[idx]
        r, c = int(rows[idx[0]]), int(cols[idx[0]])
        if center_mode == "geometric":
            xc, yc = grid.cell_center(r, c)
            zc = z_mid
        else:
            xc, yc, zc = (float(v) for v in cell.mean(axis=0))
        centre = np.array([xc, yc, zc])
        decorated = np.empty((len(cell), const.DECORATION_DIM))
        decorated[:, 0:3] = cell
        decorated[:, 3:6] = centre
        decorated[:, 6:9] = cell - centre
        result.pillars[(r, c)] = decorated
    return result


def pillar_index(pillars: PillarSet) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """
    Flatten a PillarSet for batched encoding.

    Returns:
        (points (P, 9), pillar id per point (P,), flat cell index per pillar)
        or empty arrays when there are no pillars.
    """
    if not pillars.pillars:
        return np.zeros((0, const.DECORATION_DIM)), np.zeros(0, dtype=np.int64), None
    cells = sorted(pillars.pillars)
    chunks = [pillars.pillars[c] for c in cells]
    owner = np.concatenate([np.full(len(ch), i, dtype=np.int64) for i, ch in enumerate(chunks)])
    flat_cells = np.array([r * pillars.grid.width_cells + c for r, c in cells], dtype=np.int64)
    return np.concatenate(chunks), owner, flat_cells
