"""
Planar geometry for coopsync.

- Pose2: SE(2) poses with composition and inversion
- OrientedBox: BEV boxes (centre, heading, extent) and their corners
- GridSpec: world <-> cell mapping for BEV grids
- Bilinear sampling and feature-map warping for ego-motion compensation
- Rotated IoU via polygon clipping

Grid convention: cell (r, c) covers the half-open square
[origin_x + c*cs, origin_x + (c+1)*cs) x [origin_y + r*cs, origin_y + (r+1)*cs)
and its centre is origin + (c + 0.5, r + 0.5) * cs. Continuous grid
coordinates put integer values on cell centres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
import torch

from .exceptions import ConfigError

if TYPE_CHECKING:
    from .featuremap import FeatureMap

# Continuous coordinates closer than this to an integer are treated as exact.
SNAP_TOLERANCE = 1e-9


def wrap_angle(yaw: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(yaw, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2:
    """A planar rigid-body pose (meters, radians)."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @classmethod
    def identity(cls) -> Pose2:
        return cls(0.0, 0.0, 0.0)

    def inverse(self) -> Pose2:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.yaw)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """
        Map points from this pose's local frame into the parent frame.

        Args:
            points: (N, 2) or (N, 3) array; a z column passes through unchanged.

        Returns:
            Transformed copy of ``points``.
        """
        pts = np.asarray(points, dtype=np.float64)
        out = pts.copy()
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        out[..., 0] = c * pts[..., 0] - s * pts[..., 1] + self.x
        out[..., 1] = s * pts[..., 0] + c * pts[..., 1] + self.y
        return out

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.yaw]


def compose(a: Pose2, b: Pose2) -> Pose2:
    """
    Compose two poses: the pose of frame ``b`` expressed through frame ``a``.

    Examples:
        >>> compose(Pose2(1.0, 0.0, math.pi / 2), Pose2(1.0, 0.0, 0.0))
        Pose2(x=1.0, y=1.0, yaw=1.5707963267948966)
    """
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    return Pose2(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.yaw + b.yaw,
    )


def inverse(p: Pose2) -> Pose2:
    return p.inverse()


def relative_pose(target: Pose2, source: Pose2) -> Pose2:
    """Pose mapping ``source``-frame coordinates into the ``target`` frame."""
    return compose(target.inverse(), source)


@dataclass(frozen=True)
class OrientedBox:
    """
    A BEV oriented box.

    Zero extents are accepted so that degenerate boxes can be represented;
    their IoU with anything is 0.
    """

    cx: float
    cy: float
    yaw: float
    length: float
    width: float

    def __post_init__(self) -> None:
        for name in ("length", "width"):
            value = getattr(self, name)
            # 0 stays legal: AP and NMS score degenerate boxes with IoU 0 instead of failing
            if not math.isfinite(value) or value < 0:
                raise ConfigError("Invalid box extent", f"{name}={value}", field=name)

    @property
    def area(self) -> float:
        return self.length * self.width

    def corners(self) -> np.ndarray:
        """Corners as a (4, 2) array in counter-clockwise order."""
        hl, hw = self.length / 2.0, self.width / 2.0
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]], dtype=np.float64)
        return Pose2(self.cx, self.cy, self.yaw).apply(local)

    def transformed(self, pose: Pose2) -> OrientedBox:
        """The same box expressed in the parent frame of ``pose``."""
        centre = pose.apply(np.array([[self.cx, self.cy]]))[0]
        return replace(
            self,
            cx=float(centre[0]),
            cy=float(centre[1]),
            yaw=wrap_angle(self.yaw + pose.yaw),
        )

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of (N, 2+) points lying inside the box footprint."""
        local = Pose2(self.cx, self.cy, self.yaw).inverse().apply(np.asarray(points)[:, :2])
        return (np.abs(local[:, 0]) <= self.length / 2.0) & (
            np.abs(local[:, 1]) <= self.width / 2.0
        )


@dataclass(frozen=True)
class GridSpec:
    """Geo-referenced BEV grid."""

    origin_x: float
    origin_y: float
    cell_size: float
    height_cells: int
    width_cells: int

    def __post_init__(self) -> None:
        if not self.cell_size > 0:
            raise ConfigError("Grid cell size must be positive", str(self.cell_size))
        if self.height_cells <= 0 or self.width_cells <= 0:
            raise ConfigError(
                "Grid must have at least one cell",
                f"{self.height_cells}x{self.width_cells}",
            )

    @classmethod
    def centered(cls, cell_size: float, height_cells: int, width_cells: int) -> GridSpec:
        """Grid centred on the frame origin."""
        return cls(
            -width_cells * cell_size / 2.0,
            -height_cells * cell_size / 2.0,
            cell_size,
            height_cells,
            width_cells,
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height_cells, self.width_cells)

    def downsampled(self, factor: int) -> GridSpec:
        """Same extent at ``factor`` times coarser cells."""
        if self.height_cells % factor or self.width_cells % factor:
            raise ConfigError(
                "Grid not divisible by stride",
                f"{self.height_cells}x{self.width_cells} by {factor}",
            )
        return GridSpec(
            self.origin_x,
            self.origin_y,
            self.cell_size * factor,
            self.height_cells // factor,
            self.width_cells // factor,
        )

    def cell_center(self, row: float, col: float) -> tuple[float, float]:
        return (
            self.origin_x + (col + 0.5) * self.cell_size,
            self.origin_y + (row + 0.5) * self.cell_size,
        )

    def to_continuous(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World coordinates to continuous (row, col); integers are cell centres."""
        col = (np.asarray(x, dtype=np.float64) - self.origin_x) / self.cell_size - 0.5
        row = (np.asarray(y, dtype=np.float64) - self.origin_y) / self.cell_size - 0.5
        return row, col

    def cell_indices(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Floor-division cell indices of world points (half-open cells).

        Quotients within SNAP_TOLERANCE of an integer are rounded first so a
        point on a boundary lands in the cell whose interval starts there.
        """
        qc = (np.asarray(x, dtype=np.float64) - self.origin_x) / self.cell_size
        qr = (np.asarray(y, dtype=np.float64) - self.origin_y) / self.cell_size
        qc = np.where(np.abs(qc - np.round(qc)) < SNAP_TOLERANCE, np.round(qc), qc)
        qr = np.where(np.abs(qr - np.round(qr)) < SNAP_TOLERANCE, np.round(qr), qr)
        return np.floor(qr).astype(np.int64), np.floor(qc).astype(np.int64)

    def in_bounds(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        rows, cols = np.asarray(rows), np.asarray(cols)
        return (rows >= 0) & (rows < self.height_cells) & (cols >= 0) & (cols < self.width_cells)

    def cell_of(self, x: float, y: float) -> Optional[tuple[int, int]]:
        """Cell containing a single point, or None when out of range."""
        r, c = self.cell_indices(np.array([x]), np.array([y]))
        if not self.in_bounds(r, c)[0]:
            return None
        return int(r[0]), int(c[0])

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World (x, y) of every cell centre, each shaped (H, W)."""
        cols = np.arange(self.width_cells, dtype=np.float64)
        rows = np.arange(self.height_cells, dtype=np.float64)
        xs = self.origin_x + (cols + 0.5) * self.cell_size
        ys = self.origin_y + (rows + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return gx, gy

    def to_dict(self) -> dict[str, float | int]:
        return {
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "cell_size": self.cell_size,
            "height_cells": self.height_cells,
            "width_cells": self.width_cells,
        }


def _snap(coords: torch.Tensor) -> torch.Tensor:
    rounded = torch.round(coords)
    return torch.where((coords - rounded).abs() < SNAP_TOLERANCE, rounded, coords)


def sample_bilinear(data: torch.Tensor, rows: torch.Tensor, cols: torch.Tensor) -> torch.Tensor:
    """
    Bilinearly sample a (C, H, W) tensor at continuous grid coordinates.

    Samples falling outside the grid read zeros. Coordinates that are
    integers up to SNAP_TOLERANCE read the cell exactly.

    Args:
        data: (C, H, W) tensor
        rows: tensor of row coordinates, any shape S
        cols: tensor of column coordinates, shape S

    Returns:
        Tensor of shape S + (C,)
    """
    channels, height, width = data.shape
    rows = _snap(rows.to(data.dtype))
    cols = _snap(cols.to(data.dtype))
    r0 = torch.floor(rows)
    c0 = torch.floor(cols)
    fr = rows - r0
    fc = cols - c0
    r0i = r0.long()
    c0i = c0.long()
    flat = data.reshape(channels, height * width)
    out = torch.zeros(rows.shape + (channels,), dtype=data.dtype, device=data.device)
    for dr in (0, 1):
        wr = fr if dr else 1.0 - fr
        ri = r0i + dr
        for dc in (0, 1):
            wc = fc if dc else 1.0 - fc
            ci = c0i + dc
            valid = (ri >= 0) & (ri < height) & (ci >= 0) & (ci < width)
            index = (ri.clamp(0, height - 1) * width + ci.clamp(0, width - 1)).reshape(-1)
            values = flat[:, index].T.reshape(rows.shape + (channels,))
            weight = (wr * wc * valid.to(data.dtype)).unsqueeze(-1)
            out = out + weight * values
    return out


def warp_feature_map(
    f: FeatureMap,
    rel: Pose2,
    target_grid: Optional[GridSpec] = None,
    timestamp_us: Optional[int] = None,
    source_frame: Optional[str] = None,
) -> FeatureMap:
    """
    Resample a feature map into another frame.

    Each output cell centre is mapped back through ``rel`` into the input
    frame and read with bilinear interpolation; cells sampling outside the
    input are zero.

    Args:
        f: Input feature map
        rel: Pose mapping f's frame into the target frame
        target_grid: Output grid (defaults to f.grid, now in the target frame)
        timestamp_us: Output timestamp (defaults to f.timestamp_us)
        source_frame: Output frame id (defaults to f.source_frame)

    Returns:
        FeatureMap on the target grid
    """
    grid = target_grid or f.grid
    gx, gy = grid.centers()
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    src = rel.inverse().apply(pts)
    rows, cols = f.grid.to_continuous(src[:, 0], src[:, 1])
    rows_t = torch.from_numpy(rows.reshape(grid.shape))
    cols_t = torch.from_numpy(cols.reshape(grid.shape))
    sampled = sample_bilinear(f.data, rows_t, cols_t).permute(2, 0, 1).contiguous()
    return f.with_data(
        sampled,
        grid=grid,
        timestamp_us=f.timestamp_us if timestamp_us is None else timestamp_us,
        source_frame=f.source_frame if source_frame is None else source_frame,
    )


# =============================================================================
# Rotated IoU
# =============================================================================


def polygon_area(poly: Sequence[Sequence[float]]) -> float:
    """Shoelace area (absolute value) of a simple polygon."""
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def _clip(subject: list[tuple[float, float]], a: np.ndarray, b: np.ndarray) -> list[tuple[float, float]]:
    """Keep the part of ``subject`` left of the directed edge a->b."""

    def side(p: tuple[float, float]) -> float:
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

    out: list[tuple[float, float]] = []
    n = len(subject)
    for i in range(n):
        cur, nxt = subject[i], subject[(i + 1) % n]
        s_cur, s_nxt = side(cur), side(nxt)
        if s_cur >= 0:
            out.append(cur)
        if (s_cur >= 0) != (s_nxt >= 0):
            t = s_cur / (s_cur - s_nxt)
            out.append((cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])))
    return out


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """
    BEV intersection-over-union of two oriented boxes.

    Sutherland-Hodgman clipping of a's corners by b's edges, shoelace
    areas. Degenerate (zero-area) boxes give 0.

    Examples:
        >>> rotated_iou(OrientedBox(0, 0, 0, 2, 2), OrientedBox(1, 0, 0, 2, 2))
        0.3333333333333333
    """
    area_a, area_b = a.area, b.area
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    poly: list[tuple[float, float]] = [tuple(p) for p in a.corners().tolist()]  # type: ignore[misc]
    clip_corners = b.corners()
    for i in range(4):
        if not poly:
            break
        poly = _clip(poly, clip_corners[i], clip_corners[(i + 1) % 4])
    inter = polygon_area(poly)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))
