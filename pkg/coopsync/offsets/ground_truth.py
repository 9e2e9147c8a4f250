"""
Attention positions: per-query offset sets and their ground truth.

A ground-truth position for a query cell must (i) have a positive
position response, (ii) belong to the query's trajectory and (iii) carry
an older sample than the query. Selected cells are ordered oldest first,
then by arc length along the trajectory, then by (row, col).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import torch

from .. import constants as const
from ..exceptions import ShapeError
from ..trajfield import TrajectoryField

Flavor = Literal["predicted", "ground-truth"]


@dataclass(frozen=True)
class OffsetSet:
    """
    n attention positions of one query, as continuous (row, col) grid coordinates.

    Attributes:
        query: (row, col) of the query cell
        positions: (n, 2) float64 tensor
        flavor: "predicted" or "ground-truth"
    """

    query: tuple[int, int]
    positions: torch.Tensor
    flavor: Flavor = "ground-truth"

    def __post_init__(self) -> None:
        if self.positions.dim() != 2 or self.positions.shape[1] != 2:
            raise ShapeError("Offset positions must be (n, 2)", expected="(n, 2)", actual=tuple(self.positions.shape))

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    def deltas(self) -> torch.Tensor:
        return self.positions - torch.tensor(self.query, dtype=self.positions.dtype)

    def to_record(self) -> dict[str, object]:
        return {
            "query": list(self.query),
            "flavor": self.flavor,
            "positions": self.positions.detach().tolist(),
        }


@dataclass(frozen=True)
class OffsetMap:
    """
    Offset sets of every cell of a grid.

    Attributes:
        positions: (H, W, n, 2) continuous (row, col) positions
        flavor: "predicted" or "ground-truth"
    """

    positions: torch.Tensor
    flavor: Flavor = "ground-truth"

    def __post_init__(self) -> None:
        if self.positions.dim() != 4 or self.positions.shape[-1] != 2:
            raise ShapeError("Offset map must be (H, W, n, 2)", expected="(H, W, n, 2)", actual=tuple(self.positions.shape))

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.positions.shape[0]), int(self.positions.shape[1])

    @property
    def n(self) -> int:
        return int(self.positions.shape[2])

    def at(self, row: int, col: int) -> OffsetSet:
        return OffsetSet((row, col), self.positions[row, col], self.flavor)

    @classmethod
    def identity(cls, height: int, width: int, n: int = const.NUM_OFFSETS, flavor: Flavor = "ground-truth") -> OffsetMap:
        """Every position equals its own query."""
        return cls(query_grid(height, width).unsqueeze(2).expand(height, width, n, 2).clone(), flavor)


def query_grid(height: int, width: int) -> torch.Tensor:
    """(H, W, 2) integer (row, col) coordinates of every cell as float64."""
    rows, cols = torch.meshgrid(
        torch.arange(height, dtype=torch.float64),
        torch.arange(width, dtype=torch.float64),
        indexing="ij",
    )
    return torch.stack([rows, cols], dim=-1)


def _candidates(field: TrajectoryField, object_id: int) -> list[tuple[int, float, int, int]]:
    """(time index, distance, row, col) of every cell of one object with a positive response, oldest first."""
    assert field.object_id is not None and field.time_index is not None and field.distance is not None
    mask = (field.object_id == object_id) & (field.position[0] > 0) & (field.time_index >= 0)
    cells = mask.nonzero().tolist()
    out = [(int(field.time_index[r, c]), float(field.distance[r, c]), r, c) for r, c in cells]
    out.sort(key=lambda item: (-item[0], item[1], item[2], item[3]))
    return out


def _select(candidates: list[tuple[int, float, int, int]], query_age: int, n: int) -> list[tuple[int, int]]:
    older = [(r, c) for age, _, r, c in candidates if age > query_age][:n]
    if older:
        older += [older[0]] * (n - len(older))
    return older


def _require_bookkeeping(field: TrajectoryField) -> None:
    if field.time_index is None or field.object_id is None or field.distance is None:
        raise ShapeError(
            "Ground-truth offsets need a rasterized field",
            expected="time_index, object_id and distance planes",
            actual="predicted field",
        )


def gt_offsets(query: tuple[int, int], field: TrajectoryField, n: int = const.NUM_OFFSETS) -> OffsetSet:
    """
    Ground-truth attention positions of one query cell.

    Args:
        query: (row, col) of the query
        field: Rasterized ground-truth field
        n: Number of positions

    Returns:
        OffsetSet of n integer cell coordinates; the query itself repeated
        when it is background or has no older trajectory cell
    """
    _require_bookkeeping(field)
    r, c = query
    age = int(field.time_index[r, c])  # type: ignore[index]
    chosen: list[tuple[int, int]] = []
    if age >= 0:
        chosen = _select(_candidates(field, int(field.object_id[r, c])), age, n)  # type: ignore[index]
    if not chosen:
        chosen = [query] * n
    return OffsetSet(query, torch.tensor(chosen, dtype=torch.float64), "ground-truth")


def gt_offset_map(field: TrajectoryField, n: int = const.NUM_OFFSETS) -> OffsetMap:
    """:func:`gt_offsets` for every cell of the field's grid."""
    _require_bookkeeping(field)
    h, w = field.grid.shape
    result = OffsetMap.identity(h, w, n)
    positions = result.positions
    by_object: dict[int, list[tuple[int, float, int, int]]] = {}
    for r, c in (field.time_index >= 0).nonzero().tolist():  # type: ignore[operator]
        object_id = int(field.object_id[r, c])  # type: ignore[index]
        if object_id not in by_object:
            by_object[object_id] = _candidates(field, object_id)
        chosen = _select(by_object[object_id], int(field.time_index[r, c]), n)  # type: ignore[index]
        if chosen:
            positions[r, c] = torch.tensor(chosen, dtype=torch.float64)
    return result
