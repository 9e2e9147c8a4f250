"""
Detection metrics: greedy IoU matching, PR curves and all-point AP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from ..fusion import Detection
from ..geometry import rotated_iou
from ..simkit.scenario import BoxAnnotation


@dataclass(frozen=True)
class APResult:
    """
    Average precision at one IoU threshold.

    Attributes:
        ap: Area under the precision envelope
        recall / precision / scores: PR points in descending score order
        n_gt: Ground-truth boxes
        n_det: Detections
        no_gt: True when there was nothing to detect (AP reported as 0)
    """

    ap: float
    recall: np.ndarray = field(repr=False)
    precision: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)
    n_gt: int = 0
    n_det: int = 0
    no_gt: bool = False

    @property
    def pr_curve(self) -> list[tuple[float, float]]:
        return [(float(r), float(p)) for r, p in zip(self.recall, self.precision)]

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"score": self.scores, "precision": self.precision, "recall": self.recall})


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[BoxAnnotation],
    iou_threshold: float,
) -> list[tuple[float, bool]]:
    """
    Greedy matching in descending score order.

    Each detection takes the unmatched GT with the highest IoU; it is a
    true positive when that IoU reaches ``iou_threshold``.

    Returns:
        (score, is_true_positive) per detection, highest score first
    """
    matched = [False] * len(gts)
    out = []
    for det in sorted(dets, key=lambda d: -d.score):
        best, best_iou = -1, 0.0
        for j, gt in enumerate(gts):
            if matched[j]:
                continue
            iou = rotated_iou(det.box, gt.box)
            if iou > best_iou:
                best, best_iou = j, iou
        hit = best >= 0 and best_iou >= iou_threshold
        if hit:
            matched[best] = True
        out.append((det.score, hit))
    return out


def all_point_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the monotone precision envelope, summed where recall changes."""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    idx = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def _from_matches(matches: list[tuple[float, bool]], n_gt: int) -> APResult:
    matches = sorted(matches, key=lambda m: -m[0])
    scores = np.array([m[0] for m in matches], dtype=np.float64)
    tp = np.cumsum([1.0 if m[1] else 0.0 for m in matches]) if matches else np.zeros(0)
    fp = np.cumsum([0.0 if m[1] else 1.0 for m in matches]) if matches else np.zeros(0)
    if n_gt == 0:
        return APResult(0.0, np.zeros(len(matches)), np.zeros(len(matches)), scores, 0, len(matches), no_gt=True)
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, np.finfo(np.float64).eps)
    return APResult(all_point_ap(recall, precision), recall, precision, scores, n_gt, len(matches))


def average_precision(
    dets: Sequence[Detection],
    gts: Sequence[BoxAnnotation],
    iou_threshold: float = 0.5,
) -> APResult:
    """
    All-point interpolated AP of one frame.

    Examples:
        Two GT boxes and detections scored 0.9 (TP), 0.8 (FP), 0.7 (TP)
        give AP = 1/2 * 1 + 1/2 * 2/3 = 5/6.
    """
    return _from_matches(match_detections(dets, gts, iou_threshold), len(gts))


def average_precision_frames(
    frames: Sequence[tuple[Sequence[Detection], Sequence[BoxAnnotation]]],
    iou_threshold: float = 0.5,
) -> APResult:
    """AP over several frames: matching per frame, ranking pooled across frames."""
    matches: list[tuple[float, bool]] = []
    n_gt = 0
    for dets, gts in frames:
        matches.extend(match_detections(dets, gts, iou_threshold))
        n_gt += len(gts)
    return _from_matches(matches, n_gt)
