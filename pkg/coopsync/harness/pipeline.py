"""
End-to-end alignment pipeline.

One run simulates a scenario, delivers every agent's feature maps to the
ego under the configured latency, and at each evaluated ego time t:

    1. admits the maps that have arrived into the agent caches
    2. TE-fuses and warps each cache into the ego frame at t
    3. aligns every agent (oracle, predicted, or not at all)
    4. fuses the agents, decodes detections and scores them against GT

Modes:
    oracle     painted features, GT fields and offsets, uniform attention
    predicted  pillar features and learned fields, offsets and attention
    unaligned  painted features, newest received map per agent
    ego-only   oracle stack with every non-ego agent removed
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch

from .. import constants as const
from .. import logger
from ..attention import align_agent
from ..cache import CacheSet
from ..exceptions import ConfigError, PipelineError, SerializationError
from ..extractors import BaseExtractor, BoxPainter, PillarExtractor
from ..featuremap import FeatureMap
from ..fusion import (
    Detection,
    LossWeights,
    OracleHead,
    decode_detections,
    detection_loss,
    fuse_agents,
    total_loss,
)
from ..geometry import GridSpec, OrientedBox
from ..offsets import OffsetMap, gt_offset_map, offset_map_loss, predict_offsets
from ..params import ParamBundle
from ..simkit import (
    BoxAnnotation,
    LatencySpec,
    PointCloudFrame,
    ScenarioConfig,
    agent_pose_at,
    frame_times_us,
    generate_scenario,
    ground_truth_at,
    schedule_delivery,
)
from ..temporal import aggregate_concat, aggregate_mean, assemble_history
from ..trajfield import (
    TrajectoryField,
    build_trajectories,
    field_loss,
    predict_field,
    rasterize_field,
    window_timestamps,
)
from .metrics import APResult, average_precision_frames

MODES = ("oracle", "predicted", "unaligned", "ego-only")
ABLATIONS = ("field", "offsets", "attention")
PAINTED_MODES = ("oracle", "unaligned", "ego-only")


@dataclass
class FrameOutput:
    """Everything produced for one ego time."""

    timestamp_us: int
    detections: list[Detection]
    ground_truth: list[BoxAnnotation]
    peak_displacement: dict[str, Optional[float]] = field(default_factory=dict)
    losses: dict[str, float] = field(default_factory=dict)


@dataclass
class EvalResult:
    """
    Metrics of one (scenario, mode, latency) condition.

    ``runtime_ms`` is wall-clock and excluded from :meth:`to_record`, so two
    runs with the same seed serialize to identical bytes.
    """

    scenario: str
    mode: str
    latency_ms: str
    ap50: float
    ap70: float
    n_gt: int
    n_det: int
    pr_curve: list[tuple[float, float]]
    runtime_ms: float = 0.0
    peak_displacement: dict[str, Optional[float]] = field(default_factory=dict)
    losses: dict[str, float] = field(default_factory=dict)
    no_gt: bool = False
    frames: list[FrameOutput] = field(default_factory=list, repr=False, compare=False)
    pr: Optional[APResult] = field(default=None, repr=False, compare=False)

    def to_record(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "latency_ms": self.latency_ms,
            "ap50": self.ap50,
            "ap70": self.ap70,
            "n_gt": self.n_gt,
            "n_det": self.n_det,
            "no_gt": self.no_gt,
            "pr_curve": [list(p) for p in self.pr_curve],
            "peak_displacement": self.peak_displacement,
            "losses": self.losses,
        }

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_record(), sort_keys=True).encode()

    def metrics_row(self) -> dict[str, Any]:
        return {col: getattr(self, col) for col in const.METRICS_COLUMNS}


def peak_displacement(f: FeatureMap, boxes: Sequence[BoxAnnotation]) -> Optional[float]:
    """
    Distance from the feature-norm peak cell centre to the nearest GT centre.

    Returns:
        Meters, or None when the map is all zero or there are no boxes
    """
    norm = f.norm_map()
    if not boxes or float(norm.max()) == 0.0:
        return None
    flat = int(torch.argmax(norm))
    r, c = divmod(flat, f.grid.width_cells)
    x, y = f.grid.cell_center(r, c)
    return min(math.hypot(b.box.cx - x, b.box.cy - y) for b in boxes)


def _in_grid(boxes: Iterable[BoxAnnotation], grid: GridSpec) -> list[BoxAnnotation]:
    return [b for b in boxes if grid.cell_of(b.box.cx, b.box.cy) is not None]


class Pipeline:
    """
    Stateful run over one scenario.

    Usage:
        pipe = Pipeline(fixtures.moving_object_scene().with_latency(400), "oracle")
        result = pipe.run()
    """

    def __init__(
        self,
        cfg: ScenarioConfig,
        mode: str = "oracle",
        params: Optional[ParamBundle] = None,
        ablate: Sequence[str] = (),
        weights: LossWeights = LossWeights(),
        seed: Optional[int] = None,
    ) -> None:
        if mode not in MODES:
            raise ConfigError("Unknown pipeline mode", f"'{mode}' (use {', '.join(MODES)})", field="mode")
        unknown = [a for a in ablate if a not in ABLATIONS]
        if unknown:
            raise ConfigError("Unknown ablation", f"{unknown} (use {', '.join(ABLATIONS)})", field="ablate")
        if ablate and mode != "predicted":
            raise ConfigError("Ablations apply to predicted mode only", f"mode={mode}", field="ablate")

        self.latency_label = _latency_label(cfg)
        self.cfg = cfg.ego_only() if mode == "ego-only" else cfg
        self.mode = mode
        self.ablate = frozenset(ablate)
        self.weights = weights
        self.seed = self.cfg.seed if seed is None else seed
        agents = len(self.cfg.agents)
        if params is None:
            factory = ParamBundle.seeded if mode == "predicted" else ParamBundle.oracle
            params = factory(self.seed, agents=agents)
        if params.agents < agents:
            raise ConfigError(
                "Parameter bundle fuses fewer agents than the scenario has",
                f"{params.agents} < {agents}",
                field="agents",
            )
        self.params = params
        self.grid = self.cfg.feature_grid()
        self.head = OracleHead() if mode in PAINTED_MODES else params.head
        self.extractor = self._extractor()
        self.extractor.validate_params()
        self.caches = CacheSet({a.agent_id: a.cache_capacity for a in self.cfg.agents})
        self.dumps: Optional[dict[str, Any]] = None

    def _extractor(self) -> BaseExtractor:
        base = self.cfg.base_grid()
        if self.mode in PAINTED_MODES:
            return BoxPainter(base, self.params.channels)
        return PillarExtractor(base, self.params.encoder, self.params.backbone, self.cfg.z_range)

    # ------------------------------------------------------------------
    # Ground truth
    # ------------------------------------------------------------------

    def ground_truth_field(self, agent_id: str, t_us: int, frames: dict[tuple[str, int], PointCloudFrame]) -> TrajectoryField:
        """Rasterized trajectories of the objects in an agent's cache, over its delay window."""
        agent = self.cfg.agent(agent_id)
        cache = self.caches[agent_id]
        newest = cache.newest
        delay = max(0, t_us - newest.timestamp_us) if newest is not None else 0
        ids = {b.object_id for ts in cache.timestamps for b in frames[(agent_id, ts)].boxes}
        window = window_timestamps(t_us, delay, agent.frequency_hz, agent.cache_capacity)
        annotations = [ground_truth_at(self.cfg, ts, reference_us=t_us, object_ids=ids) for ts in window]
        trajs = build_trajectories(annotations, delay, agent.frequency_hz, agent.cache_capacity, t_us)
        return rasterize_field(trajs, self.grid, timestamp_us=t_us)

    # ------------------------------------------------------------------
    # Alignment
    # ------------------------------------------------------------------

    def _align_painted(self, history: list[FeatureMap], gt_field: TrajectoryField) -> tuple[FeatureMap, OffsetMap]:
        offsets = gt_offset_map(gt_field)
        if self.mode == "unaligned":
            return history[-1], offsets
        vacate = gt_field.time_index > 0  # type: ignore[operator]
        return align_agent(aggregate_mean(history), offsets, self.params.attention, vacate), offsets

    def _align_predicted(
        self, history: list[FeatureMap], gt_field: TrajectoryField, t_us: int
    ) -> tuple[FeatureMap, OffsetMap, TrajectoryField, dict[str, torch.Tensor]]:
        p = self.params
        h, w = self.grid.shape
        if "field" in self.ablate:
            pred_field = TrajectoryField(
                self.grid,
                torch.zeros(1, h, w, dtype=torch.float64),
                torch.zeros(2, h, w, dtype=torch.float64),
                timestamp_us=t_us,
            )
        else:
            pred_field = predict_field(aggregate_concat(history, p.history_frames), self.grid, p.field, t_us)

        agg = aggregate_mean(history)
        if "offsets" in self.ablate:
            first = OffsetMap.identity(h, w, p.offsets.n, "predicted")
            source: Any = first
        else:
            first = predict_offsets(agg, pred_field, p.offsets)

            def source(current: FeatureMap) -> OffsetMap:
                return predict_offsets(current, pred_field, p.offsets)

        aligned = agg if "attention" in self.ablate else align_agent(agg, source, p.attention)
        losses = {
            "field": field_loss(pred_field, gt_field).total,
            "offset": offset_map_loss(first, gt_offset_map(gt_field, p.offsets.n)),
        }
        return aligned, first, pred_field, losses

    # ------------------------------------------------------------------
    # One ego frame
    # ------------------------------------------------------------------

    def step(self, t_us: int, frames: dict[tuple[str, int], PointCloudFrame]) -> FrameOutput:
        """Align, fuse and detect at ego time ``t_us`` from the current cache contents."""
        cfg = self.cfg
        ego = cfg.ego
        ego_newest = self.caches[ego.agent_id].newest
        reference_us = ego_newest.timestamp_us if ego_newest is not None else t_us
        ego_pose = agent_pose_at(ego, t_us)
        gts = _in_grid(ground_truth_at(cfg, t_us, reference_us=t_us), self.grid)

        aligned: list[FeatureMap] = []
        fields: list[torch.Tensor] = []
        offs: list[torch.Tensor] = []
        out = FrameOutput(t_us, [], gts)
        received = 0
        for agent in cfg.fusion_order:
            cache = self.caches[agent.agent_id]
            if not len(cache):
                logger.debug(f"No maps from '{agent.agent_id}' yet at t={t_us}us, slot zero-filled")
                aligned.append(FeatureMap.zeros(self.params.channels, self.grid, t_us, agent.agent_id))
                continue
            history = assemble_history(
                cache.entries,
                ego_pose,
                self.params.temporal,
                reference_us,
                target_us=t_us,
                target_grid=self.grid,
                frequency_hz=agent.frequency_hz,
            )
            gt_field = self.ground_truth_field(agent.agent_id, t_us, frames)
            if self.mode == "predicted":
                f, offsets, shown_field, agent_losses = self._align_predicted(history, gt_field, t_us)
                fields.append(agent_losses["field"])
                offs.append(agent_losses["offset"])
            else:
                f, offsets = self._align_painted(history, gt_field)
                shown_field = gt_field
            aligned.append(f)
            received += 1
            if not agent.ego:
                out.peak_displacement[agent.agent_id] = peak_displacement(f, gts)
            self._record_dump(agent.agent_id, t_us, f, shown_field, gt_field, offsets)

        if not received:
            return out
        fused = fuse_agents(aligned, self.params.fusion)
        out.detections = decode_detections(fused, self.head)
        if self.mode == "predicted":
            with torch.no_grad():
                logits = self.params.head.logits(fused.data.unsqueeze(0))[0]
            det = detection_loss(logits, [g.box for g in gts], self.grid)
            out.losses = total_loss(det, fields, offs, self.weights).as_dict()
        return out

    # ------------------------------------------------------------------
    # Full run
    # ------------------------------------------------------------------

    def eval_times(self) -> list[int]:
        start = int(round(self.cfg.eval_start_s * const.US_PER_SECOND))
        return [t for t in frame_times_us(self.cfg, self.cfg.ego) if t >= start]

    def run(
        self,
        eval_times_us: Optional[Sequence[int]] = None,
        out_dir: Union[str, Path, None] = None,
        streams: Optional[dict[str, list[PointCloudFrame]]] = None,
    ) -> EvalResult:
        """
        Simulate (or take ``streams``), deliver and evaluate every requested ego time.

        Raises:
            PipelineError: Wrapping any module error with the ego time it occurred at
        """
        started = time.perf_counter()
        cfg = self.cfg
        times = sorted(self.eval_times() if eval_times_us is None else eval_times_us)
        self.caches.clear_all()
        self.dumps = {"fields": {}, "offsets": [], "detections": []} if out_dir is not None else None

        if streams is None:
            streams = generate_scenario(cfg)
        streams = {a.agent_id: streams[a.agent_id] for a in cfg.agents if a.agent_id in streams}
        frames = {(f.agent_id, f.timestamp_us): f for stream in streams.values() for f in stream}
        features = {agent_id: self.extractor.extract_all(stream) for agent_id, stream in streams.items()}
        messages = schedule_delivery(features, {a.agent_id: a.latency for a in cfg.agents}, seed=self.seed)

        outputs: list[FrameOutput] = []
        cursor = 0
        for t in times:
            try:
                while cursor < len(messages) and messages[cursor].arrives_at_us <= t:
                    msg = messages[cursor]
                    cursor += 1
                    cache = self.caches[msg.agent_id]
                    newest = cache.newest
                    if newest is not None and msg.payload.timestamp_us <= newest.timestamp_us:
                        logger.debug(f"Stale map from '{msg.agent_id}' t={msg.sent_at_us}us skipped")
                        continue
                    cache.insert(msg.payload)
                output = self.step(t, frames)
            except PipelineError:
                raise
            except Exception as e:
                raise PipelineError(t, e) from e
            outputs.append(output)
            if self.dumps is not None:
                self.dumps["detections"].append(
                    {"t_us": t, "detections": [d.to_record() for d in output.detections]}
                )

        result = self._summarize(outputs, (time.perf_counter() - started) * 1000.0)
        if out_dir is not None:
            write_run(result, Path(out_dir), self.dumps or {})
        return result

    def _summarize(self, outputs: list[FrameOutput], runtime_ms: float) -> EvalResult:
        pairs = [(o.detections, o.ground_truth) for o in outputs]
        ap50: APResult = average_precision_frames(pairs, const.AP_IOU_THRESHOLDS[0])
        ap70: APResult = average_precision_frames(pairs, const.AP_IOU_THRESHOLDS[1])
        peaks: dict[str, Optional[float]] = {}
        for agent in self.cfg.agents:
            if agent.ego:
                continue
            values = [o.peak_displacement.get(agent.agent_id) for o in outputs]
            present = [v for v in values if v is not None]
            peaks[agent.agent_id] = float(np.mean(present)) if present else None
        losses: dict[str, float] = {}
        if outputs and outputs[0].losses:
            losses = pd.DataFrame([o.losses for o in outputs]).mean().to_dict()
        result = EvalResult(
            scenario=self.cfg.name,
            mode=self.mode,
            latency_ms=self.latency_label,
            ap50=ap50.ap,
            ap70=ap70.ap,
            n_gt=ap50.n_gt,
            n_det=ap50.n_det,
            pr_curve=ap50.pr_curve,
            runtime_ms=runtime_ms,
            peak_displacement=peaks,
            losses=losses,
            no_gt=ap50.no_gt,
            frames=outputs,
            pr=ap50,
        )
        logger.debug(
            f"Run {result.scenario}/{result.mode} latency={result.latency_ms}ms "
            f"ap50={result.ap50:.3f} ap70={result.ap70:.3f} in {runtime_ms:.0f}ms"
        )
        return result

    # ------------------------------------------------------------------
    # Dumps
    # ------------------------------------------------------------------

    def _record_dump(
        self,
        agent_id: str,
        t_us: int,
        f: FeatureMap,
        shown: TrajectoryField,
        gt: TrajectoryField,
        offsets: OffsetMap,
    ) -> None:
        if self.dumps is None:
            return
        key = f"{agent_id}@{t_us}"
        arrays = self.dumps["fields"]
        arrays[f"{key}/position"] = shown.position.detach().numpy()
        arrays[f"{key}/orientation"] = shown.orientation.detach().numpy()
        arrays[f"{key}/time_index"] = gt.time_index.numpy()  # type: ignore[union-attr]
        arrays[f"{key}/norm"] = f.norm_map().detach().numpy()
        gt_offsets = gt_offset_map(gt, offsets.n) if offsets.flavor == "predicted" else None
        for r, c in gt.covered.nonzero().tolist():
            record = {"t_us": t_us, "agent": agent_id, **offsets.at(r, c).to_record()}
            if gt_offsets is not None:
                record["gt_positions"] = gt_offsets.positions[r, c].tolist()
            self.dumps["offsets"].append(record)


def _latency_label(cfg: ScenarioConfig) -> str:
    coop = [a.latency for a in cfg.agents if not a.ego]
    return str(coop[0] if coop else LatencySpec())


def write_run(result: EvalResult, out_dir: Path, dumps: dict[str, Any]) -> None:
    """
    Write a run's artifacts: metrics.csv, pr.csv, detections.jsonl, offsets.jsonl, fields.npz.

    Raises:
        SerializationError: If the directory cannot be written
    """
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        pd.DataFrame([result.metrics_row()], columns=list(const.METRICS_COLUMNS)).to_csv(
            out_dir / const.METRICS_CSV, index=False
        )
        if result.pr is not None:
            result.pr.table().to_csv(out_dir / const.PR_CSV, index=False)
        with open(out_dir / const.DETECTIONS_FILE, "w") as fh:
            for record in dumps.get("detections", []):
                fh.write(json.dumps(record) + "\n")
        with open(out_dir / const.OFFSETS_FILE, "w") as fh:
            for record in dumps.get("offsets", []):
                fh.write(json.dumps(record) + "\n")
        np.savez_compressed(out_dir / const.FIELDS_FILE, **dumps.get("fields", {}))
    except OSError as e:
        raise SerializationError("Failed to write run artifacts", f"{out_dir}: {e}") from e
    logger.info(f"Wrote run artifacts to {out_dir}")


def run_pipeline(
    cfg: ScenarioConfig,
    mode: str = "oracle",
    params: Optional[ParamBundle] = None,
    latency: Union[str, float, LatencySpec, None] = None,
    ego_latency: Union[str, float, LatencySpec, None] = None,
    seed: Optional[int] = None,
    ablate: Sequence[str] = (),
    weights: LossWeights = LossWeights(),
    out_dir: Union[str, Path, None] = None,
    eval_times_us: Optional[Sequence[int]] = None,
    streams: Optional[dict[str, list[PointCloudFrame]]] = None,
) -> EvalResult:
    """
    Run one condition end to end.

    Args:
        cfg: Scenario
        mode: One of MODES
        params: Parameter bundle; seeded (predicted) or oracle settings when omitted
        latency: Non-ego latency override, e.g. 400 or "0:400" (ms)
        ego_latency: Ego processing delay override (ms)
        seed: Overrides the scenario seed for latency draws and parameters
        ablate: Components disabled in predicted mode
        weights: Field and offset loss weights
        out_dir: Write artifacts here when given
        eval_times_us: Ego times to evaluate (default: every ego frame from eval_start_s)
        streams: Pre-simulated frames per agent (default: generated from ``cfg``)

    Returns:
        EvalResult with pooled AP50/AP70 over the evaluated frames
    """
    if latency is not None or ego_latency is not None:
        coop = latency if latency is not None else _latency_label(cfg)
        cfg = cfg.with_latency(coop, ego_latency)
    return Pipeline(cfg, mode, params, ablate, weights, seed).run(eval_times_us, out_dir, streams)


def read_detections(path: Union[str, Path]) -> dict[int, list[Detection]]:
    """
    Read a detections.jsonl dump back into Detection lists keyed by ego time.

    Raises:
        SerializationError: On unreadable files or malformed records
    """
    path = Path(path)
    out: dict[int, list[Detection]] = {}
    try:
        with open(path) as fh:
            for line_no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    t_us = int(record["t_us"])
                    out[t_us] = [
                        Detection(OrientedBox(d["cx"], d["cy"], d["yaw"], d["l"], d["w"]), float(d["score"]), t_us)
                        for d in record["detections"]
                    ]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                    raise SerializationError("Malformed detection record", f"{path}:{line_no}: {e}", raw_data=line[:200]) from e
    except OSError as e:
        raise SerializationError("Could not read detections", f"{path}: {e}") from e
    return out


def evaluate_detections(cfg: ScenarioConfig, detections: dict[int, list[Detection]]) -> tuple[APResult, APResult]:
    """AP50 and AP70 of dumped detections against the scenario's analytic ground truth."""
    grid = cfg.feature_grid()
    pairs = [
        (dets, _in_grid(ground_truth_at(cfg, t_us, reference_us=t_us), grid))
        for t_us, dets in sorted(detections.items())
    ]
    return (
        average_precision_frames(pairs, const.AP_IOU_THRESHOLDS[0]),
        average_precision_frames(pairs, const.AP_IOU_THRESHOLDS[1]),
    )
