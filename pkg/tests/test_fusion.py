import math

import pytest
import torch

from coopsync.exceptions import ConfigError, NonFiniteError, ShapeError
from coopsync.extractors import BoxPainter
from coopsync.featuremap import FeatureMap
from coopsync.fusion import (
    Detection,
    DetectionHead,
    FusionConv,
    LossWeights,
    OracleHead,
    decode_detections,
    decode_head_output,
    detection_loss,
    encode_box_targets,
    fuse_agents,
    nms,
    total_loss,
)
from coopsync.geometry import GridSpec, OrientedBox

from .conftest import car

GRID = GridSpec.centered(1.6, 8, 8)


def maps(*values, channels=5):
    return [FeatureMap(torch.full((channels, 8, 8), float(v), dtype=torch.float64), GRID, 0, f"a{i}") for i, v in enumerate(values)]


class TestFuse:
    def test_weighted_sum(self):
        out = fuse_agents(maps(1.0, 2.0), FusionConv.weighted([1.0, 1.0], 5))
        assert out.data.unique().tolist() == [3.0]
        assert out.agent_id == "fused"

    def test_weighted_mean(self):
        out = fuse_agents(maps(1.0, 3.0), FusionConv.weighted([0.5, 0.5], 5))
        assert out.data.unique().tolist() == [2.0]

    def test_missing_agents_zero_filled(self):
        out = fuse_agents(maps(4.0), FusionConv.weighted([1.0, 1.0, 1.0], 5))
        assert out.data.unique().tolist() == [4.0]

    def test_errors(self):
        module = FusionConv.weighted([1.0], 5)
        with pytest.raises(ShapeError):
            fuse_agents([], module)
        with pytest.raises(ShapeError):
            fuse_agents(maps(1.0, 1.0), module)
        other = FeatureMap.zeros(5, GridSpec.centered(0.4, 8, 8), 0, "b")
        with pytest.raises(ShapeError):
            fuse_agents([maps(1.0)[0], other], FusionConv.weighted([1.0, 1.0], 5))


class TestDecode:
    def test_encode_decode_round_trip(self):
        box = OrientedBox(1.1, -2.3, 0.4, 4.5, 2.0)
        (r, c), vec = encode_box_targets(box, GRID)
        out = torch.zeros(7, 8, 8, dtype=torch.float64)
        out[:, r, c] = vec
        (det,) = decode_head_output(out, GRID)
        assert det.score == 1.0
        for name in ("cx", "cy", "yaw", "length", "width"):
            assert getattr(det.box, name) == pytest.approx(getattr(box, name), abs=1e-9)

    def test_off_grid_box_has_no_target(self):
        assert encode_box_targets(OrientedBox(50, 50, 0, 4, 2), GRID) is None

    def test_threshold_and_local_maximum(self):
        out = torch.zeros(7, 8, 8, dtype=torch.float64)
        out[0, 2, 2] = 0.9
        out[0, 2, 3] = 0.5
        out[0, 6, 6] = 0.05
        dets = decode_head_output(out, GRID)
        assert [d.score for d in dets] == [0.9]

    def test_oracle_head_on_painted_map(self):
        painter = BoxPainter(GridSpec.centered(0.4, 32, 32), 5)
        ann = car(1, 0, 0.8, 0.8, yaw=0.3)
        data = painter.paint((ann,), GRID)
        fused = FeatureMap(data, GRID, 7, "fused")
        (det,) = decode_detections(fused, OracleHead())
        assert det.timestamp_us == 7
        assert det.box.length == pytest.approx(4.5)
        assert det.box.yaw == pytest.approx(0.3)
        assert (det.box.cx, det.box.cy) == pytest.approx(GRID.cell_center(*GRID.cell_of(0.8, 0.8)))

    def test_oracle_head_ratios_survive_averaging(self):
        vec = torch.tensor(BoxPainter.paint_vector(car(1, 0, 0, 0, yaw=1.0)), dtype=torch.float64)
        x = torch.zeros(1, 5, 2, 2, dtype=torch.float64)
        x[0, :, 0, 0] = 0.25 * vec
        out = OracleHead()(x)[0]
        assert out[0, 0, 0].item() == pytest.approx(0.25)
        torch.testing.assert_close(out[3:, 0, 0], vec[1:])
        assert out[:, 1, 1].abs().sum().item() == 0.0

    def test_nms_idempotent(self):
        dets = [
            Detection(OrientedBox(0, 0, 0, 4, 2), 0.9),
            Detection(OrientedBox(0.2, 0, 0, 4, 2), 0.8),
            Detection(OrientedBox(10, 0, 0, 4, 2), 0.7),
        ]
        once = nms(dets)
        assert [d.score for d in once] == [0.9, 0.7]
        assert nms(once) == once


class TestLosses:
    def test_total_loss_weights(self):
        breakdown = total_loss(
            torch.tensor(1.0),
            [torch.tensor(2.0), torch.tensor(4.0)],
            [torch.tensor(3.0)],
            LossWeights(0.05, 0.05),
        )
        assert float(breakdown.total) == pytest.approx(1.30)
        assert breakdown.as_dict()["field"] == pytest.approx(3.0)

    def test_empty_components_are_zero(self):
        assert float(total_loss(torch.tensor(0.5), [], []).total) == pytest.approx(0.5)

    def test_non_finite_component_named(self):
        with pytest.raises(NonFiniteError) as info:
            total_loss(torch.tensor(1.0), [torch.tensor(float("nan"))], [])
        assert info.value.component == "field"

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigError):
            LossWeights(-0.1, 0.05)

    def test_detection_loss_trains_head(self):
        torch.manual_seed(0)
        head = DetectionHead(5)
        x = torch.rand(1, 5, 8, 8, dtype=torch.float64)
        boxes = [OrientedBox(0.8, 0.8, 0.0, 4.5, 2.0)]
        loss = detection_loss(head.logits(x)[0], boxes, GRID)
        assert math.isfinite(float(loss)) and float(loss) > 0
        loss.backward()
        assert head.conv.weight.grad.abs().sum() > 0
