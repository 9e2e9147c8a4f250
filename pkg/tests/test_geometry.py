import math

import numpy as np
import pytest
import torch

from coopsync.exceptions import ConfigError
from coopsync.geometry import (
    GridSpec,
    OrientedBox,
    Pose2,
    compose,
    relative_pose,
    rotated_iou,
    sample_bilinear,
    warp_feature_map,
    wrap_angle,
)

from .conftest import impulse, make_map


class TestPose2:
    def test_inverse_composes_to_identity(self):
        p = Pose2(3.0, -1.5, 0.7)
        ident = compose(p, p.inverse())
        assert ident.x == pytest.approx(0.0, abs=1e-12)
        assert ident.y == pytest.approx(0.0, abs=1e-12)
        assert ident.yaw == pytest.approx(0.0, abs=1e-12)

    def test_apply_rotates_then_translates(self):
        p = Pose2(1.0, 2.0, math.pi / 2)
        out = p.apply(np.array([[1.0, 0.0, 5.0]]))
        np.testing.assert_allclose(out, [[1.0, 3.0, 5.0]], atol=1e-12)

    def test_relative_pose_maps_source_into_target(self):
        target = Pose2(10.0, 0.0, 0.0)
        source = Pose2(12.0, 1.0, 0.0)
        rel = relative_pose(target, source)
        np.testing.assert_allclose(rel.apply(np.array([[0.0, 0.0]])), [[2.0, 1.0]], atol=1e-12)

    def test_yaw_is_wrapped(self):
        assert Pose2(0, 0, 2 * math.pi + 0.5).yaw == pytest.approx(0.5)
        assert -math.pi < wrap_angle(-math.pi) <= math.pi


class TestRotatedIoU:
    def test_identical(self):
        box = OrientedBox(1.0, 2.0, 0.3, 4.5, 2.0)
        assert rotated_iou(box, box) == pytest.approx(1.0, abs=1e-9)

    def test_disjoint(self):
        assert rotated_iou(OrientedBox(0, 0, 0, 2, 2), OrientedBox(10, 0, 0, 2, 2)) == 0.0

    def test_half_shift_is_one_third(self):
        assert rotated_iou(OrientedBox(0, 0, 0, 2, 2), OrientedBox(1, 0, 0, 2, 2)) == pytest.approx(1 / 3, abs=1e-9)

    def test_quarter_turn_of_rectangle(self):
        a = OrientedBox(0, 0, 0, 4, 2)
        b = OrientedBox(0, 0, math.pi / 2, 4, 2)
        assert rotated_iou(a, b) == pytest.approx(4 / 12, abs=1e-9)

    def test_symmetric(self):
        a = OrientedBox(0.3, -0.2, 0.4, 4.5, 2.0)
        b = OrientedBox(1.0, 0.5, -0.2, 4.0, 1.8)
        assert rotated_iou(a, b) == pytest.approx(rotated_iou(b, a), abs=1e-12)

    def test_zero_extent_gives_zero(self):
        assert rotated_iou(OrientedBox(0, 0, 0, 0, 2), OrientedBox(0, 0, 0, 2, 2)) == 0.0

    def test_negative_extent_rejected(self):
        with pytest.raises(ConfigError):
            OrientedBox(0, 0, 0, -1.0, 2.0)


class TestGridSpec:
    def test_centered_extent(self):
        grid = GridSpec.centered(0.4, 128, 128)
        assert grid.origin_x == pytest.approx(-25.6)
        assert grid.downsampled(4).cell_size == pytest.approx(1.6)
        assert grid.downsampled(4).shape == (32, 32)

    def test_boundary_point_lands_in_upper_cell(self, small_grid):
        assert small_grid.cell_of(2.0, 3.0) == (3, 2)
        assert small_grid.cell_of(8.0, 0.0) is None

    def test_continuous_coordinates_of_centre(self, small_grid):
        row, col = small_grid.to_continuous(np.array([2.5]), np.array([4.5]))
        assert row[0] == pytest.approx(4.0)
        assert col[0] == pytest.approx(2.0)

    def test_indivisible_downsample(self):
        with pytest.raises(ConfigError):
            GridSpec(0, 0, 1.0, 6, 6).downsampled(4)


class TestSampling:
    def test_integer_coordinates_are_exact(self):
        data = torch.arange(16, dtype=torch.float64).reshape(1, 4, 4)
        out = sample_bilinear(data, torch.tensor([2.0]), torch.tensor([3.0]))
        assert out[0, 0].item() == 11.0

    def test_midpoint_is_average(self):
        data = torch.arange(16, dtype=torch.float64).reshape(1, 4, 4)
        out = sample_bilinear(data, torch.tensor([1.5]), torch.tensor([0.5]))
        assert out[0, 0].item() == pytest.approx((4 + 5 + 8 + 9) / 4)

    def test_outside_reads_zero(self):
        data = torch.ones((2, 3, 3), dtype=torch.float64)
        out = sample_bilinear(data, torch.tensor([-5.0]), torch.tensor([1.0]))
        assert torch.all(out == 0)


class TestWarp:
    def test_integer_translation_moves_cells(self, small_grid):
        f = make_map(impulse(small_grid, 3, 2, channels=2), small_grid)
        out = warp_feature_map(f, Pose2(1.0, 0.0, 0.0))
        assert out.data[:, 3, 3].tolist() == [1.0, 1.0]
        assert out.data.sum().item() == pytest.approx(2.0)

    def test_identity_is_noop(self, small_grid):
        data = torch.rand((3,) + small_grid.shape, dtype=torch.float64)
        f = make_map(data, small_grid)
        torch.testing.assert_close(warp_feature_map(f, Pose2()).data, data)

    def test_shifted_out_of_range_is_zero(self, small_grid):
        f = make_map(impulse(small_grid, 3, 7), small_grid)
        out = warp_feature_map(f, Pose2(1.0, 0.0, 0.0), timestamp_us=5)
        assert out.data.abs().sum().item() == 0.0
        assert out.timestamp_us == 5


def _random_box(rng: np.random.Generator) -> OrientedBox:
    return OrientedBox(
        float(rng.uniform(-3, 3)),
        float(rng.uniform(-3, 3)),
        float(rng.uniform(-math.pi, math.pi)),
        float(rng.uniform(0.5, 6.0)),
        float(rng.uniform(0.5, 3.0)),
    )


def _random_pose(rng: np.random.Generator) -> Pose2:
    return Pose2(float(rng.uniform(-20, 20)), float(rng.uniform(-20, 20)), float(rng.uniform(-math.pi, math.pi)))


class TestRandomizedProperties:
    @pytest.mark.parametrize("seed", range(5))
    def test_iou_unchanged_by_rigid_motion(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(40):
            a, b = _random_box(rng), _random_box(rng)
            motion = Pose2(0.0, 0.0, float(rng.uniform(-math.pi, math.pi)))
            moved = rotated_iou(a.transformed(motion), b.transformed(motion))
            assert moved == pytest.approx(rotated_iou(a, b), abs=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_warp_is_linear_in_features(self, seed, small_grid):
        rng = np.random.default_rng(seed)
        gen = torch.Generator().manual_seed(seed)
        shape = (3,) + small_grid.shape
        f1 = torch.rand(shape, dtype=torch.float64, generator=gen)
        f2 = torch.rand(shape, dtype=torch.float64, generator=gen)
        pose = Pose2(float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)), float(rng.uniform(-0.5, 0.5)))
        both = warp_feature_map(make_map(f1 + f2, small_grid), pose).data
        apart = warp_feature_map(make_map(f1, small_grid), pose).data
        apart = apart + warp_feature_map(make_map(f2, small_grid), pose).data
        torch.testing.assert_close(both, apart, rtol=0.0, atol=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_compose_is_associative(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(40):
            a, b, c = _random_pose(rng), _random_pose(rng), _random_pose(rng)
            left = compose(compose(a, b), c)
            right = compose(a, compose(b, c))
            assert left.x == pytest.approx(right.x, abs=1e-9)
            assert left.y == pytest.approx(right.y, abs=1e-9)
            assert wrap_angle(left.yaw - right.yaw) == pytest.approx(0.0, abs=1e-9)
