import math
from fractions import Fraction

import numpy as np
import pytest
import torch

from coopsync.exceptions import DuplicateAnnotationError, ShapeError
from coopsync.geometry import GridSpec
from coopsync.trajfield import (
    EMPTY,
    FieldPredictor,
    Trajectory,
    TrajectorySample,
    build_trajectories,
    field_loss,
    focal_heatmap_loss,
    predict_field,
    rasterize_field,
    squash_field,
    window_timestamps,
)

from .conftest import car

FEATURE_GRID = GridSpec.centered(1.6, 32, 32)


def straight(object_id, x0, y, step_m, count, t_end=1_000_000, yaw=0.0):
    samples = tuple(
        TrajectorySample(t_end - (count - 1 - k) * 100_000, x0 + k * step_m * math.cos(yaw), y + k * step_m * math.sin(yaw), yaw)
        for k in range(count)
    )
    return Trajectory(object_id, samples)


class TestTrajectories:
    def test_window_example(self):
        assert window_timestamps(1_000_000, 400_000, 10.0, 4) == list(range(300_000, 1_000_001, 100_000))

    def test_length_is_delay_frames_plus_capacity(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            delay_us = int(rng.integers(0, 1_000_001))
            hz = float(rng.choice([5.0, 10.0, 12.5, 20.0]))
            capacity = int(rng.integers(1, 7))
            t_us = 10_000_000
            expected = math.ceil(Fraction(delay_us, 1_000_000) * Fraction(str(hz))) + capacity
            window = window_timestamps(t_us, delay_us, hz, capacity)
            assert len(window) == expected
            anns = [[car(1, ts, 0.0, 0.0)] for ts in window]
            (traj,) = build_trajectories(anns, delay_us, hz, capacity, t_us)
            assert len(traj) == expected
            assert traj.end_us == t_us

    def test_object_absent_at_t_dropped(self):
        anns = [[car(1, 800_000, 0, 0), car(2, 800_000, 5, 0)], [car(1, 900_000, 1, 0)], [car(1, 1_000_000, 2, 0)]]
        trajs = build_trajectories(anns, 0, 10.0, 4, 1_000_000)
        assert [t.object_id for t in trajs] == [1]
        assert trajs[0].ages() == [2, 1, 0]

    def test_duplicate_annotation(self):
        anns = [[car(1, 1_000_000, 0, 0)], [car(1, 1_000_000, 1, 0)]]
        with pytest.raises(DuplicateAnnotationError):
            build_trajectories(anns, 0, 10.0, 4, 1_000_000)


class TestRasterize:
    def test_single_sample_is_peak(self):
        traj = Trajectory(3, (TrajectorySample(0, 0.8, 0.8, 0.0),))
        field = rasterize_field([traj], FEATURE_GRID)
        r, c = FEATURE_GRID.cell_of(0.8, 0.8)
        assert field.time_index[r, c] == 0
        assert field.object_id[r, c] == 3
        assert field.position[0, r, c] == 1.0
        assert field.num_peaks == 1
        assert field.covered.sum() == 1

    def test_ages_along_path(self):
        traj = straight(1, -10.4, 0.8, 2.0, 8)
        field = rasterize_field([traj], FEATURE_GRID, timestamp_us=1_000_000)
        newest = FEATURE_GRID.cell_of(traj.samples[-1].cx, traj.samples[-1].cy)
        oldest = FEATURE_GRID.cell_of(traj.samples[0].cx, traj.samples[0].cy)
        assert field.time_index[newest] == 0
        assert field.time_index[oldest] == 7
        assert field.distance[newest] == pytest.approx(0.0)
        assert field.distance[oldest] == pytest.approx(14.0)
        covered = field.covered
        torch.testing.assert_close(
            field.orientation[:, covered],
            torch.tensor([[1.0], [0.0]], dtype=torch.float64).expand(2, int(covered.sum())),
        )
        assert set(field.object_id[covered].tolist()) == {1}
        assert (field.time_index[~covered] == EMPTY).all()

    def test_independent_of_input_order(self):
        a = straight(1, -8.0, 0.8, 2.0, 6)
        b = straight(2, 0.8, -8.0, 2.0, 6, yaw=math.pi / 2)
        one = rasterize_field([a, b], FEATURE_GRID)
        two = rasterize_field([b, a], FEATURE_GRID)
        for name in ("position", "orientation", "time_index", "object_id", "distance"):
            assert torch.equal(getattr(one, name), getattr(two, name)), name

    def test_newer_sample_wins_shared_cell(self):
        old = Trajectory(1, (TrajectorySample(0, 0.8, 0.8, 0.0), TrajectorySample(100_000, 5.6, 0.8, 0.0)))
        new = Trajectory(2, (TrajectorySample(100_000, 0.8, 0.8, 0.0),))
        field = rasterize_field([old, new], FEATURE_GRID)
        cell = FEATURE_GRID.cell_of(0.8, 0.8)
        assert field.object_id[cell] == 2
        assert field.time_index[cell] == 0

    def test_off_grid_trajectory_skipped(self):
        field = rasterize_field([straight(1, 100.0, 100.0, 1.0, 3)], FEATURE_GRID)
        assert field.skipped == 1
        assert field.position.sum() == 0

    def test_binary_field(self):
        field = rasterize_field([straight(1, -4.0, 0.8, 2.0, 4)], FEATURE_GRID, binary=True)
        assert set(field.position.unique().tolist()) == {0.0, 1.0}
        assert torch.equal(field.position[0] == 1.0, field.covered)


class TestFieldLoss:
    def test_binary_field_against_itself_is_zero(self):
        gt = rasterize_field([straight(1, -4.0, 0.8, 2.0, 4)], FEATURE_GRID, binary=True)
        loss = field_loss(gt, gt)
        assert float(loss.total) == pytest.approx(0.0, abs=1e-12)
        assert not loss.no_peaks

    def test_orientation_error_averaged_over_covered(self):
        gt = rasterize_field([straight(1, -4.0, 0.8, 2.0, 4)], FEATURE_GRID, binary=True)
        pred = type(gt)(gt.grid, gt.position.clone(), -gt.orientation)
        loss = field_loss(pred, gt)
        assert float(loss.orientation) == pytest.approx(2.0)

    def test_no_peaks_warns(self, captured_logs):
        empty = rasterize_field([], FEATURE_GRID)
        pred = type(empty)(empty.grid, torch.full_like(empty.position, 0.3), empty.orientation.clone())
        loss = field_loss(pred, empty)
        assert loss.no_peaks
        assert float(loss.position) == 0.0
        assert "no peaks" in captured_logs.text

    def test_shape_mismatch(self):
        a = rasterize_field([], FEATURE_GRID)
        b = rasterize_field([], GridSpec.centered(1.6, 16, 16))
        with pytest.raises(ShapeError):
            field_loss(a, b)

    def test_focal_gradient_matches_finite_differences(self):
        gen = torch.Generator().manual_seed(0)
        pred = (0.1 + 0.8 * torch.rand(1, 6, 6, generator=gen, dtype=torch.float64)).requires_grad_()
        gt = torch.rand(1, 6, 6, generator=gen, dtype=torch.float64)
        gt[0, 2, 3] = 1.0
        assert torch.autograd.gradcheck(lambda p: focal_heatmap_loss(p, gt)[0], (pred,))

    def test_soft_field_against_itself_is_positive(self):
        gt = rasterize_field([straight(1, -4.0, 0.8, 2.0, 4)], FEATURE_GRID)
        assert ((gt.position > 0) & (gt.position < 1)).any()
        assert float(field_loss(gt, gt).position) > 0.0

    def test_field_loss_gradient_matches_central_differences(self):
        grid = GridSpec.centered(1.6, 8, 8)
        gt = rasterize_field([straight(1, -4.0, 0.8, 2.0, 4)], grid)
        gen = torch.Generator().manual_seed(3)
        position = 0.1 + 0.8 * torch.rand(1, 8, 8, generator=gen, dtype=torch.float64)
        # keep every orientation residual at least 0.1 away from the L1 kink
        step = 0.1 + 0.4 * torch.rand(2, 8, 8, generator=gen, dtype=torch.float64)
        sign = torch.where(torch.rand(2, 8, 8, generator=gen, dtype=torch.float64) < 0.5, -1.0, 1.0)
        orientation = gt.orientation + sign * step

        def total(pos: torch.Tensor, ori: torch.Tensor) -> torch.Tensor:
            return field_loss(type(gt)(grid, pos, ori), gt).total

        pos = position.clone().requires_grad_()
        ori = orientation.clone().requires_grad_()
        total(pos, ori).backward()

        eps = 1e-6
        for analytic, base, is_position in ((pos.grad, position, True), (ori.grad, orientation, False)):
            numeric = torch.zeros_like(base)
            flat = numeric.view(-1)
            for k in range(base.numel()):
                up, down = base.clone(), base.clone()
                up.view(-1)[k] += eps
                down.view(-1)[k] -= eps
                if is_position:
                    flat[k] = (total(up, orientation) - total(down, orientation)) / (2 * eps)
                else:
                    flat[k] = (total(position, up) - total(position, down)) / (2 * eps)
            torch.testing.assert_close(analytic, numeric, rtol=1e-3, atol=1e-6)


class TestPredictor:
    def test_output_planes(self):
        grid = GridSpec.centered(1.6, 16, 16)
        torch.manual_seed(0)
        model = FieldPredictor(in_channels=8, width=4, depth=3)
        field = predict_field(torch.rand(8, 16, 16, dtype=torch.float64), grid, model, timestamp_us=5)
        assert field.position.shape == (1, 16, 16)
        assert field.orientation.shape == (2, 16, 16)
        assert ((field.position > 0) & (field.position < 1)).all()
        assert field.time_index is None and field.timestamp_us == 5

    def test_rejects_indivisible_grid(self):
        model = FieldPredictor(in_channels=8, width=4, depth=3)
        with pytest.raises(ShapeError):
            predict_field(torch.zeros(8, 12, 12, dtype=torch.float64), GridSpec.centered(1.6, 12, 12), model)

    def test_rejects_channel_mismatch(self):
        model = FieldPredictor(in_channels=8, width=4, depth=1)
        with pytest.raises(ShapeError):
            predict_field(torch.zeros(4, 8, 8, dtype=torch.float64), GridSpec.centered(1.6, 8, 8), model)

    def test_squash_normalizes_confident_cells(self):
        raw = torch.zeros(3, 2, 2, dtype=torch.float64)
        raw[0, 0, 0] = 5.0
        raw[1:, :, :] = 3.0
        position, orientation = squash_field(raw)
        assert torch.linalg.vector_norm(orientation[:, 0, 0]).item() == pytest.approx(1.0)
        assert orientation[:, 1, 1].tolist() == [3.0, 3.0]
        assert position[0, 1, 1].item() == pytest.approx(0.5)

    def test_receptive_radius(self):
        torch.manual_seed(1)
        model = FieldPredictor(in_channels=2, width=4, depth=1)
        radius = model.receptive_radius()
        assert radius == 5
        x = torch.rand(1, 2, 32, 32, dtype=torch.float64)
        bumped = x.clone()
        bumped[0, :, 16, 16] += 10.0
        with torch.no_grad():
            diff = (model(bumped) - model(x)).abs().sum(dim=1)[0]
        mask = torch.ones(32, 32, dtype=torch.bool)
        mask[16 - radius : 16 + radius + 1, 16 - radius : 16 + radius + 1] = False
        assert diff[mask].max().item() == 0.0
