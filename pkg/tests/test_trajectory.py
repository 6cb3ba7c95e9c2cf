import math

import numpy as np
import pytest

from goalfuse.errors import ContractError, ValidationError
from goalfuse.scene import world_to_pixel
from goalfuse.trajectory import (
    EPOCHS,
    HEADING_CHANNELS,
    MAP_CHANNEL,
    N_CHANNELS,
    POSITION_CHANNELS,
    Trajectory,
    from_points,
    gaussian_splat,
    headings,
    load_trajectory,
    progress_distance,
    rasterize,
    resample_to_epochs,
    save_trajectory,
)

from .conftest import make_map
from .oracles import truncated_gaussian_mass


def straight_line(n=2, length=1.0, dt=1.0):
    xs = np.linspace(0.0, length, n)
    return from_points([(i * dt, x, 0.0) for i, x in enumerate(xs)])


SQUARE_LOOP = from_points(
    [(0, 0, 0), (1, 1, 0), (2, 1, 1), (3, 0, 1), (4, 0, 0)]
)


class TestTrajectoryType:
    def test_needs_two_samples(self):
        with pytest.raises(ValidationError):
            from_points([(0.0, 1.0, 1.0)])

    def test_time_strictly_increasing(self):
        with pytest.raises(ValidationError):
            from_points([(0.0, 0, 0), (0.0, 1, 0)])

    def test_csv_round_trip(self, tmp_path):
        traj = from_points([(0.0, 0.125, -3.5), (0.7, 1.0, 2.25), (1.9, 4.5, 0.0)])
        save_trajectory(traj, tmp_path / "t.csv")
        again = load_trajectory(tmp_path / "t.csv")
        assert np.array_equal(again.samples, traj.samples)

    def test_csv_accepts_crlf(self, tmp_path):
        (tmp_path / "t.csv").write_bytes(b"t,x,y\r\n0,0,0\r\n1,1,0\r\n")
        traj = load_trajectory(tmp_path / "t.csv")
        assert len(traj) == 2

    def test_csv_bad_header(self, tmp_path):
        (tmp_path / "t.csv").write_text("a,b,c\n0,0,0\n1,1,0\n")
        with pytest.raises(ValidationError):
            load_trajectory(tmp_path / "t.csv")


class TestProgressDistance:
    def test_single_segment(self):
        assert progress_distance(straight_line(2, 1.0)) == 1.0

    def test_collinear_additivity(self):
        assert progress_distance(straight_line(3, 2.0)) == 2.0

    def test_square_loop_perimeter(self):
        # hand-summed: four unit sides
        assert progress_distance(SQUARE_LOOP) == pytest.approx(4.0, abs=1e-12)

    def test_concatenation_additivity(self):
        rng = np.random.default_rng(2)
        a = from_points([(i, *rng.uniform(0, 5, 2)) for i in range(4)])
        b = from_points([(10 + i, *rng.uniform(0, 5, 2)) for i in range(5)])
        joined = Trajectory(samples=np.vstack((a.samples, b.samples)))
        gap = float(np.hypot(*(b.xy[0] - a.xy[-1])))
        assert progress_distance(joined) == pytest.approx(
            progress_distance(a) + progress_distance(b) + gap, abs=1e-12
        )

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(9)
        pts = [(i, *rng.uniform(0, 5, 2)) for i in range(8)]
        traj = from_points(pts)
        theta, tx, ty = 0.7, 3.0, -2.0
        rot = np.array(
            [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
        )
        moved = traj.samples.copy()
        moved[:, 1:] = traj.xy @ rot.T + (tx, ty)
        assert progress_distance(Trajectory(samples=moved)) == pytest.approx(
            progress_distance(traj), abs=1e-9
        )


class TestResample:
    def test_midpoint_inserted(self):
        traj = from_points([(0, 0, 0), (2, 4, 0)])
        out = resample_to_epochs(traj, 3)
        assert out.samples.tolist() == [[0, 0, 0], [1, 2, 0], [2, 4, 0]]

    def test_idempotent_on_uniform_input(self):
        traj = from_points([(i, 2 * i, -i) for i in range(5)])
        out = resample_to_epochs(traj, 5)
        assert np.allclose(out.samples, traj.samples, atol=1e-12)

    def test_preserves_endpoints_exactly(self):
        traj = from_points([(0.1, 0.37, 0.11), (0.9, 5.13, 2.7), (2.3, 6.0, 6.0)])
        out = resample_to_epochs(traj, EPOCHS)
        assert len(out) == EPOCHS
        assert np.array_equal(out.samples[0], traj.samples[0])
        assert np.array_equal(out.samples[-1], traj.samples[-1])

    def test_collinear_length_preserved(self):
        # 7 irregular samples on one line: resampling cannot change length
        ts = [0.0, 0.3, 0.45, 1.1, 1.8, 2.0, 3.3]
        traj = from_points([(t, 2.0 * t, 3.0 * t) for t in ts])
        out = resample_to_epochs(traj, EPOCHS)
        assert progress_distance(out) == pytest.approx(
            progress_distance(traj), abs=1e-9
        )


class TestHeadings:
    def test_axis_aligned_x(self):
        assert headings(straight_line(4, 3.0)).tolist() == [0.0, 0.0, 0.0, 0.0]

    def test_axis_aligned_y(self):
        traj = from_points([(i, 0.0, float(i)) for i in range(3)])
        assert np.allclose(headings(traj), math.pi / 2)

    def test_square_loop_sides(self):
        got = headings(SQUARE_LOOP)
        assert got.tolist() == [
            0.0, math.pi / 2, math.pi, -math.pi / 2, -math.pi / 2
        ]

    def test_stationary_prefix_defaults_to_zero(self):
        traj = from_points([(0, 1, 1), (1, 1, 1), (2, 1, 2)])
        got = headings(traj)
        assert got[0] == 0.0
        assert got[1] == pytest.approx(math.pi / 2)


class TestGaussianSplat:
    def test_peak_is_one_at_center(self):
        out = gaussian_splat((64, 64), (30, 31), 3.0)
        assert out[30, 31] == 1.0
        assert out.max() == 1.0

    def test_truncated_beyond_three_sigma(self):
        out = gaussian_splat((64, 64), (32, 32), 3.0)
        rr, cc = np.mgrid[0:64, 0:64]
        d2 = (rr - 32.0) ** 2 + (cc - 32.0) ** 2
        assert (out[d2 > 81.0] == 0).all()
        assert (out[d2 <= 81.0] > 0).all()

    def test_mass_matches_integral_bounds(self):
        sigma = 3.0
        out = gaussian_splat((64, 64), (32, 32), sigma)
        mass = float(out.sum())
        # numeric integral of the truncated Gaussian: 2*pi*9*(1 - e^-4.5)
        assert truncated_gaussian_mass(sigma) == pytest.approx(55.92, abs=0.01)
        assert 2 * math.pi * 9 * 0.95 <= mass <= 2 * math.pi * 9 * 1.01


class TestRasterize:
    def _map(self):
        walk = np.ones((64, 64), dtype=bool)
        walk[:, 0:2] = False
        return make_map(walk)

    def test_requires_90_epochs(self):
        with pytest.raises(ContractError):
            rasterize(straight_line(10, 1.0), self._map())

    def test_layout_and_map_channel(self):
        scene_map = self._map()
        traj = resample_to_epochs(straight_line(7, 4.0), EPOCHS)
        stack = rasterize(traj, scene_map)
        assert stack.channels.shape == (N_CHANNELS, 64, 64)
        assert np.array_equal(
            stack.channels[MAP_CHANNEL], scene_map.walkable.astype(np.float32)
        )
        assert (stack.channels[POSITION_CHANNELS] >= 0).all()
        assert (stack.channels[HEADING_CHANNELS] >= 0).all()

    def test_stationary_trajectory_center_peak(self):
        walk = np.ones((256, 256), dtype=bool)
        scene_map = make_map(walk)
        pts = [(0.1 * i, 5.0, 5.0) for i in range(EPOCHS)]
        stack = rasterize(Trajectory(samples=np.array(pts)), scene_map)
        first = stack.channels[0]
        for k in range(EPOCHS):
            assert np.array_equal(stack.channels[k], first)
        r, c = np.unravel_index(np.argmax(first), first.shape)
        assert (r, c) == (127, 127)

    def test_argmax_at_sample_pixel(self):
        scene_map = self._map()
        rng = np.random.default_rng(21)
        pts = [(float(i), *rng.uniform(0.5, 9.5, 2)) for i in range(EPOCHS)]
        traj = Trajectory(samples=np.array(pts))
        stack = rasterize(traj, scene_map)
        geom = scene_map.geometry
        for k in range(EPOCHS):
            r, c = np.unravel_index(
                np.argmax(stack.channels[k]), stack.channels[k].shape
            )
            assert (r, c) == world_to_pixel(geom, tuple(traj.xy[k]))
            assert stack.channels[k][r, c] == 1.0

    def test_deterministic(self):
        scene_map = self._map()
        traj = resample_to_epochs(straight_line(5, 6.0), EPOCHS)
        a = rasterize(traj, scene_map)
        b = rasterize(traj, scene_map)
        assert np.array_equal(a.channels, b.channels)
