import math

import numpy as np
import pytest

from sketch3d import oracles
from sketch3d.mlsdeform import (
    ControlPairSet, augment, build_field, deform_sketch, mls_rigid, mls_rigid_point, random_deformation,
)
from sketch3d.sketchimg import BinaryMask, SketchImage, StructuringElement, binarize, dilate, rasterize_polyline


def rot2(deg):
    t = math.radians(deg)
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def weighted_centroids(ctl, v):
    w = 1.0 / np.sum((ctl.sources - v) ** 2, axis=1) ** ctl.alpha
    return w @ ctl.sources / w.sum(), w @ ctl.targets / w.sum()


class TestControlPairSet:
    def test_validation(self):
        with pytest.raises(ValueError):
            ControlPairSet(np.zeros((0, 2)), np.zeros((0, 2)))
        with pytest.raises(ValueError):
            ControlPairSet([[0, 0]], [[1, 1], [2, 2]])
        with pytest.raises(ValueError):
            ControlPairSet([[0, 0], [0, 0]], [[1, 1], [2, 2]])
        with pytest.raises(ValueError):
            ControlPairSet([[0, 0]], [[1, 1]], alpha=0)

    def test_csv_roundtrip(self, rng):
        ctl = ControlPairSet(rng.uniform(0, 50, (5, 2)), rng.uniform(0, 50, (5, 2)), alpha=1.5)
        text = ctl.to_csv()
        assert text.startswith("alpha=1.5\n")
        assert ControlPairSet.from_csv(text) == ctl

    def test_csv_error_line_number(self):
        with pytest.raises(ValueError, match="line 3"):
            ControlPairSet.from_csv("alpha=1.0\n1,2,3,4\n1,2,x,4\n")
        with pytest.raises(ValueError, match="line 1"):
            ControlPairSet.from_csv("1,2,3,4\n")


class TestMlsRigidPoint:
    def test_identity(self, rng):
        p = rng.uniform(0, 100, (6, 2))
        ctl = ControlPairSet(p, p)
        v = rng.uniform(0, 100, (50, 2))
        np.testing.assert_allclose(mls_rigid(ctl, v), v, atol=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_reproduces_global_rigid_motion(self, seed):
        rng = np.random.default_rng(seed)
        R, t = rot2(rng.uniform(-180, 180)), rng.uniform(-30, 30, 2)
        p = rng.uniform(0, 128, (int(rng.integers(2, 9)), 2))
        ctl = ControlPairSet(p, p @ R.T + t)
        for v in rng.uniform(0, 128, (100, 2)):
            assert np.abs(mls_rigid_point(ctl, v) - (R @ v + t)).max() < 1e-9

    def test_single_control_translates(self, rng):
        ctl = ControlPairSet([[10, 10]], [[14, 10]])
        for v in rng.uniform(0, 50, (10, 2)):
            np.testing.assert_array_equal(mls_rigid_point(ctl, v), v + [4, 0])

    def test_interpolates_controls_exactly(self, rng):
        p, q = rng.uniform(0, 100, (5, 2)), rng.uniform(0, 100, (5, 2))
        ctl = ControlPairSet(p, q)
        for pi, qi in zip(p, q):
            np.testing.assert_array_equal(mls_rigid_point(ctl, pi), qi)

    def test_preserves_distance_to_weighted_centroid(self, rng):
        p, q = rng.uniform(0, 100, (6, 2)), rng.uniform(0, 100, (6, 2))
        ctl = ControlPairSet(p, q)
        for v in rng.uniform(0, 100, (100, 2)):
            p_star, q_star = weighted_centroids(ctl, v)
            out = mls_rigid_point(ctl, v)
            assert abs(np.linalg.norm(out - q_star) - np.linalg.norm(v - p_star)) < 1e-9

    def test_degenerate_falls_back_to_translation_of_offset(self):
        # two controls collapsing to one target: q_hat = 0 so the rotation vector vanishes
        ctl = ControlPairSet([[0, 0], [10, 0]], [[5, 5], [5, 5]])
        v = np.array([3.0, 4.0])
        p_star, q_star = weighted_centroids(ctl, v)
        np.testing.assert_allclose(mls_rigid_point(ctl, v), q_star + (v - p_star), atol=1e-12)


class TestField:
    def test_identity_field(self, rng):
        p = rng.uniform(0, 64, (5, 2))
        f = build_field(ControlPairSet(p, p), 64, 64, 4)
        assert np.abs(f.displacement).max() < 1e-9

    def test_spacing_one_is_exact(self, rng):
        ctl = ControlPairSet(rng.uniform(0, 32, (4, 2)), rng.uniform(0, 32, (4, 2)))
        f = build_field(ctl, 32, 24, 1)
        ys, xs = np.mgrid[0:24, 0:32].astype(float)
        exact = mls_rigid(ctl, np.stack([xs, ys], -1))
        np.testing.assert_array_equal(f.sample(xs, ys), exact)

    def test_nodes_exact(self, rng):
        ctl = ControlPairSet(rng.uniform(0, 32, (4, 2)), rng.uniform(0, 32, (4, 2)))
        f = build_field(ctl, 33, 33, 4)
        ys, xs = np.mgrid[0:33:4, 0:33:4].astype(float)
        np.testing.assert_allclose(f.sample(xs, ys), mls_rigid(ctl, np.stack([xs, ys], -1)), atol=1e-12)

    def test_bad_spacing(self):
        with pytest.raises(ValueError):
            build_field(ControlPairSet([[0, 0]], [[1, 1]]), 8, 8, 0)

    @pytest.mark.parametrize("seed", range(10))
    def test_lattice_interpolation_error(self, seed):
        # smooth 4 px sinusoidal drag of a 24 px control lattice; measured max ~0.22 px
        rng = np.random.default_rng(seed)
        p = np.array([(x, y) for x in range(8, 128, 24) for y in range(8, 128, 24)], float)
        ph = rng.uniform(0, 2 * np.pi, 2)
        q = p + 4 * np.stack([np.sin(2 * np.pi * p[:, 1] / 128 + ph[0]), np.cos(2 * np.pi * p[:, 0] / 128 + ph[1])], 1)
        ctl = ControlPairSet(p, q)
        ys, xs = np.mgrid[0:128, 0:128].astype(float)
        dev = np.abs(build_field(ctl, 128, 128, 1).sample(xs, ys) - build_field(ctl, 128, 128, 4).sample(xs, ys))
        assert dev.max() < 0.5


def thick_stroke(size=128):
    img = rasterize_polyline([(20, 24), (100, 30), (96, 100), (30, 90)], size, size)
    return dilate(binarize(img), StructuringElement(1), 1)


class TestDeformSketch:
    def test_identity(self, rng):
        img = SketchImage(rng.random((40, 30)))
        p = rng.uniform(0, 30, (4, 2))
        assert deform_sketch(img, ControlPairSet(p, p)) == img

    def test_translation_moves_ink_right(self):
        mask = thick_stroke(64)
        p = np.array([[5.0, 5.0], [50.0, 10.0], [20.0, 55.0]])
        out = deform_sketch(mask.to_image(), ControlPairSet(p, p + [4, 0]))
        shifted = {(x + 4, y) for x, y in mask.ink_points() if x + 4 < 64}
        assert binarize(out).ink_points() == shifted

    def test_rotation_about_centre(self):
        mask = thick_stroke()
        c = np.array([63.5, 63.5])
        R = rot2(10)
        p = np.array([[20.0, 20.0], [100.0, 30.0], [90.0, 100.0], [30.0, 90.0]])
        out = deform_sketch(mask.to_image(), ControlPairSet(p, (p - c) @ R.T + c))
        expected = {tuple(np.rint(R @ (np.array(a) - c) + c).astype(int)) for a in mask.ink_points()}
        assert oracles.hausdorff(binarize(out).ink_points(), expected) <= 1.0

    def test_output_is_binary(self, rng):
        img = thick_stroke().to_image()
        ctl = random_deformation(binarize(img), 6, 3.0, 1)
        vals = np.unique(deform_sketch(img, ctl).pixels)
        assert set(vals.tolist()) <= {0.0, 1.0}


class TestRandomDeformation:
    def circle(self, size=256):
        t = np.linspace(0, 2 * np.pi, 400)
        pts = np.stack([128 + 80 * np.cos(t), 128 + 80 * np.sin(t)], 1)
        return binarize(rasterize_polyline(pts, size, size))

    def test_sigma_zero_is_identity(self):
        ctl = random_deformation(self.circle(), 8, 0.0, 3)
        assert ctl.is_identity()

    def test_deterministic(self):
        m = self.circle()
        assert random_deformation(m, 8, 6.0, 42) == random_deformation(m, 8, 6.0, 42)
        assert random_deformation(m, 8, 6.0, 42) != random_deformation(m, 8, 6.0, 43)

    def test_too_few_ink_pixels(self):
        m = BinaryMask.from_points(10, 10, [(1, 1), (2, 2)])
        with pytest.raises(ValueError, match="needs 3 ink pixels, mask has 2"):
            random_deformation(m, 3, 1.0, 0)

    def test_default_sigma_is_five_percent_of_diagonal(self):
        m = self.circle()
        a = random_deformation(m, 8, None, 5)
        b = random_deformation(m, 8, 0.05 * math.hypot(256, 256), 5)
        assert a == b

    def test_statistics_over_seeds(self):
        m = self.circle()
        ink = m.ink_points()
        sigma = 6.0
        radii = []
        for seed in range(1000):
            ctl = random_deformation(m, 8, sigma, seed)
            assert {(int(x), int(y)) for x, y in ctl.sources} <= ink
            assert len({tuple(s) for s in ctl.sources.tolist()}) == 8
            radii.extend(np.linalg.norm(ctl.targets - ctl.sources, axis=1))
        radii = np.asarray(radii)
        # P(|offset| > 4 sigma) = exp(-8) ~ 3.4e-4 for a 2D isotropic Gaussian
        assert np.mean(radii <= 4 * sigma) >= 0.999
        # Rayleigh mean sigma * sqrt(pi / 2)
        assert abs(radii.mean() - sigma * math.sqrt(math.pi / 2)) < 0.05 * sigma


class TestAugment:
    def test_identity(self, rng):
        img = SketchImage(rng.random((16, 16)))
        assert augment(img, 0, 0, 0) == img

    def test_translation(self):
        img = BinaryMask.from_points(32, 32, [(10, 10)]).to_image()
        out = augment(img, 3, 0, 0)
        assert binarize(out).ink_points() == {(13, 10)}

    def test_right_angle_matches_index_rotation(self):
        pts = [(8, y) for y in range(6, 20)] + [(x, 19) for x in range(8, 18)]
        mask = BinaryMask.from_points(33, 33, pts)
        out = binarize(augment(mask.to_image(), 0, 0, 90))
        c = 16
        # (x, y) -> (c - (y - c), c + (x - c)) under [[0, -1], [1, 0]] about the centre
        expected = {(2 * c - y, x) for x, y in pts}
        assert oracles.hausdorff(out.ink_points(), expected) <= 1.0

    def test_background_fill(self):
        img = SketchImage.blank(16, 16)
        assert np.all(augment(img, 5, -4, 7).pixels == 1.0)


def test_bilinear_matches_scipy(rng):
    from scipy import ndimage
    from sketch3d.mlsdeform import _bilinear
    grid = rng.random((9, 13))
    xs = rng.uniform(-3, 16, 500)
    ys = rng.uniform(-3, 12, 500)
    ours = _bilinear(grid, xs, ys, cval=1.0)
    ref = ndimage.map_coordinates(grid, [ys, xs], order=1, mode="constant", cval=1.0)
    # scipy treats the one-pixel fringe as a blend with cval, as we do
    inner = (xs >= 0) & (xs <= 12) & (ys >= 0) & (ys <= 8)
    np.testing.assert_allclose(ours[inner], ref[inner], atol=1e-12)
    far = (xs < -1) | (xs > 13) | (ys < -1) | (ys > 9)
    assert np.all(ours[far] == 1.0)
    clamped = _bilinear(grid, xs, ys, cval=None)
    ref = ndimage.map_coordinates(grid, [np.clip(ys, 0, 8), np.clip(xs, 0, 12)], order=1)
    np.testing.assert_allclose(clamped, ref, atol=1e-12)
