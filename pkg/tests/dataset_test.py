#!usr/bin/python3

import io
import os
import tempfile
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from sglaplacian import dataset, kernel
from sglaplacian.dataset import AngularLayout, SteerableDataset
from sglaplacian.tools.options import *
from .sample_data import random_dataset, MIXED_LAYOUT

angles = st.floats(min_value = -20.0, max_value = 20.0,
                   allow_nan = False, allow_infinity = False)

class TestLayout(unittest.TestCase):
    def test_columns(self):
        layout = MIXED_LAYOUT
        self.assertEqual(layout.D_total, 7)
        self.assertEqual(layout.columns(-2), slice(0, 1))
        self.assertEqual(layout.columns(-1), slice(1, 3))
        self.assertEqual(layout.columns(0), slice(3, 3))
        self.assertEqual(layout.columns(2), slice(4, 7))
        self.assertEqual(layout.index(2, 3), 6)
        self.assertEqual(list(layout.column_frequencies()), [-2, -1, -1, 1, 2, 2, 2])

    def test_bad_layouts(self):
        with self.assertRaises(LayoutError):
            AngularLayout(-1, ())
        with self.assertRaises(LayoutError):
            AngularLayout(1, (1, 1))
        with self.assertRaises(LayoutError):
            AngularLayout(1, (1, -1, 1))
        with self.assertRaises(LayoutError):
            MIXED_LAYOUT.index(0, 1)

    def test_shape_mismatch(self):
        with self.assertRaises(LayoutError):
            SteerableDataset(MIXED_LAYOUT, np.zeros((3, 6)))

    def test_non_finite(self):
        values = np.zeros((2, 7), dtype = complex)
        values[1, 3] = np.nan
        with self.assertRaises(FormatError):
            SteerableDataset(MIXED_LAYOUT, values)

    def test_immutable(self):
        ds = random_dataset(MIXED_LAYOUT, 2, seed = 1)
        with self.assertRaises(ValueError):
            ds.values[0, 0] = 0

class TestRotation(unittest.TestCase):
    point = random_dataset(MIXED_LAYOUT, 1, seed = 2).values[0]

    @given(angles, angles)
    def test_group_action(self, a, b):
        twice = dataset.rotate_point(dataset.rotate_point(self.point, MIXED_LAYOUT, a),
                                     MIXED_LAYOUT, b)
        once = dataset.rotate_point(self.point, MIXED_LAYOUT, (a + b) % (2 * np.pi))
        np.testing.assert_allclose(twice, once, atol = 1e-12)

    @given(angles)
    def test_norm_preserved(self, phi):
        rotated = dataset.rotate_point(self.point, MIXED_LAYOUT, phi)
        self.assertAlmostEqual(np.linalg.norm(rotated), np.linalg.norm(self.point),
                               places = 12)

    def test_zero_angle(self):
        np.testing.assert_array_equal(
            dataset.rotate_point(self.point, MIXED_LAYOUT, 0.0), self.point)

    def test_wrong_length(self):
        with self.assertRaises(LayoutError):
            dataset.rotate_point(self.point[:3], MIXED_LAYOUT, 1.0)

    def test_sphere_rotation_is_counter_clockwise(self):
        x0 = dataset.sphere_base_point()
        rotated = x0.rotated(np.pi / 2)
        np.testing.assert_allclose(dataset.to_sphere_points(rotated),
                                   [[0.0, 1.0, 0.0]], atol = 1e-15)

    def test_per_point_rotation(self):
        ds = random_dataset(MIXED_LAYOUT, 3, seed = 3)
        alphas = np.array([0.1, -2.0, 4.0])
        rotated = ds.rotated(alphas)
        for i in range(3):
            np.testing.assert_allclose(
                rotated.values[i],
                dataset.rotate_point(ds.values[i], MIXED_LAYOUT, alphas[i]))

class TestSphere(unittest.TestCase):
    def test_unit_norm(self):
        ds = dataset.gen_sphere(200, seed = 4)
        self.assertEqual(ds.layout, dataset.SPHERE_LAYOUT)
        np.testing.assert_allclose(ds.norms_squared(), 1.0, atol = 1e-12)

    @given(angles)
    @settings(max_examples = 20)
    def test_rotations_stay_on_sphere(self, phi):
        ds = dataset.gen_sphere(20, seed = 5)
        np.testing.assert_allclose(ds.rotated(phi).norms_squared(), 1.0, atol = 1e-12)

    def test_deterministic(self):
        np.testing.assert_array_equal(dataset.gen_sphere(10, seed = 6).values,
                                      dataset.gen_sphere(10, seed = 6).values)

    def test_empty(self):
        with self.assertRaises(ConfigError):
            dataset.gen_sphere(0, seed = 1)

    def test_points_round_trip(self):
        ds = dataset.gen_sphere(10, seed = 7)
        again = dataset.from_sphere_points(dataset.to_sphere_points(ds))
        np.testing.assert_allclose(again.values, ds.values, atol = 1e-15)

    def test_test_function(self):
        # f = p_x + p_z
        self.assertEqual(dataset.sphere_test_function(dataset.sphere_base_point().values[0]), 1.0)
        p = np.array([[0.6, 0.0, 0.8]])
        x = dataset.from_sphere_points(p).values
        self.assertAlmostEqual(dataset.sphere_test_function(x)[0], 1.4, places = 14)

    def test_concat(self):
        ds = dataset.concat(dataset.sphere_base_point(), dataset.gen_sphere(5, seed = 1))
        self.assertEqual(ds.N, 6)
        np.testing.assert_array_equal(ds.values[0], [0, 1])
        with self.assertRaises(LayoutError):
            dataset.concat(ds, random_dataset(MIXED_LAYOUT, 1, seed = 1))

class TestEmbed(unittest.TestCase):
    def test_sphere_split(self):
        ds = dataset.gen_sphere(30, seed = 8)
        embedded = dataset.embed_orthogonal(ds, 100, seed = 9)
        self.assertEqual(embedded.layout.ell, (0, 50, 50))
        self.assertEqual(embedded.D_total, 100)

    def test_correlations_preserved(self):
        ds = random_dataset(MIXED_LAYOUT, 6, seed = 10)
        embedded = dataset.embed_orthogonal(ds, 20, seed = 11)
        np.testing.assert_allclose(kernel.cross_correlations(embedded),
                                   kernel.cross_correlations(ds), atol = 1e-12)

    def test_equal_dimension(self):
        ds = random_dataset(MIXED_LAYOUT, 4, seed = 12)
        embedded = dataset.embed_orthogonal(ds, ds.D_total, seed = 13)
        np.testing.assert_allclose(embedded.norms_squared(), ds.norms_squared())

    def test_without_mixing(self):
        ds = dataset.gen_sphere(4, seed = 14)
        embedded = dataset.embed_orthogonal(ds, 6, mix = False)
        np.testing.assert_array_equal(embedded.block(0)[:, 0], ds.block(0)[:, 0])
        np.testing.assert_array_equal(embedded.block(1)[:, 1:], 0)

    def test_explicit_layout(self):
        ds = dataset.gen_sphere(4, seed = 15)
        embedded = dataset.embed_orthogonal(ds, 5, seed = 1, ell = (1, 1, 3))
        self.assertEqual(embedded.layout.ell, (1, 1, 3))
        with self.assertRaises(DimensionError):
            dataset.embed_orthogonal(ds, 6, seed = 1, ell = (1, 1, 3))
        with self.assertRaises(DimensionError):
            dataset.embed_orthogonal(ds, 5, seed = 1, ell = (3, 2, 0))

    def test_shrinking(self):
        with self.assertRaises(DimensionError):
            dataset.embed_orthogonal(dataset.gen_sphere(4, seed = 1), 1)

    def test_real_data_stays_real(self):
        ds = dataset.gen_polar_orbit(5, 2, 7, seed = 16)
        embedded = dataset.embed_orthogonal(ds, ds.D_total + 5, seed = 17)
        self.assertTrue(embedded.is_real)
        for m in range(1, ds.M + 1):
            np.testing.assert_allclose(embedded.block(-m), np.conj(embedded.block(m)),
                                       atol = 1e-14)

class TestNoise(unittest.TestCase):
    def test_zero_noise(self):
        ds = dataset.gen_sphere(10, seed = 18)
        noisy = dataset.add_noise(ds, dataset.NoiseSpec(0.0, seed = 1))
        np.testing.assert_array_equal(noisy.values, ds.values)

    def test_variance(self):
        ds = dataset.embed_orthogonal(dataset.gen_sphere(2000, seed = 19), 10, seed = 1)
        spec = dataset.NoiseSpec.from_gamma(0.5, ds.D_total, seed = 20)
        noisy = dataset.add_noise(ds, spec)
        per_coordinate = np.mean(np.abs(noisy.values - ds.values) ** 2)
        self.assertAlmostEqual(spec.sigma2, 0.05)
        self.assertLess(abs(per_coordinate - spec.sigma2), 0.1 * spec.sigma2)

    def test_deterministic(self):
        ds = dataset.gen_sphere(10, seed = 21)
        spec = dataset.NoiseSpec(0.1, seed = 22)
        np.testing.assert_array_equal(dataset.add_noise(ds, spec).values,
                                      dataset.add_noise(ds, spec).values)

    def test_real_noise_symmetric(self):
        ds = dataset.gen_polar_orbit(5, 2, 7, seed = 23)
        noisy = dataset.add_noise(ds, dataset.NoiseSpec(0.1, seed = 24))
        self.assertTrue(noisy.is_real)
        np.testing.assert_array_equal(noisy.block(-1), np.conj(noisy.block(1)))
        np.testing.assert_array_equal(noisy.block(0).imag, 0)

    def test_negative_variance(self):
        with self.assertRaises(ConfigError):
            dataset.NoiseSpec(-1.0)

class TestPolarGrid(unittest.TestCase):
    def test_cosine_ring(self):
        n_angles = 9
        theta = 2 * np.pi * np.arange(n_angles) / n_angles
        ds = dataset.from_polar_grid(np.cos(theta), 1, n_angles)

        self.assertEqual(ds.M, 4)
        self.assertTrue(ds.is_real)
        expected = np.zeros(9)
        expected[ds.layout.index(1, 1)] = 0.5
        expected[ds.layout.index(-1, 1)] = 0.5
        np.testing.assert_allclose(ds.values[0], expected, atol = 1e-15)

    def test_aliasing(self):
        with self.assertRaises(AliasingError):
            dataset.from_polar_grid(np.zeros(8), 1, 8, M = 4)
        with self.assertRaises(AliasingError):
            dataset.to_polar_grid(random_dataset(AngularLayout.uniform(3, 1), 1, seed = 1), 5)

    def test_wrong_sample_count(self):
        with self.assertRaises(LayoutError):
            dataset.from_polar_grid(np.zeros(10), 2, 7)

    def test_round_trip(self):
        ds = random_dataset(AngularLayout.uniform(3, 2), 4, seed = 25)
        for n_angles in (7, 11):
            images = dataset.to_polar_grid(ds, n_angles)
            self.assertEqual(images.shape, (4, 2 * n_angles))
            again = dataset.from_polar_grid(images, 2, n_angles, M = 3)
            np.testing.assert_allclose(again.values, ds.values, atol = 1e-10)

    def test_real_round_trip(self):
        ds = dataset.gen_polar_orbit(3, 2, 9, seed = 26)
        images = dataset.to_polar_grid(ds)
        self.assertFalse(np.iscomplexobj(images))
        again = dataset.from_polar_grid(images, 2, 9)
        np.testing.assert_allclose(again.values, ds.values, atol = 1e-10)

    def test_rotation_shifts_rings(self):
        # Rotating the coefficients by one angular step samples every
        # ring one step further along: I(theta + alpha).
        ds = dataset.gen_polar_orbit(1, 1, 9, seed = 27)
        shifted = dataset.to_polar_grid(ds.rotated(2 * np.pi / 9))
        np.testing.assert_allclose(shifted[0], np.roll(dataset.to_polar_grid(ds)[0], -1),
                                   atol = 1e-12)

    def test_non_polar_layout(self):
        with self.assertRaises(LayoutError):
            dataset.to_polar_grid(random_dataset(MIXED_LAYOUT, 1, seed = 1))

class TestFiles(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmpdir.name, "data.sgl")

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_sgl1_round_trip(self):
        ds = random_dataset(MIXED_LAYOUT, 5, seed = 28)
        dataset.save(self.path, ds)
        again = dataset.load(self.path)
        self.assertEqual(again.layout, ds.layout)
        self.assertFalse(again.is_real)
        np.testing.assert_array_equal(again.values, ds.values)

    def test_sgl1_real_flag(self):
        ds = dataset.gen_polar_orbit(2, 1, 5, seed = 29)
        dataset.save(self.path, ds)
        self.assertTrue(dataset.load(self.path).is_real)

    def test_bad_magic(self):
        data = dataset.dumps(dataset.gen_sphere(2, seed = 1))
        with open(self.path, "wb") as f:
            f.write(b"XXXX" + data[4:])
        with self.assertRaises(FormatError):
            dataset.load(self.path)

    def test_bad_version(self):
        data = bytearray(dataset.dumps(dataset.gen_sphere(2, seed = 1)))
        data[4] = 2
        with self.assertRaises(FormatError):
            dataset.loads(bytes(data))

    def test_truncated(self):
        data = dataset.dumps(dataset.gen_sphere(2, seed = 1))
        for cut in (3, 20, len(data) - 1):
            with self.assertRaises(FormatError):
                dataset.loads(data[:cut])

    def test_csv_round_trip(self):
        ds = random_dataset(MIXED_LAYOUT, 3, seed = 30)
        stream = io.StringIO()
        dataset.write_csv(stream, ds)

        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[0], "i,m,ell,re,im")
        self.assertEqual(len(lines), 1 + 3 * 7)

        stream.seek(0)
        again = dataset.read_csv(stream)
        self.assertEqual(again.layout, ds.layout)
        np.testing.assert_array_equal(again.values, ds.values)

    def test_csv_bad_header(self):
        with self.assertRaises(FormatError):
            dataset.read_csv(io.StringIO("a,b,c\n"))

    def test_csv_file(self):
        ds = dataset.gen_sphere(4, seed = 31)
        path = os.path.join(self.tmpdir.name, "data.csv")
        dataset.save_csv(path, ds)
        again = dataset.load_csv(path, layout = dataset.SPHERE_LAYOUT)
        np.testing.assert_array_equal(again.values, ds.values)

if __name__ == '__main__':
    unittest.main()
