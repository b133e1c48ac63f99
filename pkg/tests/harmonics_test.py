#!usr/bin/python3

import io
import os
import tempfile
import unittest
from unittest import mock

import numpy as np
from hypothesis import given, settings, strategies as st

from sglaplacian import dataset, kernel, harmonics
from sglaplacian.dataset import AngularLayout, SteerableDataset
from sglaplacian.harmonics import HarmonicBasis
from sglaplacian.kernel import KernelConfig
from sglaplacian.tools.options import *
from .sample_data import unit_dataset, grid_angles, MIXED_LAYOUT

def small_affinity(N = 8, seed = 1, K = 16, **kwargs):
    ds = unit_dataset(MIXED_LAYOUT, N, seed)
    return kernel.fourier_blocks(ds, KernelConfig(1.0, K = K, **kwargs))

def normalized_operator(fa, m):
    return np.eye(fa.N) - fa.block(m) / fa.degrees[:, np.newaxis]

def orbit_dataset(n_points, seed):
    """Rotations of one point by multiples of 2 pi / n_points."""
    point = unit_dataset(MIXED_LAYOUT, 1, seed)
    copies = point.take(np.zeros(n_points, dtype = int))
    return copies.rotated(2 * np.pi * np.arange(n_points) / n_points)

class TestDecompose(unittest.TestCase):
    def test_single_point(self):
        ds = SteerableDataset(AngularLayout(1, (0, 1, 0)), [[0.3]])
        basis = harmonics.decompose(kernel.fourier_blocks(ds, KernelConfig(1.0, K = 8)))
        self.assertAlmostEqual(basis.values_of(0)[0], 0.0, places = 12)
        self.assertAlmostEqual(basis.values_of(1)[0], 1.0, places = 12)

    def test_constant_annihilated(self):
        for debias in (False, True):
            fa = small_affinity(debias = debias)
            S = normalized_operator(fa, 0)
            np.testing.assert_allclose(S @ np.ones(fa.N), 0, atol = 1e-12)

            basis = harmonics.decompose(fa)
            self.assertLess(abs(basis.values_of(0)[0]), 1e-10)
            v = basis.vectors_of(0)[:, 0]
            np.testing.assert_allclose(v / v[0], 1.0, atol = 1e-8)

    def test_non_negative_and_sorted(self):
        for normalized in (True, False):
            basis = harmonics.decompose(small_affinity(seed = 2), normalized = normalized)
            self.assertGreater(basis.eigenvalues.min(), -1e-9)
            self.assertTrue(np.all(np.diff(basis.eigenvalues, axis = 1) >= 0))

    def test_eigen_residuals(self):
        fa = small_affinity(seed = 3)
        basis = harmonics.decompose(fa)
        for m in basis.frequencies:
            S = normalized_operator(fa, m)
            V = basis.vectors_of(m)
            residual = S @ V - V * basis.values_of(m)[np.newaxis, :]
            ratio = np.linalg.norm(residual, axis = 0) / np.linalg.norm(V, axis = 0)
            self.assertLess(ratio.max(), 1e-8)

    def test_weighted_orthonormality(self):
        fa = small_affinity(seed = 4)
        normalized = harmonics.decompose(fa)
        plain = harmonics.decompose(fa, normalized = False)
        I = np.eye(fa.N)
        for m in fa.frequencies:
            V = normalized.vectors_of(m)
            np.testing.assert_allclose(V.conj().T @ (fa.degrees[:, np.newaxis] * V), I,
                                       atol = 1e-8)
            U = plain.vectors_of(m)
            np.testing.assert_allclose(U.conj().T @ U, I, atol = 1e-8)

    def test_similar_matrix_spectrum(self):
        fa = small_affinity(seed = 5)
        basis = harmonics.decompose(fa)
        for m in fa.frequencies:
            direct = np.sort(np.linalg.eigvals(normalized_operator(fa, m)).real)
            np.testing.assert_allclose(basis.values_of(m), direct, atol = 1e-9)

    def test_equal_degrees(self):
        fa = kernel.fourier_blocks(orbit_dataset(8, seed = 6), KernelConfig(1.0, K = 16))
        np.testing.assert_allclose(fa.degrees, fa.degrees[0], rtol = 1e-12)

        normalized = harmonics.decompose(fa)
        plain = harmonics.decompose(fa, normalized = False)
        np.testing.assert_allclose(normalized.eigenvalues,
                                   plain.eigenvalues / fa.degrees[0], atol = 1e-9)

    def test_parallel(self):
        fa = small_affinity(seed = 7)
        np.testing.assert_array_equal(harmonics.decompose(fa, workers = 3).eigenvalues,
                                      harmonics.decompose(fa).eigenvalues)

    def test_solver_failure(self):
        fa = small_affinity(seed = 8)
        with mock.patch("scipy.linalg.eigh", side_effect = np.linalg.LinAlgError("no")):
            with self.assertRaises(NumericalError) as e:
                harmonics.decompose(fa)
        self.assertIn("m=", e.exception.message)

class TestVerifyEigenpair(unittest.TestCase):
    def test_decomposed_pairs(self):
        fa = small_affinity(seed = 9, debias = True)
        basis = harmonics.decompose(fa)
        for m in fa.frequencies:
            for k in (0, 3, fa.N - 1):
                residual = harmonics.verify_eigenpair(fa, m, basis.vectors_of(m)[:, k],
                                                      basis.values_of(m)[k])
                self.assertLess(residual, 1e-8)

    def test_unnormalized_pairs(self):
        fa = small_affinity(seed = 10)
        basis = harmonics.decompose(fa, normalized = False)
        residual = harmonics.verify_eigenpair(fa, 1, basis.vectors_of(1)[:, 2],
                                              basis.values_of(1)[2], normalized = False)
        self.assertLess(residual, 1e-8)

    def test_density_normalized_pairs(self):
        fa = small_affinity(seed = 11, density_normalize = True)
        basis = harmonics.decompose(fa)
        residual = harmonics.verify_eigenpair(fa, 2, basis.vectors_of(2)[:, 1],
                                              basis.values_of(2)[1])
        self.assertLess(residual, 1e-8)

    def test_random_vector_rejected(self):
        fa = small_affinity(seed = 12)
        v = np.random.default_rng(12).standard_normal(fa.N)
        self.assertGreater(harmonics.verify_eigenpair(fa, 1, v, 0.0), 1e-3)

    def test_constant(self):
        fa = small_affinity(seed = 13)
        self.assertLess(harmonics.verify_eigenpair(fa, 0, np.ones(fa.N), 0.0), 1e-10)

    def test_grid_mismatch(self):
        fa = small_affinity(seed = 14)
        with self.assertRaises(ConfigError):
            harmonics.verify_eigenpair(fa, 0, np.ones(fa.N), 0.0, K = 32)
        with self.assertRaises(LayoutError):
            harmonics.verify_eigenpair(fa, 0, np.ones(3), 0.0)

    def test_sphere_m3_eigenfunction(self):
        ds = dataset.gen_sphere(512, seed = 15)
        fa = kernel.fourier_blocks(ds, KernelConfig(1.0, K = 64, max_frequency = 3))
        basis = harmonics.decompose(fa)
        residual = harmonics.verify_eigenpair(fa, 3, basis.vectors_of(3)[:, 3],
                                              basis.values_of(3)[3])
        self.assertLess(residual, 1e-8)

class TestTruncation(unittest.TestCase):
    def basis(self, values):
        values = np.array([values])
        N = values.shape[1]
        return HarmonicBasis(values, np.array([np.eye(N)]), True, np.ones(N))

    def test_strict_cutoff(self):
        plan = harmonics.truncate(self.basis([0.0, 0.1, 0.5]), 0.5)
        self.assertEqual(plan.k_of(0), 2)
        self.assertEqual(plan.M_eff, 0)

    def test_extremes(self):
        basis = harmonics.decompose(small_affinity(seed = 16))
        nothing = harmonics.truncate(basis, 0.0)
        self.assertEqual(set(nothing.k), {0})
        self.assertIsNone(nothing.M_eff)

        everything = harmonics.truncate(basis, basis.eigenvalues.max() + 1)
        self.assertEqual(set(everything.k), {basis.N})
        self.assertEqual(everything.M_eff, basis.M)

    def test_k_outside_basis(self):
        plan = harmonics.truncate(self.basis([0.0, 0.1]), 1.0)
        self.assertEqual(plan.k_of(3), 0)

    def test_degenerate_cut(self):
        self.assertTrue(harmonics.is_degenerate_cut(np.array([0.0, 0.3, 0.3, 0.9]), 2))
        self.assertFalse(harmonics.is_degenerate_cut(np.array([0.0, 0.3, 0.3, 0.9]), 3))
        self.assertFalse(harmonics.is_degenerate_cut(np.array([0.0, 0.3]), 0))

class TestSpectrum(unittest.TestCase):
    def test_single_point(self):
        ds = SteerableDataset(AngularLayout(1, (0, 1, 0)), [[0.3]])
        basis = harmonics.decompose(kernel.fourier_blocks(ds, KernelConfig(1.0, K = 8)))
        spectrum = harmonics.eigenvalue_spectrum(basis)
        self.assertEqual([(m, k) for m, k, _ in spectrum], [(0, 1), (-1, 1), (1, 1)])
        self.assertAlmostEqual(spectrum[0][2], 0.0, places = 12)

    def test_sorted(self):
        spectrum = harmonics.eigenvalue_spectrum(harmonics.decompose(small_affinity(seed = 17)))
        values = [value for _, _, value in spectrum]
        self.assertEqual(values, sorted(values))
        self.assertEqual(len(spectrum), 5 * 8)

    @given(st.integers(min_value = 0, max_value = 1000))
    @settings(max_examples = 5, deadline = None)
    def test_rotation_invariance(self, seed):
        K = 16
        ds = unit_dataset(MIXED_LAYOUT, 8, seed)
        rotated = ds.rotated(grid_angles(8, K, seed))
        config = KernelConfig(1.0, K = K)

        original = harmonics.decompose(kernel.fourier_blocks(ds, config))
        moved = harmonics.decompose(kernel.fourier_blocks(rotated, config))
        np.testing.assert_allclose(moved.eigenvalues, original.eigenvalues, atol = 1e-9)

    def test_projector_equivariance(self):
        K = 16
        ds = unit_dataset(MIXED_LAYOUT, 8, seed = 18)
        alphas = grid_angles(8, K, 18)
        config = KernelConfig(1.0, K = K)

        original = harmonics.decompose(kernel.fourier_blocks(ds, config))
        moved = harmonics.decompose(kernel.fourier_blocks(ds.rotated(alphas), config))

        for m in original.frequencies:
            # cut at the widest gap so the retained space is well defined
            k = int(np.argmax(np.diff(original.values_of(m)))) + 1
            phi = np.exp(1j * m * alphas)
            P = harmonics.spectral_projector(original, m, k)
            expected = phi[:, np.newaxis] * P * np.conj(phi)[np.newaxis, :]
            np.testing.assert_allclose(harmonics.spectral_projector(moved, m, k), expected,
                                       atol = 1e-8)

    def test_projector_idempotent(self):
        basis = harmonics.decompose(small_affinity(seed = 19))
        for m in basis.frequencies:
            P = harmonics.spectral_projector(basis, m, 3)
            np.testing.assert_allclose(P @ P, P, atol = 1e-8)
            self.assertAlmostEqual(np.trace(P).real, 3.0, places = 8)

    def test_eigenfunction(self):
        basis = harmonics.decompose(small_affinity(seed = 20))
        phi = harmonics.eigenfunction(basis, -2, 1, 16)
        self.assertEqual(phi.values.shape, (8, 16))
        theta = 2 * np.pi * 3 / 16
        np.testing.assert_allclose(phi.values[:, 3],
                                   basis.vectors_of(-2)[:, 0] * np.exp(-2j * theta))
        with self.assertRaises(LayoutError):
            harmonics.eigenfunction(basis, 0, 9, 16)

class TestBasisFiles(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmpdir.name, "basis.sgh")

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_round_trip(self):
        basis = harmonics.decompose(small_affinity(seed = 21), normalized = False)
        harmonics.save_basis(self.path, basis)
        again = harmonics.load_basis(self.path)
        self.assertFalse(again.normalized)
        np.testing.assert_array_equal(again.eigenvalues, basis.eigenvalues)
        np.testing.assert_array_equal(again.vectors, basis.vectors)
        np.testing.assert_array_equal(again.degrees, basis.degrees)

    def test_truncated(self):
        basis = harmonics.decompose(small_affinity(seed = 22))
        harmonics.save_basis(self.path, basis)
        with open(self.path, "rb") as f:
            data = f.read()
        with open(self.path, "wb") as f:
            f.write(data[:-8])
        with self.assertRaises(FormatError):
            harmonics.load_basis(self.path)

    def test_spectrum_csv(self):
        basis = harmonics.decompose(small_affinity(seed = 23))
        stream = io.StringIO()
        rows = harmonics.write_spectrum_csv(stream, basis)
        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[0], "m,k,lambda")
        self.assertEqual(rows, 40)
        self.assertEqual(len(lines), 41)

if __name__ == '__main__':
    unittest.main()
