#!/usr/bin/python3
#
# laplacian.py:
#
#  The normalized steerable graph Laplacian applied to functions on
#  Gamma = {points} x {angles}, pointwise Laplace-Beltrami estimates
#  from it and from the standard graph Laplacian, and the sphere
#  convergence and noise-robustness experiments built on them.
#
#  Functions on Gamma are sampled on the K-point angle grid
#  theta_k = 2 pi k / K and every angular integral becomes the
#  (2 pi / K) Riemann sum over that grid.

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .tools.options import *
from . import dataset
from . import kernel

class GammaFunction:
    """
    A function g(i, theta) on Gamma, held as its N x K samples
    g(i, 2 pi k / K).
    """

    def __init__(self, values):
        values = np.array(values, dtype = np.complex128)
        if values.ndim != 2:
            raise LayoutError(f"function samples must be N x K, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ConfigError("function samples must be finite")
        values.setflags(write = False)
        self.values = values

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def K(self):
        return self.values.shape[1]

    @property
    def angles(self):
        return angle_grid(self.K)

    @staticmethod
    def constant(N, K, value = 1.0):
        return GammaFunction(np.full((N, K), value, dtype = np.complex128))

    @staticmethod
    def from_vector(v, m, K):
        """g(i, theta) = v_i exp(i m theta)."""
        v = np.asarray(v)
        return GammaFunction(np.outer(v, np.exp(1j * m * angle_grid(K))))

    @staticmethod
    def from_dataset(ds, f, K):
        """g(j, theta) = f(R(x_j, theta)) for a function f of coefficient rows."""
        return GammaFunction(rotated_samples(ds, f, K))

    def __add__(self, other):
        return GammaFunction(self.values + other.values)

    def __rmul__(self, scalar):
        return GammaFunction(scalar * self.values)

def angle_grid(K):
    return 2 * np.pi * np.arange(K) / K

def rotated_samples(ds, f, K):
    """N x K array of f evaluated at every grid rotation of every point."""
    phases = np.exp(1j * np.outer(angle_grid(K), ds.layout.column_frequencies()))
    rotated = ds.values[:, np.newaxis, :] * phases[np.newaxis, :, :]
    return np.asarray(f(rotated))

def _check_shapes(fa, g):
    if g.N != fa.N or g.K != fa.K:
        raise LayoutError(f"function on {g.N} x {g.K} grid does not match "
                          f"affinity with N={fa.N}, K={fa.K}")

def _apply_affinity(fa, g, workers = 1):
    """
    (W g)(i, theta_k) and the degrees, both by K-grid quadrature over
    the dense affinity rows.
    """

    _check_shapes(fa, g)

    K = fa.K
    spectrum_g = np.fft.fft(g.values, axis = 1)
    Wg = np.empty_like(g.values)
    degrees = np.empty(fa.N)

    def apply_row(item):
        i, row = item
        # sum_q W[q - k] g[q], a circular cross-correlation per j
        correlation = (np.conj(np.fft.fft(row, axis = 1)) * spectrum_g).sum(axis = 0)
        Wg[i] = (2 * np.pi / K) * np.fft.ifft(correlation)
        degrees[i] = (2 * np.pi / K) * row.sum()

    rows = kernel.operator_rows(fa)
    if workers > 1:
        with ThreadPoolExecutor(max_workers = workers) as executor:
            list(executor.map(apply_row, rows))
    else:
        for item in rows:
            apply_row(item)

    bad = np.flatnonzero(degrees <= kernel.DEGREE_FLOOR)
    if bad.size:
        raise IsolatedPointError(int(bad[0]), float(degrees[bad[0]]))

    return Wg, degrees

def apply_normalized(fa, g, workers = 1):
    """L~ g = g - D^-1 W g."""
    Wg, degrees = _apply_affinity(fa, g, workers)
    return GammaFunction(g.values - Wg / degrees[:, np.newaxis])

def inner_product(g, h):
    """<g, h>_H = sum_i integral g_i(theta) conj(h_i(theta)) dtheta."""
    if g.values.shape != h.values.shape:
        raise LayoutError("inner product of functions on different grids")
    return (2 * np.pi / g.K) * np.vdot(h.values, g.values)

def quadratic_form(fa, g, workers = 1):
    """<g, (D - W) g>_H, real for the Hermitian operator."""
    Wg, degrees = _apply_affinity(fa, g, workers)
    Lg = GammaFunction(degrees[:, np.newaxis] * g.values - Wg)
    return inner_product(Lg, g).real

def dirichlet_energy(fa, g):
    """
    1/2 sum_ij double-integral W_ij(phi - theta) |g_i(theta) - g_j(phi)|^2
    on the K grid.  Evaluated directly over all angle pairs, so it is
    meant for checking quadratic_form() at small sizes.
    """

    _check_shapes(fa, g)

    K = fa.K
    k = np.arange(K)
    lag = (k[np.newaxis, :] - k[:, np.newaxis]) % K      # [k, q] -> q - k
    energy = 0.0

    for i, row in kernel.operator_rows(fa):
        weights = row[:, lag]                             # j, k, q
        diff = g.values[i][np.newaxis, :, np.newaxis] - g.values[:, np.newaxis, :]
        energy += np.sum(weights * np.abs(diff) ** 2)

    return 0.5 * (2 * np.pi / K) ** 2 * energy

#
# Pointwise Laplace-Beltrami estimates
#
#  Both estimators compute (4/epsilon) [weighted mean of f - f(x0)],
#  with weights from the base point to every sample (the base point
#  itself included unless debiasing removes it).

def _weighted_estimate(weights, samples, f0, epsilon, base_index = 0):
    total = weights.sum()
    if total <= kernel.DEGREE_FLOOR:
        raise IsolatedPointError(base_index, float(total))
    mean = np.sum(weights * samples) / total
    return float(np.real(4.0 / epsilon * (mean - f0)))

def _density_degrees(ds, config):
    plain = replace(config, density_normalize = False)
    return np.array([(2 * np.pi / config.K) * row.sum()
                     for _, row in kernel.affinity_rows(ds, plain)])

def estimate_laplace_beltrami(ds, f, config, base_index = 0, base_point = None):
    """
    Estimate the Laplace-Beltrami operator of f at a point, as
    (4/epsilon) (L~ g)(base, 0) with g(j, theta) = f(R(x_j, theta)).

    With base_point given (a one-row dataset), it is prepended to ds
    and used as the base; otherwise base_index selects a sample.
    """

    if base_point is not None:
        ds = dataset.concat(base_point, ds)
        base_index = 0
    if not 0 <= base_index < ds.N:
        raise ConfigError(f"base index {base_index} outside dataset of {ds.N} points")

    config.check(ds.layout)
    weights = kernel.affinity_row(ds, config, base_index)
    if config.density_normalize:
        degrees = _density_degrees(ds, config)
        weights = weights / degrees[:, np.newaxis]

    samples = rotated_samples(ds, f, config.K)
    f0 = f(ds.values[base_index])
    return _weighted_estimate(weights, samples, f0, config.epsilon, base_index)

def real_coordinates(ds):
    """Coefficient rows as real vectors [Re x, Im x]; norms are preserved."""
    return np.hstack([ds.values.real, ds.values.imag])

def standard_graph_laplacian_estimate(points, f, epsilon, base_index = 0,
                                      base_point = None):
    """
    The same estimate with the standard graph Laplacian on real
    vectors: weights exp(-|p0 - p_j|^2 / epsilon), no rotations.
    f maps an array of points (last axis: coordinates) to values.
    """

    if not epsilon > 0:
        raise ConfigError(f"kernel width epsilon must be > 0, got {epsilon}")

    points = np.atleast_2d(np.asarray(points, dtype = float))
    if base_point is not None:
        points = np.vstack([np.atleast_2d(base_point), points])
        base_index = 0

    p0 = points[base_index]
    weights = np.exp(-np.sum((points - p0) ** 2, axis = 1) / epsilon)
    return _weighted_estimate(weights, np.asarray(f(points)),
                              f(p0), epsilon, base_index)

#
# Sphere convergence experiment
#

def default_eps_grid():
    return 2.0 ** np.arange(-4, 2.01, 0.25)

@dataclass
class ConvergenceReport:
    epsilons: np.ndarray
    errors_steerable: np.ndarray
    errors_standard: np.ndarray
    slope_steerable: float
    slope_standard: float
    region_steerable: int
    region_standard: int
    trials: int

    def records(self):
        return zip(self.epsilons, self.errors_steerable, self.errors_standard)

def variance_region(errors):
    """
    Number of leading grid points in one estimator's variance-dominated
    region: those strictly left of its own error minimum.
    """
    return int(np.argmin(errors))

def fit_slope(epsilons, errors, count):
    """Log-log slope over the first count points; nan below two points."""
    if count < 2:
        logging.warning(f"Only {count} epsilon value(s) left of the error minimum; "
                        "no slope fitted")
        return float("nan")
    x = np.log(np.asarray(epsilons[:count]))
    y = np.log(np.maximum(np.asarray(errors[:count]), np.finfo(float).tiny))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)

def _sphere_trial(N, K, eps_grid, seed):
    rng = np.random.default_rng(seed)
    points = dataset.concat(dataset.sphere_base_point(), dataset.gen_sphere(N, rng))

    f = dataset.sphere_test_function
    truth = dataset.SPHERE_LAPLACIAN_TRUTH

    # Distances do not depend on epsilon: compute them once per trial.
    dist = kernel.distance_row(points, 0, K)
    samples = rotated_samples(points, f, K)
    f0 = f(points.values[0])

    p = dataset.to_sphere_points(points)
    dist_standard = np.sum((p - p[0]) ** 2, axis = 1)
    samples_standard = f(points.values)

    errors = np.empty((len(eps_grid), 2))
    for n, epsilon in enumerate(eps_grid):
        steerable = _weighted_estimate(np.exp(-dist / epsilon), samples, f0, epsilon)
        standard = _weighted_estimate(np.exp(-dist_standard / epsilon),
                                      samples_standard, f0, epsilon)
        errors[n] = abs(steerable - truth), abs(standard - truth)

    return errors

def convergence_experiment(N, K = 256, eps_grid = None, trials = 20, seed = None,
                           workers = 1):
    """
    Mean absolute error of the steerable and standard estimates of the
    sphere test function's Laplacian at the base point, over fresh
    samples of N sphere points per trial, for every epsilon on the
    grid; plus the log-log slopes over the variance-dominated region.
    """

    if trials < 1:
        raise ConfigError(f"need at least one trial, got {trials}")
    if N < 1:
        raise ConfigError(f"need at least one sample point, got N={N}")
    if K < 3:
        raise ConfigError(f"K={K} aliases the sphere's angular frequencies")

    eps_grid = np.sort(np.asarray(default_eps_grid() if eps_grid is None
                                  else eps_grid, dtype = float))
    if eps_grid.size < 2 or not np.all(eps_grid > 0):
        raise ConfigError("epsilon grid needs at least two positive values")

    seeds = np.random.SeedSequence(seed).spawn(trials)
    logging.info(f"Convergence experiment: N={N}, K={K}, {trials} trial(s), "
                 f"{eps_grid.size} epsilon values")

    run = lambda child: _sphere_trial(N, K, eps_grid, child)
    if workers > 1:
        with ThreadPoolExecutor(max_workers = workers) as executor:
            errors = list(executor.map(run, seeds))
    else:
        errors = [run(child) for child in seeds]

    mean = np.mean(errors, axis = 0)
    region_s = variance_region(mean[:, 0])
    region_std = variance_region(mean[:, 1])

    report = ConvergenceReport(eps_grid, mean[:, 0], mean[:, 1],
                               fit_slope(eps_grid, mean[:, 0], region_s),
                               fit_slope(eps_grid, mean[:, 1], region_std),
                               region_s, region_std, trials)
    logging.info(f"Slopes: steerable {report.slope_steerable:.3f}, "
                 f"standard {report.slope_standard:.3f}")
    return report

#
# Noise robustness experiment
#

@dataclass
class NoiseRecord:
    D: int
    sigma2: float
    err_noisy: float
    err_clean: float

def _noise_trial(N, gamma, D_grid, config, seed):
    rng = np.random.default_rng(seed)
    clean = dataset.concat(dataset.sphere_base_point(), dataset.gen_sphere(N, rng))

    f = dataset.sphere_test_function
    truth = dataset.SPHERE_LAPLACIAN_TRUTH
    samples = rotated_samples(clean, f, config.K)
    f0 = f(clean.values[0])

    # The test function is always evaluated on the clean points; only
    # the kernel sees the noise.
    weights = kernel.affinity_row(clean, config, 0)
    err_clean = abs(_weighted_estimate(weights, samples, f0, config.epsilon) - truth)

    errors = []
    for D in D_grid:
        embedded = dataset.embed_orthogonal(clean, D, seed = rng)
        noisy = dataset.add_noise(embedded, dataset.NoiseSpec(gamma / D, rng))
        weights = kernel.affinity_row(noisy, config, 0)
        estimate = _weighted_estimate(weights, samples, f0, config.epsilon)
        errors.append(abs(estimate - truth))

    return np.array(errors), err_clean

def noise_robustness_experiment(N, gamma, D_grid, epsilon = 2 ** -0.75, K = 256,
                                seed = None, trials = 1, workers = 1):
    """
    Steerable Laplacian estimation from noisy data embedded in growing
    dimension D at a fixed total noise magnitude gamma = D sigma2,
    with a debiased kernel.  Each record also carries the error of the
    same estimate on the clean data.
    """

    if not gamma >= 0:
        raise ConfigError(f"noise magnitude gamma must be >= 0, got {gamma}")
    if trials < 1:
        raise ConfigError(f"need at least one trial, got {trials}")

    D_grid = [int(D) for D in D_grid]
    if not D_grid:
        raise ConfigError("dimension grid is empty")

    config = kernel.KernelConfig(epsilon, K, debias = True)
    config.check(dataset.SPHERE_LAYOUT)

    seeds = np.random.SeedSequence(seed).spawn(trials)
    logging.info(f"Noise experiment: N={N}, gamma={gamma}, D={D_grid}, "
                 f"{trials} trial(s)")

    run = lambda child: _noise_trial(N, gamma, D_grid, config, child)
    if workers > 1:
        with ThreadPoolExecutor(max_workers = workers) as executor:
            results = list(executor.map(run, seeds))
    else:
        results = [run(child) for child in seeds]

    err_noisy = np.mean([errors for errors, _ in results], axis = 0)
    err_clean = float(np.mean([clean for _, clean in results]))

    return [NoiseRecord(D, gamma / D, float(err), err_clean)
            for D, err in zip(D_grid, err_noisy)]
