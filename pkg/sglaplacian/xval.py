#!/usr/bin/python3
#
# xval.py:
#
#  Choosing epsilon and lambda_c by cross-validation.  The noisy
#  dataset is split in two; the first part is denoised with each
#  candidate (epsilon, lambda_c), and the candidates are scored by the
#  log-likelihood of the held-out points under a Gaussian mixture
#  centred on every rotation of the denoised points:
#
#     J = sum_i log[ sum_j (2 pi / K) sum_k exp(-|y_i - R(x_j, 2 pi k / K)|^2 / 2 sigma2) ]

import logging
from dataclasses import dataclass

import numpy as np
import scipy.special

from .tools.options import *
from . import kernel
from .harmonics import decompose
from .filtering import filter_dataset

@dataclass(frozen = True)
class XvalConfig:
    eps_grid: tuple
    lambda_grid: tuple
    sigma2: float
    K: int = 256
    split_fraction: float = 0.8
    seed: int = None
    max_frequency: int = None

    def __post_init__(self):
        object.__setattr__(self, "eps_grid", tuple(float(e) for e in self.eps_grid))
        object.__setattr__(self, "lambda_grid", tuple(float(l) for l in self.lambda_grid))

        if not self.eps_grid or not self.lambda_grid:
            raise ConfigError("cross-validation grids must not be empty")
        if not all(e > 0 for e in self.eps_grid):
            raise ConfigError(f"epsilon grid values must be > 0: {self.eps_grid}")
        if not self.sigma2 > 0:
            raise ConfigError(f"noise variance must be > 0, got {self.sigma2}")
        if not 0 < self.split_fraction < 1:
            raise ConfigError(f"split fraction must lie in (0, 1), got {self.split_fraction}")

    def kernel_config(self, epsilon):
        # Denoising inside cross-validation is always debiased and
        # never density normalized.
        return kernel.KernelConfig(epsilon, self.K, debias = True,
                                   density_normalize = False,
                                   max_frequency = self.max_frequency)

@dataclass
class XvalResult:
    eps_opt: float
    lambda_opt: float
    J_opt: float
    table: list

    def records(self):
        return self.table

def eps_rule_of_thumb(D_total, sigma2):
    """Kernel width of the order of the noise-induced distance spread, sqrt(D) sigma2."""
    if sigma2 < 0:
        raise ConfigError(f"noise variance must be >= 0, got {sigma2}")
    return float(np.sqrt(D_total) * sigma2)

def empirical_log_likelihood(heldout, denoised, sigma2, K):
    if heldout.N == 0 or denoised.N == 0:
        raise ConfigError("log-likelihood needs non-empty point sets")
    if heldout.layout != denoised.layout:
        raise LayoutError("held-out and denoised points have different layouts")
    if not sigma2 > 0:
        raise ConfigError(f"noise variance must be > 0, got {sigma2}")

    total = 0.0
    for i in range(heldout.N):
        point = heldout.take([i])
        c = kernel.cross_correlations(point, denoised)
        dist = kernel.rotational_distances(point, c, K, other = denoised)
        total += scipy.special.logsumexp(-dist / (2 * sigma2))

    return float(total + heldout.N * np.log(2 * np.pi / K))

def split_dataset(ds, fraction, seed = None):
    """
    Deterministic random split into (first, rest) with round(fraction N)
    points in the first part; both parts keep at least one point.
    """

    if ds.N < 2:
        raise ConfigError(f"cannot split a dataset of {ds.N} point(s)")

    order = np.random.default_rng(seed).permutation(ds.N)
    count = min(max(int(round(fraction * ds.N)), 1), ds.N - 1)
    return ds.take(np.sort(order[:count])), ds.take(np.sort(order[count:]))

def grid_search(noisy, config, workers = 1):
    """
    Score every (epsilon, lambda_c) cell and return the best one.
    Cells whose kernel or eigen-solve fails score -inf.
    """

    train, heldout = split_dataset(noisy, config.split_fraction, config.seed)
    logging.info(f"Cross-validation: {train.N} denoised / {heldout.N} held out, "
                 f"{len(config.eps_grid)} x {len(config.lambda_grid)} grid")

    table = []
    for epsilon in config.eps_grid:
        try:
            fa = kernel.fourier_blocks(train, config.kernel_config(epsilon), workers)
            basis = decompose(fa, normalized = True, workers = workers)
        except NumericalError as e:
            logging.warning(f"epsilon={epsilon}: {e.message}")
            table.extend((epsilon, lambda_c, -np.inf) for lambda_c in config.lambda_grid)
            continue

        for lambda_c in config.lambda_grid:
            denoised = filter_dataset(train, basis, lambda_c).X_hat
            J = empirical_log_likelihood(heldout, denoised, config.sigma2, config.K)
            logging.debug(f"epsilon={epsilon} lambda_c={lambda_c}: J={J}")
            table.append((epsilon, lambda_c, J))

    scores = np.array([J for _, _, J in table])
    if np.all(np.isneginf(scores)):
        raise NumericalError("every cross-validation cell failed; "
                             "try larger epsilon values")

    best = int(np.argmax(scores))
    eps_opt, lambda_opt, J_opt = table[best]
    logging.info(f"Selected epsilon={eps_opt}, lambda_c={lambda_opt} (J={J_opt})")
    return XvalResult(eps_opt, lambda_opt, J_opt, table)
