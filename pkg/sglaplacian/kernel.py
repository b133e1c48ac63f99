#!/usr/bin/python3
#
# kernel.py:
#
#  Rotational affinities between steerable points, and their Fourier
#  blocks.
#
#  For points x_i, x_j the affinity over all relative rotations is
#
#     W_ij(alpha) = exp(-|x_i - R(x_j, alpha)|^2 / epsilon)
#
#  which is fully described by its Fourier coefficients in alpha, the
#  N x N blocks W_hat[m].  Both the distances on the K-point angle
#  grid and the blocks come out of FFTs of the per-m cross
#  correlations of the two points, so nothing here ever rotates a
#  point explicitly.
#
#  Work is done row by row (point i against every point j), so the
#  K-grid affinities never exist for all pairs at once.

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .tools.options import *

DEGREE_FLOOR = 1e-300

SGA1_MAGIC = b"SGA1"
SGA1_VERSION = 1
SGA1_HEADER = struct.Struct("<4sIIIdIiid")

@dataclass(frozen = True)
class KernelConfig:
    """
    Parameters of the rotational Gaussian kernel.

    max_frequency is the largest |m| for which Fourier blocks are
    formed; it defaults to the dataset's own M, and may be raised to
    reach eigenfunctions of higher angular frequency than the data.
    """

    epsilon: float
    K: int = 256
    debias: bool = False
    density_normalize: bool = False
    sparsify_threshold: float = None
    max_frequency: int = None

    def __post_init__(self):
        if not self.epsilon > 0 or not np.isfinite(self.epsilon):
            raise ConfigError(f"kernel width epsilon must be > 0, got {self.epsilon}")
        if self.K < 1:
            raise ConfigError(f"angular quadrature size K must be positive, got {self.K}")
        if self.sparsify_threshold is not None and not self.sparsify_threshold >= 0:
            raise ConfigError("sparsify threshold must be >= 0, "
                              f"got {self.sparsify_threshold}")
        if self.max_frequency is not None and self.max_frequency < 0:
            raise ConfigError(f"max_frequency must be >= 0, got {self.max_frequency}")

    def frequency_bound(self, layout):
        """Largest |m| of the blocks formed for a dataset of this layout."""
        if self.max_frequency is None:
            return layout.M
        return self.max_frequency

    def check(self, layout):
        needed = 2 * max(layout.M, self.frequency_bound(layout)) + 1
        if self.K < needed:
            raise AliasingError(f"K={self.K} aliases angular frequencies; "
                                f"need K >= {needed}")

@dataclass(frozen = True)
class FourierAffinity:
    """
    The Fourier blocks W_hat[m + max_frequency] (each N x N, Hermitian)
    and the degrees D_i = sum_j W_hat[0]_ij.

    source is the dataset the kernel was built from; dense operator
    application streams K-grid affinities from it again.  When the
    blocks are density normalized, density_scaling holds the degrees
    they were divided by.
    """

    W_hat: np.ndarray
    degrees: np.ndarray
    config: KernelConfig
    source: object = field(default = None, repr = False)
    density_scaling: np.ndarray = field(default = None, repr = False)

    @property
    def N(self):
        return self.W_hat.shape[1]

    @property
    def max_frequency(self):
        return (self.W_hat.shape[0] - 1) // 2

    @property
    def K(self):
        return self.config.K

    @property
    def is_density_normalized(self):
        return self.density_scaling is not None

    @property
    def frequencies(self):
        return range(-self.max_frequency, self.max_frequency + 1)

    def block(self, m):
        if abs(m) > self.max_frequency:
            raise LayoutError(f"no Fourier block for m={m}; "
                              f"blocks stop at |m|={self.max_frequency}")
        return self.W_hat[m + self.max_frequency]

def _row_norms(ds):
    return ds.norms_squared()

def cross_correlations(ds, other = None):
    """
    c[i, j, m + M] = sum_ell x_i(m, ell) * conj(y_j(m, ell)), where y
    runs over other (default: ds itself).
    """

    other = ds if other is None else other
    if other.layout != ds.layout:
        raise LayoutError("cross correlations need datasets of the same layout")

    return np.stack([ds.block(m) @ other.block(m).conj().T
                     for m in ds.layout.angular_indices], axis = -1)

def _distances_from_correlations(c, norms_left, norms_right, K):
    """
    |x - R(y, 2 pi k / K)|^2 on the K grid, along a new last axis,
    for correlations c[..., m + M].  norms_left and norms_right must
    broadcast against c[..., 0].
    """

    M = (c.shape[-1] - 1) // 2
    if K < 2 * M + 1:
        raise AliasingError(f"K={K} aliases angular frequencies up to M={M}")

    sequence = np.zeros(c.shape[:-1] + (K,), dtype = np.complex128)
    for m in range(-M, M + 1):
        sequence[..., m % K] = c[..., m + M]

    # sum_m c_m exp(-2 pi i m k / K) is numpy's forward transform
    dist = (np.asarray(norms_left)[..., np.newaxis]
            + np.asarray(norms_right)[..., np.newaxis]
            - 2 * np.fft.fft(sequence, axis = -1).real)

    return np.maximum(dist, 0.0)

def rotational_distances(ds, c, K, other = None):
    """
    dist[i, j, k] = |x_i - R(y_j, 2 pi k / K)|^2 from the cross
    correlations c of ds against other (default: ds itself).
    """

    other = ds if other is None else other
    return _distances_from_correlations(c,
                                        _row_norms(ds)[:, np.newaxis],
                                        _row_norms(other)[np.newaxis, :],
                                        K)

def _row_correlations(ds, i):
    # c[i, j, m] for a single i, as an N x (2M+1) array
    return np.stack([ds.block(m).conj() @ ds.block(m)[i]
                     for m in ds.layout.angular_indices], axis = -1)

def distance_row(ds, i, K, norms = None):
    """|x_i - R(x_j, 2 pi k / K)|^2 for every j, as an N x K array."""
    if norms is None:
        norms = _row_norms(ds)
    return _distances_from_correlations(_row_correlations(ds, i),
                                        norms[i], norms, K)

def affinity_row(ds, config, i, norms = None):
    """
    The K-grid affinities W_ij^(k) of point i against every point j,
    as an N x K array, after debiasing and sparsification.
    """

    row = np.exp(-distance_row(ds, i, config.K, norms) / config.epsilon)

    if config.debias:
        row[i, :] = 0.0

    # W_ij(alpha) and W_ji(-alpha) are the same affinity seen from
    # either end, so thresholding one orientation thresholds the pair.
    if config.sparsify_threshold is not None:
        row[row < config.sparsify_threshold] = 0.0

    return row

def affinity_rows(ds, config, rows = None):
    """
    Generate (i, W_i) for the requested rows (default: all), W_i being
    the N x K affinity row of affinity_row().
    """

    config.check(ds.layout)
    norms = _row_norms(ds)
    for i in (range(ds.N) if rows is None else rows):
        yield i, affinity_row(ds, config, i, norms)

def operator_rows(fa, rows = None):
    """
    Affinity rows of the operator the blocks describe: the rows of
    affinity_rows() over the source dataset, divided by d_i d_j when
    the blocks are density normalized.
    """

    if fa.source is None:
        raise ConfigError("this affinity carries no source dataset; "
                          "K-grid application needs the kernel rebuilt from data")

    for i, row in affinity_rows(fa.source, fa.config, rows):
        if fa.density_scaling is not None:
            row = row / (fa.density_scaling[i] * fa.density_scaling)[:, np.newaxis]
        yield i, row

def _row_blocks(ds, config, i, norms, frequencies):
    row = affinity_row(ds, config, i, norms)

    # (2 pi / K) sum_k W^(k) exp(+2 pi i m k / K) = 2 pi ifft(W)[m]
    spectrum = 2 * np.pi * np.fft.ifft(row, axis = 1)
    return spectrum[:, [m % config.K for m in frequencies]].T

def degrees_of(W_hat):
    M = (W_hat.shape[0] - 1) // 2
    degrees = W_hat[M].real.sum(axis = 1)

    bad = np.flatnonzero(degrees <= DEGREE_FLOOR)
    if bad.size:
        raise IsolatedPointError(int(bad[0]), float(degrees[bad[0]]))

    return degrees

def fourier_blocks(ds, config, workers = 1):
    """
    Build the Fourier blocks of the rotational kernel over ds.

    Rows are processed independently (in parallel with workers > 1);
    each row fills its own slice of the blocks, so the result does not
    depend on the worker count.  The blocks are symmetrized to be
    exactly Hermitian, and density normalized when the config asks.
    """

    config.check(ds.layout)

    Mk = config.frequency_bound(ds.layout)
    frequencies = list(range(-Mk, Mk + 1))
    norms = _row_norms(ds)

    logging.info(f"Building Fourier blocks: N={ds.N}, |m|<={Mk}, "
                 f"K={config.K}, epsilon={config.epsilon}, "
                 f"{workers} worker(s)")

    W_hat = np.empty((len(frequencies), ds.N, ds.N), dtype = np.complex128)

    def fill(i):
        W_hat[:, i, :] = _row_blocks(ds, config, i, norms, frequencies)

    if workers > 1:
        with ThreadPoolExecutor(max_workers = workers) as executor:
            list(executor.map(fill, range(ds.N)))
    else:
        for i in range(ds.N):
            fill(i)

    for block in W_hat:
        block[...] = (block + block.conj().T) / 2

    fa = FourierAffinity(W_hat, degrees_of(W_hat), config, source = ds)
    logging.debug(f"Degrees range {fa.degrees.min():.4g} .. {fa.degrees.max():.4g}")

    if config.density_normalize:
        fa = density_normalize(fa)

    return fa

def density_normalize(fa):
    """
    Rescale every block entry (i, j) by 1 / (D_i D_j) and recompute the
    degrees.  An affinity can only be normalized once.
    """

    if fa.is_density_normalized:
        raise ConfigError("affinity is already density normalized")

    degrees = fa.degrees
    if np.any(degrees <= DEGREE_FLOOR):
        bad = int(np.flatnonzero(degrees <= DEGREE_FLOOR)[0])
        raise IsolatedPointError(bad, float(degrees[bad]))

    W_hat = fa.W_hat / np.outer(degrees, degrees)[np.newaxis, :, :]

    logging.debug("Density normalized Fourier blocks")
    return FourierAffinity(W_hat, degrees_of(W_hat), fa.config,
                           source = fa.source,
                           density_scaling = degrees.copy())

#
# SGA1 dump: magic, u32 version, u32 N, u32 max_frequency, f64 epsilon,
# u32 K, i32 debias, i32 density normalized, f64 sparsify threshold
# (NaN for none); then f64 degrees, f64 density scaling (only when
# normalized), and the blocks as little-endian complex f64, m-major and
# row-major.

def save_affinity(path, fa):
    config = fa.config
    threshold = (np.nan if config.sparsify_threshold is None
                 else config.sparsify_threshold)

    with open(path, "wb") as outfile:
        outfile.write(SGA1_HEADER.pack(SGA1_MAGIC, SGA1_VERSION, fa.N,
                                       fa.max_frequency, config.epsilon,
                                       config.K, int(config.debias),
                                       int(fa.is_density_normalized),
                                       threshold))
        outfile.write(fa.degrees.astype("<f8").tobytes())
        if fa.is_density_normalized:
            outfile.write(fa.density_scaling.astype("<f8").tobytes())
        outfile.write(fa.W_hat.astype("<c16").tobytes())

def load_affinity(path):
    with open(path, "rb") as infile:
        data = infile.read()

    if len(data) < SGA1_HEADER.size:
        raise FormatError(f"{path}: truncated SGA1 header")

    (magic, version, N, Mk, epsilon, K,
     debias, normalized, threshold) = SGA1_HEADER.unpack_from(data, 0)
    if magic != SGA1_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {SGA1_MAGIC!r}")
    if version != SGA1_VERSION:
        raise FormatError(f"{path}: unsupported SGA1 version {version}")

    n_vectors = 2 if normalized else 1
    n_blocks = 2 * Mk + 1
    expected = SGA1_HEADER.size + 8 * N * n_vectors + 16 * n_blocks * N * N
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")

    offset = SGA1_HEADER.size
    degrees = np.frombuffer(data, "<f8", N, offset).copy()
    offset += 8 * N

    scaling = None
    if normalized:
        scaling = np.frombuffer(data, "<f8", N, offset).copy()
        offset += 8 * N

    W_hat = np.frombuffer(data, "<c16", n_blocks * N * N, offset)
    W_hat = W_hat.reshape(n_blocks, N, N).copy()

    config = KernelConfig(epsilon, K, bool(debias), bool(normalized),
                          None if np.isnan(threshold) else threshold, Mk)
    return FourierAffinity(W_hat, degrees, config, density_scaling = scaling)
