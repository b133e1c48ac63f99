#!/usr/bin/python3
#
# harmonics.py:
#
#  Steerable manifold harmonics: eigen-decomposition of the steerable
#  graph Laplacian one angular frequency at a time.
#
#  For each m the operator restricted to functions v_i exp(i m theta)
#  is a plain N x N matrix: S_m = D - W_hat[m] for the unnormalized
#  Laplacian, and S~_m = I - D^-1 W_hat[m] for the normalized one.
#  The latter is not Hermitian, but it is similar to the Hermitian
#
#     S'_m = I - D^-1/2 W_hat[m] D^-1/2
#
#  whose eigenvectors u give S~_m's as v = D^-1/2 u.  Those are
#  orthonormal in the D-weighted inner product.

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .tools.options import *
from . import kernel
from .laplacian import GammaFunction
from .output import SpectrumOutputDriver

SGH1_MAGIC = b"SGH1"
SGH1_VERSION = 1
SGH1_HEADER = struct.Struct("<4sIIIi")

# Relative gap below which neighbouring eigenvalues count as one
# cluster when judging whether a cutoff splits a degenerate space.
DEGENERACY_TOLERANCE = 1e-6

@dataclass
class HarmonicBasis:
    """
    Eigenpairs for every angular frequency m = -M..M:
    eigenvalues[m + M] ascending, vectors[m + M] holding the matching
    eigenvectors as columns.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    normalized: bool
    degrees: np.ndarray

    @property
    def M(self):
        return (self.eigenvalues.shape[0] - 1) // 2

    @property
    def N(self):
        return self.eigenvalues.shape[1]

    @property
    def frequencies(self):
        return range(-self.M, self.M + 1)

    def values_of(self, m):
        self._check(m)
        return self.eigenvalues[m + self.M]

    def vectors_of(self, m):
        self._check(m)
        return self.vectors[m + self.M]

    def _check(self, m):
        if abs(m) > self.M:
            raise LayoutError(f"basis has no angular frequency m={m} (M={self.M})")

@dataclass(frozen = True)
class TruncationPlan:
    lambda_c: float
    k: tuple
    M: int

    def k_of(self, m):
        if abs(m) > self.M:
            return 0
        return self.k[m + self.M]

    @property
    def M_eff(self):
        """Largest |m| keeping any eigenvector; None when nothing is kept."""
        kept = [abs(m) for m in range(-self.M, self.M + 1) if self.k_of(m) > 0]
        return max(kept) if kept else None

def _solve_block(W_hat_m, degrees, m, normalized):
    if normalized:
        scale = 1.0 / np.sqrt(degrees)
        S = np.eye(len(degrees)) - scale[:, np.newaxis] * W_hat_m * scale[np.newaxis, :]
    else:
        S = np.diag(degrees) - W_hat_m
    S = (S + S.conj().T) / 2

    try:
        values, vectors = scipy.linalg.eigh(S)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"eigen-solver failed for m={m}: {e}")

    if normalized:
        vectors = scale[:, np.newaxis] * vectors

    logging.debug(f"m={m}: smallest eigenvalues {values[:3]}")
    return values, vectors

def decompose(fa, normalized = True, workers = 1):
    """
    Eigen-decompose the Laplacian block of every angular frequency the
    affinity holds.  Blocks are independent and solved in parallel
    with workers > 1.
    """

    degrees = np.asarray(fa.degrees, dtype = float)
    if np.any(degrees <= kernel.DEGREE_FLOOR):
        bad = int(np.flatnonzero(degrees <= kernel.DEGREE_FLOOR)[0])
        raise IsolatedPointError(bad, float(degrees[bad]))

    frequencies = list(fa.frequencies)
    logging.info(f"Decomposing {len(frequencies)} block(s) of size {fa.N} "
                 f"({'normalized' if normalized else 'unnormalized'})")

    solve = lambda m: _solve_block(fa.block(m), degrees, m, normalized)
    if workers > 1:
        with ThreadPoolExecutor(max_workers = workers) as executor:
            results = list(executor.map(solve, frequencies))
    else:
        results = [solve(m) for m in frequencies]

    return HarmonicBasis(np.array([values for values, _ in results]),
                         np.array([vectors for _, vectors in results]),
                         normalized, degrees.copy())

def verify_eigenpair(fa, m, v, eigenvalue, K = None, normalized = True):
    """
    Apply the K-grid Laplacian to Phi(i, theta) = v_i exp(i m theta)
    and return max |(L Phi)(i, theta_k) - eigenvalue Phi(i, theta_k)|.

    The operator is applied from the dense affinity rows by direct
    quadrature, not through the Fourier blocks, so this is an
    independent check of a decomposition.
    """

    K = fa.K if K is None else K
    if K != fa.K:
        raise ConfigError(f"eigenpair check on K={K} grid, affinity uses K={fa.K}")

    v = np.asarray(v, dtype = np.complex128)
    if v.shape != (fa.N,):
        raise LayoutError(f"eigenvector of length {v.shape} for N={fa.N}")

    phases = np.exp(1j * m * 2 * np.pi * np.arange(K) / K)
    Wv = np.empty(fa.N, dtype = np.complex128)
    degrees = np.empty(fa.N)

    for i, row in kernel.operator_rows(fa):
        # sum_q W[q - k] exp(i m theta_q) = exp(i m theta_k) sum_r W[r] exp(i m theta_r)
        Wv[i] = (2 * np.pi / K) * np.dot(row @ phases, v)
        degrees[i] = (2 * np.pi / K) * row.sum()

    if normalized:
        residual = v - Wv / degrees - eigenvalue * v
    else:
        residual = degrees * v - Wv - eigenvalue * v

    # |Phi| is constant along each orbit, so the max over the grid is
    # the max over points.
    return float(np.max(np.abs(residual)))

def truncate(basis, lambda_c):
    """k_m = #{k : lambda_{m,k} < lambda_c}, the cutoff itself excluded."""
    k = tuple(int(np.count_nonzero(basis.values_of(m) < lambda_c))
              for m in basis.frequencies)
    return TruncationPlan(float(lambda_c), k, basis.M)

def is_degenerate_cut(values, k):
    """Whether keeping the first k of the sorted values splits a cluster."""
    if k == 0 or k >= len(values):
        return False
    scale = max(1.0, abs(values[k]))
    return abs(values[k] - values[k - 1]) < DEGENERACY_TOLERANCE * scale

def eigenvalue_spectrum(basis):
    """
    All eigenvalues as (m, k, lambda) triples, k counting from 1,
    sorted ascending with ties broken by (|m|, m, k).
    """
    spectrum = [(m, k + 1, float(value))
                for m in basis.frequencies
                for k, value in enumerate(basis.values_of(m))]
    return sorted(spectrum, key = lambda t: (t[2], abs(t[0]), t[0], t[1]))

def eigenfunction(basis, m, k, K):
    """Phi_{m,k}(i, theta) = v_{m,k}[i] exp(i m theta) on the K grid; k from 1."""
    vectors = basis.vectors_of(m)
    if not 1 <= k <= vectors.shape[1]:
        raise LayoutError(f"no eigenvector k={k} for m={m}")
    return GammaFunction.from_vector(vectors[:, k - 1], m, K)

def spectral_projector(basis, m, k):
    """
    Projector onto the span of the first k eigenvectors of frequency m:
    V V^H diag(D) for the D-orthonormal normalized basis, V V^H
    otherwise.
    """
    V = basis.vectors_of(m)[:, :k]
    P = V @ V.conj().T
    if basis.normalized:
        P = P * basis.degrees[np.newaxis, :]
    return P

#
# SGH1 basis file: magic, u32 version, u32 N, u32 M, i32 normalized,
# f64 degrees, then for m = -M..M the f64 eigenvalues followed by the
# N x N complex f64 eigenvectors (row-major).

def save_basis(path, basis):
    with open(path, "wb") as outfile:
        outfile.write(SGH1_HEADER.pack(SGH1_MAGIC, SGH1_VERSION, basis.N,
                                       basis.M, int(basis.normalized)))
        outfile.write(basis.degrees.astype("<f8").tobytes())
        for m in basis.frequencies:
            outfile.write(basis.values_of(m).astype("<f8").tobytes())
            outfile.write(basis.vectors_of(m).astype("<c16").tobytes())

def load_basis(path):
    with open(path, "rb") as infile:
        data = infile.read()

    if len(data) < SGH1_HEADER.size:
        raise FormatError(f"{path}: truncated SGH1 header")
    magic, version, N, M, normalized = SGH1_HEADER.unpack_from(data, 0)
    if magic != SGH1_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {SGH1_MAGIC!r}")
    if version != SGH1_VERSION:
        raise FormatError(f"{path}: unsupported SGH1 version {version}")

    per_m = 8 * N + 16 * N * N
    expected = SGH1_HEADER.size + 8 * N + (2 * M + 1) * per_m
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")

    offset = SGH1_HEADER.size
    degrees = np.frombuffer(data, "<f8", N, offset).copy()
    offset += 8 * N

    eigenvalues, vectors = [], []
    for _ in range(2 * M + 1):
        eigenvalues.append(np.frombuffer(data, "<f8", N, offset))
        offset += 8 * N
        vectors.append(np.frombuffer(data, "<c16", N * N, offset).reshape(N, N))
        offset += 16 * N * N

    return HarmonicBasis(np.array(eigenvalues), np.array(vectors),
                         bool(normalized), degrees)

def write_spectrum_csv(stream, basis):
    return SpectrumOutputDriver(stream).emit_all(eigenvalue_spectrum(basis))
