#!/usr/bin/python3
#
# filtering.py:
#
#  Rotation-equivariant filtering of a steerable dataset: every
#  angular block X^(m) is replaced by its least-squares fit in the
#  span of the retained harmonics of the same frequency,
#
#     B^(m) = argmin |X^(m) - V^(m) B^(m)|_F,    X^(m)_hat = V^(m) B^(m)
#
#  plus the bookkeeping needed to measure how much of the result is
#  bias and how much is propagated noise.

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .tools.options import *
from . import dataset
from .harmonics import truncate, is_degenerate_cut

@dataclass
class BlockDiagnostics:
    m: int
    k: int
    rank: int
    residual: float
    degenerate: bool

@dataclass
class FilterResult:
    plan: object
    B: dict
    X_hat: dataset.SteerableDataset
    diagnostics: list

    def records(self):
        return self.diagnostics

@dataclass
class ErrorReport:
    bias: float
    variance: float
    total: float

def _rank(R, tol = None):
    diagonal = np.abs(np.diag(R))
    if diagonal.size == 0 or diagonal[0] == 0:
        return 0
    if tol is None:
        tol = max(R.shape) * np.finfo(float).eps
    return int(np.count_nonzero(diagonal > tol * diagonal[0]))

def _factor(V):
    Q, R, P = scipy.linalg.qr(V, mode = "economic", pivoting = True)
    return Q, R, P, _rank(R)

def solve_block_ranked(X, V):
    """
    Least-squares B for X ~ V B and the numerical rank of V.  V is
    factored once (column-pivoted QR) for all columns of X; a rank
    deficient V falls back to the minimum-norm solution.
    """

    X = np.asarray(X, dtype = np.complex128)
    V = np.asarray(V, dtype = np.complex128)
    N, k = V.shape
    if X.shape[0] != N:
        raise LayoutError(f"block has {X.shape[0]} rows, basis has {N}")
    if k > N:
        raise LayoutError(f"cannot fit {k} basis vectors to {N} points")

    if k == 0 or X.shape[1] == 0:
        return np.zeros((k, X.shape[1]), dtype = np.complex128), k

    Q, R, P, rank = _factor(V)
    if rank < k:
        logging.warning(f"Basis block has rank {rank} < {k}; "
                        "using the minimum-norm least-squares solution")
        B = scipy.linalg.lstsq(V, X)[0]
        return B, rank

    B = np.empty((k, X.shape[1]), dtype = np.complex128)
    B[P] = scipy.linalg.solve_triangular(R, Q.conj().T @ X)
    return B, rank

def solve_block(X, V):
    return solve_block_ranked(X, V)[0]

def projection_matrix(V):
    """
    Orthogonal projector C = Q Q^H onto span(V), Q an orthonormal basis
    of the numerically independent columns.
    """

    V = np.asarray(V, dtype = np.complex128)
    N, k = V.shape
    if k == 0:
        return np.zeros((N, N), dtype = np.complex128)

    Q, R, P, rank = _factor(V)
    if rank < k:
        logging.warning(f"Basis block has rank {rank} < {k}; "
                        "projecting onto the independent part")

    Q = Q[:, :rank]
    return Q @ Q.conj().T

def filter_dataset(ds, basis, lambda_c):
    """
    Filter every angular block of ds against the harmonics of basis
    with eigenvalues below lambda_c.  The basis may come from another
    dataset with the same point count (clean harmonics applied to
    noisy data).  For real datasets only m >= 0 is solved and the
    negative frequencies are mirrored.
    """

    layout = ds.layout
    if basis.M < layout.M:
        raise LayoutError(f"basis covers |m| <= {basis.M}, "
                          f"dataset needs |m| <= {layout.M}")
    if basis.N != ds.N:
        raise LayoutError(f"basis is over {basis.N} points, dataset has {ds.N}")

    plan = truncate(basis, lambda_c)
    values = np.zeros_like(ds.values)
    B = {}
    diagnostics = {}

    frequencies = range(0, layout.M + 1) if ds.is_real else layout.angular_indices
    for m in frequencies:
        k = plan.k_of(m)
        X = ds.block(m)
        V = basis.vectors_of(m)[:, :k]

        B[m], rank = solve_block_ranked(X, V)
        X_hat = V @ B[m]
        values[:, layout.columns(m)] = X_hat

        degenerate = is_degenerate_cut(basis.values_of(m), k)
        if degenerate:
            logging.warning(f"Cutoff {lambda_c} splits a degenerate "
                            f"eigenvalue cluster at m={m}")

        diagnostics[m] = BlockDiagnostics(m, k, rank,
                                          float(np.linalg.norm(X - X_hat)),
                                          degenerate)

    if ds.is_real:
        for m in range(1, layout.M + 1):
            values[:, layout.columns(-m)] = np.conj(values[:, layout.columns(m)])
            B[-m] = np.conj(B[m])
            d = diagnostics[m]
            diagnostics[-m] = BlockDiagnostics(-m, d.k, d.rank, d.residual, d.degenerate)
        values[:, layout.columns(0)] = values[:, layout.columns(0)].real

    logging.info(f"Filtered {ds.N} points at lambda_c={lambda_c}: "
                 f"k_m={[plan.k_of(m) for m in layout.angular_indices]}")

    return FilterResult(plan, B, ds.with_values(values),
                        [diagnostics[m] for m in layout.angular_indices])

def variance_estimate(plan, layout, sigma2, N):
    """
    Expected per-point squared error contributed by noise of variance
    sigma2 after filtering: sigma2 sum_m k_m ell_m / N, with its bound
    max_m k_m * gamma / N (gamma = D sigma2).
    """

    gamma = layout.D_total * sigma2
    kept = [(plan.k_of(m), layout.ell_of(m)) for m in layout.angular_indices]
    value = sigma2 * sum(k * ell for k, ell in kept) / N
    bound = max(k for k, _ in kept) * gamma / N
    return value, bound

def error_report(X_clean, X_hat, X_tilde):
    """
    Per-point squared errors: bias |X - X_hat|^2 / N, variance
    |X_hat - X_tilde|^2 / N and total |X - X_tilde|^2 / N, X_hat being
    the filtered clean data and X_tilde the filtered noisy data.
    """

    arrays = [getattr(x, "values", x) for x in (X_clean, X_hat, X_tilde)]
    if len({a.shape for a in arrays}) != 1:
        raise LayoutError("error report needs datasets of equal shape")

    clean, hat, tilde = arrays
    N = clean.shape[0]
    squared = lambda a: float(np.sum(np.abs(a) ** 2)) / N
    return ErrorReport(squared(clean - hat), squared(hat - tilde), squared(clean - tilde))

def bias_variance_sweep(clean, noisy, basis, lambda_grid):
    """(lambda_c, ErrorReport) for every cutoff on the grid."""
    sweep = []
    for lambda_c in lambda_grid:
        X_hat = filter_dataset(clean, basis, lambda_c).X_hat
        X_tilde = filter_dataset(noisy, basis, lambda_c).X_hat
        sweep.append((lambda_c, error_report(clean, X_hat, X_tilde)))
    return sweep

def reconstruct_images(result, n_angles = None):
    """Polar-grid images of filtered coefficients (a FilterResult or its X_hat)."""
    return dataset.to_polar_grid(getattr(result, "X_hat", result), n_angles)
