#!/usr/bin/python3
#
# dataset.py:
#
#  AngularLayout and SteerableDataset classes describing datasets of
#  steerable expansion coefficients, the planar rotation acting on
#  them, synthetic generators (the unit sphere, polar-grid images),
#  noise injection, and the SGL1 binary / CSV file formats.
#
#  A dataset is an N x D matrix of complex coefficients.  Its columns
#  are grouped by angular index m = -M..M (m-major), and inside each
#  m block by ascending radial index ell = 1..ell_m.  Rotating an
#  image by phi multiplies every coefficient (m, ell) by exp(i m phi).

import csv
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .tools.options import *

SGL1_MAGIC = b"SGL1"
SGL1_VERSION = 1
SGL1_HEADER = struct.Struct("<4sIIIi")

# Ground truth for the sphere test function at the sphere base point
# (see sphere_test_function / sphere_base_point below).

SPHERE_LAPLACIAN_TRUTH = -2.0

@dataclass(frozen = True)
class AngularLayout:
    """
    Column layout of a steerable dataset: the maximal angular index M
    and the number of radial indices ell_m for each m = -M..M.
    """

    M: int
    ell: tuple
    offsets: tuple = field(init = False, repr = False, compare = False)

    def __post_init__(self):
        if self.M < 0:
            raise LayoutError(f"angular index bound M must be >= 0, got {self.M}")

        ell = tuple(int(count) for count in self.ell)
        if len(ell) != 2 * self.M + 1:
            raise LayoutError(f"layout with M={self.M} needs {2 * self.M + 1} "
                              f"radial counts, got {len(ell)}")
        if any(count < 0 for count in ell):
            raise LayoutError(f"radial counts must be non-negative: {ell}")

        offsets = tuple(int(x) for x in np.concatenate(([0], np.cumsum(ell)[:-1])))

        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "offsets", offsets)

    @staticmethod
    def uniform(M, n_radial):
        return AngularLayout(M, (n_radial,) * (2 * M + 1))

    @property
    def D_total(self):
        return sum(self.ell)

    @property
    def angular_indices(self):
        return range(-self.M, self.M + 1)

    def ell_of(self, m):
        return self.ell[m + self.M]

    def columns(self, m):
        """Slice of the columns holding angular index m."""
        start = self.offsets[m + self.M]
        return slice(start, start + self.ell[m + self.M])

    def index(self, m, ell):
        """Column of coordinate (m, ell); ell counts from 1."""
        if not (-self.M <= m <= self.M) or not (1 <= ell <= self.ell_of(m)):
            raise LayoutError(f"coordinate ({m},{ell}) is not in layout {self.ell}")
        return self.offsets[m + self.M] + ell - 1

    def column_frequencies(self):
        """The angular index m of every column, as an integer array."""
        return np.repeat(np.arange(-self.M, self.M + 1), self.ell)

    def is_symmetric(self):
        return self.ell == self.ell[::-1]

class SteerableDataset:
    """
    N points of steerable expansion coefficients.

    Values are copied on construction and frozen; operations always
    return new datasets.  An is_real dataset describes real-valued
    images, whose coefficients satisfy x_{-m,ell} = conj(x_{m,ell}).
    """

    def __init__(self, layout, values, is_real = False):
        values = np.array(values, dtype = np.complex128)
        if values.ndim == 1:
            values = values[np.newaxis, :]

        if values.ndim != 2 or values.shape[1] != layout.D_total:
            raise LayoutError(f"dataset values of shape {values.shape} do not "
                              f"match layout dimension {layout.D_total}")

        finite = np.isfinite(values).all(axis = 1)
        if not finite.all():
            bad = int(np.flatnonzero(~finite)[0])
            raise FormatError(f"row {bad} has non-finite coefficients")

        if is_real and not layout.is_symmetric():
            raise LayoutError("real-image datasets need ell_{-m} == ell_m")

        values.setflags(write = False)

        self.layout = layout
        self.values = values
        self.is_real = bool(is_real)

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def M(self):
        return self.layout.M

    @property
    def D_total(self):
        return self.layout.D_total

    def __len__(self):
        return self.N

    def __repr__(self):
        return (f"SteerableDataset(N={self.N}, M={self.M}, "
                f"ell={self.layout.ell}, is_real={self.is_real})")

    def block(self, m):
        """The N x ell_m matrix X^(m)."""
        return self.values[:, self.layout.columns(m)]

    def norms_squared(self):
        return np.sum(np.abs(self.values) ** 2, axis = 1)

    def take(self, indices):
        return SteerableDataset(self.layout, self.values[np.asarray(indices)],
                                is_real = self.is_real)

    def with_values(self, values):
        return SteerableDataset(self.layout, values, is_real = self.is_real)

    def rotated(self, angles):
        """
        Rotate every point: a scalar angle rotates all points alike, an
        array gives one angle per point.
        """
        angles = np.broadcast_to(np.asarray(angles, dtype = float), (self.N,))
        phases = np.exp(1j * np.outer(angles, self.layout.column_frequencies()))
        return self.with_values(self.values * phases)

def rotate_point(x, layout, phi):
    """
    Rotate a single coefficient row by phi: coordinate (m, ell) is
    multiplied by exp(i m phi).
    """

    x = np.asarray(x, dtype = np.complex128)
    if x.shape[-1] != layout.D_total:
        raise LayoutError(f"point has {x.shape[-1]} coefficients, "
                          f"layout expects {layout.D_total}")

    return x * np.exp(1j * layout.column_frequencies() * phi)

def concat(first, second):
    if first.layout != second.layout:
        raise LayoutError("cannot concatenate datasets with different layouts")
    return SteerableDataset(first.layout,
                            np.vstack([first.values, second.values]),
                            is_real = first.is_real and second.is_real)

#
# The unit sphere toy manifold
#
# A point p on S^2 maps to x = [x_{0,1}, x_{1,1}] = [p_z, p_x + i p_y],
# with layout M=1, ell = (0, 1, 1).  Rotating x by phi rotates p
# counter-clockwise by phi in the xy-plane.

SPHERE_LAYOUT = AngularLayout(1, (0, 1, 1))

def from_sphere_points(points):
    points = np.atleast_2d(np.asarray(points, dtype = float))
    values = np.column_stack([points[:, 2], points[:, 0] + 1j * points[:, 1]])
    return SteerableDataset(SPHERE_LAYOUT, values)

def to_sphere_points(ds):
    if ds.layout != SPHERE_LAYOUT:
        raise LayoutError(f"not a sphere dataset: layout {ds.layout.ell}")
    x01 = ds.values[:, SPHERE_LAYOUT.index(0, 1)]
    x11 = ds.values[:, SPHERE_LAYOUT.index(1, 1)]
    return np.column_stack([x11.real, x11.imag, x01.real])

def gen_sphere(N, seed = None):
    """
    Sample N points uniformly from the unit sphere (normalized 3D
    Gaussians) in steerable coordinates.
    """

    if N < 1:
        raise ConfigError(f"need at least one sphere point, got N={N}")

    rng = np.random.default_rng(seed)
    points = rng.standard_normal((N, 3))
    points /= np.linalg.norm(points, axis = 1, keepdims = True)

    logging.debug(f"Generated {N} sphere points (seed {seed})")
    return from_sphere_points(points)

def sphere_base_point():
    """The test point x0 = [0, 1], i.e. p = [1, 0, 0]."""
    return SteerableDataset(SPHERE_LAYOUT, [[0.0, 1.0]])

def sphere_test_function(x):
    """
    f(x) = Re{x_{1,1}} + x_{0,1} on sphere coordinates; works on any
    array whose last axis is a sphere coefficient row.
    """
    x = np.asarray(x)
    return x[..., SPHERE_LAYOUT.index(1, 1)].real + x[..., SPHERE_LAYOUT.index(0, 1)].real

#
# Orthogonal embedding into higher dimensions
#

def _spread_dimensions(layout, D_new, is_real):
    """
    Default new radial counts: the extra dimensions are dealt out
    round-robin over the angular indices that already hold data (in
    +/- pairs for real datasets, so conjugate symmetry survives).
    """

    ell = list(layout.ell)
    extra = D_new - layout.D_total

    if is_real:
        groups = [[m, -m] if m else [0] for m in range(layout.M + 1)
                  if layout.ell_of(m) > 0]
    else:
        groups = [[m] for m in layout.angular_indices if layout.ell_of(m) > 0]

    if not groups:
        groups = [[0]]

    while extra > 0:
        progressed = False
        for group in groups:
            if len(group) <= extra:
                for m in group:
                    ell[m + layout.M] += 1
                extra -= len(group)
                progressed = True
            if extra == 0:
                break
        if not progressed:
            raise DimensionError(f"cannot spread {extra} extra dimension(s) "
                                 "over conjugate pairs of a real dataset")

    return AngularLayout(layout.M, tuple(ell))

def _random_orthogonal(n, rng):
    if n == 0:
        return np.zeros((0, 0))
    q, r = scipy.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))

def embed_orthogonal(ds, D_new, seed = None, ell = None, mix = True):
    """
    Embed the dataset into a higher ambient dimension with a random
    orthogonal map that is block-diagonal per angular index, so
    rotations and all rotational distances are preserved.

    Each m block is zero-padded to its new radial count and multiplied
    by a random real orthogonal matrix (identity when mix is False).
    """

    layout = ds.layout

    if D_new < layout.D_total:
        raise DimensionError(f"cannot embed dimension {layout.D_total} "
                             f"into smaller dimension {D_new}")

    if ell is None:
        new_layout = _spread_dimensions(layout, D_new, ds.is_real)
    else:
        new_layout = AngularLayout(layout.M, tuple(ell))
        if new_layout.D_total != D_new:
            raise DimensionError(f"radial counts {new_layout.ell} do not sum "
                                 f"to D_new={D_new}")

    rng = np.random.default_rng(seed)
    values = np.zeros((ds.N, new_layout.D_total), dtype = np.complex128)
    mixers = {}

    # m >= 0 first, so a real dataset can reuse the mixer of +m at -m
    for m in sorted(layout.angular_indices, key = lambda m: (abs(m), -m)):
        old, new = layout.ell_of(m), new_layout.ell_of(m)
        if new < old:
            raise DimensionError(f"angular index {m} would shrink from "
                                 f"{old} to {new} radial indices")

        padded = np.zeros((ds.N, new), dtype = np.complex128)
        padded[:, :old] = ds.block(m)

        if not mix:
            q = np.eye(new)
        elif ds.is_real and m < 0:
            # conj(x Q^T) = conj(x) Q^T for real Q
            q = mixers[-m]
        else:
            q = _random_orthogonal(new, rng)
        mixers[m] = q

        values[:, new_layout.columns(m)] = padded @ q.T

    logging.debug(f"Embedded D={layout.D_total} into D={D_new}, "
                  f"layout {new_layout.ell}")
    return SteerableDataset(new_layout, values, is_real = ds.is_real)

#
# Noise
#

@dataclass(frozen = True)
class NoiseSpec:
    """
    Additive complex white Gaussian noise with per-coordinate variance
    sigma2 (sigma2/2 in each of the real and imaginary parts).
    """

    sigma2: float
    seed: int = None

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ConfigError(f"noise variance must be >= 0, got {self.sigma2}")

    @staticmethod
    def from_gamma(gamma, D_total, seed = None):
        """Noise whose total magnitude D * sigma2 equals gamma."""
        return NoiseSpec(gamma / D_total, seed)

    def gamma(self, D_total):
        return D_total * self.sigma2

def add_noise(ds, spec):
    if spec.sigma2 == 0:
        return ds.with_values(ds.values)

    rng = np.random.default_rng(spec.seed)
    scale = np.sqrt(spec.sigma2 / 2)
    noise = scale * (rng.standard_normal(ds.values.shape)
                     + 1j * rng.standard_normal(ds.values.shape))

    if ds.is_real:
        # Keep the conjugate symmetry of real images: mirror the m > 0
        # noise into m < 0, and use real noise (same variance) at m = 0.
        layout = ds.layout
        zero = layout.columns(0)
        noise[:, zero] = np.sqrt(spec.sigma2) * rng.standard_normal((ds.N, layout.ell_of(0)))
        for m in range(1, layout.M + 1):
            noise[:, layout.columns(-m)] = np.conj(noise[:, layout.columns(m)])

    logging.debug(f"Added noise sigma2={spec.sigma2} (seed {spec.seed}) "
                  f"to {ds.N} points")
    return ds.with_values(ds.values + noise)

#
# Polar grids
#

def from_polar_grid(samples, n_rings, n_angles, M = None):
    """
    Steerable coefficients of images sampled on a polar grid.

    samples holds one image per row, ring-major (all angles of ring 1,
    then ring 2, ...); a single image may be passed as a flat vector.
    Coefficient x_{m,ell} is the m'th discrete Fourier coefficient of
    ring ell, normalized so that I(r_ell, theta) = sum_m x_{m,ell} e^{i m theta}.
    """

    samples = np.asarray(samples)
    if samples.ndim == 1:
        samples = samples[np.newaxis, :]
    samples = samples.reshape(samples.shape[0], -1)

    if samples.shape[1] != n_rings * n_angles:
        raise LayoutError(f"expected {n_rings} x {n_angles} samples per image, "
                          f"got {samples.shape[1]}")

    if M is None:
        M = (n_angles - 1) // 2
    if n_angles < 2 * M + 1:
        raise AliasingError(f"{n_angles} angular samples cannot resolve "
                            f"angular indices up to M={M} (need {2 * M + 1})")

    rings = samples.reshape(samples.shape[0], n_rings, n_angles)
    layout = AngularLayout.uniform(M, n_rings)
    values = np.zeros((samples.shape[0], layout.D_total), dtype = np.complex128)

    is_real = np.isrealobj(samples)
    if is_real:
        spectrum = np.fft.rfft(rings, axis = 2) / n_angles
        for m in range(M + 1):
            values[:, layout.columns(m)] = spectrum[:, :, m]
            values[:, layout.columns(-m)] = np.conj(spectrum[:, :, m])
        values[:, layout.columns(0)] = spectrum[:, :, 0].real
    else:
        spectrum = np.fft.fft(rings, axis = 2) / n_angles
        for m in layout.angular_indices:
            values[:, layout.columns(m)] = spectrum[:, :, m % n_angles]

    return SteerableDataset(layout, values, is_real = is_real)

def to_polar_grid(ds, n_angles = None):
    """
    Sample the images of a polar-layout dataset (equal ell_m for every
    m) on n_angles equally spaced angles per ring; inverse of
    from_polar_grid for band-limited images.  Returns ring-major rows,
    real-valued for real datasets.
    """

    layout = ds.layout
    if len(set(layout.ell)) != 1:
        raise LayoutError(f"not a polar-grid layout: {layout.ell}")

    if n_angles is None:
        n_angles = 2 * layout.M + 1
    if n_angles < 2 * layout.M + 1:
        raise AliasingError(f"{n_angles} angular samples cannot represent "
                            f"angular indices up to M={layout.M}")

    n_rings = layout.ell[0]
    spectrum = np.zeros((ds.N, n_rings, n_angles), dtype = np.complex128)
    for m in layout.angular_indices:
        spectrum[:, :, m % n_angles] = ds.block(m)

    images = np.fft.ifft(spectrum * n_angles, axis = 2)
    if ds.is_real:
        images = images.real

    return images.reshape(ds.N, n_rings * n_angles)

def gen_polar_orbit(N, n_rings, n_angles, M = None, seed = None):
    """
    N randomly rotated copies of one random real image, band-limited
    to |m| <= M and sampled on an n_rings x n_angles polar grid; the
    orbit of the image is a rotationally-invariant circle.  Returns the
    coefficients of the sampled images.
    """

    if N < 1 or n_rings < 1:
        raise ConfigError(f"need N >= 1 and n_rings >= 1, got N={N}, n_rings={n_rings}")
    if M is None:
        M = (n_angles - 1) // 2

    rng = np.random.default_rng(seed)
    layout = AngularLayout.uniform(M, n_rings)

    # Random coefficients decaying in m, conjugate-symmetric so the
    # template image is real.
    template = np.zeros(layout.D_total, dtype = np.complex128)
    for m in range(M + 1):
        scale = 1.0 / (1 + m)
        block = scale * (rng.standard_normal(n_rings) + 1j * rng.standard_normal(n_rings))
        if m == 0:
            block = block.real
        template[layout.columns(m)] = block
        template[layout.columns(-m)] = np.conj(block)

    angles = rng.uniform(0, 2 * np.pi, N)
    orbit = SteerableDataset(layout, np.tile(template, (N, 1)), is_real = True)
    images = to_polar_grid(orbit.rotated(angles), n_angles)

    logging.debug(f"Generated polar orbit: {N} images of {n_rings} x {n_angles}")
    return from_polar_grid(images, n_rings, n_angles, M)

#
# SGL1 binary format
#
# magic "SGL1", u32 version, u32 N, u32 M, i32 is_real, u32 ell_m for
# m = -M..M, then N * D complex values as little-endian f64 (re, im)
# pairs, row-major in layout order.

def dumps(ds):
    header = SGL1_HEADER.pack(SGL1_MAGIC, SGL1_VERSION, ds.N, ds.M,
                              1 if ds.is_real else 0)
    ell = np.asarray(ds.layout.ell, dtype = "<u4").tobytes()
    return header + ell + ds.values.astype("<c16").tobytes()

def loads(data, source = "input"):
    if len(data) < SGL1_HEADER.size:
        raise FormatError(f"{source}: truncated SGL1 header")

    magic, version, N, M, is_real = SGL1_HEADER.unpack_from(data, 0)
    if magic != SGL1_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {SGL1_MAGIC!r}")
    if version != SGL1_VERSION:
        raise FormatError(f"{source}: unsupported SGL1 version {version}")

    offset = SGL1_HEADER.size
    ell_bytes = 4 * (2 * M + 1)
    if len(data) < offset + ell_bytes:
        raise FormatError(f"{source}: truncated layout table")
    ell = np.frombuffer(data, dtype = "<u4", count = 2 * M + 1, offset = offset)
    offset += ell_bytes

    layout = AngularLayout(M, tuple(int(x) for x in ell))
    expected = offset + 16 * N * layout.D_total
    if len(data) != expected:
        raise FormatError(f"{source}: expected {expected} bytes, found {len(data)}")

    values = np.frombuffer(data, dtype = "<c16", offset = offset)
    return SteerableDataset(layout, values.reshape(N, layout.D_total),
                            is_real = bool(is_real))

def save(path, ds):
    with open(path, "wb") as outfile:
        outfile.write(dumps(ds))
    logging.debug(f"Saved {ds!r} to {path}")

def load(path):
    with open(path, "rb") as infile:
        ds = loads(infile.read(), source = path)
    logging.debug(f"Loaded {ds!r} from {path}")
    return ds

#
# CSV interchange: header i,m,ell,re,im with one line per layout entry.
# Point indices i count from 0, radial indices ell from 1.

CSV_HEADER = ["i", "m", "ell", "re", "im"]

def write_csv(stream, ds):
    writer = csv.writer(stream, lineterminator = "\n")
    writer.writerow(CSV_HEADER)

    layout = ds.layout
    for i in range(ds.N):
        for m in layout.angular_indices:
            for ell in range(1, layout.ell_of(m) + 1):
                value = ds.values[i, layout.index(m, ell)]
                writer.writerow([i, m, ell, repr(float(value.real)),
                                 repr(float(value.imag))])

def read_csv(stream, layout = None, is_real = False):
    """
    Read a dataset back from CSV.  Without an explicit layout, M and
    ell_m are taken from the largest indices present.
    """

    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("CSV dataset has no header")
    if header != CSV_HEADER:
        raise FormatError(f"CSV dataset header must be {','.join(CSV_HEADER)}")

    entries = []
    for linenr, row in enumerate(reader, 2):
        try:
            i, m, ell = int(row[0]), int(row[1]), int(row[2])
            entries.append((i, m, ell, complex(float(row[3]), float(row[4]))))
        except (ValueError, IndexError):
            raise FormatError(f"CSV dataset: malformed line {linenr}")

    if not entries:
        raise FormatError("CSV dataset has no entries")

    if layout is None:
        M = max(abs(m) for _, m, _, _ in entries)
        ell = [0] * (2 * M + 1)
        for _, m, l, _ in entries:
            ell[m + M] = max(ell[m + M], l)
        layout = AngularLayout(M, tuple(ell))

    N = max(i for i, _, _, _ in entries) + 1
    values = np.zeros((N, layout.D_total), dtype = np.complex128)
    for i, m, ell, value in entries:
        values[i, layout.index(m, ell)] = value

    return SteerableDataset(layout, values, is_real = is_real)

def save_csv(path, ds):
    with open(path, "wt", newline = "") as outfile:
        write_csv(outfile, ds)

def load_csv(path, layout = None, is_real = False):
    with open(path, "rt", newline = "") as infile:
        return read_csv(infile, layout, is_real)
