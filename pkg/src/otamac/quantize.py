"""Client/server quantization primitives.

* v-level coordinate-wise uniform quantizer with stochastic rounding (CUQ)
* randomized Walsh-Hadamard rotation
* boosted DAQ: correlated sampling against shared uniform thresholds
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, RangeViolation

_GRID_SNAP = 1e-9


@dataclass(frozen=True)
class CuqParams:
    """Grid ``-B/n + j * 2B/(n(v-1))`` for j in 0..v-1."""

    levels: int
    bound: float
    divisor: int = 1

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("CUQ needs at least 2 levels")
        if not self.bound > 0 or self.divisor < 1:
            raise ValueError("bound must be positive and divisor >= 1")

    @property
    def low(self):
        return -self.bound / self.divisor

    @property
    def spacing(self):
        return 2.0 * self.bound / (self.divisor * (self.levels - 1))


def cuq_encode(x, params, rng):
    """Stochastically round each coordinate of ``x`` to a grid index.

    Inputs outside ``[-B/n, B/n]`` are clipped first. The index is one of the
    two grid points bracketing x, with probabilities chosen so that the
    reconstruction is unbiased. Points on the grid (up to 1e-9 grid units)
    map to their own index deterministically.
    """
    x = np.clip(np.asarray(x, dtype=np.float64), params.low, -params.low)
    t = (x - params.low) / params.spacing
    nearest = np.rint(t)
    t = np.where(np.abs(t - nearest) <= _GRID_SNAP, nearest, t)
    base = np.floor(t)
    frac = t - base
    up = rng.random(np.shape(t)) < frac
    z = (base + up).astype(np.int64)
    return np.minimum(z, params.levels - 1)


def cuq_reconstruct(z, params):
    """Single-client reconstruction ``-B/n + z * 2B/(n(v-1))``."""
    return params.low + np.asarray(z, dtype=np.float64) * params.spacing


def cuq_reconstruct_sum(lam, v, B, K):
    """Unbiased estimate of the sum of K clients' inputs from their summed indices."""
    lam = np.asarray(lam)
    top = K * (v - 1)
    if lam.size and (lam.min() < 0 or lam.max() > top):
        raise RangeViolation(f"summed CUQ index outside 0..{top}")
    return -B + lam.astype(np.float64) * (2.0 * B / top)


@dataclass(frozen=True)
class Rotation:
    """R = H D / sqrt(d_pad) acting on zero-padded vectors of length d_pad."""

    d_pad: int
    sign_diagonal: np.ndarray
    original_dim: int

    def __post_init__(self):
        if self.d_pad < 1 or self.d_pad & (self.d_pad - 1):
            raise ValueError("d_pad must be a power of two")
        if self.sign_diagonal.shape != (self.d_pad,):
            raise DimensionMismatch("sign diagonal must have length d_pad")
        if not 1 <= self.original_dim <= self.d_pad:
            raise ValueError("original_dim must lie in 1..d_pad")

    def matrix(self):
        """Dense R; for tests and small d only."""
        h = _hadamard_apply(np.eye(self.d_pad))
        return h * self.sign_diagonal / math.sqrt(self.d_pad)


def next_pow2(d):
    return 1 << (d - 1).bit_length()


def make_rotation(d, seed=None):
    """Random rotation for dimension ``d``; ``seed`` is an int, SeedSequence or Generator."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d_pad = next_pow2(d)
    signs = rng.choice(np.array([-1.0, 1.0]), size=d_pad)
    return Rotation(d_pad, signs, d)


def fwht(x):
    """Unnormalized fast Walsh-Hadamard transform along the last axis (Sylvester ordering)."""
    x = np.array(x, dtype=np.float64, copy=True)
    n = x.shape[-1]
    if n & (n - 1):
        raise ValueError("length must be a power of two")
    return _hadamard_apply(x)


def _hadamard_apply(x):
    lead = x.shape[:-1]
    n = x.shape[-1]
    h = 1
    while h < n:
        y = x.reshape(*lead, n // (2 * h), 2, h)
        a = y[..., 0, :] + y[..., 1, :]
        b = y[..., 0, :] - y[..., 1, :]
        x = np.stack((a, b), axis=-2).reshape(*lead, n)
        h *= 2
    return x


def rotate(r, x):
    """Zero-pad ``x`` (last axis of length d) and apply R; O(d log d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != r.original_dim:
        raise DimensionMismatch(f"expected last axis {r.original_dim}, got {x.shape[-1]}")
    if r.d_pad != r.original_dim:
        pad = [(0, 0)] * (x.ndim - 1) + [(0, r.d_pad - r.original_dim)]
        x = np.pad(x, pad)
    return _hadamard_apply(x * r.sign_diagonal) / math.sqrt(r.d_pad)


def rotate_inverse(r, y, keep_padding=False):
    """Apply R^T = D H / sqrt(d_pad); padded coordinates are dropped unless ``keep_padding``."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != r.d_pad:
        raise DimensionMismatch(f"expected last axis {r.d_pad}, got {y.shape[-1]}")
    x = _hadamard_apply(y) * r.sign_diagonal / math.sqrt(r.d_pad)
    return x if keep_padding else x[..., : r.original_dim]


@dataclass(frozen=True)
class DaqParams:
    """Thresholds U_{k,i}(j) ~ unif[-M, M] keyed by (shared_seed, k)."""

    M: float
    I: int
    shared_seed: int = 0

    def __post_init__(self):
        if not self.M > 0 or self.I < 1:
            raise ValueError("need M > 0 and I >= 1")


def daq_thresholds(params, client_id, dim):
    """The (I, dim) threshold matrix of one client.

    Row i, column j is U_{k,i}(j). The stream is Philox keyed on
    (shared_seed, client_id) so encoder and server derive identical values
    without exchanging anything.
    """
    bitgen = np.random.Philox(np.random.SeedSequence([params.shared_seed, client_id]))
    return np.random.Generator(bitgen).uniform(-params.M, params.M, size=(params.I, dim))


def daq_encode(x_rot, params, client_id):
    """Count of thresholds lying at or below each coordinate; entries in 0..I."""
    x_rot = np.asarray(x_rot, dtype=np.float64)
    u = daq_thresholds(params, client_id, x_rot.shape[-1])
    return np.count_nonzero(u <= x_rot, axis=0).astype(np.int64)


def daq_reference_counts(s_rot, params, client_ids):
    """Server-side counts against side information, summed over ``client_ids``."""
    s_rot = np.asarray(s_rot, dtype=np.float64)
    omega = np.zeros(s_rot.shape[-1], dtype=np.int64)
    for k in client_ids:
        omega += daq_encode(s_rot, params, k)
    return omega


def daq_reconstruct(lam, omega, M, I, S, K, rotation=None):
    """Boosted-DAQ output ``(2M/I) R^{-1}(lam - omega) + (K/2) S``.

    ``lam`` and ``omega`` live in the rotated domain; without ``rotation``
    they are taken to be in the same coordinates as ``S``.
    """
    lam = np.asarray(lam)
    omega = np.asarray(omega)
    top = (K // 2) * I
    for name, arr in (("lambda", lam), ("omega", omega)):
        if arr.size and (arr.min() < 0 or arr.max() > top):
            raise RangeViolation(f"{name} outside 0..{top}")
    if lam.shape != omega.shape:
        raise DimensionMismatch("lambda and omega shapes differ")
    diff = (lam - omega).astype(np.float64)
    correction = rotate_inverse(rotation, diff) if rotation is not None else diff
    return (2.0 * M / I) * correction + (K / 2) * np.asarray(S, dtype=np.float64)
