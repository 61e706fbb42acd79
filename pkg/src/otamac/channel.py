"""Gaussian multiple-access channel, ASK constellations and MD decoding.

All K clients transmit simultaneously; the server observes the sum of their
codewords plus i.i.d. Gaussian noise in every channel use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, GuardOverflow, IndexOutOfRange, PowerViolation

EXACT_INT_LIMIT = 2**52
POWER_RTOL = 1e-12


def check_exact(value, what="value"):
    """Raise GuardOverflow unless ``value`` is safely representable in a double."""
    if value >= EXACT_INT_LIMIT:
        raise GuardOverflow(f"{what}={value} exceeds the exact-integer guard 2**52")
    return value


@dataclass(frozen=True)
class ChannelConfig:
    """Synchronized unit-gain Gaussian MAC.

    Parameters
    ----------
    num_clients : int
        Number of transmitters K.
    power : float
        Per-client average power per channel use.
    noise_var : float
        Variance of each noise sample Z(j).
    seed : int
        Seed used by :meth:`rng` when no generator is supplied elsewhere.
    """

    num_clients: int
    power: float = 1.0
    noise_var: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if not self.power > 0:
            raise ValueError("power must be positive")
        if not self.noise_var >= 0:
            raise ValueError("noise_var must be non-negative")

    @classmethod
    def from_snr(cls, num_clients, snr, power=1.0, seed=0):
        """Build a config whose SNR = K P / noise_var equals ``snr`` (``inf`` gives a noiseless channel)."""
        if not snr > 0:
            raise ValueError("snr must be positive")
        noise_var = 0.0 if math.isinf(snr) else num_clients * power / snr
        return cls(num_clients, power, noise_var, seed)

    @classmethod
    def from_snr_db(cls, num_clients, snr_db, power=1.0, seed=0):
        return cls.from_snr(num_clients, 10.0 ** (snr_db / 10.0), power, seed)

    def snr(self):
        if self.noise_var == 0:
            return math.inf
        return self.num_clients * self.power / self.noise_var

    def rng(self, *keys):
        return np.random.default_rng(np.random.SeedSequence([self.seed, *keys]))


@dataclass(frozen=True)
class AskCodebook:
    """r equally spaced amplitudes on [-sqrt(P), sqrt(P)]."""

    size: int
    power: float = 1.0

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("ASK codebook needs at least 2 points")
        check_exact(self.size, "ASK size")

    @property
    def spacing(self):
        return 2.0 * math.sqrt(self.power) / (self.size - 1)

    def amplitudes(self):
        return -math.sqrt(self.power) + np.arange(self.size) * self.spacing

    def modulate(self, indices):
        """Vectorized :func:`ask_amplitude`."""
        indices = np.asarray(indices)
        if indices.size and (indices.min() < 0 or indices.max() > self.size - 1):
            raise IndexOutOfRange(f"ASK index outside 0..{self.size - 1}")
        return -math.sqrt(self.power) + indices.astype(np.float64) * self.spacing


def ask_amplitude(cb, index):
    if not 0 <= index <= cb.size - 1:
        raise IndexOutOfRange(f"index {index} outside 0..{cb.size - 1}")
    return -math.sqrt(cb.power) + index * cb.spacing


@dataclass(frozen=True)
class SumConstellation:
    """Noise-free channel outputs when K clients each send a point of an r-ASK code.

    Point s is ``-K sqrt(P) + s * 2 sqrt(P) / (r - 1)`` for s in 0..K(r-1).
    """

    r: int
    power: float
    num_clients: int

    def __post_init__(self):
        if self.r < 2 or self.num_clients < 1:
            raise ValueError("need r >= 2 and num_clients >= 1")
        check_exact(self.num_clients * (self.r - 1), "K(r-1)")

    @property
    def max_index(self):
        return self.num_clients * (self.r - 1)

    @property
    def spacing(self):
        return 2.0 * math.sqrt(self.power) / (self.r - 1)

    def point(self, s):
        return -self.num_clients * math.sqrt(self.power) + np.asarray(s, dtype=np.float64) * self.spacing


def transmit_mac(codewords, cfg, rng=None):
    """Superpose the K codeword rows and add channel noise.

    Parameters
    ----------
    codewords : array of shape (K, ell)
    cfg : ChannelConfig
    rng : numpy Generator, optional
        Defaults to a generator seeded from ``cfg.seed``.

    Returns
    -------
    ndarray of shape (ell,)
    """
    codewords = np.asarray(codewords, dtype=np.float64)
    if codewords.ndim != 2 or codewords.shape[0] != cfg.num_clients:
        raise DimensionMismatch(
            f"expected {cfg.num_clients} codeword rows, got shape {codewords.shape}")
    ell = codewords.shape[1]
    if ell < 1:
        raise DimensionMismatch("codewords must use at least one channel use")
    energy = np.einsum("ij,ij->i", codewords, codewords)
    budget = ell * cfg.power
    if np.any(energy > budget * (1.0 + POWER_RTOL)):
        worst = int(np.argmax(energy))
        raise PowerViolation(
            f"client {worst} uses energy {energy[worst]:.6g} > ell*P = {budget:.6g}")
    y = codewords.sum(axis=0)
    if cfg.noise_var > 0:
        if rng is None:
            rng = cfg.rng()
        y = y + rng.normal(0.0, math.sqrt(cfg.noise_var), size=ell)
    return y


def md_decode_sum(y, sc, return_clamped=False):
    """Minimum-distance decoding onto a :class:`SumConstellation`.

    Returns the index s of the nearest sum point (ties go to the smaller
    index), clamped to 0..K(r-1). Works on scalars and arrays. With
    ``return_clamped`` a boolean mask of outputs that needed clamping is also
    returned.
    """
    y_arr = np.asarray(y, dtype=np.float64)
    t = (y_arr + sc.num_clients * math.sqrt(sc.power)) / sc.spacing
    raw = np.ceil(t - 0.5)
    clamped = (raw < 0) | (raw > sc.max_index)
    s = np.clip(raw, 0, sc.max_index).astype(np.int64)
    if np.ndim(y) == 0:
        s, clamped = int(s), bool(clamped)
    if return_clamped:
        return s, clamped
    return s


def decode_error_bound(cfg, r, p, w, n_uses):
    """Union/Chernoff bound ``min(1, N exp(-2 K SNR / (w^p - 1)^2))``.

    ``w`` and ``p`` may be given as reals when only the value of w^p - 1
    matters; ``r`` is accepted for call-site symmetry and is not used.
    """
    if n_uses < 1:
        raise ValueError("n_uses must be >= 1")
    span = w**p - 1
    check_exact(span, "w^p-1")
    snr = cfg.snr()
    if math.isinf(snr):
        return 0.0
    return min(1.0, n_uses * math.exp(-2.0 * cfg.num_clients * snr / span**2))
