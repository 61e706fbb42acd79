"""Base-w packing of quantizer digits into one lattice integer per block.

Block j of a client's digit vector maps to ``sum_i z_i w^(i-1)``. Because
w exceeds the largest possible digit sum over all clients, adding the
packed integers of every client never carries between digits, so the server
can read off per-coordinate digit sums by base-w digit extraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import check_exact
from .exceptions import DigitOutOfRange, RangeViolation


@dataclass(frozen=True)
class LatticeLayout:
    dim: int
    block_size: int
    base: int

    def __post_init__(self):
        if not 1 <= self.block_size <= self.dim:
            raise ValueError("block_size must lie in 1..dim")
        if self.base < 2:
            raise ValueError("base must be >= 2")
        check_exact(self.span, "w^p-1")

    @property
    def num_blocks(self):
        return -(-self.dim // self.block_size)

    @property
    def span(self):
        """Largest lattice integer, w^p - 1."""
        return self.base**self.block_size - 1

    @property
    def padded_dim(self):
        return self.num_blocks * self.block_size

    def weights(self):
        return np.array([self.base**i for i in range(self.block_size)], dtype=np.int64)


def partition_blocks(d, p):
    """Contiguous 0-based index blocks of size p; the last one may be short."""
    if not 1 <= p <= d:
        raise ValueError("need 1 <= p <= d")
    return [np.arange(start, min(d, start + p)) for start in range(0, d, p)]


def lattice_pack(digits, layout, digit_cap=None):
    """Pack one block of at most p digits (missing trailing digits are 0)."""
    digits = [int(z) for z in digits]
    if len(digits) > layout.block_size:
        raise DigitOutOfRange(f"block holds {layout.block_size} digits, got {len(digits)}")
    cap = layout.base - 1 if digit_cap is None else digit_cap
    if any(z < 0 or z > cap for z in digits):
        raise DigitOutOfRange(f"digits must lie in 0..{cap}")
    tau = sum(z * layout.base**i for i, z in enumerate(digits))
    return check_exact(tau, "lattice point")


def lattice_unpack(tau_hat, layout):
    """Base-w digits of ``tau_hat`` as a length-p list."""
    tau_hat = int(tau_hat)
    if not 0 <= tau_hat <= layout.span:
        raise RangeViolation(f"lattice integer outside 0..{layout.span}")
    out = []
    for _ in range(layout.block_size):
        tau_hat, digit = divmod(tau_hat, layout.base)
        out.append(digit)
    return out


def lattice_unpack_sc(tau_hat, layout):
    """Successive-cancellation form of :func:`lattice_unpack`.

    lambda_i = ((tau - sum_{i'<i} lambda_i' w^(i'-1)) / w^(i-1)) mod w.
    """
    tau_hat = int(tau_hat)
    if not 0 <= tau_hat <= layout.span:
        raise RangeViolation(f"lattice integer outside 0..{layout.span}")
    lam = []
    residual = tau_hat
    for i in range(layout.block_size):
        scale = layout.base**i
        lam.append((residual // scale) % layout.base)
        residual -= lam[-1] * scale
    return lam


def pack_blocks(digits, layout, digit_cap=None):
    """Vectorized packing: (..., d) digits -> (..., num_blocks) int64 lattice points."""
    digits = np.asarray(digits, dtype=np.int64)
    if digits.shape[-1] != layout.dim:
        raise DigitOutOfRange(f"expected {layout.dim} digits per row, got {digits.shape[-1]}")
    cap = layout.base - 1 if digit_cap is None else digit_cap
    if digits.size and (digits.min() < 0 or digits.max() > cap):
        raise DigitOutOfRange(f"digits must lie in 0..{cap}")
    pad = layout.padded_dim - layout.dim
    if pad:
        digits = np.pad(digits, [(0, 0)] * (digits.ndim - 1) + [(0, pad)])
    blocks = digits.reshape(*digits.shape[:-1], layout.num_blocks, layout.block_size)
    return blocks @ layout.weights()


def unpack_blocks(tau_hat, layout):
    """Vectorized inverse of :func:`pack_blocks`; padding digits are discarded."""
    tau_hat = np.asarray(tau_hat, dtype=np.int64)
    if tau_hat.size and (tau_hat.min() < 0 or tau_hat.max() > layout.span):
        raise RangeViolation(f"lattice integer outside 0..{layout.span}")
    digits = (tau_hat[..., None] // layout.weights()) % layout.base
    flat = digits.reshape(*tau_hat.shape[:-1], layout.padded_dim)
    return flat[..., : layout.dim]
