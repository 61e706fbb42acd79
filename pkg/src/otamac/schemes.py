"""End-to-end over-the-air aggregation schemes.

Each round maps K client gradients (a K x d array) to one server-side
estimate using a fixed number of channel uses:

* ``uq_ota_round``: CUQ digits, lattice packing, ASK over the MAC.
* ``wz_ota_round``: half of the clients build coarse side information with
  the UQ pipeline, the other half send boosted-DAQ counts of their rotated
  gradients which the server corrects against that side information.
* ``analog_round``: scaled linear transmission, one coordinate per use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .channel import AskCodebook, SumConstellation, check_exact, md_decode_sum, transmit_mac
from .exceptions import DimensionMismatch, InvalidConfig
from .lattice import LatticeLayout, pack_blocks, unpack_blocks
from .quantize import (
    CuqParams,
    DaqParams,
    cuq_encode,
    cuq_reconstruct_sum,
    daq_encode,
    daq_reconstruct,
    daq_reference_counts,
    make_rotation,
    next_pow2,
    rotate,
    rotate_inverse,
)

WZ_SIDE_LEVELS = 7


@dataclass(frozen=True)
class SchemeParams:
    """Derived parameters of one scheme.

    For ``wz`` the plain fields (v, p, w, r) describe the side-information
    stage and the primed fields the DAQ stage. ``r`` values are per-client
    ASK sizes chosen so that the sum of the active clients' lattice points
    spans exactly 0..w^p - 1.
    """

    scheme: str
    K: int
    d: int
    B: float
    ell: int
    v: int = 0
    p: int = 0
    w: int = 0
    r: int = 0
    p_prime: int = 0
    w_prime: int = 0
    r_prime: int = 0
    M: float = 0.0
    I: int = 0
    c2: float = 0.0
    N: int = 0
    d_pad: int = 0

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class RoundEstimate:
    estimate: np.ndarray
    ell_used: int
    decode_ok: bool = True
    info: dict = field(default_factory=dict)


def _check_common(K, d, snr, N, B):
    if K < 1 or d < 1:
        raise InvalidConfig("K and d must be positive")
    if not snr > 0:
        raise InvalidConfig("SNR must be positive")
    if N < 1:
        raise InvalidConfig("N must be >= 1")
    if not B > 0:
        raise InvalidConfig("B must be positive")


def _block_size(arg, w, cap):
    """Largest integer p with w^p <= arg, clamped to [1, cap]."""
    if math.isinf(arg):
        return cap
    p = int(math.floor(math.log(arg) / math.log(w))) if arg >= 1 else 0
    while p > 0 and w**p > arg:
        p -= 1
    while p < cap and w ** (p + 1) <= arg:
        p += 1
    return max(1, min(cap, p))


def _log_term(K, N):
    return math.log(K * N**1.5)


def _ratio(num, den):
    return math.inf if den <= 0 or math.isinf(num) else num / den


def make_uq_params(K, d, v, p, B, N=0):
    """UQ-OTA parameters for explicit levels ``v`` and block size ``p``."""
    if v < 2:
        raise InvalidConfig("v must be >= 2")
    w = K * (v - 1) + 1
    layout = LatticeLayout(d, p, w)
    r = layout.span // K + 1
    check_exact(r, "ASK size")
    return SchemeParams("uq", K, d, float(B), layout.num_blocks, v=v, p=p, w=w, r=r, N=N, d_pad=d)


def select_params_uq(K, d, SNR, N, B):
    """Levels v = floor(sqrt d) + 1 and the largest block size the decoding bound allows."""
    _check_common(K, d, SNR, N, B)
    v = math.isqrt(d) + 1
    w = K * (v - 1) + 1
    arg = 1.0 + math.sqrt(_ratio(2.0 * K * SNR, _log_term(K, N)))
    p = _block_size(arg, w, d)
    return make_uq_params(K, d, v, p, B, N)


def make_wz_params(K, d, p, p_prime, M, I, B, v=WZ_SIDE_LEVELS, c2=0.0, N=0):
    """WZ-OTA parameters for explicit block sizes and DAQ range/samples."""
    if K < 2 or K % 2:
        raise InvalidConfig("WZ-OTA needs an even number of clients K >= 2")
    if not M > 0 or I < 1:
        raise InvalidConfig("need M > 0 and I >= 1")
    half = K // 2
    d_pad = next_pow2(d)
    w = half * (v - 1) + 1
    w_prime = half * I + 1
    side = LatticeLayout(d, p, w)
    refine = LatticeLayout(d_pad, p_prime, w_prime)
    r = side.span // half + 1
    r_prime = refine.span // half + 1
    check_exact(r, "ASK size")
    check_exact(r_prime, "ASK size")
    return SchemeParams(
        "wz", K, d, float(B), side.num_blocks + refine.num_blocks, v=v, p=p, w=w, r=r,
        p_prime=p_prime, w_prime=w_prime, r_prime=r_prime, M=float(M), I=int(I),
        c2=float(c2), N=N, d_pad=d_pad)


def select_params_wz(K, d, SNR, N, B, c2=1.0):
    _check_common(K, d, SNR, N, B)
    if K < 2 or K % 2:
        raise InvalidConfig("WZ-OTA needs an even number of clients K >= 2")
    if not c2 > 0:
        raise InvalidConfig("c2 must be positive")
    root = math.sqrt(math.log(K**1.5 * N))
    M = c2 * B / (K * math.sqrt(d)) * root
    I = max(1, math.ceil(c2 * root))
    arg = 1.0 + math.sqrt(_ratio(K * SNR, 2.0 * _log_term(K, N)))
    w = 3 * K + 1
    w_prime = (K // 2) * I + 1
    p = _block_size(arg, w, d)
    p_prime = _block_size(arg, w_prime, next_pow2(d))
    return make_wz_params(K, d, p, p_prime, M, I, B, c2=c2, N=N)


def make_analog_params(K, d, B):
    return SchemeParams("analog", K, d, float(B), d, d_pad=d)


def _validate(grads, params, cfg):
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != (params.K, params.d):
        raise DimensionMismatch(f"expected gradients of shape {(params.K, params.d)}, got {grads.shape}")
    if cfg.num_clients != params.K:
        raise DimensionMismatch("channel and scheme disagree on the number of clients")
    return grads


def transmit_digits(digits, rows, layout, r, digit_cap, cfg, rng):
    """Send per-client digit vectors through lattice packing, ASK and the MAC.

    ``digits`` has one row per active client; ``rows`` gives their positions
    among the K channel inputs (the other clients transmit zeros). Returns
    the decoded per-coordinate digit sums, whether every MD decode stayed in
    range, and the number of channel uses.
    """
    tau = pack_blocks(digits, layout, digit_cap)
    codebook = AskCodebook(r, cfg.power)
    codewords = np.zeros((cfg.num_clients, layout.num_blocks))
    codewords[rows] = codebook.modulate(tau)
    y = transmit_mac(codewords, cfg, rng)
    sums = SumConstellation(r, cfg.power, len(digits))
    s, clamped = md_decode_sum(y, sums, return_clamped=True)
    return unpack_blocks(s, layout), not np.any(clamped), layout.num_blocks


def uq_ota_round(grads, params, cfg, rng):
    grads = _validate(grads, params, cfg)
    K = params.K
    cuq = CuqParams(params.v, params.B, K)
    z = cuq_encode(grads / K, cuq, rng)
    layout = LatticeLayout(params.d, params.p, params.w)
    lam, ok, uses = transmit_digits(z, np.arange(K), layout, params.r, params.v - 1, cfg, rng)
    assert uses == params.ell
    return RoundEstimate(cuq_reconstruct_sum(lam, params.v, params.B, K), uses, ok)


class WzRefinement(NamedTuple):
    estimate: np.ndarray
    correction: np.ndarray
    decode_ok: bool
    uses: int


def wz_side_information(grads_c1, params, cfg, rng):
    """First stage: the first K/2 clients run UQ-OTA with normalizer K/2.

    Returns S, the stage-1 estimate divided by K/2, plus decode flag and
    channel uses.
    """
    half = params.K // 2
    cuq = CuqParams(params.v, params.B, half)
    z = cuq_encode(np.asarray(grads_c1) / half, cuq, rng)
    layout = LatticeLayout(params.d, params.p, params.w)
    lam, ok, uses = transmit_digits(z, np.arange(half), layout, params.r, params.v - 1, cfg, rng)
    side = cuq_reconstruct_sum(lam, params.v, params.B, half) / half
    return side, ok, uses


def wz_refine(grads_c2, side, params, cfg, rotation, shared_seed, rng):
    """Second stage: clients K/2..K-1 send DAQ counts of their rotated, rescaled gradients."""
    K, half = params.K, params.K // 2
    daq = DaqParams(params.M, params.I, shared_seed)
    ids = range(half, K)
    rotated = rotate(rotation, 2.0 * np.asarray(grads_c2) / K)
    counts = np.stack([daq_encode(rotated[i], daq, k) for i, k in enumerate(ids)])
    layout = LatticeLayout(rotation.d_pad, params.p_prime, params.w_prime)
    lam, ok, uses = transmit_digits(
        counts, np.arange(half, K), layout, params.r_prime, params.I, cfg, rng)
    omega = daq_reference_counts(rotate(rotation, side), daq, ids)
    estimate = daq_reconstruct(lam, omega, params.M, params.I, side, K, rotation)
    correction = (2.0 * params.M / params.I) * rotate_inverse(rotation, (lam - omega).astype(float))
    return WzRefinement(estimate, correction, ok, uses)


def wz_ota_round(grads, params, cfg, rotation=None, rng=None):
    """One WZ-OTA round; the estimate targets (2/K) * sum of the second half's gradients.

    A fresh rotation and shared DAQ seed are drawn from ``rng`` unless a
    rotation is supplied.
    """
    grads = _validate(grads, params, cfg)
    if rng is None:
        rng = cfg.rng()
    if rotation is None:
        rotation = make_rotation(params.d, rng)
    half = params.K // 2
    side, ok1, uses1 = wz_side_information(grads[:half], params, cfg, rng)
    shared_seed = int(rng.integers(2**63))
    ref = wz_refine(grads[half:], side, params, cfg, rotation, shared_seed, rng)
    uses = uses1 + ref.uses
    assert uses == params.ell
    return RoundEstimate(ref.estimate, uses, ok1 and ref.decode_ok, {"side": side})


def analog_round(grads, B, cfg, rng=None):
    """Scaled transmission: send (sqrt(dP)/B) g_k over d uses, rescale and average."""
    grads = np.asarray(grads, dtype=np.float64)
    K, d = grads.shape
    if cfg.num_clients != K:
        raise DimensionMismatch("channel and gradients disagree on the number of clients")
    scale = math.sqrt(d * cfg.power) / B
    y = transmit_mac(scale * grads, cfg, rng)
    return RoundEstimate(y / (scale * K), d, True)


def run_round(params, grads, cfg, rng):
    """Dispatch on ``params.scheme``."""
    if params.scheme == "uq":
        return uq_ota_round(grads, params, cfg, rng)
    if params.scheme == "wz":
        return wz_ota_round(grads, params, cfg, rng=rng)
    if params.scheme == "analog":
        return analog_round(grads, params.B, cfg, rng)
    raise InvalidConfig(f"unknown scheme {params.scheme!r}")


def estimate_alpha_beta(scheme, oracle, point, trials, rng=None, num_clients=None):
    """Monte Carlo RMSE and bias of a scheme's output about the true gradient at ``point``.

    ``scheme`` is a fitted estimator from :mod:`otamac.estimators` or any
    callable ``(grads, rng) -> RoundEstimate``; for a bare callable pass
    ``num_clients``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(rng)
    round_fn = getattr(scheme, "aggregate", scheme)
    K = num_clients if num_clients is not None else scheme.n_clients_
    target = np.asarray(oracle.grad(point), dtype=np.float64)
    total = np.zeros_like(target)
    sq = 0.0
    for _ in range(trials):
        out = round_fn(oracle.sample(point, rng, K), rng)
        est = out.estimate if isinstance(out, RoundEstimate) else np.asarray(out)
        total += est
        sq += float(np.sum((est - target) ** 2))
    alpha = math.sqrt(sq / trials)
    beta = float(np.linalg.norm(total / trials - target))
    return alpha, beta
