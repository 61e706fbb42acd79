import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otamac.channel import ChannelConfig
from otamac.exceptions import DimensionMismatch, GuardOverflow, InvalidConfig
from otamac.optimize import make_mean_estimation_oracle
from otamac.quantize import DaqParams, daq_encode, daq_reconstruct, daq_reference_counts, make_rotation, rotate
from otamac.schemes import (
    RoundEstimate,
    SchemeParams,
    analog_round,
    estimate_alpha_beta,
    make_analog_params,
    make_uq_params,
    make_wz_params,
    run_round,
    select_params_uq,
    select_params_wz,
    uq_ota_round,
    wz_ota_round,
    wz_refine,
    wz_side_information,
)

NOISELESS = 0.0


def _mp_block_size(K, w, snr, N, cap, factor):
    """High-precision oracle for floor(log_w(1 + sqrt(factor * K * SNR / ln(K N^1.5))))."""
    with mpmath.workdps(50):
        log_term = mpmath.log(K * mpmath.mpf(N) ** 1.5)
        if log_term == 0:  # K = N = 1: unbounded argument
            return cap
        arg = 1 + mpmath.sqrt(factor * K * mpmath.mpf(snr) / log_term)
        p = int(mpmath.floor(mpmath.log(arg) / mpmath.log(w)))
    return max(1, min(cap, p))


# --- parameter selection ----------------------------------------------------

def test_uq_params_180db():
    p = select_params_uq(500, 64, 1e18, 64, 1.0)
    assert (p.v, p.w) == (9, 4001)
    assert p.p == _mp_block_size(500, 4001, 1e18, 64, 64, 2) == 2
    assert p.ell == 32
    assert p.r == (4001**2 - 1) // 500 + 1


def test_uq_params_50db():
    p = select_params_uq(500, 32, 1e5, 32, 1.0)
    assert p.p == _mp_block_size(500, p.w, 1e5, 32, 32, 2) == 1
    assert p.v == 6 and p.ell == 32


def test_uq_params_low_snr_clamps():
    assert select_params_uq(10, 16, 1e-9, 16, 1.0).p == 1


@settings(max_examples=150, deadline=None)
@given(K=st.integers(1, 600), d=st.integers(1, 128), snr_db=st.floats(-20, 180), N=st.integers(1, 10**4))
def test_uq_block_size_matches_high_precision_oracle(K, d, snr_db, N):
    snr = 10 ** (snr_db / 10)
    try:
        p = select_params_uq(K, d, snr, N, 1.0)
    except GuardOverflow:
        return
    assert p.p == _mp_block_size(K, p.w, snr, N, d, 2)
    assert p.w == K * (p.v - 1) + 1
    assert p.ell == math.ceil(d / p.p)
    assert K * (p.r - 1) == p.w**p.p - 1


@settings(max_examples=60, deadline=None)
@given(K=st.integers(1, 200), d=st.integers(1, 64), lo=st.floats(0, 100), hi=st.floats(0, 100))
def test_block_sizes_monotone_in_snr(K, d, lo, hi):
    lo, hi = sorted((lo, hi))
    a, b = (select_params_uq(K, d, 10 ** (x / 10), d, 1.0) for x in (lo, hi))
    assert a.p <= b.p
    K2 = 2 * K
    a, b = (select_params_wz(K2, d, 10 ** (x / 10), d, 1.0) for x in (lo, hi))
    assert a.p <= b.p and a.p_prime <= b.p_prime


def test_wz_params_example():
    p = select_params_wz(500, 32, 1e5, 64, 1.0)
    assert p.I == math.ceil(math.sqrt(math.log(500**1.5 * 64))) == 4
    assert p.w == 3 * 500 + 1 and p.v == 7
    assert p.w_prime == 250 * 4 + 1
    assert p.ell == math.ceil(32 / p.p) + math.ceil(32 / p.p_prime)


def test_wz_c2_scaling():
    a = select_params_wz(40, 16, 1e5, 16, 2.0, c2=1.0)
    b = select_params_wz(40, 16, 1e5, 16, 2.0, c2=2.0)
    assert b.M == 2 * a.M
    root = math.sqrt(math.log(40**1.5 * 16))
    assert b.I == math.ceil(2 * root) and a.I == math.ceil(root)


def test_wz_low_snr_clamps():
    p = select_params_wz(8, 16, 1e-9, 16, 1.0)
    assert p.p == 1 and p.p_prime == 1


def test_wz_block_size_oracle():
    for K, d, snr in [(500, 32, 1e5), (200, 64, 1e10), (1000, 64, 1e10), (16, 8, 1e3)]:
        p = select_params_wz(K, d, snr, d, 1.0)
        assert p.p == _mp_block_size(K, 3 * K + 1, snr, d, d, 0.5)
        assert p.p_prime == _mp_block_size(K, p.w_prime, snr, d, p.d_pad, 0.5)


@pytest.mark.parametrize("K", [1, 3, 7])
def test_wz_rejects_odd_k(K):
    with pytest.raises(InvalidConfig):
        select_params_wz(K, 8, 1e5, 8, 1.0)


@pytest.mark.parametrize("args", [(4, 8, 0.0, 8, 1.0), (4, 8, 1e5, 0, 1.0), (4, 8, 1e5, 8, -1.0)])
def test_select_rejects_invalid(args):
    with pytest.raises(InvalidConfig):
        select_params_uq(*args)


def test_guard_rejects_oversized_lattice():
    with pytest.raises(GuardOverflow):
        make_uq_params(2, 60, 2, 53, 1.0)
    with pytest.raises(GuardOverflow):
        make_wz_params(4, 64, 1, 40, 1.0, 30, 1.0)


def test_analog_params():
    p = make_analog_params(4, 8, 2.0)
    assert p.ell == 8 and p.scheme == "analog"


# --- UQ-OTA -----------------------------------------------------------------

def _grid_aligned(K, d, v, B, rng):
    # coordinates of g_k/K on the CUQ grid -B/K + j 2B/(K(v-1))
    j = rng.integers(0, v, size=(K, d))
    return K * (-B / K + j * 2 * B / (K * (v - 1)))


def test_uq_noiseless_grid_round_trip():
    rng = np.random.default_rng(0)
    for K, v, p, d in [(1, 2, 1, 1), (2, 3, 2, 5), (3, 4, 2, 8), (5, 6, 3, 7)]:
        params = make_uq_params(K, d, v, p, 1.5)
        g = _grid_aligned(K, d, v, 1.5, rng)
        out = uq_ota_round(g, params, ChannelConfig(K, noise_var=NOISELESS), rng)
        assert out.decode_ok and out.ell_used == params.ell
        np.testing.assert_allclose(out.estimate, g.mean(axis=0), atol=1e-12)


def test_uq_noiseless_unbiased():
    K, d, B = 4, 8, 1.0
    params = select_params_uq(K, d, 1e5, d, B)
    cfg = ChannelConfig(K, noise_var=NOISELESS)
    rng = np.random.default_rng(5)
    g = rng.uniform(-1, 1, size=(K, d))
    g *= B / np.linalg.norm(g, axis=1, keepdims=True) * rng.uniform(0.2, 1, size=(K, 1))
    est = np.array([uq_ota_round(g, params, cfg, rng).estimate for _ in range(20_000)])
    se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
    assert np.all(np.abs(est.mean(axis=0) - g.mean(axis=0)) < 4 * se)


def test_uq_heavy_noise_flags_decode_failure():
    K, d = 2, 4
    params = make_uq_params(K, d, 3, 2, 1.0)
    cfg = ChannelConfig(K, noise_var=100.0)
    out = uq_ota_round(np.zeros((K, d)), params, cfg, np.random.default_rng(0))
    assert not out.decode_ok
    assert np.all(np.isfinite(out.estimate))


def test_uq_shape_checks():
    params = make_uq_params(2, 4, 3, 2, 1.0)
    with pytest.raises(DimensionMismatch):
        uq_ota_round(np.zeros((2, 3)), params, ChannelConfig(2), np.random.default_rng(0))
    with pytest.raises(DimensionMismatch):
        uq_ota_round(np.zeros((2, 4)), params, ChannelConfig(3), np.random.default_rng(0))


# --- WZ-OTA -----------------------------------------------------------------

def test_wz_zero_correction_on_identical_grid_gradients():
    K, d, B = 4, 8, 1.0
    params = make_wz_params(K, d, 2, 2, M=1.0, I=5, B=B)
    half = K // 2
    rng = np.random.default_rng(3)
    # g/half on the stage-1 grid of 7 levels
    j = rng.integers(0, 7, size=d)
    g = half * (-B / half + j * 2 * B / (half * 6))
    grads = np.tile(g, (K, 1))
    out = wz_ota_round(grads, params, ChannelConfig(K, noise_var=NOISELESS), rng=rng)
    side = out.info["side"]
    np.testing.assert_allclose(side, 2 * g / K, atol=1e-12)
    np.testing.assert_allclose(out.estimate, (K / 2) * side, atol=1e-12)
    np.testing.assert_allclose(out.estimate, g, atol=1e-12)


def test_wz_stage2_reproduces_direct_counts():
    # noiseless: the decoded lambda is exactly the sum of client DAQ counts
    K, d = 6, 5
    params = make_wz_params(K, d, 1, 2, M=0.4, I=3, B=1.0)
    cfg = ChannelConfig(K, noise_var=NOISELESS)
    rng = np.random.default_rng(8)
    rotation = make_rotation(d, 11)
    grads = rng.uniform(-0.3, 0.3, size=(K // 2, d))
    side = rng.uniform(-0.1, 0.1, size=d)
    ref = wz_refine(grads, side, params, cfg, rotation, 1234, rng)
    daq = DaqParams(0.4, 3, 1234)
    ids = range(K // 2, K)
    rotated = rotate(rotation, 2 * grads / K)
    lam = sum(daq_encode(rotated[i], daq, k) for i, k in enumerate(ids))
    omega = daq_reference_counts(rotate(rotation, side), daq, ids)
    expected = daq_reconstruct(lam, omega, 0.4, 3, side, K, rotation)
    assert ref.decode_ok and ref.uses == math.ceil(rotation.d_pad / 2)
    np.testing.assert_array_equal(ref.estimate, expected)


def test_wz_side_information_scale():
    K, d, B = 4, 6, 1.0
    params = make_wz_params(K, d, 1, 1, M=1.0, I=2, B=B)
    rng = np.random.default_rng(0)
    j = rng.integers(0, 7, size=(2, d))
    g = 2 * (-B / 2 + j * 2 * B / 12)
    side, ok, uses = wz_side_information(g, params, ChannelConfig(K, noise_var=NOISELESS), rng)
    assert ok and uses == d
    np.testing.assert_allclose(side * (K / 2), g.mean(axis=0), atol=1e-12)


def test_wz_noiseless_unbiased():
    K, d, B = 4, 8, 0.5
    params = select_params_wz(K, d, 1e5, d, B, c2=8.0)
    cfg = ChannelConfig(K, noise_var=NOISELESS)
    rng = np.random.default_rng(21)
    g = rng.uniform(-1, 1, size=(K, d))
    g *= B / np.linalg.norm(g, axis=1, keepdims=True)
    target = (2 / K) * g[K // 2:].sum(axis=0)
    est = np.array([wz_ota_round(g, params, cfg, rng=rng).estimate for _ in range(5_000)])
    se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
    assert np.all(np.abs(est.mean(axis=0) - target) < 4 * se)


def test_wz_mse_below_daq_regime_ceiling():
    # every client holds mu + small noise; the ceiling is the DAQ bound
    # (2M/I) sqrt(d) sum_k E||R g~_k - R S|| evaluated on the same rounds
    K, d, B = 64, 16, 1.0
    params = select_params_wz(K, d, 1e5, d, B, c2=4.0)
    cfg = ChannelConfig(K, noise_var=NOISELESS)
    rng = np.random.default_rng(4)
    mu = rng.uniform(-1, 1, size=d)
    mu *= 0.8 * B / np.linalg.norm(mu)
    oracle = make_mean_estimation_oracle(mu, 0.02, B=B)
    sq, dist = [], []
    for _ in range(2_000):
        g = oracle.sample(np.zeros(d), rng, K)
        out = wz_ota_round(g, params, cfg, rng=rng)
        g_tilde = 2 * g[K // 2:] / K
        sq.append(np.sum((out.estimate - g_tilde.sum(axis=0)) ** 2))
        dist.append(np.linalg.norm(g_tilde - out.info["side"], axis=1).sum())
    ceiling = (2 * params.M / params.I) * math.sqrt(d) * np.mean(dist)
    assert np.mean(sq) <= 1.05 * ceiling


def test_wz_ell_used():
    params = select_params_wz(6, 5, 1e4, 5, 1.0)
    out = wz_ota_round(np.zeros((6, 5)), params, ChannelConfig.from_snr(6, 1e4), rng=np.random.default_rng(0))
    assert out.ell_used == params.ell


# --- analog -----------------------------------------------------------------

def test_analog_noiseless_exact():
    rng = np.random.default_rng(0)
    g = rng.uniform(-0.2, 0.2, size=(3, 5))
    out = analog_round(g, 1.0, ChannelConfig(3, noise_var=NOISELESS))
    np.testing.assert_allclose(out.estimate, g.mean(axis=0), rtol=1e-14, atol=1e-15)
    assert out.ell_used == 5


def test_analog_power_boundary():
    # K = 1, g = B e1 -> codeword squared norm equals dP exactly; no violation
    d, B = 6, 3.0
    g = np.zeros((1, d))
    g[0, 0] = B
    out = analog_round(g, B, ChannelConfig(1, power=2.0, noise_var=NOISELESS))
    np.testing.assert_allclose(out.estimate, g[0])


def test_analog_variance_moderate():
    K, d, B, snr = 4, 8, 2.0, 50.0
    cfg = ChannelConfig.from_snr(K, snr)
    rng = np.random.default_rng(1)
    g = np.full((K, d), 0.1)
    err = np.array([np.sum((analog_round(g, B, cfg, rng).estimate - 0.1) ** 2) for _ in range(20_000)])
    assert err.mean() == pytest.approx(B**2 / (K * snr), rel=0.05)


# --- dispatch and alpha/beta ------------------------------------------------

def test_run_round_dispatch():
    cfg = ChannelConfig(2, noise_var=NOISELESS)
    rng = np.random.default_rng(0)
    g = np.zeros((2, 4))
    for params in (make_uq_params(2, 4, 3, 1, 1.0), make_wz_params(2, 4, 1, 1, 1.0, 2, 1.0),
                   make_analog_params(2, 4, 1.0)):
        out = run_round(params, g, cfg, rng)
        assert isinstance(out, RoundEstimate) and out.ell_used == params.ell
    with pytest.raises(InvalidConfig):
        run_round(SchemeParams("nope", 2, 4, 1.0, 4), g, cfg, rng)


def test_alpha_beta_zero_for_exact_analog():
    oracle = make_mean_estimation_oracle(np.array([0.2, -0.1, 0.4]), 0.0)
    cfg = ChannelConfig(3, noise_var=NOISELESS)
    fn = lambda grads, rng: analog_round(grads, oracle.B, cfg, rng)
    alpha, beta = estimate_alpha_beta(fn, oracle, np.zeros(3), 1000, rng=0, num_clients=3)
    assert alpha == pytest.approx(0.0, abs=1e-14) and beta == pytest.approx(0.0, abs=1e-14)


def test_alpha_beta_rejects_zero_trials():
    with pytest.raises(ValueError):
        estimate_alpha_beta(lambda g, r: g.mean(axis=0), None, np.zeros(1), 0, num_clients=1)
