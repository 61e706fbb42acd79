"""scikit-learn style wrappers around the aggregation schemes.

``fit`` takes a K x d matrix of client gradients (only its shape is used)
and selects the scheme parameters; ``aggregate`` runs one round on a new
K x d matrix and returns a :class:`~otamac.schemes.RoundEstimate`;
``predict`` returns just the estimate vector. Hyper-parameters follow the
``get_params``/``set_params`` protocol so the objects can be cloned and
grid-searched.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .channel import ChannelConfig
from .exceptions import DimensionMismatch
from .schemes import (
    analog_round,
    make_analog_params,
    make_uq_params,
    make_wz_params,
    select_params_uq,
    select_params_wz,
    uq_ota_round,
    wz_ota_round,
)


class _OTAAggregator(BaseEstimator):

    def _channel(self, K):
        if self.noise_var is not None:
            return ChannelConfig(K, self.power, float(self.noise_var))
        return ChannelConfig.from_snr_db(K, self.snr_db, self.power)

    def _check_grads(self, X):
        return check_array(X, dtype=np.float64, ensure_min_samples=1)

    def fit(self, X, y=None):
        X = self._check_grads(X)
        K, d = X.shape
        self.n_clients_ = K
        self.n_features_in_ = d
        self.params_ = self._select_params(K, d)
        self.channel_ = self._channel(K)
        self.rng_ = np.random.default_rng(self.random_state)
        return self

    @property
    def ell_(self):
        check_is_fitted(self, "params_")
        return self.params_.ell

    def aggregate(self, X, rng=None):
        check_is_fitted(self, "params_")
        X = self._check_grads(X)
        if X.shape != (self.n_clients_, self.n_features_in_):
            raise DimensionMismatch(
                f"fitted for {(self.n_clients_, self.n_features_in_)} gradients, got {X.shape}")
        return self._round(X, self.rng_ if rng is None else rng)

    def fit_aggregate(self, X, rng=None):
        return self.fit(X).aggregate(X, rng)

    def predict(self, X, rng=None):
        return self.aggregate(X, rng).estimate


class UQOTA(_OTAAggregator):
    """Uniform-quantization digital scheme.

    Parameters
    ----------
    snr_db : float
        Operating SNR = K P / noise_var in dB; drives parameter selection and,
        unless ``noise_var`` is set, the simulated channel noise.
    bound : float
        Almost-sure norm bound B on client gradients.
    power : float
        Per-client power P.
    budget : int, optional
        Channel-use budget N used in parameter selection; defaults to d.
    levels, block_size : int, optional
        Override the selected v and p.
    noise_var : float, optional
        Channel noise variance to simulate instead of the one implied by ``snr_db``.
    random_state : int or None
    """

    def __init__(self, snr_db=50.0, bound=1.0, power=1.0, budget=None, levels=None,
                 block_size=None, noise_var=None, random_state=None):
        self.snr_db = snr_db
        self.bound = bound
        self.power = power
        self.budget = budget
        self.levels = levels
        self.block_size = block_size
        self.noise_var = noise_var
        self.random_state = random_state

    def _select_params(self, K, d):
        N = self.budget or d
        chosen = select_params_uq(K, d, 10.0 ** (self.snr_db / 10.0), N, self.bound)
        if self.levels is None and self.block_size is None:
            return chosen
        v = self.levels or chosen.v
        p = self.block_size or chosen.p
        return make_uq_params(K, d, v, p, self.bound, N)

    def _round(self, X, rng):
        return uq_ota_round(X, self.params_, self.channel_, rng)


class WZOTA(_OTAAggregator):
    """Wyner-Ziv digital scheme (side information + boosted DAQ).

    The estimate targets the average gradient of the second half of the
    clients. ``c2`` scales the DAQ range M and sample count I;
    ``daq_range``/``daq_samples`` and ``block_sizes`` override the selected
    values.
    """

    def __init__(self, snr_db=50.0, bound=1.0, power=1.0, budget=None, c2=1.0,
                 daq_range=None, daq_samples=None, block_sizes=None, noise_var=None,
                 random_state=None):
        self.snr_db = snr_db
        self.bound = bound
        self.power = power
        self.budget = budget
        self.c2 = c2
        self.daq_range = daq_range
        self.daq_samples = daq_samples
        self.block_sizes = block_sizes
        self.noise_var = noise_var
        self.random_state = random_state

    def _select_params(self, K, d):
        N = self.budget or d
        chosen = select_params_wz(K, d, 10.0 ** (self.snr_db / 10.0), N, self.bound, self.c2)
        if self.daq_range is None and self.daq_samples is None and self.block_sizes is None:
            return chosen
        p, p_prime = self.block_sizes or (chosen.p, chosen.p_prime)
        return make_wz_params(
            K, d, p, p_prime, self.daq_range or chosen.M, self.daq_samples or chosen.I,
            self.bound, c2=self.c2, N=N)

    def _round(self, X, rng):
        return wz_ota_round(X, self.params_, self.channel_, rng=rng)


class AnalogOTA(_OTAAggregator):
    """Scaled linear transmission over d channel uses."""

    def __init__(self, snr_db=50.0, bound=1.0, power=1.0, noise_var=None, random_state=None):
        self.snr_db = snr_db
        self.bound = bound
        self.power = power
        self.noise_var = noise_var
        self.random_state = random_state

    def _select_params(self, K, d):
        return make_analog_params(K, d, self.bound)

    def _round(self, X, rng):
        return analog_round(X, self.bound, self.channel_, rng)


def make_scheme(name, **kwargs):
    """Estimator for ``name`` in {'uq', 'wz', 'analog'}."""
    classes = {"uq": UQOTA, "wz": WZOTA, "analog": AnalogOTA}
    try:
        return classes[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}") from None
