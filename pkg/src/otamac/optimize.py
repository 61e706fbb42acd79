"""Projected SGD driven by over-the-air gradient estimates, plus gradient oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BudgetExceeded
from .schemes import RoundEstimate, estimate_alpha_beta


@dataclass(frozen=True)
class Domain:
    """Euclidean ball (scalar radius) or axis-aligned box (per-coordinate half-widths)."""

    kind: str
    center: np.ndarray
    radius: object

    def __post_init__(self):
        if self.kind not in ("ball", "box"):
            raise ValueError("kind must be 'ball' or 'box'")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if np.any(np.asarray(self.radius) <= 0):
            raise ValueError("radius must be positive")

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", center, float(radius))

    @classmethod
    def box(cls, center, half_width):
        center = np.asarray(center, dtype=np.float64)
        return cls("box", center, np.broadcast_to(np.asarray(half_width, float), center.shape).copy())

    @property
    def dim(self):
        return self.center.shape[0]

    @property
    def diameter(self):
        if self.kind == "ball":
            return 2.0 * self.radius
        return 2.0 * float(np.linalg.norm(self.radius))


def project(domain, y):
    """Closest point of ``domain`` to ``y``."""
    y = np.asarray(y, dtype=np.float64)
    offset = y - domain.center
    if domain.kind == "box":
        return domain.center + np.clip(offset, -domain.radius, domain.radius)
    norm = np.linalg.norm(offset)
    if norm <= domain.radius:
        return y.copy()
    return domain.center + offset * (domain.radius / norm)


@dataclass
class GradientOracle:
    """Stochastic first-order oracle ``grad(x) + unif(-h, h)^d``, clipped to norm ``B``.

    ``sigma`` is the deviation bound sqrt(d h^2 / 3). Clipping events are
    counted in ``n_clipped``; they only occur when the raw draw exceeds B.
    """

    d: int
    sigma: float
    B: float
    kind: str
    grad_fn: object
    value_fn: object
    noise_halfwidth: float = 0.0
    minimizer: np.ndarray | None = None
    n_clipped: int = 0
    n_draws: int = 0

    def grad(self, x):
        return np.asarray(self.grad_fn(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def value(self, x):
        return float(self.value_fn(np.asarray(x, dtype=np.float64)))

    def sample(self, x, rng, size=None):
        """Draw ``size`` independent estimates at ``x`` (shape (size, d), or (d,) if None)."""
        shape = (self.d,) if size is None else (size, self.d)
        g = np.broadcast_to(self.grad(x), shape).astype(np.float64)
        if self.noise_halfwidth > 0:
            g = g + rng.uniform(-self.noise_halfwidth, self.noise_halfwidth, size=shape)
        norms = np.linalg.norm(np.atleast_2d(g), axis=1)
        over = norms > self.B
        self.n_draws += norms.size
        if np.any(over):
            self.n_clipped += int(over.sum())
            g = np.atleast_2d(g)
            g[over] *= (self.B / norms[over])[:, None]
            if size is None:
                g = g[0]
        return g


def make_mean_estimation_oracle(mu, sigma_prime, B=None, rng=None):
    """Constant-gradient oracle ``mu + unif(-sigma', sigma')^d`` (f(x) = <mu, x>).

    ``B`` defaults to the almost-sure bound ||mu|| + sqrt(d) sigma', so no
    clipping happens. ``rng`` is accepted for signature compatibility;
    randomness is supplied per call to :meth:`GradientOracle.sample`.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if sigma_prime < 0:
        raise ValueError("sigma_prime must be non-negative")
    d = mu.shape[0]
    if B is None:
        B = float(np.linalg.norm(mu)) + math.sqrt(d) * sigma_prime
    return GradientOracle(
        d, sigma_prime * math.sqrt(d / 3.0), float(B), "mean-estimation",
        grad_fn=lambda x: mu, value_fn=lambda x: float(mu @ x), noise_halfwidth=sigma_prime)


def make_quadratic_oracle(x_star, L=1.0, noise_halfwidth=0.0, B=math.inf):
    """Oracle for f(x) = (L/2)||x - x*||^2 with uniform gradient noise."""
    x_star = np.asarray(x_star, dtype=np.float64)
    d = x_star.shape[0]
    kind = "quadratic" if noise_halfwidth > 0 else "exact"
    return GradientOracle(
        d, noise_halfwidth * math.sqrt(d / 3.0), float(B), kind,
        grad_fn=lambda x: L * (x - x_star),
        value_fn=lambda x: 0.5 * L * float(np.sum((x - x_star) ** 2)),
        noise_halfwidth=noise_halfwidth, minimizer=x_star)


def learning_rate_lemma1(L, D, alpha, T):
    """Step size min(1/L, D / (alpha sqrt(2T)))."""
    if alpha <= 0:
        return 1.0 / L
    return min(1.0 / L, D / (alpha * math.sqrt(2.0 * T)))


@dataclass
class PsgdConfig:
    T: int
    L: float = 1.0
    eta_rule: str = "lemma1"
    alpha_for_rate: float | None = None
    eta: float | None = None
    budget: int | None = None
    pilot_rounds: int = 200

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.eta_rule not in ("lemma1", "fixed"):
            raise ValueError("eta_rule must be 'lemma1' or 'fixed'")
        if self.eta_rule == "fixed" and not (self.eta and self.eta > 0):
            raise ValueError("fixed eta_rule needs a positive eta")


@dataclass
class PsgdResult:
    x_bar: np.ndarray
    trace: np.ndarray
    eta: float
    ell: int
    channel_uses: int
    decode_failures: int = 0
    alpha_hat: float | None = None
    extra: dict = field(default_factory=dict)

    def running_averages(self):
        """x_bar_t for t = 1..T (average of the first t post-update iterates)."""
        steps = self.trace[1:]
        return np.cumsum(steps, axis=0) / np.arange(1, len(steps) + 1)[:, None]


def psgd_run(scheme, oracle, domain, cfg, x0=None, rng=None):
    """Projected SGD: x_{t+1} = Proj(x_t - eta * psi(Y_t)), output the average of x_1..x_T.

    ``scheme`` is a fitted estimator (its ``aggregate`` gives psi) whose
    number of clients fixes how many oracle draws feed each round.
    """
    rng = np.random.default_rng(rng)
    ell = scheme.ell_
    if cfg.budget is not None and cfg.T * ell > cfg.budget:
        raise BudgetExceeded(f"T*ell = {cfg.T * ell} exceeds budget N = {cfg.budget}")
    x = project(domain, domain.center if x0 is None else x0)
    alpha = None
    if cfg.eta_rule == "fixed":
        eta = cfg.eta
    else:
        alpha = cfg.alpha_for_rate
        if alpha is None:
            alpha, _ = estimate_alpha_beta(scheme, oracle, x, cfg.pilot_rounds, rng)
        eta = learning_rate_lemma1(cfg.L, domain.diameter, alpha, cfg.T)
    K = scheme.n_clients_
    trace = np.empty((cfg.T + 1, domain.dim))
    trace[0] = x
    failures = 0
    for t in range(cfg.T):
        out = scheme.aggregate(oracle.sample(x, rng, K), rng)
        if isinstance(out, RoundEstimate) and not out.decode_ok:
            failures += 1
        x = project(domain, x - eta * out.estimate)
        trace[t + 1] = x
    return PsgdResult(trace[1:].mean(axis=0), trace, eta, ell, cfg.T * ell, failures, alpha)
