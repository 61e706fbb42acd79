"""Experiment orchestration: mean-estimation sweeps, PSGD convergence runs, result files."""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimators import make_scheme
from .exceptions import InvalidConfig
from .optimize import Domain, PsgdConfig, make_mean_estimation_oracle, make_quadratic_oracle, psgd_run

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCHEMES = ("uq", "wz", "analog")
MODES = ("mean-estimation", "psgd")
DEFAULT_B = tuple(2.0**i for i in range(1, 14))


@dataclass
class ExperimentConfig:
    mode: str = "mean-estimation"
    scheme: str = "uq"
    K: int = 500
    d: int = 32
    snr_db: float = 50.0
    B: tuple = DEFAULT_B
    sigma_prime: float = 0.05196
    mu: object = "seeded"
    runs: int = 20
    master_seed: int = 0
    c2: float = 1.0
    N: int | None = None
    output: str | None = None
    format: str = "csv"
    power: float = 1.0
    noise_var: float | None = None
    workers: int = 1
    # psgd mode
    T: int = 256
    L: float = 1.0
    radius: float = 1.0
    eta_rule: str = "lemma1"

    def __post_init__(self):
        if isinstance(self.B, (int, float)):
            self.B = (float(self.B),)
        self.B = tuple(float(b) for b in self.B)
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}")
        if self.scheme not in SCHEMES:
            raise InvalidConfig(f"scheme must be one of {SCHEMES}")
        if self.runs < 1:
            raise InvalidConfig("runs must be >= 1")
        if self.K < 1 or self.d < 1:
            raise InvalidConfig("K and d must be positive")
        if self.scheme == "wz" and self.K % 2:
            raise InvalidConfig("wz needs an even number of clients")
        if not self.B or any(b <= 0 for b in self.B):
            raise InvalidConfig("B values must be positive")
        if self.sigma_prime < 0:
            raise InvalidConfig("sigma_prime must be non-negative")
        if self.format not in ("csv", "dat"):
            raise InvalidConfig("format must be 'csv' or 'dat'")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")

    @property
    def snr(self):
        return 10.0 ** (self.snr_db / 10.0)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class ResultRow:
    scheme: str
    K: int
    d: int
    snr_db: float
    B: float
    sigma: float
    runs: int
    rmse: float
    ell: int
    metric: float
    decode_fail_rate: float


@dataclass
class PsgdRow:
    t: int
    gap: float


def resolve_mu(cfg):
    if isinstance(cfg.mu, str):
        if cfg.mu != "seeded":
            raise InvalidConfig("mu must be 'seeded' or a list of d numbers")
        rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0x6D75]))
        return rng.uniform(-1.0, 1.0, size=cfg.d)
    mu = np.asarray(cfg.mu, dtype=np.float64)
    if mu.shape != (cfg.d,):
        raise InvalidConfig(f"mu must have length d={cfg.d}")
    return mu


def _build_scheme(cfg, B, K=None):
    K = cfg.K if K is None else K
    kwargs = dict(snr_db=cfg.snr_db, bound=B, power=cfg.power, noise_var=cfg.noise_var)
    if cfg.scheme != "analog":
        kwargs["budget"] = cfg.N
    if cfg.scheme == "wz":
        kwargs["c2"] = cfg.c2
    return make_scheme(cfg.scheme, **kwargs).fit(np.zeros((K, cfg.d)))


def _map(fn, items, workers):
    if workers == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class SweepErrors:
    """Raw per-run squared errors of a mean-estimation sweep, shape (len(B), runs)."""

    sq_errors: np.ndarray
    decode_fail: np.ndarray
    ell: list
    sigma: float
    extra: dict = field(default_factory=dict)

    def rmse(self):
        return np.sqrt(self.sq_errors.mean(axis=1))

    def metric(self):
        return self.rmse() * np.sqrt(self.ell)

    def metric_se(self):
        """Delta-method standard error of rmse * sqrt(ell)."""
        runs = self.sq_errors.shape[1]
        se_mse = self.sq_errors.std(axis=1, ddof=1) / math.sqrt(runs) if runs > 1 else 0.0
        rmse = self.rmse()
        with np.errstate(divide="ignore", invalid="ignore"):
            se = np.where(rmse > 0, se_mse / (2 * rmse), 0.0)
        return se * np.sqrt(self.ell)


def mean_estimation_errors(cfg):
    """One scheme round per run for every B in the sweep; errors are measured against mu."""
    mu = resolve_mu(cfg)
    n_b = len(cfg.B)
    sq = np.zeros((n_b, cfg.runs))
    fail = np.zeros((n_b, cfg.runs), dtype=bool)
    ells = []
    sigma = cfg.sigma_prime * math.sqrt(cfg.d / 3.0)
    for b_idx, B in enumerate(cfg.B):
        scheme = _build_scheme(cfg, B)
        ells.append(scheme.ell_)
        oracle = make_mean_estimation_oracle(mu, cfg.sigma_prime, B=B)
        origin = np.zeros(cfg.d)

        def one_run(run, b_idx=b_idx, scheme=scheme, oracle=oracle):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, b_idx, run]))
            grads = oracle.sample(origin, rng, cfg.K)
            out = scheme.aggregate(grads, rng)
            return float(np.sum((out.estimate - mu) ** 2)), not out.decode_ok

        for run, (err, failed) in enumerate(_map(one_run, range(cfg.runs), cfg.workers)):
            sq[b_idx, run] = err
            fail[b_idx, run] = failed
    return SweepErrors(sq, fail, ells, sigma)


def run_mean_estimation(cfg):
    if cfg.mode != "mean-estimation":
        raise InvalidConfig("config mode is not mean-estimation")
    sweep = mean_estimation_errors(cfg)
    rows = []
    for b_idx, B in enumerate(cfg.B):
        rmse = math.sqrt(float(sweep.sq_errors[b_idx].mean()))
        ell = int(sweep.ell[b_idx])
        rows.append(ResultRow(
            cfg.scheme, cfg.K, cfg.d, cfg.snr_db, B, sweep.sigma, cfg.runs, rmse, ell,
            rmse * math.sqrt(ell), float(sweep.decode_fail[b_idx].mean())))
    return rows


def psgd_gaps(cfg):
    """Optimality gaps f(x_bar_t) - f* for t = 1..T, one row per run.

    The objective is (L/2)||x - x*||^2 on a ball of radius ``cfg.radius``
    around the origin, x* seeded inside the half-radius ball; gradient
    noise is uniform with half-width ``sigma_prime``. Only the first B in
    the config is used.
    """
    rng0 = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0x7073]))
    direction = rng0.normal(size=cfg.d)
    x_star = 0.5 * cfg.radius * rng0.uniform() * direction / np.linalg.norm(direction)
    domain = Domain.ball(np.zeros(cfg.d), cfg.radius)
    B_needed = cfg.L * domain.diameter + math.sqrt(cfg.d) * cfg.sigma_prime
    B = max(cfg.B[0], B_needed) if cfg.B else B_needed
    oracle = make_quadratic_oracle(x_star, cfg.L, cfg.sigma_prime, B)
    scheme = _build_scheme(cfg, B)
    eta = 1.0 / cfg.L if cfg.eta_rule == "fixed" else None
    pcfg = PsgdConfig(cfg.T, cfg.L, cfg.eta_rule, eta=eta, budget=cfg.N)

    def one_run(run):
        res = psgd_run(scheme, oracle, domain, pcfg,
                       rng=np.random.SeedSequence([cfg.master_seed, 1, run]))
        return [oracle.value(x) for x in res.running_averages()]

    return np.array(_map(one_run, range(cfg.runs), 1))


def run_psgd_experiment(cfg):
    if cfg.mode != "psgd":
        raise InvalidConfig("config mode is not psgd")
    gaps = psgd_gaps(cfg).mean(axis=0)
    return [PsgdRow(t + 1, float(g)) for t, g in enumerate(gaps)]


def run_experiment(cfg):
    return run_mean_estimation(cfg) if cfg.mode == "mean-estimation" else run_psgd_experiment(cfg)


def _fmt(value):
    return repr(value) if isinstance(value, float) else str(value)


def format_results(rows, fmt="csv"):
    """Render rows as CSV (header + one line per row) or .dat (one metric/gap per line)."""
    if not rows:
        raise ValueError("no rows to write")
    if fmt not in ("csv", "dat"):
        raise ValueError("fmt must be 'csv' or 'dat'")
    names = [f.name for f in dataclasses.fields(rows[0])]
    if fmt == "csv":
        lines = [",".join(names)]
        lines += [",".join(_fmt(getattr(r, n)) for n in names) for r in rows]
    else:
        key = "metric" if "metric" in names else "gap"
        lines = [_fmt(float(getattr(r, key))) for r in rows]
    return "\n".join(lines) + "\n"


def write_results(rows, path, fmt="csv"):
    text = format_results(rows, fmt)
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc
    return path


def read_results(path):
    """Parse a CSV written by :func:`write_results` back into row objects."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    cls = ResultRow if header == [f.name for f in dataclasses.fields(ResultRow)] else PsgdRow
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    casts = {"int": int, "float": float, "str": str}
    rows = []
    for line in lines[1:]:
        values = dict(zip(header, line.split(",")))
        rows.append(cls(**{k: casts[types[k]](v) for k, v in values.items()}))
    return rows


def load_config(path, **overrides):
    """Read a flat TOML key = value file into an :class:`ExperimentConfig`.

    Keys must be ExperimentConfig field names; ``overrides`` that are not
    None replace file values.
    """
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfig(f"{path}: unknown keys {sorted(unknown)}")
    if any(isinstance(v, dict) for v in data.values()):
        raise InvalidConfig(f"{path}: tables are not supported; use flat keys")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from exc
