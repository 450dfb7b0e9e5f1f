"""Path simulation and extraction of equally spaced observations.

Two samplers are provided: a full-truncation Euler scheme for the general
coupled model, and an exact transition sampler for the decoupled (diagonal)
special case, where each coordinate is a scalar square-root diffusion with a
known noncentral chi-square transition law.  The exact sampler is the
discretization-free oracle the Euler scheme is tested against.

Seeding is deterministic and replicate-safe: replicate streams are derived
from (seed, replicate index) by a SplitMix64-style mixer, and each replicate
consumes only its own stream, so results are bit-identical whether replicates
run alone, batched, or sharded across processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

import numpy as np

from .mat2 import Vec2
from .model import ModelParams, transition_laplace

__all__ = [
    "SimConfig",
    "ObservationSeries",
    "LaplaceReport",
    "SimulationError",
    "ConfigError",
    "NotDiagonalError",
    "derive_seed",
    "simulate_path",
    "simulate_replicates",
    "simulate_exact_diagonal",
    "exact_diagonal_transition",
    "simulate_many",
    "terminal_states",
    "laplace_check",
]

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15

# Euler noise is drawn in segments of at most this many steps per replicate.
_NOISE_CHUNK = 8192


class SimulationError(ValueError):
    """Base class for simulation failures."""


class ConfigError(SimulationError):
    """Simulation configuration violates an invariant."""


class NotDiagonalError(SimulationError):
    """Exact sampler requires b12 = b21 = 0."""


def derive_seed(seed: int, index: int) -> int:
    """Derive the stream seed for one replicate: mix64(seed XOR (index+1)*golden).

    The mixer is the SplitMix64 finalizer; the golden-ratio multiplier spreads
    consecutive indices across the 64-bit space before mixing.
    """
    z = (seed ^ ((index + 1) * _GOLDEN)) & _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


@dataclass(frozen=True)
class SimConfig:
    """Declarative description of one simulated observation series.

    The observation spacing ``delta`` must be an integer multiple of
    ``euler_dt``; ``burn_in`` is in time units and is discarded before the
    first stored observation.
    """

    params: ModelParams
    euler_dt: float
    delta: float
    n_obs: int
    burn_in: float
    x0: Vec2
    seed: int

    def __post_init__(self):
        if self.euler_dt <= 0.0:
            raise ConfigError(f"euler_dt must be > 0, got {self.euler_dt}")
        if self.delta <= 0.0:
            raise ConfigError(f"delta must be > 0, got {self.delta}")
        stride = round(self.delta / self.euler_dt)
        if stride < 1 or abs(self.delta - stride * self.euler_dt) > 1e-9 * self.delta:
            raise ConfigError(
                f"delta={self.delta} is not an integer multiple of "
                f"euler_dt={self.euler_dt}"
            )
        if self.n_obs < 1:
            raise ConfigError(f"n_obs must be >= 1, got {self.n_obs}")
        if self.burn_in < 0.0:
            raise ConfigError(f"burn_in must be >= 0, got {self.burn_in}")
        if not self.x0.is_nonnegative():
            raise ConfigError(f"x0 must be componentwise >= 0, got {self.x0}")
        if not (0 <= self.seed <= _MASK64):
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def obs_stride(self) -> int:
        return round(self.delta / self.euler_dt)

    @property
    def burn_steps(self) -> int:
        return round(self.burn_in / self.euler_dt)


@dataclass(frozen=True)
class ObservationSeries:
    """Equally spaced observations X_0, ..., X_n at spacing delta.

    ``values`` has shape (n+1, 2) and is componentwise nonnegative; ``meta``
    records the generating SimConfig, or the marker string "external data".
    """

    delta: float
    values: np.ndarray
    meta: Union[SimConfig, str]

    def __post_init__(self):
        values = np.array(self.values, dtype=float)  # own copy, frozen below
        if values.ndim != 2 or values.shape[1] != 2 or values.shape[0] < 2:
            raise ConfigError(f"values must have shape (n+1, 2), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ConfigError("observations must be finite")
        if values.min() < 0.0:
            raise ConfigError("observations must be componentwise >= 0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.delta <= 0.0:
            raise ConfigError(f"delta must be > 0, got {self.delta}")

    @property
    def n(self) -> int:
        """Number of transitions (one less than the number of observations)."""
        return self.values.shape[0] - 1

    def to_csv(self, path: Union[str, Path]) -> None:
        """Write "t,x1,x2" rows; 17 significant digits round-trip bit-exactly."""
        lines = ["t,x1,x2"]
        for k in range(self.values.shape[0]):
            lines.append(
                f"{k * self.delta:.17g},{self.values[k, 0]:.17g},{self.values[k, 1]:.17g}"
            )
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def from_csv(path: Union[str, Path]) -> "ObservationSeries":
        text = Path(path).read_text().strip().splitlines()
        if not text or text[0].strip() != "t,x1,x2":
            raise ConfigError(f"{path}: expected header 't,x1,x2'")
        rows = [line.split(",") for line in text[1:] if line.strip()]
        data = np.array([[float(c) for c in row] for row in rows])
        if data.shape[0] < 2:
            raise ConfigError(f"{path}: need at least two observations")
        delta = data[1, 0] - data[0, 0]
        if delta <= 0.0:
            raise ConfigError(f"{path}: times must be increasing multiples of delta")
        return ObservationSeries(delta=delta, values=data[:, 1:], meta="external data")


def _euler_coefficients(params: ModelParams, dt: float):
    """Premultiplied step coefficients shared by every Euler code path."""
    a_dt = np.array([params.a1, params.a2]) * dt
    diag_dt = np.array([params.b11, params.b22]) * dt
    cross_dt = np.array([params.b12, params.b21]) * dt
    sig_sqdt = np.array([params.sigma1, params.sigma2]) * math.sqrt(dt)
    return a_dt, diag_dt, cross_dt, sig_sqdt


def _euler_steps(state: np.ndarray, noise: np.ndarray, coeffs) -> np.ndarray:
    """Full-truncation Euler steps over one noise block of shape (m, S, 2).

    One step:  X <- X + (A - B X^+) dt + Sigma sqrt(X^+) sqrt(dt) xi,
    with X^+ = max(X, 0) in both drift and diffusion.  Only elementwise
    operations are used (the B X^+ product is expanded by coordinate) so each
    path is bit-identical no matter how the batch is laid out.
    """
    a_dt, diag_dt, cross_dt, sig_sqdt = coeffs
    for j in range(noise.shape[1]):
        xp = np.maximum(state, 0.0)
        state = (
            state
            + (a_dt + xp[:, ::-1] * cross_dt - xp * diag_dt)
            + sig_sqdt * np.sqrt(xp) * noise[:, j, :]
        )
    return state


def _euler_batch(
    params: ModelParams,
    x0: Vec2,
    dt: float,
    burn_steps: int,
    n_obs: int,
    stride: int,
    rngs: list[np.random.Generator],
) -> np.ndarray:
    """Advance m coupled Euler paths; returns observations of shape (m, n_obs+1, 2).

    Stored observations are the post-burn-in states at multiples of the
    stride, floored at zero.  Replicate i consumes only rngs[i], drawn in
    fixed-size segments, so its path does not depend on the batch composition.
    """
    m = len(rngs)
    coeffs = _euler_coefficients(params, dt)
    state = np.tile(x0.to_array(), (m, 1))
    out = np.empty((m, n_obs + 1, 2))
    noise = np.empty((m, _NOISE_CHUNK, 2))

    total_steps = burn_steps + n_obs * stride
    step = 0
    next_obs = burn_steps
    obs_idx = 0
    if burn_steps == 0:
        out[:, 0, :] = np.maximum(state, 0.0)
        next_obs += stride
        obs_idx = 1
    while step < total_steps:
        chunk = min(_NOISE_CHUNK, total_steps - step)
        for i in range(m):
            rngs[i].standard_normal(out=noise[i, :chunk, :])
        # observation boundaries split the chunk so recording stays exact
        done = 0
        while done < chunk:
            upto = min(chunk, done + (next_obs - step))
            state = _euler_steps(state, noise[:, done:upto, :], coeffs)
            step += upto - done
            done = upto
            if step == next_obs:
                out[:, obs_idx, :] = np.maximum(state, 0.0)
                next_obs += stride
                obs_idx += 1
    return out


def simulate_path(cfg: SimConfig) -> ObservationSeries:
    """Simulate one series with the full-truncation Euler scheme.

    Deterministic: the same config (including seed) yields a bit-identical
    series.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    paths = _euler_batch(
        cfg.params, cfg.x0, cfg.euler_dt, cfg.burn_steps, cfg.n_obs,
        cfg.obs_stride, [rng],
    )
    return ObservationSeries(delta=cfg.delta, values=paths[0], meta=cfg)


def simulate_replicates(
    cfg: SimConfig, n_replicates: int, first_index: int = 0
) -> list[ObservationSeries]:
    """Simulate independent Euler replicates, batched for speed.

    Replicate i runs under seed derive_seed(cfg.seed, first_index + i) and is
    bit-identical to simulate_path under that seed, so shards of a replicate
    range can run on different workers without changing any series.
    """
    if n_replicates < 1:
        raise ConfigError(f"n_replicates must be >= 1, got {n_replicates}")
    seeds = [derive_seed(cfg.seed, first_index + i) for i in range(n_replicates)]
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in seeds]
    paths = _euler_batch(
        cfg.params, cfg.x0, cfg.euler_dt, cfg.burn_steps, cfg.n_obs,
        cfg.obs_stride, rngs,
    )
    return [
        ObservationSeries(delta=cfg.delta, values=paths[i], meta=replace(cfg, seed=seeds[i]))
        for i in range(n_replicates)
    ]


def exact_diagonal_transition(
    params: ModelParams, x: np.ndarray, t: float, rng: np.random.Generator
) -> np.ndarray:
    """One exact transition of length t for the decoupled model, vectorized.

    Per coordinate the law is noncentral chi-square with df = 4a/sigma^2 and
    noncentrality 2c.x.e^{-bt}, scaled by 1/(2c) with
    c = 2b/(sigma^2 (1 - e^{-bt})); sampled as the Poisson(nonc/2) mixture of
    Gamma(df/2 + N, scale 2) variables, which is exact for any df > 0.
    """
    if not params.is_diagonal():
        raise NotDiagonalError(
            f"exact sampler needs b12 = b21 = 0, got b12={params.b12}, b21={params.b21}"
        )
    if t <= 0.0:
        raise SimulationError(f"transition length must be > 0, got {t}")
    x = np.asarray(x, dtype=float)
    a = np.array([params.a1, params.a2])
    b = np.array([params.b11, params.b22])
    s2 = np.array([params.sigma1**2, params.sigma2**2])
    ebt = np.exp(-b * t)
    c = 2.0 * b / (s2 * (1.0 - ebt))
    df = 4.0 * a / s2
    nonc = 2.0 * c * x * ebt
    mix = rng.poisson(nonc / 2.0)
    return rng.standard_gamma(df / 2.0 + mix) / c


def simulate_exact_diagonal(cfg: SimConfig) -> ObservationSeries:
    """Sample a series from the exact transition law of the decoupled model.

    Burn-in is a single exact transition of length cfg.burn_in (the sampler is
    exact at any horizon, so no grid is needed); observations then advance by
    exact transitions of length delta.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    state = cfg.x0.to_array().reshape(1, 2)
    if cfg.burn_in > 0.0:
        state = exact_diagonal_transition(cfg.params, state, cfg.burn_in, rng)
    values = np.empty((cfg.n_obs + 1, 2))
    values[0] = state[0]
    for k in range(1, cfg.n_obs + 1):
        state = exact_diagonal_transition(cfg.params, state, cfg.delta, rng)
        values[k] = state[0]
    return ObservationSeries(delta=cfg.delta, values=values, meta=cfg)


def simulate_many(
    cfg: SimConfig,
    n_replicates: int,
    sampler: str = "euler",
    first_index: int = 0,
) -> list[ObservationSeries]:
    """Independent replicates under derived seeds, with either sampler."""
    if sampler == "euler":
        return simulate_replicates(cfg, n_replicates, first_index)
    if sampler == "exact":
        return [
            simulate_exact_diagonal(
                replace(cfg, seed=derive_seed(cfg.seed, first_index + i))
            )
            for i in range(n_replicates)
        ]
    raise ConfigError(f"unknown sampler {sampler!r}")


@dataclass(frozen=True)
class LaplaceReport:
    """Formula-vs-simulation comparison of the transition Laplace transform."""

    lam: Vec2
    t: float
    n_paths: int
    method: str
    formula: float
    empirical: float
    mc_se: float
    z_score: float


def terminal_states(
    cfg: SimConfig, t: float, n_paths: int, method: str = "euler"
) -> np.ndarray:
    """States at time t of n_paths independent paths from cfg.x0, shape (m, 2).

    Euler paths share one stream seeded by cfg.seed (the cloud is a single
    experiment); the exact method performs one diagonal transition.
    """
    if n_paths < 2:
        raise SimulationError(f"n_paths must be >= 2, got {n_paths}")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    if method == "euler":
        n_steps = round(t / cfg.euler_dt)
        if n_steps < 1 or abs(t - n_steps * cfg.euler_dt) > 1e-9 * t:
            raise ConfigError(
                f"t={t} is not an integer multiple of euler_dt={cfg.euler_dt}"
            )
        coeffs = _euler_coefficients(cfg.params, cfg.euler_dt)
        state = np.tile(cfg.x0.to_array(), (n_paths, 1))
        for _ in range(n_steps):
            state = _euler_steps(state, rng.standard_normal((n_paths, 1, 2)), coeffs)
        return np.maximum(state, 0.0)
    if method == "exact":
        x0 = np.tile(cfg.x0.to_array(), (n_paths, 1))
        return exact_diagonal_transition(cfg.params, x0, t, rng)
    raise ConfigError(f"unknown method {method!r}")


def laplace_check(
    cfg: SimConfig,
    lam: Vec2,
    t: float,
    n_paths: int,
    method: str = "euler",
    states: np.ndarray | None = None,
) -> LaplaceReport:
    """Compare the Riccati formula against a Monte Carlo cloud from cfg.x0.

    Simulates n_paths independent paths to time t (Euler at cfg.euler_dt, or
    one exact transition for the diagonal model), and reports both values, the
    Monte Carlo standard error and the z-score of the difference.  A
    precomputed cloud from :func:`terminal_states` can be passed to evaluate
    several lambda on the same paths.
    """
    if not lam.is_nonnegative():
        raise SimulationError(f"lam must be componentwise >= 0, got {lam}")
    if states is None:
        states = terminal_states(cfg, t, n_paths, method)
    samples = np.exp(-(states @ lam.to_array()))
    empirical = float(samples.mean())
    mc_se = float(samples.std(ddof=1)) / math.sqrt(len(samples))
    formula = transition_laplace(cfg.params, cfg.x0, lam, t)
    if mc_se == 0.0:
        z = 0.0 if empirical == formula else math.inf
    else:
        z = (empirical - formula) / mc_se
    return LaplaceReport(
        lam=lam, t=t, n_paths=n_paths, method=method,
        formula=formula, empirical=empirical, mc_se=mc_se, z_score=z,
    )
