"""Deterministic synthetic multi-zone consumption.

Each zone is a base demand level times a daily double-peak / weekly profile
times a mix of shared latent demand factors, plus gaussian sensor noise:

    x_v(t) = base_v * regime(t) * profile_v(t) * sum_l w_vl f_l(t) + e_v(t)

The latent factors ``f_l`` are exponentiated AR(1) processes (smooth and
positive).  Zones that load on the same factors are correlated; the default
scenario is built so that zone 5 draws on the factors of zones 1, 3 and 4
but not zone 2.

With ``nonlinearity="regime_switch"`` the network moves between demand regimes
that differ in level and in the timing of the daily peaks.  In the
high-demand regime a cycling pump makes the inflow alternate above and below
demand every couple of steps; a linear model on lags 1 and 288 cannot follow
that, a model looking at the last few steps can.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from datetime import datetime

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidConfig
from .series import EPOCH, FlowPanel

SECONDS_PER_MONTH = 30 * 24 * 3600
NONLINEARITIES = ("none", "regime_switch")

# (level multiplier, profile shift in hours) per demand regime
REGIMES = ((1.0, 0.0), (1.35, -2.0), (0.7, 2.5))
REGIME_MEAN_HOURS = 20.0
# time constant of the exponential approach to a new regime, in steps
REGIME_RAMP_STEPS = 6.0
# the high-demand regime is fed by a cycling pump: inflow alternates above and
# below demand with this period (steps) and relative depth
PUMP_REGIME = 1
PUMP_PERIOD_STEPS = 4
PUMP_DEPTH = 0.3

LATENT_AR = 0.999
LATENT_LOG_STD = 0.15


def months_to_steps(months: float, step_seconds: int = 300) -> int:
    if not months > 0:
        raise InvalidConfig(f"months must be positive, got {months}")
    return int(round(months * SECONDS_PER_MONTH / step_seconds))


@dataclass(frozen=True)
class ScenarioConfig:
    n_zones: int = 5
    months: float = 3.0
    step_seconds: int = 300
    latent_weights: tuple = ()
    noise_sigma: tuple = ()
    base_scale: tuple = ()
    # per-zone shift of the daily profile, hours
    phase_hours: tuple = ()
    nonlinearity: str = "regime_switch"
    seed: int = 42
    zone_ids: tuple = ()
    start_time: datetime = EPOCH
    min_steps: int = 33

    def __post_init__(self):
        n = int(self.n_zones)
        if n < 1:
            raise InvalidConfig(f"n_zones must be >= 1, got {self.n_zones}")
        if int(self.step_seconds) <= 0:
            raise InvalidConfig(f"step_seconds must be positive, got {self.step_seconds}")
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= int(self.seed) < 2**64):
            raise InvalidConfig(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        steps = months_to_steps(self.months, self.step_seconds)
        if steps < self.min_steps:
            raise InvalidConfig(f"scenario has {steps} steps, needs at least {self.min_steps}")
        if self.nonlinearity not in NONLINEARITIES:
            raise InvalidConfig(f"nonlinearity must be one of {NONLINEARITIES}, got {self.nonlinearity!r}")

        weights = np.asarray(self.latent_weights if len(self.latent_weights) else np.eye(n), dtype=float)
        if weights.ndim != 2 or weights.shape[0] != n or weights.shape[1] < 1:
            raise InvalidConfig(f"latent_weights must be {n} x L, got shape {weights.shape}")
        if np.any(np.linalg.norm(weights, axis=1) <= 0):
            raise InvalidConfig("every latent_weights row needs a positive norm")
        noise = self._per_zone("noise_sigma", self.noise_sigma, n, 0.0)
        if np.any(noise < 0):
            raise InvalidConfig("noise_sigma must be non-negative")
        base = self._per_zone("base_scale", self.base_scale, n, 1.0)
        if np.any(base <= 0):
            raise InvalidConfig("base_scale must be positive")
        phase = self._per_zone("phase_hours", self.phase_hours, n, 0.0)
        zones = tuple(str(z) for z in self.zone_ids) or tuple(str(i + 1) for i in range(n))
        if len(zones) != n or len(set(zones)) != n:
            raise InvalidConfig(f"need {n} unique zone ids, got {zones}")

        object.__setattr__(self, "latent_weights", tuple(tuple(float(v) for v in r) for r in weights))
        object.__setattr__(self, "noise_sigma", tuple(float(v) for v in noise))
        object.__setattr__(self, "base_scale", tuple(float(v) for v in base))
        object.__setattr__(self, "phase_hours", tuple(float(v) for v in phase))
        object.__setattr__(self, "zone_ids", zones)
        object.__setattr__(self, "seed", int(self.seed))

    @staticmethod
    def _per_zone(name, value, n, default):
        arr = np.asarray(value if len(value) else [default] * n, dtype=float)
        if arr.size == 1 and n > 1:
            arr = np.repeat(arr, n)
        if arr.shape != (n,):
            raise InvalidConfig(f"{name} needs {n} entries, got {arr.size}")
        return arr

    @property
    def steps(self) -> int:
        return months_to_steps(self.months, self.step_seconds)

    @property
    def n_latent(self) -> int:
        return len(self.latent_weights[0])

    def replace(self, **changes) -> "ScenarioConfig":
        return ScenarioConfig(**{**asdict(self), **changes})


def default_scenario(**overrides) -> ScenarioConfig:
    """Frozen five-zone benchmark: zone 5 mixes the factors of zones 1, 3, 4."""
    cfg = dict(
        n_zones=5,
        months=3.0,
        latent_weights=(
            (1.0, 0.0, 0.0, 0.0),
            (0.0, 0.0, 0.0, 1.0),
            (0.0, 1.0, 0.0, 0.0),
            (0.0, 0.0, 1.0, 0.0),
            (0.4, 0.3, 0.3, 0.0),
        ),
        noise_sigma=(0.5, 0.5, 0.5, 0.5, 0.5),
        base_scale=(80.0, 35.0, 30.0, 50.0, 75.0),
        phase_hours=(0.0, 1.5, 0.0, 0.0, 0.0),
        nonlinearity="regime_switch",
        seed=42,
    )
    cfg.update(overrides)
    return ScenarioConfig(**cfg)


def daily_profile(hours: np.ndarray) -> np.ndarray:
    """Night trough with a morning and an evening peak; mean close to 1."""
    h = np.mod(hours, 24.0)

    def bump(center, width):
        d = np.minimum(np.abs(h - center), 24.0 - np.abs(h - center))
        return np.exp(-0.5 * (d / width) ** 2)

    return 0.3 + 1.5 * bump(7.5, 1.1) + 1.1 * bump(20.0, 1.4) + 0.35 * bump(13.0, 2.0)


def weekly_profile(step_hours: np.ndarray, shift_hours: np.ndarray) -> np.ndarray:
    """Daily profile with a later morning peak and 10% lower use at weekends."""
    day = np.floor(step_hours / 24.0).astype(np.int64)
    weekend = (day % 7) >= 5
    hours = step_hours - shift_hours - np.where(weekend, 1.5, 0.0)
    return daily_profile(hours) * np.where(weekend, 0.9, 1.0)


def _latent_factors(rng: np.random.Generator, n_latent: int, steps: int) -> np.ndarray:
    innov_std = LATENT_LOG_STD * math.sqrt(1.0 - LATENT_AR ** 2)
    eps = rng.standard_normal((n_latent, steps))
    u0 = rng.standard_normal(n_latent) * LATENT_LOG_STD
    u = lfilter([innov_std], [1.0, -LATENT_AR], eps, axis=1, zi=(LATENT_AR * u0)[:, None])[0]
    return np.exp(u)


def _regimes(rng: np.random.Generator, steps: int, step_seconds: int):
    """Regime level, peak shift and pump state shared by all zones.

    Level and shift approach each new regime exponentially; the pump state is
    +1/-1 square wave inside pump regimes and 0 elsewhere.
    """
    level = np.empty(steps)
    shift = np.empty(steps)
    pump = np.zeros(steps)
    mean_steps = REGIME_MEAN_HOURS * 3600.0 / step_seconds
    t = 0
    state = 0
    while t < steps:
        length = min(max(1, int(rng.exponential(mean_steps))), steps - t)
        level[t:t + length], shift[t:t + length] = REGIMES[state]
        if state == PUMP_REGIME:
            phase = rng.integers(PUMP_PERIOD_STEPS)
            k = np.arange(length) + phase
            pump[t:t + length] = np.where(k % PUMP_PERIOD_STEPS < PUMP_PERIOD_STEPS // 2, 1.0, -1.0)
        t += length
        state = (state + 1 + rng.integers(len(REGIMES) - 1)) % len(REGIMES)
    a = math.exp(-1.0 / REGIME_RAMP_STEPS)
    smooth = lambda x: lfilter([1.0 - a], [1.0, -a], x, zi=[a * x[0]])[0]
    return smooth(level), smooth(shift), pump[:steps]


def generate(config: ScenarioConfig) -> FlowPanel:
    n, steps = config.n_zones, config.steps
    rng = np.random.default_rng(config.seed)
    factors = _latent_factors(rng, config.n_latent, steps)
    if config.nonlinearity == "regime_switch":
        level, shift, pump = _regimes(rng, steps, config.step_seconds)
        level = level * (1.0 + PUMP_DEPTH * pump)
    else:
        level, shift = np.ones(steps), np.zeros(steps)
    noise = rng.standard_normal((n, steps))

    step_hours = np.arange(steps) * (config.step_seconds / 3600.0)
    weights = np.asarray(config.latent_weights)
    # normalize loadings so each zone's latent mix has unit scale
    mix = (weights / np.abs(weights).sum(axis=1, keepdims=True)) @ factors
    values = np.empty((n, steps))
    for v in range(n):
        profile = weekly_profile(step_hours, shift + config.phase_hours[v])
        values[v] = config.base_scale[v] * level * profile * mix[v] + config.noise_sigma[v] * noise[v]
    np.maximum(values, 0.0, out=values)
    return FlowPanel(config.zone_ids, values, config.start_time, config.step_seconds)
