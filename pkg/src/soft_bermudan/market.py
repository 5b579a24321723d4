"""Exercise schedules, Black-Scholes market with dividends, rewards and path simulation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.stats

from .errors import ConfigurationError, DomainError

TIME_TOL = 1e-12


@dataclass(frozen=True)
class ExerciseSchedule:
    """Admissible stopping dates t_0 = 0 < t_1 < ... < t_N < T, plus the maturity T."""

    dates: tuple
    maturity: float

    def __post_init__(self):
        d = tuple(float(t) for t in self.dates)
        object.__setattr__(self, "dates", d)
        object.__setattr__(self, "maturity", float(self.maturity))
        if not d:
            raise ConfigurationError("schedule needs at least the date t_0 = 0")
        if abs(d[0]) > TIME_TOL:
            raise ConfigurationError("first exercise date must be 0")
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ConfigurationError("exercise dates must be strictly increasing")
        if d[-1] >= self.maturity:
            raise ConfigurationError("last exercise date must precede the maturity")

    @classmethod
    def uniform(cls, count: int, maturity: float) -> "ExerciseSchedule":
        """Dates n T / count for n = 0..count-1."""
        return cls(tuple(n * maturity / count for n in range(count)), maturity)

    @property
    def N(self) -> int:
        return len(self.dates) - 1

    @property
    def all_times(self) -> np.ndarray:
        """Exercise dates followed by the maturity."""
        return np.array(self.dates + (self.maturity,))

    def remaining_count(self, t: float) -> int:
        """N(t) = (N+1) - max{i : t_i < t}, with the max over an empty set taken as 0."""
        past = [i for i, ti in enumerate(self.dates) if ti < t - TIME_TOL]
        return self.N + 1 - (max(past) if past else 0)

    def remaining_count_after(self, i: int) -> int:
        """N(t_i+) = (N+1) - i."""
        return self.N + 1 - i


@dataclass(frozen=True)
class GbmModel:
    """d-dimensional Black-Scholes model with continuous dividend yield and equicorrelation."""

    initial: tuple
    rate: float
    dividend: float
    volatility: float
    correlation: float = 0.0

    def __post_init__(self):
        x0 = tuple(float(v) for v in np.atleast_1d(self.initial))
        object.__setattr__(self, "initial", x0)
        if any(v <= 0 for v in x0):
            raise ConfigurationError("initial asset values must be positive")
        if self.volatility < 0:
            raise ConfigurationError("volatility must be non-negative")
        if self.dimension > 1:
            try:
                np.linalg.cholesky(self.correlation_matrix())
            except np.linalg.LinAlgError:
                raise ConfigurationError(
                    f"correlation {self.correlation} is not positive definite for d={self.dimension}"
                ) from None

    @classmethod
    def symmetric(cls, x0: float, dimension: int, rate, dividend, volatility, correlation=0.0):
        return cls((x0,) * dimension, rate, dividend, volatility, correlation)

    @property
    def dimension(self) -> int:
        return len(self.initial)

    def correlation_matrix(self) -> np.ndarray:
        d = self.dimension
        return np.full((d, d), self.correlation) + (1 - self.correlation) * np.eye(d)


@dataclass(frozen=True)
class RewardSpec:
    """Discounted reward P_t = e^{-r t} (scale * g(X_t) + premium * 1{t < maturity}).

    kind is 'put' (g = (K - x_1)^+), 'max_call' (g = (max_i x_i - K)^+) or
    'custom-table', where ``table(time, states)`` returns the raw payoff.
    ``cap`` truncates the raw payoff from above.
    """

    kind: str
    strike: float = 100.0
    discount_rate: float = 0.0
    scale: float = 1.0
    premium: float = 0.0
    maturity: float | None = None
    cap: float | None = None
    table: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("put", "max_call", "custom-table"):
            raise ConfigurationError(f"unknown reward kind {self.kind!r}")
        if self.kind == "custom-table" and self.table is None:
            raise ConfigurationError("custom-table reward needs a table callable")
        if self.premium != 0 and self.maturity is None:
            raise ConfigurationError("a premium needs the maturity at which it vanishes")

    def raw(self, time: float, states) -> np.ndarray:
        x = np.asarray(states, dtype=float)
        if self.kind == "put":
            g = np.maximum(self.strike - x[..., 0], 0.0)
        elif self.kind == "max_call":
            g = np.maximum(x.max(axis=-1) - self.strike, 0.0)
        else:
            g = np.asarray(self.table(time, x), dtype=float)
        if self.cap is not None:
            g = np.minimum(g, self.cap)
        g = self.scale * g
        if self.premium and time < self.maturity - TIME_TOL:
            g = g + self.premium
        return g

    def values(self, time: float, states) -> np.ndarray:
        """Discounted reward for an array of states shaped (..., d)."""
        if time < 0:
            raise DomainError("time must be non-negative")
        return np.exp(-self.discount_rate * time) * self.raw(time, states)

    def scaled(self, factor: float) -> "RewardSpec":
        return RewardSpec(self.kind, self.strike, self.discount_rate, self.scale * factor,
                          self.premium * factor, self.maturity, self.cap, self.table)

    def with_premium(self, premium: float, maturity: float) -> "RewardSpec":
        return RewardSpec(self.kind, self.strike, self.discount_rate, self.scale,
                          premium, maturity, self.cap, self.table)

    def sup_norm_bound(self) -> float:
        """Upper bound of |P| when one is available from the payoff form, else inf."""
        if self.discount_rate < 0:
            return np.inf
        if self.cap is not None:
            base = self.cap
        elif self.kind == "put":
            base = self.strike
        else:
            return np.inf
        return abs(self.scale) * base + abs(self.premium)


def reward_at(spec: RewardSpec, time: float, state) -> float:
    """Discounted reward of a single asset vector."""
    x = np.atleast_1d(np.asarray(state, dtype=float))
    return float(spec.values(time, x[None, :])[0])


@dataclass(frozen=True)
class PathBatch:
    """Simulated asset paths: values[path, time index, asset]."""

    values: np.ndarray
    grid: np.ndarray
    seed: int
    antithetic: bool = False

    def index_of(self, t: float) -> int:
        hits = np.flatnonzero(np.abs(self.grid - t) < 1e-9)
        if hits.size == 0:
            raise ConfigurationError(f"time {t} is not on the simulation grid")
        return int(hits[0])

    def at(self, t: float) -> np.ndarray:
        return self.values[:, self.index_of(t), :]

    @property
    def count(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> None:
        """Columnar dump: path_id, time, asset_index, value."""
        n, m, d = self.values.shape
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "time", "asset_index", "value"])
            for p in range(n):
                for k in range(m):
                    for a in range(d):
                        w.writerow([p, repr(float(self.grid[k])), a, repr(float(self.values[p, k, a]))])


def make_grid(schedule: ExerciseSchedule, substeps: int = 1) -> np.ndarray:
    """Schedule dates and maturity, each interval split into ``substeps`` equal steps."""
    if substeps < 1:
        raise ConfigurationError("substeps must be >= 1")
    times = schedule.all_times
    pieces = [np.linspace(a, b, substeps + 1)[:-1] for a, b in zip(times[:-1], times[1:])]
    return np.concatenate(pieces + [times[-1:]])


def equiprobable_normal_nodes(count: int) -> np.ndarray:
    """Conditional means of a standard normal over ``count`` equal-probability bins.

    Averaging f over these nodes keeps the mean exact and, unlike Gauss-Hermite,
    converges at the midpoint-rule rate for kinked f such as option payoffs.
    """
    edges = scipy.stats.norm.ppf(np.linspace(0.0, 1.0, count + 1))
    pdf = scipy.stats.norm.pdf(edges)
    return (pdf[:-1] - pdf[1:]) * count


def transition_quadrature(model: GbmModel, states: np.ndarray, horizon: float,
                          order: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and weights for the law of X_{t+horizon} given X_t = states.

    Tensor equal-probability nodes with ``order`` points per axis when d <= 2,
    and the 2d symmetric sigma points otherwise. Returns nodes shaped (m, n, d)
    and weights shaped (m,).
    """
    x = np.atleast_2d(np.asarray(states, dtype=float))
    d = model.dimension
    if d <= 2:
        k = order or (32 if d == 1 else 12)
        z1 = equiprobable_normal_nodes(k)
        grids = np.meshgrid(*([z1] * d), indexing="ij")
        z = np.stack([g.ravel() for g in grids], axis=1)
        w = np.full(z.shape[0], 1.0 / z.shape[0])
    else:
        z = np.sqrt(d) * np.vstack([np.eye(d), -np.eye(d)])
        w = np.full(2 * d, 1.0 / (2 * d))
    z = z @ np.linalg.cholesky(model.correlation_matrix()).T
    sig = model.volatility
    shift = (model.rate - model.dividend - 0.5 * sig**2) * horizon + sig * np.sqrt(horizon) * z
    return x[None, :, :] * np.exp(shift)[:, None, :], w


def simulate_paths(model: GbmModel, grid: Sequence[float], count: int, seed: int,
                   antithetic: bool = False) -> PathBatch:
    """Exact log-normal simulation on ``grid``.

    With ``antithetic`` the batch holds ``count`` pairs: rows [0, count) use
    the draws Z and rows [count, 2 count) use -Z.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2 or abs(g[0]) > TIME_TOL or np.any(np.diff(g) <= 0):
        raise ConfigurationError("grid must be strictly increasing and start at 0")
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    d = model.dimension
    chol = np.linalg.cholesky(model.correlation_matrix())
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    dt = np.diff(g)
    z = rng.standard_normal((count, dt.size, d)) @ chol.T
    if antithetic:
        z = np.concatenate([z, -z], axis=0)
    sig = model.volatility
    drift = (model.rate - model.dividend - 0.5 * sig**2) * dt
    incr = drift[None, :, None] + sig * np.sqrt(dt)[None, :, None] * z
    logx = np.concatenate([np.zeros((z.shape[0], 1, d)), np.cumsum(incr, axis=1)], axis=1)
    values = np.asarray(model.initial)[None, None, :] * np.exp(logx)
    return PathBatch(values, g, seed, antithetic)
