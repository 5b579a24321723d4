"""Backward TD solver for the entropy-regularised Bermudan value.

Continuation values at the exercise dates are fitted backward from the
maturity, each against the adjusted value one date later. A single surface
estimator over (time, state) is then fitted to the values between dates.
"""
from __future__ import annotations

import time as _time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .approximator import FitHyper, RegressionTask, ValueEstimator, fit, predict
from .entropy import EntropyKernel
from .errors import ConfigurationError, DomainError, FitError, StateError
from .market import (ExerciseSchedule, GbmModel, PathBatch, RewardSpec, make_grid,
                     simulate_paths, transition_quadrature)


@dataclass(frozen=True)
class SolverConfig:
    """Hyper-parameters shared by the TD solver and policy improvement."""

    paths: int = 65536
    antithetic: bool = True
    substeps: int = 4
    estimator: str = "poly_ls"
    degree: int = 6
    interaction: int = 2
    hidden: tuple = (32, 32)
    activation: str = "tanh"
    epochs: int = 30
    batch: int = 512
    learning_rate: float = 0.05
    surface_learning_rate: float = 0.05
    optimizer: str = "sgd"
    ridge: float = 1e-8
    payoff_feature: bool = True
    sorted_features: bool = True
    surface_degree: int = 2
    surface_ridge: float = 0.1
    surface_paths: int = 8192
    resample_surface: bool = False
    fit_surface: bool = True
    validation_fraction: float = 0.1
    iterations: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.paths < 2:
            raise ConfigurationError("paths must be >= 2")
        if self.substeps < 1:
            raise ConfigurationError("substeps must be >= 1")
        if self.estimator not in ("poly_ls", "mlp"):
            raise ConfigurationError(f"estimator must be poly_ls or mlp, not {self.estimator!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"optimizer must be sgd or adam, not {self.optimizer!r}")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigurationError("validation_fraction must lie in [0, 1)")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def adjusted_value(continuation, reward, lam):
    """c + lam Phi((P - c)/lam), equivalently c + (P - c) Psi((P - c)/lam)."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    c = np.asarray(continuation, dtype=float)
    return c + EntropyKernel(lam).driver(np.asarray(reward, dtype=float) - c)


def state_features(reward: RewardSpec, t: float, x: np.ndarray, config: SolverConfig) -> np.ndarray:
    """Estimator inputs: the asset vector (sorted when d > 1), optionally the raw payoff."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    cols = [np.sort(x, axis=1)[:, ::-1] if (config.sorted_features and x.shape[1] > 1) else x]
    if config.payoff_feature:
        cols.append(reward.raw(t, x)[:, None])
    return np.hstack(cols)


def feature_dim(model: GbmModel, config: SolverConfig) -> int:
    return model.dimension + (1 if config.payoff_feature else 0)


def make_estimator(input_dim: int, config: SolverConfig, degree: int | None = None,
                   interaction: int | None = None) -> ValueEstimator:
    return ValueEstimator(config.estimator, input_dim, degree or config.degree,
                          interaction or config.interaction, config.ridge,
                          config.hidden, config.activation)


def _hyper(config: SolverConfig, seed: int, lr: float) -> FitHyper:
    return FitHyper(config.epochs, config.batch, lr, seed, config.optimizer)


def _split(n: int, config: SolverConfig):
    """Deterministic train/validation split by index stride."""
    if config.validation_fraction == 0:
        return np.arange(n), np.arange(0)
    stride = max(2, int(round(1 / config.validation_fraction)))
    val = np.arange(stride - 1, n, stride)
    mask = np.ones(n, dtype=bool)
    mask[val] = False
    return np.flatnonzero(mask), val


@dataclass
class FittedDate:
    estimator: ValueEstimator
    train_loss: float
    validation_loss: float


def fit_date(features: np.ndarray, targets: np.ndarray, config: SolverConfig, seed: int,
             context: str, train_idx, val_idx) -> FittedDate:
    """Fit one continuation estimator, reporting train and validation losses."""
    est = make_estimator(features.shape[1], config)
    try:
        fitted = fit(est, RegressionTask(features[train_idx], targets[train_idx]),
                     _hyper(config, seed, config.learning_rate))
    except FitError as exc:
        raise FitError(f"{context}: {exc}") from exc
    tr = float(np.mean((predict(fitted, features[train_idx]) - targets[train_idx]) ** 2))
    if len(val_idx):
        vl = float(np.mean((predict(fitted, features[val_idx]) - targets[val_idx]) ** 2))
    else:
        vl = float("nan")
    return FittedDate(fitted, tr, vl)


@dataclass
class PathData:
    """Paths restricted to the exercise dates, with features and discounted rewards."""

    batch: PathBatch
    states: list
    features: list
    rewards: list
    terminal: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray


def prepare_paths(model: GbmModel, reward: RewardSpec, schedule: ExerciseSchedule,
                  config: SolverConfig, seed: int | None = None) -> PathData:
    grid = make_grid(schedule, config.substeps)
    n_draw = config.paths // 2 if config.antithetic else config.paths
    batch = simulate_paths(model, grid, n_draw, config.seed if seed is None else seed,
                           antithetic=config.antithetic)
    return path_data(batch, reward, schedule, config)


def path_data(batch: PathBatch, reward: RewardSpec, schedule: ExerciseSchedule,
              config: SolverConfig) -> PathData:
    states, feats, rews = [], [], []
    for t in schedule.dates:
        x = batch.at(t)
        states.append(x)
        feats.append(state_features(reward, t, x, config))
        rews.append(reward.values(t, x))
    terminal = reward.values(schedule.maturity, batch.at(schedule.maturity))
    tr, val = _split(batch.count, config)
    return PathData(batch, states, feats, rews, terminal, tr, val)


def pathwise_se(values: np.ndarray, antithetic: bool) -> float:
    """Standard error of the mean, pairing antithetic halves when present."""
    v = np.asarray(values, dtype=float)
    if antithetic and v.size % 2 == 0:
        half = v.size // 2
        v = 0.5 * (v[:half] + v[half:])
    if v.size < 2:
        return 0.0
    return float(v.std(ddof=1) / np.sqrt(v.size))


@dataclass
class TdSolution:
    continuation_estimators: list
    surface_estimator: ValueEstimator | None
    lam: float
    price_at_origin: float
    standard_error: float
    diagnostics: dict
    model: GbmModel
    reward: RewardSpec
    schedule: ExerciseSchedule
    config: SolverConfig
    date_values: list = field(default_factory=list, repr=False)
    wall_time: float = 0.0

    def continuation(self, i: int, x: np.ndarray) -> np.ndarray:
        t = self.schedule.dates[i]
        return predict(self.continuation_estimators[i], state_features(self.reward, t, x, self.config))

    def manifest(self) -> dict:
        return {
            "solver": "td",
            "lambda": self.lam,
            "price": self.price_at_origin,
            "standard_error": self.standard_error,
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "diagnostics": self.diagnostics,
            "wall_time": self.wall_time,
        }


def _next_date_index(schedule: ExerciseSchedule, t: float) -> int:
    """Index into ``schedule.all_times`` of the first date strictly after t."""
    return int(np.searchsorted(schedule.all_times, t + 1e-12, side="left"))


def _date_value(ests, reward, schedule, config, lam, j, x):
    tj = schedule.all_times[j]
    if j == len(schedule.dates):
        return reward.values(tj, x)
    c = predict(ests[j], state_features(reward, tj, x, config))
    return adjusted_value(c, reward.values(tj, x), lam)


def _anchor(ests, model, reward, schedule, config, lam, t, j, x):
    """Quadrature estimate of E[v(t_j, X_{t_j}) | X_t = x] from the date-j estimator."""
    x = np.atleast_2d(x)
    out = np.empty(x.shape[0])
    nodes, w = transition_quadrature(model, x[:1], schedule.all_times[j] - t)
    chunk = max(1, (1 << 17) // nodes.shape[0])
    for s in range(0, x.shape[0], chunk):
        nodes, w = transition_quadrature(model, x[s:s + chunk], schedule.all_times[j] - t)
        m, n, d = nodes.shape
        vals = _date_value(ests, reward, schedule, config, lam, j, nodes.reshape(m * n, d))
        out[s:s + chunk] = w @ vals.reshape(m, n)
    return out


def _surface_inputs(t: float, tau: float, feats: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """(t, time to the next date, state features, next-date value at the current state)."""
    n = feats.shape[0]
    return np.column_stack([np.full(n, t), np.full(n, np.sqrt(tau)), feats, anchor])


def fit_surface(data: PathData, date_values: list, ests: list, lam: float, model: GbmModel,
                reward: RewardSpec,
                schedule: ExerciseSchedule, config: SolverConfig, seed: int) -> tuple:
    """Fit v(t, x) between dates against the value at the next date (martingale loss).

    The estimator learns the residual over the quadrature anchor, so the
    surface is anchor + estimator.
    """
    batch = data.batch
    n_use = min(config.surface_paths, batch.count)
    rng = np.random.default_rng(seed)
    times = schedule.all_times
    xs, ys = [], []
    for k, t in enumerate(batch.grid):
        if np.min(np.abs(times - t)) < 1e-12:
            continue
        j = _next_date_index(schedule, t)
        # a fresh path subset per slice keeps the slices close to independent
        rows = np.sort(rng.choice(batch.count, size=n_use, replace=False))
        x = batch.values[rows, k, :]
        f = state_features(reward, t, x, config)
        a = _anchor(ests, model, reward, schedule, config, lam, t, j, x)
        xs.append(_surface_inputs(t, times[j] - t, f, a))
        ys.append(date_values[j][rows] - a)
    if not xs:
        return None, float("nan")
    inputs = np.vstack(xs)
    targets = np.concatenate(ys)
    est = make_estimator(inputs.shape[1], config, degree=config.surface_degree,
                         interaction=max(3, config.interaction))
    if est.kind == "poly_ls":
        # the correction is small next to the noise; shrink it toward the anchor
        est = replace(est, ridge=config.surface_ridge * inputs.shape[0])
    try:
        fitted = fit(est, RegressionTask(inputs, targets),
                     _hyper(config, seed, config.surface_learning_rate))
    except FitError as exc:
        raise FitError(f"surface fit: {exc}") from exc
    loss = float(np.mean((predict(fitted, inputs) - targets) ** 2))
    return fitted, loss


def solve(model: GbmModel, reward: RewardSpec, schedule: ExerciseSchedule, lam: float,
          config: SolverConfig | None = None, data: PathData | None = None) -> TdSolution:
    """Fit continuation estimators backward from t_N to t_0, then the value surface."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    config = config or SolverConfig()
    start = _time.perf_counter()
    data = data or prepare_paths(model, reward, schedule, config)
    n_dates = len(schedule.dates)
    ests = [None] * n_dates
    tr_loss = [None] * n_dates
    val_loss = [None] * n_dates
    date_values = [None] * (n_dates + 1)
    date_values[n_dates] = data.terminal
    target = data.terminal
    for i in range(n_dates - 1, -1, -1):
        fd = fit_date(data.features[i], target, config, config.seed + 7919 * (i + 1),
                      f"date index {i}", data.train_idx, data.val_idx)
        ests[i] = fd.estimator
        tr_loss[i], val_loss[i] = fd.train_loss, fd.validation_loss
        c = predict(fd.estimator, data.features[i])
        target = adjusted_value(c, data.rewards[i], lam)
        date_values[i] = target
    se = pathwise_se(date_values[1], config.antithetic)
    x0 = np.asarray(model.initial)[None, :]
    c0 = predict(ests[0], state_features(reward, 0.0, x0, config))[0]
    price = float(adjusted_value(c0, reward.values(0.0, x0)[0], lam))
    diagnostics = {"train_loss": tr_loss, "validation_loss": val_loss}
    surface = None
    if config.fit_surface:
        sdata = data
        if config.resample_surface:
            sdata = prepare_paths(model, reward, schedule, config, seed=config.seed + 104729)
            sdate = [None] * (n_dates + 1)
            sdate[n_dates] = sdata.terminal
            for i in range(n_dates):
                c = predict(ests[i], sdata.features[i])
                sdate[i] = adjusted_value(c, sdata.rewards[i], lam)
        else:
            sdate = date_values
        surface, sloss = fit_surface(sdata, sdate, ests, lam, model, reward, schedule, config,
                                     config.seed + 31)
        diagnostics["surface_loss"] = sloss
    return TdSolution(ests, surface, lam, price, se, diagnostics, model, reward, schedule,
                      config, date_values, _time.perf_counter() - start)


def surface_value(solution: TdSolution, time: float, state) -> np.ndarray | float:
    """v(t, x): payoff at T, adjusted value at exercise dates, surface prediction otherwise."""
    sched = solution.schedule
    if not 0 <= time <= sched.maturity + 1e-12:
        raise DomainError(f"time {time} outside [0, T]")
    x = np.asarray(state, dtype=float)
    scalar = x.ndim == 1
    x = np.atleast_2d(x)
    if abs(time - sched.maturity) < 1e-12:
        out = solution.reward.values(sched.maturity, x)
    else:
        hits = [i for i, t in enumerate(sched.dates) if abs(t - time) < 1e-12]
        if hits:
            i = hits[0]
            c = solution.continuation(i, x)
            out = adjusted_value(c, solution.reward.values(time, x), solution.lam)
        else:
            if solution.surface_estimator is None:
                raise StateError("solution has no fitted surface estimator")
            j = _next_date_index(sched, time)
            f = state_features(solution.reward, time, x, solution.config)
            a = _anchor(solution.continuation_estimators, solution.model, solution.reward,
                        sched, solution.config, solution.lam, time, j, x)
            inputs = _surface_inputs(time, sched.all_times[j] - time, f, a)
            out = a + predict(solution.surface_estimator, inputs)
    return float(out[0]) if scalar else out
