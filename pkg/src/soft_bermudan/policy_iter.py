"""Monte-Carlo policy improvement for the Bermudan option and the game option.

Every iteration refits the continuation estimators backward on a common set
of paths. The evaluation driver at a date needs the previous iterate's
continuation (fixed, already fitted) and the new one at the same date, which
the backward pass has just fitted, so the per-path target is explicit.
"""
from __future__ import annotations

import time as _time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .approximator import predict
from .entropy import EntropyKernel
from .errors import ConfigurationError, DomainError
from .market import ExerciseSchedule, GbmModel, RewardSpec
from .td_solver import (PathData, SolverConfig, fit_date, pathwise_se, prepare_paths,
                        state_features)


def evaluation_driver(reward, prev_cont, new_cont, lam):
    """lam Phi((P - prev)/lam) + (prev - new) Phi'((P - prev)/lam)."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    ker = EntropyKernel(lam)
    gap = np.asarray(reward, dtype=float) - np.asarray(prev_cont, dtype=float)
    out = ker.driver(gap) + (np.asarray(prev_cont, dtype=float) - new_cont) * ker.gibbs_mean(gap)
    return float(out) if np.ndim(out) == 0 else out


def upper_driver(upper, prev_cont, new_cont, lam):
    """Issuer-side driver lam Phi((prev - R)/lam) + (new - prev) Phi'((prev - R)/lam)."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    ker = EntropyKernel(lam)
    prev = np.asarray(prev_cont, dtype=float)
    gap = prev - np.asarray(upper, dtype=float)
    out = ker.driver(gap) + (new_cont - prev) * ker.gibbs_mean(gap)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class PolicyIterState:
    iteration: int
    continuation_estimators: list
    previous_continuations: list
    price_trace: list
    standard_errors: list
    lam: float
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    config: SolverConfig | None = None

    def manifest(self) -> dict:
        return {
            "solver": "policy-iteration",
            "lambda": self.lam,
            "iterations": self.iteration,
            "price_trace": list(self.price_trace),
            "standard_errors": list(self.standard_errors),
            "config": self.config.to_dict() if self.config else None,
            "seed": self.config.seed if self.config else None,
            "diagnostics": self.diagnostics,
            "wall_time": self.wall_time,
        }


@dataclass
class GamePolicyIterState:
    iteration: int
    lower_continuations: list  # V^{n,n}_+
    upper_stage_continuations: list  # V^{n,n+1}_+
    price_trace: list  # v_0^{n,n}
    intermediate_trace: list  # v_0^{n,n+1}
    standard_errors: list
    lam: float
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    config: SolverConfig | None = None

    def manifest(self) -> dict:
        return {
            "solver": "game-policy-iteration",
            "lambda": self.lam,
            "iterations": self.iteration,
            "price_trace": list(self.price_trace),
            "intermediate_trace": list(self.intermediate_trace),
            "standard_errors": list(self.standard_errors),
            "config": self.config.to_dict() if self.config else None,
            "seed": self.config.seed if self.config else None,
            "diagnostics": self.diagnostics,
            "wall_time": self.wall_time,
        }


def _predict_all(ests, reward, schedule, config, i, x):
    return predict(ests[i], state_features(reward, schedule.dates[i], x, config))


# date_value(i, c, x) -> value at date i given the fresh continuation prediction c at states x
DateRule = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


def backward_pass(data: PathData, model: GbmModel, reward: RewardSpec, schedule: ExerciseSchedule,
                  config: SolverConfig, date_value: DateRule, seed: int, context: str):
    """Fit continuation estimators from t_N down to t_0 with targets from ``date_value``.

    Returns (estimators, origin value, origin standard error, train losses).
    """
    n_dates = len(schedule.dates)
    ests = [None] * n_dates
    losses = [None] * n_dates
    target = data.terminal
    for i in range(n_dates - 1, -1, -1):
        if i == 0:
            se = pathwise_se(target, config.antithetic)
        fd = fit_date(data.features[i], target, config, seed + 7919 * (i + 1),
                      f"{context}, date index {i}", data.train_idx, data.val_idx)
        ests[i] = fd.estimator
        losses[i] = fd.train_loss
        c = predict(fd.estimator, data.features[i])
        target = date_value(i, c, data.states[i])
    x0 = np.asarray(model.initial)[None, :]
    c0 = _predict_all(ests, reward, schedule, config, 0, x0)
    origin = float(date_value(0, c0, x0)[0])
    return ests, origin, se, losses


def _european_estimators(data, model, reward, schedule, config, seed):
    """V^0_+ = E[P_T | F_{t_i}] at every date, and its origin value E[P_T]."""
    ests, _, _, losses = backward_pass(data, model, reward, schedule, config,
                                       lambda i, c, x: data.terminal, seed, "iteration 0")
    price = float(np.mean(data.terminal))
    return ests, price, pathwise_se(data.terminal, config.antithetic), losses


def improve(model: GbmModel, reward: RewardSpec, schedule: ExerciseSchedule, lam: float,
            iterations: int | None = None, config: SolverConfig | None = None,
            data: PathData | None = None) -> PolicyIterState:
    """Run K rounds of policy improvement from the European value V^0 = E[P_T | F_t]."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    config = config or SolverConfig()
    k_iter = iterations if iterations is not None else (config.iterations or schedule.N + 2)
    if k_iter < 1:
        raise ConfigurationError("iterations must be >= 1")
    start = _time.perf_counter()
    data = data or prepare_paths(model, reward, schedule, config)
    prev, price0, se0, loss0 = _european_estimators(data, model, reward, schedule, config, config.seed)
    trace, ses, losses = [price0], [se0], [loss0]
    ker = EntropyKernel(lam)
    cur = prev
    for n in range(1, k_iter + 1):
        prev_ests = cur

        def rule(i, c, x, prev_ests=prev_ests):
            p = reward.values(schedule.dates[i], x)
            old = _predict_all(prev_ests, reward, schedule, config, i, x)
            gap = p - old
            return c + ker.driver(gap) + (old - c) * ker.gibbs_mean(gap)

        cur, price, se, loss = backward_pass(data, model, reward, schedule, config, rule,
                                             config.seed + 1000 * n, f"iteration {n}")
        prev = prev_ests
        trace.append(price)
        ses.append(se)
        losses.append(loss)
    return PolicyIterState(k_iter, cur, prev, trace, ses, lam, {"train_loss": losses},
                           _time.perf_counter() - start, config)


def game_improve(model: GbmModel, lower: RewardSpec, upper: RewardSpec, schedule: ExerciseSchedule,
                 lam: float, iterations: int | None = None, config: SolverConfig | None = None,
                 data: PathData | None = None) -> GamePolicyIterState:
    """Alternate minimisation (V^{n,n+1}) and maximisation (V^{n+1,n+1}) stages.

    V^{0,0} = E[P_T | F_t]; the maximiser's policy entering the first
    minimisation stage is the Gibbs policy of V^{0,0}.
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    config = config or SolverConfig()
    k_iter = iterations if iterations is not None else (config.iterations or schedule.N + 3)
    if k_iter < 1:
        raise ConfigurationError("iterations must be >= 1")
    start = _time.perf_counter()
    data = data or prepare_paths(model, lower, schedule, config)
    for i, t in enumerate(schedule.dates):
        if np.any(upper.values(t, data.states[i]) <= data.rewards[i]):
            raise ConfigurationError(f"upper reward must exceed the lower reward at date {t}")
    ker = EntropyKernel(lam)
    diag, price0, se0, _ = _european_estimators(data, model, lower, schedule, config, config.seed)
    max_pol = diag
    trace, mid_trace, ses = [price0], [], [se0]
    mid = diag
    for n in range(k_iter):

        def min_rule(i, c, x, a=diag, b=max_pol):
            p = lower.values(schedule.dates[i], x)
            r = upper.values(schedule.dates[i], x)
            av = _predict_all(a, lower, schedule, config, i, x)
            bv = _predict_all(b, lower, schedule, config, i, x)
            g_gap, h_gap = p - bv, av - r
            g = ker.driver(g_gap) + (bv - av) * ker.gibbs_mean(g_gap)
            h = ker.driver(h_gap) + (c - av) * ker.gibbs_mean(h_gap)
            return c + g - h

        mid, mid_price, _, _ = backward_pass(data, model, lower, schedule, config, min_rule,
                                             config.seed + 1000 * (2 * n + 1), f"min stage {n}")
        mid_trace.append(mid_price)

        def max_rule(i, c, x, a=diag, e=mid):
            p = lower.values(schedule.dates[i], x)
            r = upper.values(schedule.dates[i], x)
            av = _predict_all(a, lower, schedule, config, i, x)
            ev = _predict_all(e, lower, schedule, config, i, x)
            g_gap, h_gap = p - ev, av - r
            g = ker.driver(g_gap) + (ev - c) * ker.gibbs_mean(g_gap)
            h = ker.driver(h_gap) + (ev - av) * ker.gibbs_mean(h_gap)
            return c + g - h

        new_diag, price, se, _ = backward_pass(data, model, lower, schedule, config, max_rule,
                                               config.seed + 1000 * (2 * n + 2), f"max stage {n}")
        max_pol, diag = mid, new_diag
        trace.append(price)
        ses.append(se)
    return GamePolicyIterState(k_iter, diag, mid, trace, mid_trace, ses, lam, {},
                               _time.perf_counter() - start, config)


def exercise_time(state: PolicyIterState, reward: RewardSpec, schedule: ExerciseSchedule, batch) -> np.ndarray:
    """First date where the final policy's continuation is at most the reward (N+1 means maturity)."""
    from .stopping import first_true
    cfg = state.config or SolverConfig()
    cont = np.column_stack([_predict_all(state.continuation_estimators, reward, schedule, cfg, i, batch.at(t))
                            for i, t in enumerate(schedule.dates)])
    rew = np.column_stack([reward.values(t, batch.at(t)) for t in schedule.dates])
    return first_true(cont <= rew)
