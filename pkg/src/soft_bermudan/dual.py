"""Upper bounds E[max_sigma (P_sigma - M_sigma)] + M_0 from the entropy martingale.

The martingale increment over (t_j, t_{j+1}] is the realised value at t_{j+1}
minus the fitted continuation at t_j, so no nested simulation is needed.
The maximum runs over the exercise dates and the maturity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StateError
from .lattice import LatticeSolution
from .market import PathBatch
from .stopping import gather_nodes
from .td_solver import TdSolution, adjusted_value, pathwise_se


@dataclass(frozen=True)
class DualEstimate:
    upper_bound: float
    standard_error: float
    martingale_kind: str  # "entropy" or "zero" or "lattice"
    lam: float = float("nan")
    constant_report: dict | None = None
    warnings: tuple = field(default=())


def _check(solution: TdSolution):
    if not solution.continuation_estimators or any(e is None or not e.fitted
                                                   for e in solution.continuation_estimators):
        raise StateError("solution has no fitted continuation estimators")


def date_values(solution: TdSolution, paths: PathBatch) -> np.ndarray:
    """v(t_j, X_{t_j}) at each date and P_T at maturity: shape (paths, N+2)."""
    _check(solution)
    sched = solution.schedule
    cols = []
    for i, t in enumerate(sched.dates):
        x = paths.at(t)
        cols.append(adjusted_value(solution.continuation(i, x), solution.reward.values(t, x), solution.lam))
    cols.append(solution.reward.values(sched.maturity, paths.at(sched.maturity)))
    return np.column_stack(cols)


def martingale_increments(solution: TdSolution, paths: PathBatch) -> np.ndarray:
    """v(t_{j+1}, X_{t_{j+1}}) - V_{t_j}(X_{t_j}) for j = 0..N: shape (paths, N+1)."""
    _check(solution)
    sched = solution.schedule
    vals = date_values(solution, paths)
    cont = np.column_stack([solution.continuation(i, paths.at(t)) for i, t in enumerate(sched.dates)])
    return vals[:, 1:] - cont


def _dual_from_increments(rewards: np.ndarray, increments: np.ndarray, antithetic: bool):
    """rewards (paths, N+2) over dates and maturity; increments (paths, N+1)."""
    m = np.concatenate([np.zeros((increments.shape[0], 1)), np.cumsum(increments, axis=1)], axis=1)
    pathwise = np.max(rewards - m, axis=1)
    return float(pathwise.mean()), pathwise_se(pathwise, antithetic)


def reward_table(solution: TdSolution, paths: PathBatch) -> np.ndarray:
    return np.column_stack([solution.reward.values(t, paths.at(t)) for t in solution.schedule.all_times])


def upper_bound(solution: TdSolution, paths: PathBatch, martingale: str = "entropy") -> DualEstimate:
    """Pathwise max of P - M^lam over the dates and maturity, averaged (M_0 = 0)."""
    _check(solution)
    rewards = reward_table(solution, paths)
    if martingale == "entropy":
        incr = martingale_increments(solution, paths)
    elif martingale == "zero":
        incr = np.zeros((paths.count, len(solution.schedule.dates)))
    else:
        raise ValueError(f"unknown martingale {martingale!r}")
    ub, se = _dual_from_increments(rewards, incr, paths.antithetic)
    warns = ()
    if paths.seed == solution.config.seed:
        warns = ("evaluation paths reuse the training seed",)
    return DualEstimate(ub, se, martingale, solution.lam, None, warns)


# ---------------------------------------------------------------------------
# lattice backend


def lattice_date_increments(solution: LatticeSolution, nodes: np.ndarray) -> np.ndarray:
    """V_{t_{j+1}} - V_{t_j+} along lattice paths given node indices at dates and maturity."""
    n = len(solution.schedule.dates)
    out = np.empty((nodes.shape[0], n))
    levels = solution.levels + [solution.lattice.steps]
    for j in range(n):
        nxt = solution.values[levels[j + 1]]
        out[:, j] = gather_nodes(nxt, nodes[:, j + 1]) - gather_nodes(solution.continuation[j], nodes[:, j])
    return out


def lattice_upper_bound(solution: LatticeSolution, reward, nodes: np.ndarray) -> DualEstimate:
    """Monte-Carlo dual over sampled lattice paths using the tree's own martingale."""
    lat = solution.lattice
    levels = solution.levels + [lat.steps]
    rewards = np.column_stack([
        gather_nodes(reward.values(lat.time_of(k), lat.node_states(k)), nodes[:, j])
        for j, k in enumerate(levels)])
    ub, se = _dual_from_increments(rewards, lattice_date_increments(solution, nodes), False)
    return DualEstimate(ub, se, "lattice", solution.lam)
