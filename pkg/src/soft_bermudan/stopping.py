"""Stopping rules built from value functions, and their convergence as lambda decreases.

Date indices run over the exercise dates 0..N; the maturity is index N+1.
Randomised times use the hazard jumps Psi((P - V_+)/lam) and a uniform draw
independent of the asset paths.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entropy import EntropyKernel
from .errors import DomainError
from .lattice import Lattice, LatticeSolution, solve_classical, solve_entropy, solve_game
from .market import ExerciseSchedule, GbmModel, RewardSpec

TIE_TOL = 1e-12
RULES = ("classical", "threshold", "randomized", "game_pair")


@dataclass(frozen=True)
class HazardPath:
    """Hazard jumps per date; arrays carry dates on the last axis.

    survival[..., j] is the product of (1 - jump) over dates before j, with the
    extra last entry the survival to maturity. stop_mass[..., j] is the
    probability of having stopped by date j; its last entry (maturity) is 1.
    """

    jumps: np.ndarray
    survival: np.ndarray
    stop_mass: np.ndarray

    @property
    def increments(self) -> np.ndarray:
        """Stopping probability of each date and of the maturity."""
        return np.concatenate([self.jumps * self.survival[..., :-1], self.survival[..., -1:]], axis=-1)


def hazard_path_from_jumps(jumps) -> HazardPath:
    j = np.asarray(jumps, dtype=float)
    if np.any(j < 0) or np.any(j > 1):
        raise DomainError("hazard jumps must lie in [0, 1]")
    ones = np.ones(j.shape[:-1] + (1,))
    survival = np.concatenate([ones, np.cumprod(1.0 - j, axis=-1)], axis=-1)
    stop = np.cumsum(j * survival[..., :-1], axis=-1)
    stop_mass = np.concatenate([stop, ones], axis=-1)
    return HazardPath(j, survival, stop_mass)


def hazard_from_values(continuations, rewards, lam: float) -> HazardPath:
    """Jumps Psi((P - V_+)/lam) per date, with survival and cumulative stop mass."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    gap = np.asarray(rewards, dtype=float) - np.asarray(continuations, dtype=float)
    return hazard_path_from_jumps(EntropyKernel(lam).hazard(np.atleast_1d(gap)))


def sample_randomized_time(hazard: HazardPath, uniform_draw) -> np.ndarray | int:
    """Index j with the draw in (A_{j-1}, A_j]; dates without stop mass are skipped."""
    u = np.asarray(uniform_draw, dtype=float)
    a = hazard.stop_mass
    incr = hazard.increments
    mask = (a >= u[..., None]) & (incr > 0)
    mask[..., -1] = True
    idx = np.argmax(mask, axis=-1)
    return int(idx) if np.ndim(idx) == 0 else idx


def empirical_law(hazard: HazardPath, draws: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies of each stopping index over ``draws`` uniforms, and their standard errors."""
    if hazard.jumps.ndim != 1:
        raise DomainError("empirical_law expects a single hazard path")
    u = np.random.default_rng(seed).random(draws)
    idx = sample_randomized_time(hazard, u)
    freq = np.bincount(idx, minlength=hazard.stop_mass.size) / draws
    p = hazard.increments
    se = np.sqrt(p * (1 - p) / draws)
    return freq, se


# ---------------------------------------------------------------------------
# lattice backend


def sample_lattice_paths(lattice: Lattice, schedule: ExerciseSchedule, count: int,
                         seed: int) -> np.ndarray:
    """Node indices at each exercise date and at maturity: shape (count, N+2, d)."""
    levels = lattice.schedule_levels(schedule) + [lattice.steps]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    q = 1.0 - lattice.risk_neutral_prob
    out = np.zeros((count, len(levels), lattice.dimension), dtype=np.int64)
    for j in range(1, len(levels)):
        out[:, j] = out[:, j - 1] + rng.binomial(levels[j] - levels[j - 1], q,
                                                 size=(count, lattice.dimension))
    return out


def gather_nodes(arr: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    return arr[tuple(nodes[:, a] for a in range(nodes.shape[1]))]


def path_table(solution: LatticeSolution, nodes: np.ndarray, which: str) -> np.ndarray:
    """Per-path values along the dates: 'continuation' or 'reward' (shape (paths, N+1))."""
    src = solution.continuation if which == "continuation" else solution.rewards
    return np.stack([gather_nodes(src[i], nodes[:, i]) for i in range(len(solution.schedule.dates))], axis=1)


def terminal_rewards(reward: RewardSpec, lattice: Lattice, nodes: np.ndarray) -> np.ndarray:
    states = lattice.node_states(lattice.steps)
    return reward.values(lattice.maturity, gather_nodes(states, nodes[:, -1]))


def first_true(mask: np.ndarray) -> np.ndarray:
    """First column index where mask holds, or the column count when it never does."""
    hit = mask.any(axis=1)
    return np.where(hit, np.argmax(mask, axis=1), mask.shape[1])


def classical_optimal_time(solution: LatticeSolution, path: np.ndarray) -> np.ndarray | int:
    """First date with V_+ <= P along lattice node paths; N+1 (maturity) otherwise.

    ``path`` holds node indices at the dates, shaped (N+1, d) for one path or
    (paths, N+1 or N+2, d) for many.
    """
    nodes = np.asarray(path)
    single = nodes.ndim == 2
    if single:
        nodes = nodes[None]
    n = len(solution.schedule.dates)
    cont = path_table(solution, nodes[:, :n], "continuation")
    rew = path_table(solution, nodes[:, :n], "reward")
    idx = first_true(cont <= rew)
    return int(idx[0]) if single else idx


def threshold_time(entropy: LatticeSolution, nodes: np.ndarray) -> np.ndarray:
    """First date with V^lam_+ <= P."""
    n = len(entropy.schedule.dates)
    return first_true(path_table(entropy, nodes[:, :n], "continuation")
                      <= path_table(entropy, nodes[:, :n], "reward"))


def randomized_time(entropy: LatticeSolution, nodes: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    n = len(entropy.schedule.dates)
    hz = hazard_from_values(path_table(entropy, nodes[:, :n], "continuation"),
                            path_table(entropy, nodes[:, :n], "reward"), entropy.lam)
    return sample_randomized_time(hz, uniforms)


def stopped_rewards(solution: LatticeSolution, reward: RewardSpec, nodes: np.ndarray,
                    idx: np.ndarray) -> np.ndarray:
    n = len(solution.schedule.dates)
    table = np.column_stack([path_table(solution, nodes[:, :n], "reward"),
                             terminal_rewards(reward, solution.lattice, nodes)])
    return table[np.arange(len(idx)), idx]


def minimal_gap(classical: LatticeSolution, nodes: np.ndarray) -> tuple[float, int]:
    """Smallest |P - V_+| over dates visited by the paths, ignoring ties; also the tie count."""
    n = len(classical.schedule.dates)
    gap = np.abs(path_table(classical, nodes[:, :n], "reward")
                 - path_table(classical, nodes[:, :n], "continuation"))
    ties = gap < TIE_TOL
    return float(gap[~ties].min()) if np.any(~ties) else np.inf, int(ties.sum())


def gap_threshold(classical: LatticeSolution, nodes: np.ndarray) -> float:
    """Temperature below which the threshold rule is expected to match tau*: min gap / 20."""
    return minimal_gap(classical, nodes)[0] / 20.0


@dataclass(frozen=True)
class MismatchRow:
    lam: float
    rule: str
    mismatch_rate: float
    mismatch_se: float
    mean_reward: float
    se: float
    mean_abs_reward_diff: float
    excluded_ties: int


def _row(lam, rule, idx, ref_idx, rew, ref_rew, ties) -> MismatchRow:
    miss = (idx != ref_idx).astype(float)
    n = miss.size
    return MismatchRow(lam, rule, float(miss.mean()), float(miss.std(ddof=1) / np.sqrt(n)),
                       float(rew.mean()), float(rew.std(ddof=1) / np.sqrt(n)),
                       float(np.abs(rew - ref_rew).mean()), ties)


def convergence_diagnostic(model: GbmModel, reward: RewardSpec, schedule: ExerciseSchedule,
                           lambda_grid, paths: int, seed: int, steps: int = 500,
                           lattice: Lattice | None = None) -> list:
    """Mismatch of tau-hat^lam and tau^lam against tau* on common lattice paths."""
    lam_list = [float(v) for v in lambda_grid]
    if any(b >= a for a, b in zip(lam_list, lam_list[1:])):
        raise DomainError("lambda grid must be strictly decreasing")
    lat = lattice or Lattice.crr(model, schedule.maturity, steps)
    classical = solve_classical(lat, reward, schedule)
    nodes = sample_lattice_paths(lat, schedule, paths, seed)
    # uniforms come from a stream separate from the path draws
    uniforms = np.random.default_rng(np.random.SeedSequence([seed, 1])).random(paths)
    ref = classical_optimal_time(classical, nodes)
    ref_rew = stopped_rewards(classical, reward, nodes, ref)
    _, ties = minimal_gap(classical, nodes)
    rows = [_row(0.0, "classical", ref, ref, ref_rew, ref_rew, ties)]
    for lam in lam_list:
        ent = solve_entropy(lat, reward, schedule, lam)
        th = threshold_time(ent, nodes)
        rows.append(_row(lam, "threshold", th, ref, stopped_rewards(ent, reward, nodes, th), ref_rew, ties))
        rz = randomized_time(ent, nodes, uniforms)
        rows.append(_row(lam, "randomized", rz, ref, stopped_rewards(ent, reward, nodes, rz), ref_rew, ties))
    return rows


def game_pair_times(solution: LatticeSolution, upper: RewardSpec, nodes: np.ndarray,
                    u1: np.ndarray | None = None, u2: np.ndarray | None = None):
    """(tau, sigma) for holder and issuer.

    With lam = 0: tau = first date with V_+ <= P, sigma = first date with V_+ >= R.
    With lam > 0 and uniforms: randomised times from the jumps Psi((P - V_+)/lam)
    and Psi((V_+ - R)/lam).
    """
    n = len(solution.schedule.dates)
    cont = path_table(solution, nodes[:, :n], "continuation")
    low = path_table(solution, nodes[:, :n], "reward")
    lat = solution.lattice
    up = np.stack([gather_nodes(upper.values(lat.time_of(k), lat.node_states(k)), nodes[:, i])
                   for i, k in enumerate(solution.levels)], axis=1)
    if solution.lam == 0 or u1 is None:
        return first_true(cont <= low), first_true(cont >= up)
    tau = sample_randomized_time(hazard_from_values(cont, low, solution.lam), u1)
    sigma = sample_randomized_time(hazard_from_values(up, cont, solution.lam), u2)
    return tau, sigma


def game_convergence_diagnostic(model: GbmModel, lower: RewardSpec, upper: RewardSpec,
                                schedule: ExerciseSchedule, lambda_grid, paths: int, seed: int,
                                steps: int = 500) -> list:
    """Fraction of paths whose randomised pair (tau^lam, sigma^lam) differs from (tau*, sigma*)."""
    lat = Lattice.crr(model, schedule.maturity, steps)
    classical = solve_game(lat, lower, upper, schedule, 0.0)
    nodes = sample_lattice_paths(lat, schedule, paths, seed)
    streams = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    u1, u2 = streams.random(paths), streams.random(paths)
    tau0, sig0 = game_pair_times(classical, upper, nodes)
    rows = []
    for lam in lambda_grid:
        sol = solve_game(lat, lower, upper, schedule, float(lam))
        tau, sig = game_pair_times(sol, upper, nodes, u1, u2)
        miss = ((tau != tau0) | (sig != sig0)).astype(float)
        rows.append((float(lam), float(miss.mean()), float(miss.std(ddof=1) / np.sqrt(paths))))
    return rows


def bang_bang_value(classical: LatticeSolution, eps: float) -> float:
    """Origin value of the randomised payoff with jumps 1{P > V_+} (1 - eps).

    Backward recursion W_{t_i} = dG P + (1 - dG) W_{t_i+} on the tree.
    """
    if not 0 <= eps < 1:
        raise DomainError("eps must lie in [0, 1)")
    lat = classical.lattice
    levels = classical.levels
    where = {lv: i for i, lv in enumerate(levels)}
    v = classical.values[lat.steps]
    for k in range(lat.steps - 1, -1, -1):
        v = lat.expect(v)
        if k in where:
            i = where[k]
            p = classical.rewards[i]
            jump = np.where(p > classical.continuation[i], 1.0 - eps, 0.0)
            v = jump * p + (1 - jump) * v
    return float(v.reshape(-1)[0])


def jump_deviation(classical: LatticeSolution, lam: float, min_gap: float = 0.01) -> float:
    """max |Psi(gap/lam) - 1{gap > 0}| over date nodes with |P - V_+| >= min_gap."""
    ker = EntropyKernel(lam)
    worst = 0.0
    for i in range(len(classical.schedule.dates)):
        gap = classical.rewards[i] - classical.continuation[i]
        sel = np.abs(gap) >= min_gap
        if np.any(sel):
            dev = np.abs(ker.hazard(gap[sel]) - (gap[sel] > 0))
            worst = max(worst, float(dev.max()))
    return worst


# ---------------------------------------------------------------------------
# Monte-Carlo backend


def td_hazards(solution, batch) -> HazardPath:
    """Hazard jumps along simulated paths from a fitted TD solution's continuation estimators."""
    sched = solution.schedule
    cont = np.column_stack([solution.continuation(i, batch.at(t)) for i, t in enumerate(sched.dates)])
    rew = np.column_stack([solution.reward.values(t, batch.at(t)) for t in sched.dates])
    return hazard_from_values(cont, rew, solution.lam)


def td_threshold_time(solution, batch) -> np.ndarray:
    sched = solution.schedule
    cont = np.column_stack([solution.continuation(i, batch.at(t)) for i, t in enumerate(sched.dates)])
    rew = np.column_stack([solution.reward.values(t, batch.at(t)) for t in sched.dates])
    return first_true(cont <= rew)


def mc_stopped_rewards(reward: RewardSpec, schedule: ExerciseSchedule, batch, idx) -> np.ndarray:
    table = np.column_stack([reward.values(t, batch.at(t)) for t in schedule.all_times])
    return table[np.arange(len(idx)), idx]
