"""Recombining-tree oracle: exact classical, entropy-regularised and game values.

Node (j_1, .., j_d) at level k holds x_a = x0_a u^{k - j_a} d^{j_a}, so j_a counts
down-moves. Axes are independent, which makes the d = 2 tree the tensor product
of two binomial trees. All rewards are discounted, so conditional expectations
are plain probability-weighted averages.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import binom

from .entropy import ENVELOPE_CONST, EntropyKernel, error_scale
from .errors import ConfigurationError, DomainError
from .market import ExerciseSchedule, GbmModel, RewardSpec

MAX_PATH_STATES = 30_000_000


@dataclass(frozen=True)
class Lattice:
    steps: int
    maturity: float
    initial: tuple
    up_factor: float
    down_factor: float
    risk_neutral_prob: float

    def __post_init__(self):
        object.__setattr__(self, "initial", tuple(float(v) for v in np.atleast_1d(self.initial)))
        if self.steps < 1:
            raise ConfigurationError("lattice needs at least one step")
        if not 0 < self.risk_neutral_prob < 1:
            raise ConfigurationError(f"risk-neutral probability {self.risk_neutral_prob} outside (0, 1)")
        if self.dimension > 2:
            raise ConfigurationError("trees are limited to d <= 2")

    @classmethod
    def crr(cls, model: GbmModel, maturity: float, steps: int) -> "Lattice":
        """Cox-Ross-Rubinstein tree: u = e^{sigma sqrt(dt)}, d = 1/u."""
        if model.dimension > 1 and model.correlation != 0:
            raise ConfigurationError("the product tree needs independent assets (correlation 0)")
        dt = maturity / steps
        u = float(np.exp(model.volatility * np.sqrt(dt)))
        d = 1.0 / u
        p = (np.exp((model.rate - model.dividend) * dt) - d) / (u - d)
        return cls(steps, maturity, model.initial, u, d, float(p))

    @property
    def dimension(self) -> int:
        return len(self.initial)

    @property
    def dt(self) -> float:
        return self.maturity / self.steps

    def time_of(self, level: int) -> float:
        return level * self.dt

    def level_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, self.maturity):
            raise ConfigurationError(f"time {t} does not fall on a tree level (dt = {self.dt})")
        return k

    def schedule_levels(self, schedule: ExerciseSchedule) -> list:
        if abs(schedule.maturity - self.maturity) > 1e-12:
            raise ConfigurationError("schedule maturity differs from the lattice maturity")
        return [self.level_of(t) for t in schedule.dates]

    def node_states(self, level: int) -> np.ndarray:
        """Asset values at a level, shaped (level+1,)*d + (d,)."""
        j = np.arange(level + 1)
        axis = self.up_factor ** (level - j) * self.down_factor**j
        grids = np.meshgrid(*[x0 * axis for x0 in self.initial], indexing="ij")
        return np.stack(grids, axis=-1)

    def expect(self, v: np.ndarray, batch_dims: int = 0) -> np.ndarray:
        """One-step conditional expectation of next-level values (trailing d axes)."""
        p, q = self.risk_neutral_prob, 1.0 - self.risk_neutral_prob
        for a in range(batch_dims, v.ndim):
            lo = [slice(None)] * v.ndim
            hi = [slice(None)] * v.ndim
            lo[a] = slice(None, -1)
            hi[a] = slice(1, None)
            v = p * v[tuple(lo)] + q * v[tuple(hi)]
        return v

    def expect_back(self, v: np.ndarray, from_level: int, to_level: int) -> np.ndarray:
        for _ in range(from_level - to_level):
            v = self.expect(v)
        return v

    def transition(self, from_level: int, to_level: int):
        """Offsets (one array per axis) and probabilities from a node at one level to the next."""
        s = to_level - from_level
        m = np.arange(s + 1)
        w = binom.pmf(m, s, 1.0 - self.risk_neutral_prob)
        grids = np.meshgrid(*([m] * self.dimension), indexing="ij")
        weights = np.ones_like(grids[0], dtype=float)
        for g in grids:
            weights = weights * w[g]
        return [g.ravel() for g in grids], weights.ravel()


@dataclass
class LatticeSolution:
    """Per-level node values on a tree.

    values[k] is the value at level k; at an exercise level it is the value at
    the date t_i (after the jump), while continuation[i] holds V_{t_i+}.
    """

    lattice: Lattice
    schedule: ExerciseSchedule
    kind: str
    lam: float
    values: list
    continuation: dict
    rewards: dict
    hazard: dict = field(default_factory=dict)
    upper_hazard: dict = field(default_factory=dict)
    label: str = ""

    @property
    def value_at_origin(self) -> float:
        return float(self.values[0].reshape(-1)[0])

    @property
    def levels(self) -> list:
        return self.lattice.schedule_levels(self.schedule)

    def date_value(self, i: int) -> np.ndarray:
        return self.values[self.levels[i]]

    def jump(self, i: int) -> np.ndarray:
        """V_{t_i} - V_{t_i+}: the amount the value process drops across t_i going forward."""
        return self.date_value(i) - self.continuation[i]

    def increments_at(self, level: int) -> np.ndarray:
        """Martingale increments on the edges leaving ``level``: shape (2^d, nodes...)."""
        nxt = self.values[level + 1]
        mean = self.lattice.expect(nxt)
        d = self.lattice.dimension
        out = []
        for combo in np.ndindex(*(2,) * d):
            sl = tuple(slice(c, c + level + 1) for c in combo)
            out.append(nxt[sl] - mean)
        return np.stack(out)

    @property
    def martingale_increments(self) -> list:
        return [self.increments_at(k) for k in range(self.lattice.steps)]


def _rewards_at(lattice, reward, level):
    return reward.values(lattice.time_of(level), lattice.node_states(level))


def _backward(lattice: Lattice, schedule: ExerciseSchedule, terminal: np.ndarray,
              update: Callable, kind: str, lam: float, label: str = "") -> LatticeSolution:
    levels = lattice.schedule_levels(schedule)
    where = {lv: i for i, lv in enumerate(levels)}
    steps = lattice.steps
    values = [None] * (steps + 1)
    values[steps] = terminal
    cont = {}
    v = terminal
    for k in range(steps - 1, -1, -1):
        v = lattice.expect(v)
        if k in where:
            i = where[k]
            cont[i] = v
            v = update(i, k, v)
        values[k] = v
    return LatticeSolution(lattice, schedule, kind, lam, values, cont, {}, label=label)


def solve_european(lattice: Lattice, reward: RewardSpec, schedule: ExerciseSchedule) -> LatticeSolution:
    """E[P_T | F_t] on every node; no early exercise."""
    terminal = _rewards_at(lattice, reward, lattice.steps)
    sol = _backward(lattice, schedule, terminal, lambda i, k, c: c, "european", 0.0)
    sol.rewards = {i: _rewards_at(lattice, reward, k) for i, k in enumerate(sol.levels)}
    return sol


def solve_classical(lattice: Lattice, reward: RewardSpec, schedule: ExerciseSchedule) -> LatticeSolution:
    """Snell envelope: V = max(P, continuation) at exercise levels; ties exercise."""
    rewards, hazard = {}, {}

    def update(i, k, c):
        p = _rewards_at(lattice, reward, k)
        rewards[i] = p
        hazard[i] = (p >= c).astype(float)
        return np.maximum(p, c)

    terminal = _rewards_at(lattice, reward, lattice.steps)
    sol = _backward(lattice, schedule, terminal, update, "classical", 0.0)
    sol.rewards, sol.hazard = rewards, hazard
    return sol


def solve_entropy(lattice: Lattice, reward: RewardSpec, schedule: ExerciseSchedule,
                  lam: float) -> LatticeSolution:
    """Regularised value: V = c + lam Phi((P - c)/lam) at exercise levels."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    ker = EntropyKernel(lam)
    rewards, hazard = {}, {}

    def update(i, k, c):
        p = _rewards_at(lattice, reward, k)
        rewards[i] = p
        hazard[i] = ker.hazard(p - c)
        return c + ker.driver(p - c)

    terminal = _rewards_at(lattice, reward, lattice.steps)
    sol = _backward(lattice, schedule, terminal, update, "entropy", lam)
    sol.rewards, sol.hazard = rewards, hazard
    return sol


def _check_game_rewards(lattice, lower, upper, schedule):
    for i, k in enumerate(lattice.schedule_levels(schedule)):
        p = _rewards_at(lattice, lower, k)
        r = _rewards_at(lattice, upper, k)
        if np.any(r <= p):
            raise ConfigurationError(f"upper reward must exceed lower reward at date index {i}")
    pt = _rewards_at(lattice, lower, lattice.steps)
    rt = _rewards_at(lattice, upper, lattice.steps)
    if not np.allclose(pt, rt, rtol=0, atol=1e-12):
        raise ConfigurationError("upper and lower rewards must coincide at maturity")


def solve_game(lattice: Lattice, lower: RewardSpec, upper: RewardSpec, schedule: ExerciseSchedule,
               lam: float) -> LatticeSolution:
    """Game value: V = c + lam Phi((P - c)/lam) - lam Phi((c - R)/lam); lam = 0 gives the clamp."""
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    _check_game_rewards(lattice, lower, upper, schedule)
    ker = EntropyKernel(lam)
    rewards, hazard, upper_hazard = {}, {}, {}

    def update(i, k, c):
        p = _rewards_at(lattice, lower, k)
        r = _rewards_at(lattice, upper, k)
        rewards[i] = p
        hazard[i] = ker.hazard(p - c)
        upper_hazard[i] = ker.hazard(c - r)
        return c + ker.driver(p - c) - ker.driver(c - r)

    terminal = _rewards_at(lattice, lower, lattice.steps)
    sol = _backward(lattice, schedule, terminal, update, "game", lam)
    sol.rewards, sol.hazard, sol.upper_hazard = rewards, hazard, upper_hazard
    return sol


def policy_iteration_exact(lattice: Lattice, reward: RewardSpec, schedule: ExerciseSchedule,
                           lam: float, iterations: int) -> list:
    """Iterates V^{lam,0}, .., V^{lam,K} of policy improvement, computed exactly.

    V^0 is the European value. Iterate n+1 uses the Gibbs policy of V^n and,
    at every date, the evaluation driver
        lam Phi((P - V^n_+)/lam) + (V^n_+ - V^{n+1}_+) Phi'((P - V^n_+)/lam).
    V^{n+1}_+ is already known when the date is reached, so the update is explicit.
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    if iterations < 1:
        raise ConfigurationError("iterations must be >= 1")
    ker = EntropyKernel(lam)
    out = [solve_european(lattice, reward, schedule)]
    out[0].label = "0"
    rewards = out[0].rewards
    for n in range(iterations):
        prev = out[-1].continuation
        hazard = {}

        def update(i, k, c, prev=prev, hazard=hazard):
            gap = rewards[i] - prev[i]
            hazard[i] = ker.hazard(gap)
            return c + evaluation_driver_array(gap, prev[i] - c, ker)

        terminal = out[0].values[lattice.steps]
        sol = _backward(lattice, schedule, terminal, update, "policy", lam, label=str(n + 1))
        sol.rewards, sol.hazard = rewards, hazard
        out.append(sol)
    return out


def evaluation_driver_array(gap, cont_drop, ker: EntropyKernel):
    """lam Phi(gap/lam) + cont_drop * Phi'(gap/lam)."""
    return ker.driver(gap) + cont_drop * ker.gibbs_mean(gap)


def game_policy_iteration_exact(lattice: Lattice, lower: RewardSpec, upper: RewardSpec,
                                schedule: ExerciseSchedule, lam: float, iterations: int) -> list:
    """Alternating scheme V^{0,0}, V^{0,1}, V^{1,1}, .., V^{K,K}, computed exactly.

    The maximiser's policy entering the first minimisation step is the Gibbs
    policy of V^{0,0} itself. Labels are "n,m".
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    if iterations < 1:
        raise ConfigurationError("iterations must be >= 1")
    _check_game_rewards(lattice, lower, upper, schedule)
    ker = EntropyKernel(lam)
    base = solve_european(lattice, lower, schedule)
    base.kind, base.label = "game-policy", "0,0"
    levels = base.levels
    lows = base.rewards
    ups = {i: _rewards_at(lattice, upper, k) for i, k in enumerate(levels)}
    terminal = base.values[lattice.steps]
    out = [base]
    diag_prev = base.continuation  # V^{n,n}_+
    max_pol = base.continuation  # V^{n-1,n}_+, whose Gibbs policy is pi^n
    for n in range(iterations):
        lh, uh = {}, {}

        def min_update(i, k, c, a=diag_prev, b=max_pol, lh=lh, uh=uh):
            g_gap = lows[i] - b[i]
            h_gap = a[i] - ups[i]
            lh[i] = ker.hazard(g_gap)
            uh[i] = ker.hazard(h_gap)
            g = ker.driver(g_gap) + (b[i] - a[i]) * ker.gibbs_mean(g_gap)
            h = ker.driver(h_gap) + (c - a[i]) * ker.gibbs_mean(h_gap)
            return c + g - h

        mid = _backward(lattice, schedule, terminal, min_update, "game-policy", lam, label=f"{n},{n + 1}")
        mid.rewards, mid.hazard, mid.upper_hazard = lows, lh, uh
        out.append(mid)
        lh2, uh2 = {}, {}

        def max_update(i, k, c, a=diag_prev, e=mid.continuation, lh=lh2, uh=uh2):
            g_gap = lows[i] - e[i]
            h_gap = a[i] - ups[i]
            lh[i] = ker.hazard(g_gap)
            uh[i] = ker.hazard(h_gap)
            g = ker.driver(g_gap) + (e[i] - c) * ker.gibbs_mean(g_gap)
            h = ker.driver(h_gap) + (e[i] - a[i]) * ker.gibbs_mean(h_gap)
            return c + g - h

        diag = _backward(lattice, schedule, terminal, max_update, "game-policy", lam, label=f"{n + 1},{n + 1}")
        diag.rewards, diag.hazard, diag.upper_hazard = lows, lh2, uh2
        out.append(diag)
        max_pol = mid.continuation
        diag_prev = diag.continuation
    return out


# ---------------------------------------------------------------------------
# error-bound constants


def expected_log_running_max(solution: LatticeSolution, start: int) -> np.ndarray:
    """E[ln(max_{j >= start} V_{t_j} v 1) | node at t_start], one value per node.

    The running maximum is path dependent; its law is recovered exactly from
    the survival probabilities P(all ln(V_{t_j} v 1) < y) at every breakpoint y.
    For start = N+1 (no remaining dates) the result is 0.
    """
    lat = solution.lattice
    levels = solution.levels
    n_dates = len(levels)
    if start >= n_dates:
        return np.zeros(())
    logs = [np.log(np.maximum(solution.date_value(j), 1.0)) for j in range(start, n_dates)]
    ys = np.unique(np.concatenate([a.ravel() for a in logs]))
    ys = ys[ys > 0]
    shape = logs[0].shape
    if ys.size == 0:
        return np.zeros(shape)
    widths = np.diff(np.concatenate([[0.0], ys]))
    total = np.zeros(shape)
    chunk = max(1, 2_000_000 // max(1, logs[-1].size))
    for s in range(0, ys.size, chunk):
        y = ys[s:s + chunk]
        yb = y.reshape((-1,) + (1,) * logs[0].ndim)
        q = (logs[-1][None] < yb).astype(float)
        for j in range(n_dates - 2, start - 1, -1):
            for _ in range(levels[j + 1] - levels[j]):
                q = lat.expect(q, batch_dims=1)
            q = q * (logs[j - start][None] < yb)
        total += np.tensordot(widths[s:s + chunk], 1.0 - q, axes=1)
    return total


def entropy_error_bound(classical: LatticeSolution, lam: float, i: int = 0) -> np.ndarray:
    """Node-wise bound on V - V^lam at date t_i:
    N(t_i) (1 - ln(1 - e^{-1}) + E[ln(max_{j >= i} V_{t_j} v 1) | F_{t_i}]) (lam - lam ln lam).
    """
    n_t = classical.schedule.remaining_count(classical.schedule.dates[i])
    return n_t * (ENVELOPE_CONST + expected_log_running_max(classical, i)) * error_scale(lam)


def bounded_reward_bound(reward: RewardSpec, schedule: ExerciseSchedule, lam: float) -> float:
    """(N+1)(1.5 + ln(|P|_inf v 1))(lam - lam ln lam) for bounded rewards."""
    sup = reward.sup_norm_bound()
    if not np.isfinite(sup):
        raise ConfigurationError("reward is not known to be bounded")
    return (schedule.N + 1) * (1.5 + np.log(max(sup, 1.0))) * error_scale(lam)


def game_error_bound(classical_double_upper: LatticeSolution, lam: float, i: int = 0) -> np.ndarray:
    """Bound on |V^lam - V| for the game, from the classical value of the reward 2R."""
    return entropy_error_bound(classical_double_upper, lam, i)


# ---------------------------------------------------------------------------
# path enumeration over exercise dates


def _expand(lat: Lattice, idx: tuple, prob: np.ndarray, from_level: int, to_level: int):
    offsets, weights = lat.transition(from_level, to_level)
    n_states, n_off = prob.size, weights.size
    if n_states * n_off > MAX_PATH_STATES:
        raise ConfigurationError(
            f"exact path enumeration needs {n_states * n_off} states; use a coarser tree"
        )
    parent = np.repeat(np.arange(n_states), n_off)
    new_idx = tuple(np.repeat(a, n_off) + np.tile(o, n_states) for a, o in zip(idx, offsets))
    new_prob = np.repeat(prob, n_off) * np.tile(weights, n_states)
    return new_idx, new_prob, parent


def _schedule_paths(lat: Lattice, levels: list):
    """Yield (date index, node index tuple, path probability, parent pointer) per date."""
    idx = tuple(np.zeros(1, dtype=np.int64) for _ in range(lat.dimension))
    prob = np.ones(1)
    yield 0, idx, prob, np.zeros(1, dtype=np.int64)
    for j in range(1, len(levels)):
        idx, prob, parent = _expand(lat, idx, prob, levels[j - 1], levels[j])
        yield j, idx, prob, parent


def _terminal_expectation(lat: Lattice, idx: tuple, from_level: int, fn: Callable) -> np.ndarray:
    """E[fn(state, P_T-level node values) | node at from_level], chunked over states."""
    offsets, weights = lat.transition(from_level, lat.steps)
    n = idx[0].size
    out = np.empty(n)
    chunk = max(1, 4_000_000 // weights.size)
    for s in range(0, n, chunk):
        sub = tuple(a[s:s + chunk, None] + o[None, :] for a, o in zip(idx, offsets))
        out[s:s + chunk] = fn(slice(s, s + chunk), sub) @ weights
    return out


def dual_bound_exact(solution: LatticeSolution, reward: RewardSpec | None = None,
                     martingale: str = "solution") -> float:
    """E[max over t_0..t_N, T of (P - M)] + M_0 with M_0 = 0, computed exactly.

    ``martingale='solution'`` uses the martingale part of the solution's value
    process, M_t = V_t - V_0 + sum_{t_i < t} (V_{t_i} - V_{t_i+});
    ``martingale='zero'`` uses M = 0.
    """
    if martingale not in ("solution", "zero"):
        raise ConfigurationError("martingale must be 'solution' or 'zero'")
    lat = solution.lattice
    levels = solution.levels
    v0 = solution.value_at_origin
    running = cum = None
    for j, idx, prob, parent in _schedule_paths(lat, levels):
        p = solution.rewards[j][idx]
        if martingale == "zero":
            z = p
        else:
            prev_cum = np.zeros(1) if cum is None else cum[parent]
            z = p - (solution.date_value(j)[idx] - v0 + prev_cum)
            cum = prev_cum + solution.jump(j)[idx]
        running = z if running is None else np.maximum(running[parent], z)
        last = (idx, prob)
    idx, prob = last
    if martingale == "zero":
        if reward is not None:
            p_t = _rewards_at(lat, reward, lat.steps)
        else:
            p_t = solution.values[lat.steps]
        exp_max = _terminal_expectation(
            lat, idx, levels[-1], lambda sl, sub: np.maximum(running[sl, None], p_t[sub]))
        return float(prob @ exp_max)
    z_t = v0 - cum
    return float(prob @ np.maximum(running, z_t))


def _log_running_max_tables(classical: LatticeSolution):
    """Per date i: W_i = E[ln(V-bar_{t_i,T} v 1) | F_{t_i}] and its conditional mean at t_{i-1}."""
    lat = classical.lattice
    levels = classical.levels
    n_dates = len(levels)
    w = [expected_log_running_max(classical, i) for i in range(n_dates)]
    # E[W_{i+1} | F_{t_i}], with W_{N+1} = 0
    w_next = []
    for i in range(n_dates):
        if i + 1 < n_dates:
            w_next.append(lat.expect_back(w[i + 1], levels[i + 1], levels[i]))
        else:
            w_next.append(np.zeros_like(w[i]))
    return w, w_next


@dataclass
class MartingaleDeviationReport:
    """Exact comparison of |M^lam - M| with C^{P,V} (lam - lam ln lam) along all date paths."""

    times: list
    max_deviation: list
    min_slack: list
    dual_value: float
    dual_bound: float
    origin_constant: float
    expected_sup_constant: float

    @property
    def holds(self) -> bool:
        return all(s >= -1e-10 for s in self.min_slack)


def martingale_deviation_report(classical: LatticeSolution, entropy: LatticeSolution) -> MartingaleDeviationReport:
    """Check |M_t - M^lam_t| <= C_t (lam - lam ln lam) at every exercise date and at T.

    C_t is evaluated with the running maximum of [ln V]^+ over dates strictly
    before t. Also returns the exact dual value U^lam_0 and its bound
    (E[max_sigma C_sigma] + C_0)(lam - lam ln lam).
    """
    lam = entropy.lam
    sched = classical.schedule
    lat = classical.lattice
    levels = classical.levels
    n1 = sched.N + 1
    scale = error_scale(lam)
    kap = ENVELOPE_CONST
    w, w_next = _log_running_max_tables(classical)
    w0 = float(w[0].reshape(-1)[0])
    base_const = n1 * (kap + w0)
    dv0 = classical.value_at_origin - entropy.value_at_origin
    v0 = entropy.value_at_origin

    times, max_dev, min_slack = [], [], []
    cum_diff = past_sum = maxlog = run_c = None
    running_z = cum_lam = None
    for j, idx, prob, parent in _schedule_paths(lat, levels):
        if cum_diff is None:
            cum_diff, past_sum, maxlog = np.zeros(1), np.zeros(1), np.zeros(1)
            cum_lam = np.zeros(1)
        else:
            cum_diff, past_sum, maxlog = cum_diff[parent], past_sum[parent], maxlog[parent]
            cum_lam = cum_lam[parent]
        dv = classical.date_value(j)[idx] - entropy.date_value(j)[idx]
        lhs = np.abs(dv - dv0 + cum_diff)
        c_t = (sched.remaining_count(sched.dates[j]) * (kap + w[j][idx]) + base_const
               + n1 * (kap + maxlog) + past_sum)
        times.append(sched.dates[j])
        max_dev.append(float(lhs.max()))
        min_slack.append(float((c_t * scale - lhs).min()))
        run_c = c_t if run_c is None else np.maximum(run_c[parent], c_t)
        z = entropy.rewards[j][idx] - (entropy.date_value(j)[idx] - v0 + cum_lam)
        running_z = z if running_z is None else np.maximum(running_z[parent], z)
        # roll path accumulators past t_j
        cum_diff = cum_diff + classical.jump(j)[idx] - entropy.jump(j)[idx]
        cum_lam = cum_lam + entropy.jump(j)[idx]
        past_sum = past_sum + sched.remaining_count_after(j) * (kap + w_next[j][idx])
        maxlog = np.maximum(maxlog, np.log(np.maximum(classical.date_value(j)[idx], 1.0)))
        last_prob = prob
    lhs_t = np.abs(-dv0 + cum_diff)
    c_t = sched.remaining_count(sched.maturity) * kap + base_const + n1 * (kap + maxlog) + past_sum
    times.append(sched.maturity)
    max_dev.append(float(lhs_t.max()))
    min_slack.append(float((c_t * scale - lhs_t).min()))
    run_c = np.maximum(run_c, c_t)
    dual = float(last_prob @ np.maximum(running_z, v0 - cum_lam))
    c0 = sched.remaining_count(0.0) * (kap + w0) + base_const + n1 * kap
    exp_sup = float(last_prob @ run_c)
    return MartingaleDeviationReport(times, max_dev, min_slack, dual, (exp_sup + c0) * scale, c0, exp_sup)
