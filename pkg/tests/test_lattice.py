import numpy as np
import pytest
from scipy.stats import norm

from soft_bermudan.entropy import phi
from soft_bermudan.errors import ConfigurationError, DomainError
from soft_bermudan.lattice import (
    Lattice, bounded_reward_bound, dual_bound_exact, entropy_error_bound, game_error_bound,
    game_policy_iteration_exact, martingale_deviation_report, policy_iteration_exact,
    solve_classical, solve_entropy, solve_european, solve_game)
from soft_bermudan.market import ExerciseSchedule, GbmModel, RewardSpec

MODEL = GbmModel((100.0,), 0.05, 0.0, 0.1)
SCHED = ExerciseSchedule.uniform(4, 1.0)
PUT = RewardSpec("put", 100.0, 0.05)


@pytest.fixture(scope="module")
def lat200():
    return Lattice.crr(MODEL, 1.0, 200)


def two_node(p0, up, down):
    """One-step tree with equiprobable moves and a table reward."""
    lat = Lattice(1, 1.0, (1.0,), 2.0, 0.5, 0.5)

    def table(t, s):
        if t == 0:
            return np.full(s.shape[:-1], p0)
        return np.where(s[..., 0] > 1, up, down)

    return lat, RewardSpec("custom-table", table=table), ExerciseSchedule((0.0,), 1.0)


def bs_put(s, k, r, sigma, t):
    d1 = (np.log(s / k) + (r + 0.5 * sigma**2) * t) / (sigma * np.sqrt(t))
    d2 = d1 - sigma * np.sqrt(t)
    return k * np.exp(-r * t) * norm.cdf(-d2) - s * norm.cdf(-d1)


def test_lattice_construction():
    lat = Lattice.crr(MODEL, 1.0, 8)
    assert 0 < lat.risk_neutral_prob < 1
    assert lat.schedule_levels(SCHED) == [0, 2, 4, 6]
    with pytest.raises(ConfigurationError):
        Lattice.crr(MODEL, 1.0, 6).schedule_levels(SCHED)
    with pytest.raises(ConfigurationError):
        Lattice.crr(GbmModel.symmetric(100, 2, 0.05, 0, 0.2, 0.3), 1.0, 8)


def test_two_node_examples():
    lat, reward, sched = two_node(1.5, 2.0, 0.0)
    assert solve_classical(lat, reward, sched).value_at_origin == 1.5
    ent = solve_entropy(lat, reward, sched, 0.5)
    assert ent.value_at_origin == pytest.approx(1 + 0.5 * phi(1.0), abs=1e-15)
    assert ent.value_at_origin == pytest.approx(1.27066, abs=1e-5)
    with pytest.raises(DomainError):
        solve_entropy(lat, reward, sched, 0.0)


def test_european_matches_black_scholes():
    lat = Lattice.crr(MODEL, 1.0, 2000)
    sol = solve_european(lat, PUT, SCHED)
    assert sol.value_at_origin == pytest.approx(bs_put(100, 100, 0.05, 0.1, 1.0), abs=2e-3)
    assert sol.value_at_origin == pytest.approx(1.928, abs=2e-3)
    # a schedule with only t_0 = 0 and an at-the-money put is European
    only0 = ExerciseSchedule((0.0,), 1.0)
    assert solve_classical(lat, PUT, only0).value_at_origin == pytest.approx(sol.value_at_origin, abs=1e-12)


def test_classical_table_one_value():
    lat = Lattice.crr(MODEL, 1.0, 500)
    sol = solve_classical(lat, PUT, SCHED)
    assert sol.value_at_origin == pytest.approx(2.311, abs=0.01)
    for i in range(4):
        assert np.all(sol.date_value(i) >= sol.rewards[i] - 1e-15)


def test_entropy_below_classical_and_hazard_range(lat200):
    cl = solve_classical(lat200, PUT, SCHED)
    prev = -np.inf
    for lam in (1e3, 0.5, 0.1, 0.01, 0.001):
        ent = solve_entropy(lat200, PUT, SCHED, lam)
        for k in range(lat200.steps + 1):
            assert np.all(ent.values[k] <= cl.values[k] + 1e-12)
        for i in range(4):
            assert np.all((ent.hazard[i] >= 0) & (ent.hazard[i] < 1))
        assert ent.value_at_origin > prev
        prev = ent.value_at_origin


@pytest.mark.parametrize("lam", [0.5, 0.1, 0.01, 0.001])
def test_error_bound_theorem(lat200, lam):
    cl = solve_classical(lat200, PUT, SCHED)
    ent = solve_entropy(lat200, PUT, SCHED, lam)
    gap = cl.value_at_origin - ent.value_at_origin
    assert 0 <= gap <= entropy_error_bound(cl, lam).item()


@pytest.mark.parametrize("lam", [0.5, 0.1, 0.01, 0.001])
def test_bounded_payoff_corollary(lat200, lam):
    capped = RewardSpec("put", 100.0, 0.05, cap=8.0)
    cl = solve_classical(lat200, capped, SCHED)
    ent = solve_entropy(lat200, capped, SCHED, lam)
    sup_gap = max(float(np.max(cl.values[k] - ent.values[k])) for k in range(lat200.steps + 1))
    assert sup_gap <= bounded_reward_bound(capped, SCHED, lam)


def test_bounded_bound_needs_bounded_reward():
    with pytest.raises(ConfigurationError):
        bounded_reward_bound(RewardSpec("max_call", 100.0, 0.05), SCHED, 0.1)


def test_martingale_telescoping(lat200):
    lam = 0.01
    ent = solve_entropy(lat200, PUT, SCHED, lam)
    levels = ent.levels
    rng = np.random.default_rng(0)
    incs = ent.martingale_increments
    jumps = {k: ent.jump(i) for i, k in enumerate(levels)}
    for _ in range(200):
        moves = rng.integers(0, 2, lat200.steps)
        j, total, jump_sum = 0, 0.0, 0.0
        for k in range(lat200.steps):
            if k in jumps:
                jump_sum += jumps[k][j]
            total += incs[k][moves[k], j]
            j += moves[k]
        v_t = ent.values[lat200.steps][j]
        assert total == pytest.approx(v_t - ent.value_at_origin + jump_sum, abs=1e-10)


def test_dual_bound_exact_examples(lat200):
    cl = solve_classical(lat200, PUT, SCHED)
    v0 = cl.value_at_origin
    assert dual_bound_exact(cl) == pytest.approx(v0, abs=1e-10)
    ent = solve_entropy(lat200, PUT, SCHED, 0.001)
    rep = martingale_deviation_report(cl, ent)
    u = dual_bound_exact(ent)
    assert u == pytest.approx(rep.dual_value, abs=1e-10)
    assert v0 - 1e-12 <= u <= v0 + rep.dual_bound
    zero = dual_bound_exact(cl, PUT, martingale="zero")
    assert zero >= v0


def test_policy_iteration_exact(lat200):
    lam = 0.01
    ent = solve_entropy(lat200, PUT, SCHED, lam)
    seq = policy_iteration_exact(lat200, PUT, SCHED, lam, 6)
    assert seq[0].value_at_origin == pytest.approx(solve_european(lat200, PUT, SCHED).value_at_origin, abs=1e-14)
    for n in range(SCHED.N, 7):
        for k in range(lat200.steps + 1):
            np.testing.assert_allclose(seq[n].values[k], ent.values[k], rtol=0, atol=1e-12)
    for n in range(1, 6):
        for k in range(lat200.steps + 1):
            assert np.all(seq[n + 1].values[k] >= seq[n].values[k] - 1e-12)


@pytest.mark.parametrize("dates", [(0.0, 0.5), (0.0, 0.25, 0.5, 0.75)])
def test_policy_iteration_continuations_exact_from_n_equal_remaining_count_minus_one(dates):
    sched = ExerciseSchedule(dates, 1.0)
    lat = Lattice.crr(MODEL, 1.0, 100)
    ent = solve_entropy(lat, PUT, sched, 0.05)
    seq = policy_iteration_exact(lat, PUT, sched, 0.05, sched.N + 2)
    for i in range(sched.N + 1):
        first = sched.remaining_count_after(i) - 1
        for n in range(first, sched.N + 3):
            np.testing.assert_allclose(seq[n].continuation[i], ent.continuation[i], rtol=0, atol=1e-12)
    # with one interior date a single improvement step fixes V_{0+}
    if sched.N == 1:
        np.testing.assert_allclose(seq[1].continuation[0], ent.continuation[0], rtol=0, atol=1e-12)
    assert seq[sched.N + 1].value_at_origin == pytest.approx(ent.value_at_origin, abs=1e-12)


def test_game_symmetric_example():
    lat = Lattice(1, 1.0, (1.0,), 2.0, 0.5, 0.5)

    def low(t, s):
        return np.full(s.shape[:-1], 1.0) if t == 0 else np.where(s[..., 0] > 1, 3.0, 1.0)

    def up(t, s):
        return np.full(s.shape[:-1], 3.0) if t == 0 else np.where(s[..., 0] > 1, 3.0, 1.0)

    lower = RewardSpec("custom-table", table=low)
    upper = RewardSpec("custom-table", table=up)
    sched = ExerciseSchedule((0.0,), 1.0)
    for lam in (0.0, 0.01, 0.5, 5.0):
        assert solve_game(lat, lower, upper, sched, lam).value_at_origin == pytest.approx(2.0, abs=1e-14)
    seq = game_policy_iteration_exact(lat, lower, upper, sched, 0.3, 3)
    for s in seq:
        assert s.value_at_origin == pytest.approx(2.0, abs=1e-14)


def test_game_inactive_upper_reduces_to_classical(lat200):
    upper = PUT.with_premium(1e6, 1.0)
    g = solve_game(lat200, PUT, upper, SCHED, 0.0)
    cl = solve_classical(lat200, PUT, SCHED)
    assert g.value_at_origin == pytest.approx(cl.value_at_origin, abs=1e-12)


def test_game_rejects_bad_barriers(lat200):
    with pytest.raises(ConfigurationError):
        solve_game(lat200, PUT, PUT, SCHED, 0.1)


@pytest.mark.parametrize("lam", [0.1, 0.01, 0.001])
def test_game_error_bound(lat200, lam):
    upper = PUT.with_premium(2.0, 1.0)
    g0 = solve_game(lat200, PUT, upper, SCHED, 0.0)
    gl = solve_game(lat200, PUT, upper, SCHED, lam)
    cl2 = solve_classical(lat200, upper.scaled(2.0), SCHED)
    assert abs(gl.value_at_origin - g0.value_at_origin) <= game_error_bound(cl2, lam).item()


def test_game_policy_iteration_converges(lat200):
    upper = PUT.with_premium(2.0, 1.0)
    lam = 0.01
    g = solve_game(lat200, PUT, upper, SCHED, lam)
    seq = game_policy_iteration_exact(lat200, PUT, upper, SCHED, lam, SCHED.N + 3)
    for n in range(SCHED.N + 1, SCHED.N + 4):
        diag = seq[2 * n]
        assert diag.label == f"{n},{n}"
        for k in range(lat200.steps + 1):
            np.testing.assert_allclose(diag.values[k], g.values[k], rtol=0, atol=1e-12)


def test_game_sign_pattern_from_second_iteration(lat200):
    # both inequalities hold node-wise once n >= 2; see the acceptance suite for n = 0, 1
    upper = PUT.with_premium(2.0, 1.0)
    seq = game_policy_iteration_exact(lat200, PUT, upper, SCHED, 0.1, SCHED.N + 3)
    for n in range(2, SCHED.N + 3):
        diag, mid, nxt = seq[2 * n], seq[2 * n + 1], seq[2 * n + 2]
        for k in range(lat200.steps + 1):
            assert np.all(nxt.values[k] - mid.values[k] >= -1e-12)
            assert np.all(diag.values[k] - mid.values[k] >= -1e-12)


@pytest.mark.parametrize("lam", [0.1, 0.01])
def test_martingale_deviation_lemma(lat200, lam):
    cl = solve_classical(lat200, PUT, SCHED)
    rep = martingale_deviation_report(cl, solve_entropy(lat200, PUT, SCHED, lam))
    assert rep.holds
    assert rep.dual_value <= cl.value_at_origin + rep.dual_bound


def test_two_dimensional_product_tree():
    m = GbmModel.symmetric(100.0, 2, 0.05, 0.1, 0.2)
    sched = ExerciseSchedule.uniform(9, 3.0)
    lat = Lattice.crr(m, 3.0, 90)
    call = RewardSpec("max_call", 100.0, 0.05)
    cl = solve_classical(lat, call, sched)
    vals = [solve_entropy(lat, call, sched, lam).value_at_origin for lam in (0.1, 0.01, 0.001)]
    assert vals[0] < vals[1] < vals[2] < cl.value_at_origin
    # coarse tree, so only a loose check against the published benchmark 13.899
    assert cl.value_at_origin == pytest.approx(13.9, abs=0.15)
