import mpmath
import numpy as np
import pytest
import scipy.integrate

from soft_bermudan.entropy import gibbs_density_at, phi_prime
from soft_bermudan.errors import ConfigurationError, DomainError
from soft_bermudan.lattice import Lattice, policy_iteration_exact, solve_entropy, solve_game
from soft_bermudan.market import ExerciseSchedule, GbmModel, RewardSpec
from soft_bermudan.policy_iter import evaluation_driver, game_improve, improve, upper_driver
from soft_bermudan.td_solver import SolverConfig, adjusted_value, prepare_paths, solve

MODEL = GbmModel((100.0,), 0.05, 0.0, 0.1)
SCHED = ExerciseSchedule.uniform(4, 1.0)
PUT = RewardSpec("put", 100.0, 0.05)
CFG = SolverConfig(fit_surface=False)


@pytest.fixture(scope="module")
def shared_paths():
    return prepare_paths(MODEL, PUT, SCHED, CFG)


@pytest.fixture(scope="module")
def pi_state(shared_paths):
    return improve(MODEL, PUT, SCHED, 0.01, config=CFG, data=shared_paths)


def test_evaluation_driver_examples():
    mpmath.mp.dps = 40
    e = mpmath.e
    phi1 = mpmath.log(e - 1)
    dphi1 = (e - (e - 1)) / (e - 1)
    expect = float(0.5 * phi1 - mpmath.mpf("0.2") * dphi1)
    assert evaluation_driver(1.5, 1.0, 1.2, 0.5) == pytest.approx(expect, abs=1e-14)
    assert evaluation_driver(1.5, 1.0, 1.2, 0.5) == pytest.approx(0.15426, abs=1e-5)
    # stationary policy: the driver is the fixed-point driver
    c = np.linspace(0, 3, 13)
    np.testing.assert_allclose(evaluation_driver(1.7, c, c, 0.2) + c, adjusted_value(c, 1.7, 0.2), atol=1e-14)
    with pytest.raises(DomainError):
        evaluation_driver(1.0, 1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        upper_driver(1.0, 1.0, 1.0, -1.0)


@pytest.mark.parametrize("rate", [-5.0, 0.0, 2.0])
def test_gibbs_mean_term(rate):
    mean, _ = scipy.integrate.quad(lambda u: u * gibbs_density_at(rate, u), 0, 1, epsabs=1e-13, epsrel=1e-13)
    assert mean == pytest.approx(phi_prime(rate), abs=1e-8)


def test_iteration_zero_is_european(pi_state):
    assert pi_state.price_trace[0] == pytest.approx(1.928, abs=0.02)


def test_trace_matches_exact_policy_iteration(pi_state):
    exact = policy_iteration_exact(Lattice.crr(MODEL, 1.0, 500), PUT, SCHED, 0.01, 5)
    for got, ref in zip(pi_state.price_trace, exact):
        assert abs(got - ref.value_at_origin) <= 0.03


def test_monotone_and_flat(pi_state):
    tr, se = pi_state.price_trace, pi_state.standard_errors
    assert len(tr) == SCHED.N + 3
    for n in range(1, len(tr) - 1):
        assert tr[n + 1] >= tr[n] - 2 * se[n + 1]
    for k in range(SCHED.N, len(tr)):
        assert abs(tr[k] - tr[k - 1]) <= 2 * se[k]


def test_agrees_with_td_solver(pi_state, shared_paths):
    td = solve(MODEL, PUT, SCHED, 0.01, CFG, data=shared_paths)
    se = np.hypot(td.standard_error, pi_state.standard_errors[-1])
    assert abs(td.price_at_origin - pi_state.price_trace[-1]) <= 2 * se


def test_manifest_and_state(pi_state):
    m = pi_state.manifest()
    assert m["solver"] == "policy-iteration"
    assert m["iterations"] == SCHED.N + 2
    assert len(m["price_trace"]) == SCHED.N + 3
    assert len(pi_state.continuation_estimators) == 4
    assert len(pi_state.previous_continuations) == 4


def test_iteration_budget_validation():
    with pytest.raises(ConfigurationError):
        improve(MODEL, PUT, SCHED, 0.01, iterations=0, config=SolverConfig(paths=512))
    with pytest.raises(DomainError):
        improve(MODEL, PUT, SCHED, 0.0, config=SolverConfig(paths=512))


def test_game_symmetric_fixed_point():
    def low(t, s):
        return np.full(s.shape[:-1], 2.0 if t >= 1.0 else 1.0)

    def up(t, s):
        return np.full(s.shape[:-1], 2.0 if t >= 1.0 else 3.0)

    lower = RewardSpec("custom-table", table=low)
    upper = RewardSpec("custom-table", table=up)
    st = game_improve(MODEL, lower, upper, SCHED, 0.3, config=SolverConfig(paths=2048, fit_surface=False))
    assert len(st.price_trace) == SCHED.N + 4
    np.testing.assert_allclose(st.price_trace, 2.0, atol=1e-6)
    np.testing.assert_allclose(st.intermediate_trace, 2.0, atol=1e-6)


def test_game_with_distant_upper_matches_lattice_game(shared_paths):
    # with lam > 0 a distant barrier still contributes lam ln((R - c)/lam) per date,
    # so the reference is the lattice game with the same barrier, not the Bermudan value
    upper = PUT.with_premium(1e4, 1.0)
    lat = Lattice.crr(MODEL, 1.0, 500)
    ref = solve_game(lat, PUT, upper, SCHED, 0.01).value_at_origin
    berm = solve_entropy(lat, PUT, SCHED, 0.01).value_at_origin
    drift = sum(0.01 * np.log(1e4 * np.exp(-0.05 * t) / 0.01) for t in SCHED.dates)
    # the shift also raises continuations and so delays the holder, hence only a bracket
    assert 0.5 * drift < ref - berm <= drift
    st = game_improve(MODEL, PUT, upper, SCHED, 0.01, iterations=SCHED.N + 2, config=CFG, data=shared_paths)
    assert abs(st.price_trace[-1] - ref) <= 0.05


def test_game_rejects_bad_barrier():
    with pytest.raises(ConfigurationError):
        game_improve(MODEL, PUT, PUT, SCHED, 0.1, config=SolverConfig(paths=512))
