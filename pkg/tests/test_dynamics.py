import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from evospec import (ASYMPTOTIC, INFINITE, MEAN_LEARNING, REPLICATOR, OdeSpec, asymptotic_rhs,
                     ess_equilibrium, integrate, learning_potential, lyapunov_kl,
                     lyapunov_potential, mean_learning_rhs, mean_payoff_map, reference_network,
                     replicator_rhs, verify_descent)
from evospec.dynamics import poisson_binomial_pmf
from evospec.game import channel_payoffs

from .oracles import grab_float

simplex5 = arrays(np.float64, 5, elements=st.floats(0.02, 1.0)).map(lambda v: v / v.sum())


@given(simplex5, st.sampled_from([3, 20, 100000, INFINITE]))
def test_replicator_velocity_sums_to_zero(x, slots):
    v = replicator_rhs(x, reference_network(100, slots), 0.7)
    assert abs(v.sum()) < 1e-12


def test_asymptotic_matches_general_form_uniform(net_inf):
    x = np.full(5, 0.2)
    w = net_inf.weights
    ratio = w / x
    expected = 0.5 * (ratio / ratio.mean() - 1.0)
    np.testing.assert_allclose(asymptotic_rhs(x, net_inf, 0.5), expected)
    np.testing.assert_allclose(replicator_rhs(x, net_inf, 0.5), expected, atol=1e-14)


def test_replicator_zero_at_equilibrium(net_20):
    x = ess_equilibrium(net_20)
    assert np.abs(replicator_rhs(x, net_20)).max() < 1e-9


def test_poisson_binomial_against_binomial():
    from scipy.stats import binom

    pmf = poisson_binomial_pmf([0.3] * 12)
    np.testing.assert_allclose(pmf, binom.pmf(np.arange(13), 12, 0.3), atol=1e-15)
    assert poisson_binomial_pmf([]).tolist() == [1.0]


def test_mean_payoff_modes_agree(rng):
    cfg = reference_network(5, 20)
    f = rng.dirichlet(np.ones(5), size=5)
    enum = mean_payoff_map(f, cfg, "enumerate")
    exact = mean_payoff_map(f, cfg, "exact")
    np.testing.assert_allclose(exact, enum, rtol=1e-12)
    mc = mean_payoff_map(f, cfg, "monte-carlo", n_samples=200000, rng=rng)
    np.testing.assert_allclose(mc, exact, rtol=0.02)
    with pytest.raises(ValueError):
        mean_payoff_map(f, cfg, "bogus")
    with pytest.raises(ValueError):
        mean_payoff_map(f[:4], cfg)


def test_mean_payoff_pure_profile_is_payoff():
    cfg = reference_network(4, 20)
    f = np.eye(5)[[1, 2, 4, 4]]
    Q = mean_payoff_map(f, cfg, "exact")
    assert Q[0, 1] == pytest.approx(40.0)
    assert Q[2, 4] == pytest.approx(80.0 * 19 / 40)
    assert Q[0, 4] == pytest.approx(80.0 * grab_float(3, 20))


def test_mean_learning_rhs_rows_sum_to_zero(rng):
    f = rng.dirichlet(np.ones(5), size=7)
    Q = rng.random((7, 5))
    v = mean_learning_rhs(f, Q)
    np.testing.assert_allclose(v.sum(axis=1), 0.0, atol=1e-15)


@settings(max_examples=25)
@given(st.integers(0, 2 ** 31), st.sampled_from([3, 20, INFINITE]))
def test_learning_potential_is_exact_potential(seed, slots):
    # moving all of user n's mass from channel a to b changes the potential by (Q_b - Q_a) / N
    rng = np.random.default_rng(seed)
    cfg = reference_network(6, slots)
    f = rng.dirichlet(np.ones(5), size=6)
    n, a, b = 2, 0, 3
    pa, pb = f.copy(), f.copy()
    pa[n] = np.eye(5)[a]
    pb[n] = np.eye(5)[b]
    Q = mean_payoff_map(f, cfg, "exact")
    diff = learning_potential(pb, cfg) - learning_potential(pa, cfg)
    assert diff == pytest.approx((Q[n, b] - Q[n, a]) / 6, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("slots", [3, 20, 100000, INFINITE])
def test_exact_potential_matches_quadrature(slots):
    cfg = reference_network(50, slots)
    rng = np.random.default_rng(4)
    for x in rng.dirichlet(np.ones(5), size=4):
        exact = lyapunov_potential(x, cfg, "exact")
        ref = 0.0
        for w, xm in zip(cfg.weights, x):
            ref += w * min(xm, 1 / 50)
            if xm > 1 / 50:
                ref += w * quad(lambda z: grab_float(50 * z, slots), 1 / 50, xm, epsrel=1e-11)[0]
        assert exact == pytest.approx(ref, rel=1e-9)
        assert lyapunov_potential(x, cfg, "quad") == pytest.approx(ref, rel=1e-9)


def test_potential_gradient_is_payoff(net_20):
    x = np.array([0.1, 0.2, 0.3, 0.15, 0.25])
    h = 1e-7
    for m in range(5):
        e = np.zeros(5)
        e[m] = h
        grad = (lyapunov_potential(x + e, net_20, "exact") - lyapunov_potential(x - e, net_20, "exact")) / (2 * h)
        assert grad == pytest.approx(channel_payoffs(x, net_20)[m], rel=1e-6)


@given(simplex5)
def test_potential_maximized_at_equilibrium(x):
    cfg = reference_network(100, 20)
    xs = ess_equilibrium(cfg)
    assert lyapunov_potential(x, cfg, "exact") <= lyapunov_potential(xs, cfg, "exact") + 1e-12


@given(simplex5)
def test_kl_nonnegative(x):
    xs = np.array([1, 4, 5, 1, 8]) / 19
    assert lyapunov_kl(x, xs) >= -1e-15
    assert lyapunov_kl(xs, xs) == pytest.approx(0.0, abs=1e-15)


def test_kl_rejects_boundary():
    with pytest.raises(ValueError):
        lyapunov_kl([0.0, 0.5, 0.5, 0.0, 0.0], np.full(5, 0.2))


def test_ode_spec_validation():
    with pytest.raises(ValueError):
        OdeSpec("logit", np.full(5, 0.2))
    with pytest.raises(ValueError):
        OdeSpec(REPLICATOR, np.full(5, 0.2), step=0.0)
    with pytest.raises(ValueError):
        integrate(OdeSpec(REPLICATOR, np.array([0.5, 0.6, 0, 0, 0])), reference_network(10, 20))


@pytest.mark.parametrize("kind,slots,lyap", [(REPLICATOR, 20, "potential"),
                                             (REPLICATOR, INFINITE, "potential"),
                                             (ASYMPTOTIC, INFINITE, "kl")])
def test_ode_converges_with_descent(kind, slots, lyap):
    cfg = reference_network(100, slots)
    starts = np.random.default_rng(0).dirichlet(np.ones(5), size=10)
    traj = integrate(OdeSpec(kind, starts, step=0.01, horizon=40), cfg)
    xs = ess_equilibrium(cfg)
    assert np.abs(traj.final - xs).max() < 1e-6
    np.testing.assert_allclose(traj.states.sum(axis=-1), 1.0, atol=1e-12)
    for b in range(10):
        one = type(traj)(traj.times, traj.states[:, b], traj.kind)
        report = verify_descent(one, lyap, cfg)
        assert report.violations == 0


def test_mean_learning_ode_raises_potential():
    cfg = reference_network(4, 20)
    f0 = np.random.default_rng(2).dirichlet(np.ones(5), size=4)
    traj = integrate(OdeSpec(MEAN_LEARNING, f0, step=0.02, horizon=4, record_every=5), cfg)
    assert traj.states.shape[1:] == (4, 5)
    np.testing.assert_allclose(traj.states.sum(axis=-1), 1.0, atol=1e-12)
    report = verify_descent(traj, "learning-potential", cfg)
    assert report.violations == 0
    assert report.values[-1] < report.values[0]


def test_verify_descent_detects_increase(net_inf):
    from evospec import Trajectory

    xs = ess_equilibrium(net_inf)
    away = np.full(5, 0.2)
    bad = Trajectory(np.arange(3.0), np.stack([xs, away, xs]), REPLICATOR)
    rep = verify_descent(bad, "potential", net_inf)
    assert rep.violations == 1 and rep.max_increase > 0
    with pytest.raises(ValueError):
        verify_descent(bad, "energy", net_inf)
