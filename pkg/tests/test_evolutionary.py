import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evospec import (INFINITE, EvolutionConfig, MutationEvent, apply_mutation, evolution_step,
                     expected_drift, is_strict_nash, reference_network, run_evolutionary)
from evospec.evolutionary import n_mutants, switch_probabilities
from evospec.game import channel_payoffs, empirical_state


def _assignment(counts):
    return np.repeat(np.arange(len(counts)), counts)


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(adaptation_factor=0.0)
    with pytest.raises(ValueError):
        EvolutionConfig(adaptation_factor=1.5)
    with pytest.raises(ValueError):
        EvolutionConfig(slots=0)
    with pytest.raises(ValueError):
        MutationEvent(3, 0.0)
    with pytest.raises(ValueError):
        MutationEvent(-1, 0.5)
    cfg = EvolutionConfig(mutation_events=[(30, 0.5)])
    assert cfg.mutation_events == (MutationEvent(30, 0.5),)


def test_equal_payoff_state_is_fixed(rng):
    # 19 users split (1, 4, 5, 1, 8): every channel pays 10
    cfg = reference_network(19, INFINITE)
    a = _assignment([1, 4, 5, 1, 8])
    np.testing.assert_allclose(channel_payoffs(empirical_state(a, 5), cfg), 10.0)
    for _ in range(20):
        np.testing.assert_array_equal(evolution_step(a, cfg, 1.0, rng), a)


def test_clamped_switch_is_certain():
    cfg = reference_network(10, INFINITE)
    a = _assignment([1, 0, 0, 0, 9])
    x = empirical_state(a, 5)
    leave, dest = switch_probabilities(x, cfg, 1.0)
    assert leave[0] == 1.0  # raw value 10 * (1 - 10 / U) > 1
    assert 0.0 < leave[4] < 1.0
    for seed in range(50):
        new = evolution_step(a, cfg, 1.0, np.random.default_rng(seed))
        assert new[0] != 0


def test_above_average_users_never_move(rng):
    cfg = reference_network(30, 20)
    a = rng.integers(5, size=30)
    x = empirical_state(a, 5)
    pay = channel_payoffs(x, cfg)
    keep = pay[a] >= pay.mean()
    for _ in range(30):
        new = evolution_step(a, cfg, 0.7, rng)
        np.testing.assert_array_equal(new[keep], a[keep])


def test_destination_weights_are_net_fitness():
    cfg = reference_network(10, INFINITE)
    x = np.array([0.1, 0.0, 0.0, 0.0, 0.9])
    _, dest = switch_probabilities(x, cfg, 0.5)
    pay = channel_payoffs(x, cfg)
    fit = np.maximum(pay - pay.mean(), 0)
    np.testing.assert_allclose(dest, fit / fit.sum())


@settings(max_examples=40)
@given(st.integers(1, 80), st.integers(0, 2 ** 32 - 1), st.floats(0.05, 1.0),
       st.sampled_from([3, 20, INFINITE]))
def test_step_conserves_users(n, seed, alpha, slots):
    rng = np.random.default_rng(seed)
    cfg = reference_network(n, slots)
    a = rng.integers(5, size=n)
    new = evolution_step(a, cfg, alpha, rng)
    assert new.shape == a.shape
    assert new.min() >= 0 and new.max() < 5


@pytest.mark.parametrize("counts", [(5, 20, 25, 5, 45), (30, 10, 10, 30, 20), (8, 25, 20, 7, 40)])
def test_drift_matches_mean_field(counts):
    cfg = reference_network(100, INFINITE)
    a = _assignment(counts)
    x = empirical_state(a, 5)
    leave, _ = switch_probabilities(x, cfg, 0.2)
    assert leave.max() < 1.0  # clamp inactive, so the formula is exact
    rng = np.random.default_rng(7)
    reps = 4000
    dx = np.array([empirical_state(evolution_step(a, cfg, 0.2, rng), 5) - x for _ in range(reps)])
    se = dx.std(axis=0, ddof=1) / np.sqrt(reps)
    drift = expected_drift(x, cfg, 0.2)
    assert np.all(np.abs(dx.mean(axis=0) - drift) <= 3 * se + 1e-12)


def test_n_mutants_rounding():
    assert n_mutants(0.9, 200) == 180
    assert n_mutants(0.5, 200) == 100
    assert n_mutants(0.001, 10) == 1
    assert n_mutants(1.0, 7) == 7


def test_apply_mutation_touches_the_right_number(rng):
    a = np.zeros(200, dtype=int)
    out = apply_mutation(a, 0.5, 5, rng)
    assert out.shape == a.shape
    # only mutated users can change, and about 4/5 of them land elsewhere
    assert 60 <= np.count_nonzero(out) <= 100


def test_run_is_deterministic():
    cfg = reference_network(50, 20)
    evo = EvolutionConfig(0.5, 30, seed=99, mutation_events=[(10, 0.5)])
    a = run_evolutionary(cfg, evo)
    b = run_evolutionary(cfg, evo)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.throughput, b.throughput)
    np.testing.assert_array_equal(a.final_assignment, b.final_assignment)


def test_trace_shapes_and_lyapunov():
    cfg = reference_network(40, 20)
    tr = run_evolutionary(cfg, EvolutionConfig(0.3, 25, seed=1))
    assert tr.states.shape == (25, 5)
    np.testing.assert_allclose(tr.states.sum(axis=1), 1.0)
    assert np.all(np.isclose(tr.states * 40, np.round(tr.states * 40)))
    assert tr.lyapunov.shape == (25,)
    assert np.all(tr.lyapunov >= -1e-9)  # the potential peaks at the equilibrium
    assert tr.average_payoff.shape == (25,)


def test_small_population_absorbs_at_strict_nash():
    cfg = reference_network(4, 20)
    for seed in range(10):
        tr = run_evolutionary(cfg, EvolutionConfig(0.5, 100, seed=seed))
        assert is_strict_nash(tr.final_assignment, cfg)
        np.testing.assert_array_equal(tr.states[-1], tr.states[-30])


def test_small_adaptation_factor_converges():
    # the one-step map is contracting for small alpha
    cfg = reference_network(200, 100000)
    tr = run_evolutionary(cfg, EvolutionConfig(0.1, 100, seed=3))
    assert tr.distance()[-20:].max() < 0.03


def test_mutation_is_applied_at_its_slot():
    cfg = reference_network(200, 100000)
    evo = EvolutionConfig(0.1, 40, seed=5, mutation_events=[(30, 0.9)])
    tr = run_evolutionary(cfg, evo)
    jump = np.abs(np.diff(tr.states, axis=0)).max(axis=1)
    assert np.argmax(jump) == 29
