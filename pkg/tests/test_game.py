import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from evospec import (INFINITE, ChannelSpec, ContentionSpec, NetworkConfig,
                     average_payoff, channel_payoffs, ess_equilibrium, expected_payoff,
                     is_strict_nash, markov_channels, reference_network, potential_equilibrium_counts,
                     strict_nash_equilibria, system_throughput)
from evospec.game import count_payoffs, empirical_state, payoff_spread

from .conftest import REF_WEIGHTS
from .oracles import ess_by_root_finding, payoff, strict_nash_counts


def test_weights_are_theta_times_rate(net_inf):
    np.testing.assert_allclose(net_inf.weights, REF_WEIGHTS, rtol=1e-15)


def test_closed_form_ess(net_inf):
    x = ess_equilibrium(net_inf)
    np.testing.assert_allclose(x, np.array([1, 4, 5, 1, 8]) / 19, atol=1e-12)
    np.testing.assert_allclose(channel_payoffs(x, net_inf), 1.9, atol=1e-12)


def test_bisection_agrees_with_closed_form(net_inf):
    a = ess_equilibrium(net_inf, "closed-form")
    b = ess_equilibrium(net_inf, "bisection")
    np.testing.assert_allclose(a, b, atol=1e-11)


def test_closed_form_refused_for_finite_window(net_20):
    with pytest.raises(ValueError):
        ess_equilibrium(net_20, "closed-form")
    with pytest.raises(ValueError):
        ess_equilibrium(net_20, "newton")


@pytest.mark.parametrize("n,slots", [(200, 20), (100, 20), (100, 100000), (50, 5), (30, 3),
                                    (4, 20), (4, 100000), (11, 3), (11, 2), (17, 20), (17, 100000)])
def test_finite_window_ess_matches_root_finding(n, slots):
    cfg = reference_network(n, slots)
    x = ess_equilibrium(cfg)
    ref = ess_by_root_finding(REF_WEIGHTS, n, slots)
    np.testing.assert_allclose(x, ref, atol=1e-9)
    # channels resting on the one-contender jump may pay more than the level
    level_set = (x > 0) & ~np.isclose(n * x, 1.0, rtol=0, atol=1e-9)
    pay = channel_payoffs(x, cfg)[level_set]
    assert (pay.max() - pay.min()) / pay.mean() < 1e-9


def test_level_pinned_at_a_weight():
    # N=4, L=20: channel 2 fills part of its flat one-user region, all pay 40
    cfg = reference_network(4, 20)
    x = ess_equilibrium(cfg)
    assert 0.0 < 4 * x[1] < 1.0
    np.testing.assert_allclose(channel_payoffs(x, cfg)[[1, 2, 4]], 40.0, rtol=1e-12)


def test_finite_window_ess_frozen_values():
    # frozen from the independent root-finding oracle
    x = ess_equilibrium(reference_network(200, 20))
    ref = ess_by_root_finding(REF_WEIGHTS, 200, 20)
    np.testing.assert_allclose(x, ref, atol=1e-9)
    np.testing.assert_allclose(x, [0.1169, 0.2277, 0.2477, 0.1169, 0.2907], atol=5e-5)


def test_ess_with_empty_channel():
    # a weak channel stays empty when strong ones still pay more at saturation
    chans = (ChannelSpec(0.5, 200.0), ChannelSpec(0.5, 190.0), ChannelSpec(0.5, 2.0))
    cfg = NetworkConfig(4, chans, ContentionSpec(INFINITE))
    x = ess_equilibrium(cfg)
    assert x.sum() == pytest.approx(1.0, abs=1e-12)
    pay = channel_payoffs(x, cfg)
    assert pay[0] == pytest.approx(pay[1], rel=1e-9)


def test_empty_channel_payoff_uses_entrant():
    cfg = reference_network(10, 20)
    x = np.array([0.0, 0.5, 0.5, 0.0, 0.0])
    np.testing.assert_allclose(channel_payoffs(x, cfg)[[0, 3, 4]], [10.0, 10.0, 80.0])


def test_expected_payoff_checks():
    cfg = reference_network(10, 20)
    x = np.full(5, 0.2)
    assert expected_payoff(4, x, cfg) == pytest.approx(80.0 * payoff(1.0, 2, 20))
    with pytest.raises(IndexError):
        expected_payoff(5, x, cfg)
    with pytest.raises(ValueError):
        expected_payoff(0, [0.5, 0.5, 0.5, 0.0, 0.0], cfg)


def test_network_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(0, (ChannelSpec(0.5, 1.0),))
    with pytest.raises(ValueError):
        NetworkConfig(3, ())
    with pytest.raises(TypeError):
        NetworkConfig(3, ((0.5, 1.0),))


simplex5 = arrays(np.float64, 5, elements=st.floats(0.01, 1.0)).map(lambda v: v / v.sum())


@given(simplex5, st.sampled_from([3, 20, 100000, INFINITE]))
def test_average_is_arithmetic_mean(x, slots):
    cfg = reference_network(100, slots)
    assert average_payoff(x, cfg) == pytest.approx(channel_payoffs(x, cfg).mean())


@given(st.integers(1, 300), st.sampled_from([2, 20, 100000, INFINITE]))
def test_ess_is_equal_payoff_on_support(n, slots):
    cfg = reference_network(n, slots)
    x = ess_equilibrium(cfg)
    assert x.min() >= 0.0 and x.sum() == pytest.approx(1.0, abs=1e-10)
    pay = channel_payoffs(x, cfg)
    occupied = x > 1e-12
    # a channel holding exactly one contender sits on the jump of g at k = 1:
    # its payoff may exceed the level, but any extra mass would earn w (L-1)/L
    on_jump = occupied & np.isclose(n * x, 1.0, atol=1e-9) & np.isfinite(float(slots))
    level_set = occupied & ~on_jump
    if not level_set.any():
        return
    level = pay[level_set]
    assert level.max() - level.min() <= 1e-7 * level.max()
    u = level.mean()
    if on_jump.any():
        w = cfg.weights[on_jump]
        assert np.all(pay[on_jump] >= u * (1 - 1e-9))
        assert np.all(w * (slots - 1) / slots <= u * (1 + 1e-9))
    # an empty channel's entrant payoff does not beat the level
    if (~occupied).any():
        assert pay[~occupied].max() <= u * (1 + 1e-9)


@given(st.integers(1, 400))
def test_infinite_window_ess_independent_of_n(n):
    np.testing.assert_allclose(ess_equilibrium(reference_network(n, INFINITE)), REF_WEIGHTS / 190)


def test_markov_channel_set():
    chans = markov_channels(0.3)
    assert len(chans) == 10
    assert all(c.long_run_idle == pytest.approx(0.5) for c in chans)


# ---- integer games ------------------------------------------------------

def test_small_n_strict_nash_enumeration():
    cfg = reference_network(4, 20)
    profiles = strict_nash_equilibria(cfg)
    counts = {tuple(np.bincount(p, minlength=5)) for p in profiles}
    assert counts == {(0, 1, 1, 0, 2)}
    assert counts == set(strict_nash_counts(REF_WEIGHTS, 4, 20))
    assert len(profiles) == 12  # 4! / 2! labelled arrangements
    pay = sorted(count_payoffs(np.array([0, 1, 1, 0, 2]), cfg)[[1, 2, 4, 4]], reverse=True)
    np.testing.assert_allclose(pay, [50, 40, 38, 38])


@pytest.mark.parametrize("n,slots", [(1, 20), (2, 20), (3, 5), (5, 20), (6, 3), (6, INFINITE)])
def test_strict_nash_matches_oracle(n, slots):
    cfg = reference_network(n, slots)
    found = {tuple(np.bincount(p, minlength=5)) for p in strict_nash_equilibria(cfg)}
    assert found == set(strict_nash_counts(REF_WEIGHTS, n, slots))


def test_is_strict_nash_rejects_profitable_deviation():
    cfg = reference_network(4, 20)
    assert is_strict_nash([1, 2, 4, 4], cfg)
    assert not is_strict_nash([4, 4, 4, 4], cfg)
    with pytest.raises(ValueError):
        is_strict_nash([1, 2, 4], cfg)


def test_enumeration_cap():
    with pytest.raises(ValueError):
        strict_nash_equilibria(reference_network(12, 20), max_profiles=1000)


@given(st.integers(1, 40), st.sampled_from([2, 5, 20, 100000, INFINITE]))
def test_potential_maximizer_is_nash(n, slots):
    cfg = reference_network(n, slots)
    counts = potential_equilibrium_counts(cfg)
    assert counts.sum() == n
    stay = count_payoffs(counts, cfg)
    join = cfg.weights * np.array([payoff(1.0, k + 1, slots) for k in counts])
    for m in np.flatnonzero(counts):
        others = np.delete(join, m)
        assert others.max() <= stay[m] + 1e-12


def test_system_throughput_counts():
    cfg = reference_network(4, 20)
    assert system_throughput([0, 1, 1, 0, 2], cfg) == pytest.approx(166.0)
    assert system_throughput([0, 0, 0, 0, 0], cfg) == 0.0


def test_payoff_spread_and_empirical_state():
    cfg = reference_network(4, INFINITE)
    x = empirical_state([1, 2, 4, 4], 5)
    np.testing.assert_array_equal(x, [0, 0.25, 0.25, 0, 0.5])
    assert payoff_spread(x, cfg) == pytest.approx((50 - 40) / ((40 + 50 + 40) / 3))
