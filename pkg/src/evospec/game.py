"""Population game: payoffs, equal-payoff equilibrium and strict Nash checks.

A channel's payoff is ``theta_m * B_m * g(N * x_m)``. For the contender count
we use ``max(N x_m, 1)`` under finite backoff (``g`` is undefined below one
contender). Under INFINITE backoff ``g(k) = 1/k`` extends to every ``k > 0``,
so only an empty channel is clamped to the entrant count of one.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Sequence

import numpy as np

from .channel import ChannelSpec, ContentionSpec, INFINITE, grab_probability, _as_contention
from .validation import SolverError, check_assignment, check_positive_int, check_simplex

_INNER_TOL = 1e-13
_OUTER_TOL = 1e-12
_MAX_ITER = 200


@dataclass(frozen=True)
class NetworkConfig:
    n_users: int
    channels: tuple
    contention: ContentionSpec = ContentionSpec(INFINITE)

    def __post_init__(self):
        check_positive_int(self.n_users, "n_users")
        object.__setattr__(self, "channels", tuple(self.channels))
        if len(self.channels) < 1:
            raise ValueError("at least one channel is required")
        for i, ch in enumerate(self.channels):
            if not isinstance(ch, ChannelSpec):
                raise TypeError(f"channels[{i}] is not a ChannelSpec")
        object.__setattr__(self, "contention", _as_contention(self.contention))

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def idle_probs(self) -> np.ndarray:
        return np.array([c.long_run_idle for c in self.channels])

    @property
    def mean_rates(self) -> np.ndarray:
        return np.array([c.mean_rate for c in self.channels], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        """theta_m * B_m: a lone user's expected throughput on each channel."""
        return self.idle_probs * self.mean_rates

    def with_users(self, n_users: int) -> "NetworkConfig":
        return NetworkConfig(n_users, self.channels, self.contention)


_ONE_TOL = 1e-9


def effective_count(k, contention) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if _as_contention(contention).is_infinite:
        return np.where(k > 0.0, k, 1.0)
    # g jumps right after k = 1, so N * (1/N) = 1 + 2e-16 must still count as one user
    return np.where(np.abs(k - 1.0) <= _ONE_TOL, 1.0, np.maximum(k, 1.0))


def _grab(k, contention):
    # INFINITE backoff: the 1/k payoff extension also covers 0 < k < 1
    if contention.is_infinite:
        return 1.0 / np.asarray(k, dtype=float)
    return grab_probability(k, contention)


def channel_payoffs(x, cfg: NetworkConfig) -> np.ndarray:
    """Per-channel expected payoff for population state(s) ``x`` (last axis = channels)."""
    x = np.asarray(x, dtype=float)
    k = effective_count(cfg.n_users * x, cfg.contention)
    return cfg.weights * _grab(k, cfg.contention)


def count_payoffs(counts, cfg: NetworkConfig) -> np.ndarray:
    """Per-channel payoff for integer occupancy counts (entrant payoff on empty channels)."""
    counts = np.asarray(counts, dtype=float)
    return cfg.weights * grab_probability(np.maximum(counts, 1.0), cfg.contention)


def expected_payoff(m: int, x, cfg: NetworkConfig) -> float:
    if not 0 <= int(m) < cfg.n_channels or int(m) != m:
        raise IndexError(f"channel index {m!r} out of range 0..{cfg.n_channels - 1}")
    x = check_simplex(x, cfg.n_channels)
    return float(channel_payoffs(x, cfg)[int(m)])


def average_payoff(x, cfg: NetworkConfig):
    """Arithmetic mean of the channels' payoffs."""
    return channel_payoffs(x, cfg).mean(axis=-1)


def empirical_state(assignment, n_channels: int) -> np.ndarray:
    assignment = np.asarray(assignment)
    return np.bincount(assignment, minlength=n_channels) / len(assignment)


def closed_form_equilibrium(cfg: NetworkConfig) -> np.ndarray:
    w = cfg.weights
    return w / w.sum()


def _invert_payoff(u: float, cfg: NetworkConfig) -> np.ndarray:
    """Per-channel share giving payoff ``u``; vectorized bisection over channels."""
    w = cfg.weights
    N = cfg.n_users
    infinite = cfg.contention.is_infinite
    lo = np.zeros_like(w) if infinite else np.full_like(w, 1.0 / N)
    hi = np.ones_like(w)
    full = channel_payoffs(np.ones_like(w), cfg)
    x = np.empty_like(w)
    active = np.ones_like(w, dtype=bool)
    # payoff is non-increasing in x; saturate where u is out of range
    at_one = u <= full
    x[at_one] = 1.0
    active &= ~at_one
    if not infinite:
        empty = u >= w
        x[empty] = 0.0
        active &= ~empty
        # u inside the jump of g at one contender: exactly one user's worth
        L = cfg.contention.backoff_slots
        single = active & (u >= w * (L - 1) / L)
        x[single] = 1.0 / N
        active &= ~single
    if not active.any():
        return x
    lo, hi = lo[active], hi[active]
    ww = w[active]
    for _ in range(_MAX_ITER):
        mid = 0.5 * (lo + hi)
        k = effective_count(N * mid, cfg.contention)
        above = ww * _grab(k, cfg.contention) > u
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= _INNER_TOL):
            break
    else:
        raise SolverError("per-channel payoff inversion did not converge", float(np.max(hi - lo)))
    x[active] = 0.5 * (lo + hi)
    return x


def ess_equilibrium(cfg: NetworkConfig, method: str = "auto") -> np.ndarray:
    """Equal-payoff population state.

    ``method="auto"`` returns the closed form under INFINITE backoff and bisects
    on the common payoff level otherwise; ``"bisection"`` forces the numeric path.

    With a finite window the real-valued ``g`` drops from 1 to ``(L-1)/L`` just
    above one contender. A channel can therefore rest at ``x = 1/N`` with a
    payoff above the common level of the others while any added mass would earn
    less than that level; such a state is still returned as the equilibrium.
    When the level equals a channel's weight, that channel pays the level
    anywhere in ``[0, 1/N]`` and takes whatever share closes the simplex.
    """
    if method not in ("auto", "bisection", "closed-form"):
        raise ValueError(f"unknown method {method!r}")
    # configs are frozen and hashable; the cached array is never handed out
    return _ess_cached(cfg, method).copy()


@lru_cache(maxsize=256)
def _ess_cached(cfg: NetworkConfig, method: str) -> np.ndarray:
    if method == "closed-form" or (method == "auto" and cfg.contention.is_infinite):
        if not cfg.contention.is_infinite:
            raise ValueError("closed form only holds for INFINITE backoff")
        return closed_form_equilibrium(cfg)

    w = cfg.weights
    u_lo = float(np.min(channel_payoffs(np.ones_like(w), cfg)))
    u_hi = float(np.max(w))
    if cfg.contention.is_infinite:
        while _invert_payoff(u_hi, cfg).sum() >= 1.0:
            u_hi *= 2.0

    def excess(u):
        return _invert_payoff(u, cfg).sum() - 1.0

    residual = excess(u_lo)
    for _ in range(_MAX_ITER):
        u = 0.5 * (u_lo + u_hi)
        residual = excess(u)
        if abs(residual) <= _OUTER_TOL:
            break
        if residual > 0.0:
            u_lo = u
        else:
            u_hi = u
        if u_hi - u_lo <= 1e-15 * u_hi:
            break
    else:
        raise SolverError("payoff-level bisection did not converge", abs(residual))

    x = _invert_payoff(u, cfg)
    gap = 1.0 - x.sum()
    if abs(gap) > _OUTER_TOL:
        # the level sits where a channel jumps between empty and one entrant:
        # that channel is indifferent on [0, 1/N] and absorbs the slack
        x_hi = _invert_payoff(u_hi, cfg)
        room = np.clip(_invert_payoff(u_lo, cfg) - x_hi, 0.0, None)
        need = 1.0 - x_hi.sum()
        if need < 0.0 or room.sum() + 1e-15 < need:
            raise SolverError("equal-payoff state not found", abs(gap))
        x = x_hi + room * (need / room.sum())
        gap = 1.0 - x.sum()
    if abs(gap) > 1e-10:
        raise SolverError("equilibrium shares do not sum to one", abs(gap))
    return x / x.sum() if abs(gap) > 0 else x


def payoff_spread(x, cfg: NetworkConfig) -> float:
    """(max - min) / mean of payoffs over occupied channels."""
    x = np.asarray(x, dtype=float)
    pay = channel_payoffs(x, cfg)[x > 0]
    return float((pay.max() - pay.min()) / pay.mean())


def occupancy(assignment, n_channels: int) -> np.ndarray:
    return np.bincount(np.asarray(assignment), minlength=n_channels)


def is_strict_nash(assignment, cfg: NetworkConfig) -> bool:
    """True iff every unilateral move strictly lowers the mover's expected throughput."""
    assignment = check_assignment(assignment, cfg.n_channels)
    if len(assignment) != cfg.n_users:
        raise ValueError(f"assignment has {len(assignment)} users, expected {cfg.n_users}")
    counts = occupancy(assignment, cfg.n_channels)
    return _counts_strict_nash(counts, cfg)


def _counts_strict_nash(counts, cfg: NetworkConfig) -> bool:
    counts = np.asarray(counts)
    stay = count_payoffs(counts, cfg)
    join = cfg.weights * grab_probability(counts + 1.0, cfg.contention)
    for m in np.flatnonzero(counts > 0):
        others = np.arange(cfg.n_channels) != m
        if np.any(join[others] >= stay[m]):
            return False
    return True


def strict_nash_equilibria(cfg: NetworkConfig, max_profiles: int = 10 ** 6) -> list:
    """All strict Nash assignments, found by enumerating every channel profile."""
    M, N = cfg.n_channels, cfg.n_users
    if M ** N > max_profiles:
        raise ValueError(f"{M}^{N} profiles exceed the enumeration cap {max_profiles}")
    verdict = {}
    found = []
    for profile in product(range(M), repeat=N):
        counts = tuple(np.bincount(profile, minlength=M))
        if counts not in verdict:
            verdict[counts] = _counts_strict_nash(counts, cfg)
        if verdict[counts]:
            found.append(profile)
    return found


def potential_equilibrium_counts(cfg: NetworkConfig) -> np.ndarray:
    """Integer occupancy maximizing sum_m sum_{j<=k_m} theta_m B_m g(j).

    Users are added one at a time to the channel with the best entrant payoff;
    because g is decreasing this greedy fill is the exact maximizer, and any
    unilateral move changes the potential by the mover's payoff change, so the
    result is a pure Nash equilibrium.
    """
    w = cfg.weights
    counts = np.zeros(cfg.n_channels, dtype=np.int64)
    for _ in range(cfg.n_users):
        gain = w * grab_probability(counts + 1.0, cfg.contention)
        counts[int(np.argmax(gain))] += 1
    return counts


def system_throughput(counts, cfg: NetworkConfig) -> float:
    """Expected total throughput sum_m k_m theta_m B_m g(k_m) for integer counts."""
    counts = np.asarray(counts, dtype=float)
    used = counts > 0
    g = grab_probability(np.maximum(counts, 1.0), cfg.contention)
    return float(np.sum(np.where(used, counts * cfg.weights * g, 0.0)))


def reference_channels(rate_model: str = "constant-mean") -> tuple:
    """The five-channel set used throughout the experiments."""
    from fractions import Fraction

    theta = [Fraction(2, 3), Fraction(4, 7), Fraction(5, 9), Fraction(1, 2), Fraction(4, 5)]
    rates = [15.0, 70.0, 90.0, 20.0, 100.0]
    return tuple(ChannelSpec(float(t), b, rate_model) for t, b in zip(theta, rates))


def reference_network(n_users: int = 100, backoff_slots=INFINITE, rate_model: str = "constant-mean") -> NetworkConfig:
    return NetworkConfig(n_users, reference_channels(rate_model), ContentionSpec(backoff_slots))


def markov_channels(dynamic_factor: float, rate_model: str = "constant-mean",
                    rates: Sequence[float] = (10, 40, 50, 20, 80, 60, 15, 25, 30, 70)) -> tuple:
    from .channel import MarkovSpec

    chain = MarkovSpec(dynamic_factor, dynamic_factor)
    return tuple(ChannelSpec(chain.stationary_idle, float(b), rate_model, chain) for b in rates)
