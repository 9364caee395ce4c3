"""Distributed learning with incomplete information.

Users never see channel statistics or each other's choices. Each one keeps a
score per channel (a discounted sum of its own throughput estimates) and
picks channels at random in proportion to those scores. All learners are
stored row-wise in one array for speed, but row ``n`` is only ever updated
from user ``n``'s own measurements.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelEnvironment
from .game import NetworkConfig, ess_equilibrium
from .validation import check_fraction, check_positive_int

FLOOR_SCALE = 1e-9


@dataclass(frozen=True)
class LearningConfig:
    memory_weight: float = 0.99
    period_slots: int = 100
    periods: int = 500
    seed: int = 0

    def __post_init__(self):
        check_fraction(self.memory_weight, "memory_weight", open_high=True)
        check_positive_int(self.period_slots, "period_slots")
        check_positive_int(self.periods, "periods")


@dataclass
class LearnerState:
    scores: np.ndarray  # (N, M) accumulated scores A
    estimates: np.ndarray  # (N, M) latest per-period estimates Z
    visited: np.ndarray  # (N, M) bool, channels sampled during estimation

    @classmethod
    def empty(cls, n_users: int, n_channels: int) -> "LearnerState":
        shape = (n_users, n_channels)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape, dtype=bool))

    @property
    def strategies(self) -> np.ndarray:
        return normalize_scores(self.scores)


def normalize_scores(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    total = scores.sum(axis=-1, keepdims=True)
    if np.any(total <= 0.0) or np.any(scores < 0.0):
        raise ValueError("scores must be non-negative with a positive total")
    return scores / total


def _measure(rates: np.ndarray) -> np.ndarray:
    # per-user mean realized rate over the period's slots
    return rates.mean(axis=0)


def initial_estimation(state: LearnerState, n_channels: int, lcfg: LearningConfig,
                       env: ChannelEnvironment, rng: np.random.Generator) -> LearnerState:
    """Visit every channel once, in a random order per user, for one period each."""
    n_users = state.scores.shape[0]
    g = lcfg.memory_weight
    order = rng.permuted(np.tile(np.arange(n_channels), (n_users, 1)), axis=1)
    rows = np.arange(n_users)
    measured = np.zeros((n_users, n_channels))
    for p in range(n_channels):
        choice = order[:, p]
        measured[rows, choice] = _measure(env.run(choice, lcfg.period_slots))
        state.visited[rows, choice] = True
    z0 = (1.0 - g) * measured
    floor = FLOOR_SCALE * (1.0 - g) * np.maximum(1.0, measured.mean(axis=1, keepdims=True))
    state.estimates = z0
    state.scores = np.maximum(z0, floor)
    return state


def select_channel(scores, rng: np.random.Generator) -> np.ndarray:
    """Draw one channel per row of ``scores`` with probability proportional to the score."""
    f = np.atleast_2d(normalize_scores(scores))
    cdf = np.cumsum(f, axis=1)
    u = rng.random((f.shape[0], 1)) * cdf[:, -1:]
    pick = (u >= cdf).sum(axis=1)
    pick = np.minimum(pick, f.shape[1] - 1)
    return pick if np.ndim(scores) > 1 else pick[0]


def update_scores(state: LearnerState, chosen, measured, memory_weight: float) -> LearnerState:
    """Add (1 - gamma) * C to each user's chosen-channel score.

    ``estimates`` is refreshed with the per-period estimates: the discounted
    memory for unchosen channels, memory plus the new measurement for the
    chosen one.
    """
    measured = np.asarray(measured, dtype=float)
    if np.any(measured < 0.0):
        raise ValueError("measured throughput must be non-negative")
    chosen = np.asarray(chosen)
    rows = np.arange(state.scores.shape[0])
    g = memory_weight
    z = (1.0 - g) * state.scores
    z[rows, chosen] += (1.0 - g) * measured
    state.estimates = z
    state.scores = state.scores.copy()
    state.scores[rows, chosen] += (1.0 - g) * measured
    return state


def strategy_update(f, total, chosen: int, measured: float, memory_weight: float):
    """Mixed-strategy form of one score update for a single user.

    With beta = (1 - gamma) / (total + (1 - gamma) C) the chosen channel moves to
    f (1 - beta C) + beta C and the rest shrink to f (1 - beta C). Returns the
    new strategy and the new score total.
    """
    f = np.asarray(f, dtype=float)
    if measured < 0.0:
        raise ValueError("measured throughput must be non-negative")
    step = (1.0 - memory_weight) * measured
    beta = (1.0 - memory_weight) / (total + step)
    out = f * (1.0 - beta * measured)
    out[chosen] += beta * measured
    return out, total + step


@dataclass
class LearningTrace:
    strategies: np.ndarray  # (T, N, M) mixed strategies used in each stage-2 period
    occupancy: np.ndarray  # (T, M) empirical shares per period
    time_average: np.ndarray  # (T, M) running mean of occupancy
    throughput: np.ndarray  # (T,) mean realized system throughput per slot
    equilibrium: np.ndarray

    def distance(self, target: Optional[np.ndarray] = None) -> np.ndarray:
        target = self.equilibrium if target is None else target
        return np.abs(self.time_average - target).max(axis=1)

    def first_hit(self, tol: float, target=None) -> Optional[int]:
        hits = np.flatnonzero(self.distance(target) < tol)
        return int(hits[0]) if len(hits) else None


def run_learning(cfg: NetworkConfig, lcfg: LearningConfig) -> LearningTrace:
    seeds = np.random.SeedSequence(lcfg.seed).spawn(2)
    rng_users, rng_env = (np.random.default_rng(s) for s in seeds)
    env = ChannelEnvironment(cfg.channels, cfg.contention, rng_env)
    N, M, T = cfg.n_users, cfg.n_channels, lcfg.periods

    state = initial_estimation(LearnerState.empty(N, M), M, lcfg, env, rng_users)
    strategies = np.empty((T, N, M))
    occ = np.empty((T, M))
    throughput = np.empty(T)
    for t in range(T):
        strategies[t] = state.strategies
        choice = select_channel(state.scores, rng_users)
        rates = env.run(choice, lcfg.period_slots)
        occ[t] = np.bincount(choice, minlength=M) / N
        throughput[t] = rates.sum(axis=1).mean()
        update_scores(state, choice, _measure(rates), lcfg.memory_weight)

    time_avg = np.cumsum(occ, axis=0) / np.arange(1, T + 1)[:, None]
    return LearningTrace(strategies, occ, time_avg, throughput, ess_equilibrium(cfg))
