"""Comparison schemes: centralized throughput maximization and softmax RL."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .channel import ChannelEnvironment, grab_probability
from .game import NetworkConfig, system_throughput
from .learning import select_channel
from .validation import check_positive_int

DP_LIMIT = 10 ** 7


@dataclass
class OptimumResult:
    counts: np.ndarray
    throughput: float
    method: str


def channel_contributions(cfg: NetworkConfig, max_users: int) -> np.ndarray:
    """(M, max_users + 1) table of k * theta_m B_m g(k), zero at k = 0."""
    k = np.arange(max_users + 1, dtype=float)
    g = grab_probability(np.maximum(k, 1.0), cfg.contention)
    table = cfg.weights[:, None] * (k * g)[None, :]
    table[:, 0] = 0.0
    return table


def _dp_optimum(cfg: NetworkConfig) -> np.ndarray:
    N, M = cfg.n_users, cfg.n_channels
    table = channel_contributions(cfg, N)
    best = table[0].copy()  # best[n]: value of n users on channels 0..m
    picks = [np.arange(N + 1)]
    for m in range(1, M):
        n = np.arange(N + 1)
        k = np.arange(N + 1)
        # cand[n, k]: k users on channel m, n - k on the earlier ones
        valid = k[None, :] <= n[:, None]
        rest = np.where(valid, n[:, None] - k[None, :], 0)
        cand = np.where(valid, best[rest] + table[m][None, :], -np.inf)
        arg = cand.argmax(axis=1)
        best = cand[n, arg]
        picks.append(arg)
    counts = np.zeros(M, dtype=np.int64)
    left = N
    for m in range(M - 1, -1, -1):
        counts[m] = picks[m][left] if m else left
        left -= counts[m]
    return counts


def _greedy_swap_optimum(cfg: NetworkConfig) -> np.ndarray:
    N, M = cfg.n_users, cfg.n_channels
    table = channel_contributions(cfg, N)
    counts = np.zeros(M, dtype=np.int64)
    idx = np.arange(M)
    for _ in range(N):
        gain = table[idx, counts + 1] - table[idx, counts]
        counts[int(np.argmax(gain))] += 1
    while True:
        drop = table[idx, counts] - table[idx, np.maximum(counts - 1, 0)]
        add = table[idx, np.minimum(counts + 1, N)] - table[idx, counts]
        delta = add[None, :] - drop[:, None]
        delta[counts == 0, :] = -np.inf
        np.fill_diagonal(delta, -np.inf)
        i, j = np.unravel_index(np.argmax(delta), delta.shape)
        if delta[i, j] <= 1e-12 * max(1.0, table.max()):
            return counts
        counts[i] -= 1
        counts[j] += 1


def centralized_optimum(cfg: NetworkConfig, method: str = "auto") -> OptimumResult:
    """Integer occupancy maximizing sum_m k_m theta_m B_m g(k_m)."""
    if method not in ("auto", "dp", "greedy"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        method = "dp" if cfg.n_users * cfg.n_channels <= DP_LIMIT else "greedy"
    counts = _dp_optimum(cfg) if method == "dp" else _greedy_swap_optimum(cfg)
    return OptimumResult(counts, system_throughput(counts, cfg), method)


def brute_force_optimum(cfg: NetworkConfig) -> OptimumResult:
    """Exhaustive search over occupancy vectors; only for tiny instances."""
    M = cfg.n_channels
    best, best_counts = -np.inf, None
    for combo in combinations_with_replacement(range(M), cfg.n_users):
        counts = np.bincount(combo, minlength=M)
        value = system_throughput(counts, cfg)
        if value > best:
            best, best_counts = value, counts
    return OptimumResult(best_counts, float(best), "enumeration")


@dataclass(frozen=True)
class RlConfig:
    temperature: float = 10.0
    smoothing: float = 100.0
    periods: int = 500
    period_slots: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature!r}")
        if not self.smoothing > 0:
            raise ValueError(f"smoothing must be positive, got {self.smoothing!r}")
        check_positive_int(self.periods, "periods")
        check_positive_int(self.period_slots, "period_slots")

    def mixing(self, period: int) -> float:
        """mu_T = min(1, c / T) for periods T = 1, 2, ..."""
        return min(1.0, self.smoothing / period)


def softmax(values, temperature: float) -> np.ndarray:
    z = temperature * np.asarray(values, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def rl_step(perceptions, payoff, chosen, period: int, rl: RlConfig):
    """Smooth the chosen channel's perception toward the payoff and decay the rest.

    Works on one user (1-d perceptions) or a batch (rows). Returns the new
    perceptions and the softmax strategy they induce.
    """
    p = np.asarray(perceptions, dtype=float)
    mu = rl.mixing(period)
    out = (1.0 - mu) * p
    if p.ndim == 1:
        out[int(chosen)] += mu * float(payoff)
    else:
        out[np.arange(p.shape[0]), np.asarray(chosen)] += mu * np.asarray(payoff, dtype=float)
    return out, softmax(out, rl.temperature)


@dataclass
class RlTrace:
    strategies: np.ndarray  # (T, N, M)
    occupancy: np.ndarray  # (T, M)
    throughput: np.ndarray  # (T,) realized mean per-slot system throughput
    expected_throughput: np.ndarray  # (T,) expected throughput at the period's occupancy
    perceptions: np.ndarray  # (N, M) final

    def window_throughput(self, fraction: float = 0.1) -> float:
        """Mean expected throughput over the final ``fraction`` of periods."""
        n = max(1, int(round(fraction * len(self.expected_throughput))))
        return float(self.expected_throughput[-n:].mean())

    @property
    def time_average_throughput(self) -> float:
        return float(self.throughput.mean())


def run_rl(cfg: NetworkConfig, rl: RlConfig) -> RlTrace:
    seeds = np.random.SeedSequence(rl.seed).spawn(2)
    rng_users, rng_env = (np.random.default_rng(s) for s in seeds)
    env = ChannelEnvironment(cfg.channels, cfg.contention, rng_env)
    N, M, T = cfg.n_users, cfg.n_channels, rl.periods

    perceptions = np.zeros((N, M))
    f = softmax(perceptions, rl.temperature)
    strategies = np.empty((T, N, M))
    occ = np.empty((T, M))
    realized = np.empty(T)
    expected = np.empty(T)
    for t in range(T):
        strategies[t] = f
        choice = select_channel(f, rng_users)
        rates = env.run(choice, rl.period_slots)
        counts = np.bincount(choice, minlength=M)
        occ[t] = counts / N
        realized[t] = rates.sum(axis=1).mean()
        expected[t] = system_throughput(counts, cfg)
        perceptions, f = rl_step(perceptions, rates.mean(axis=0), choice, t + 1, rl)
    return RlTrace(strategies, occ, realized, expected, perceptions)
