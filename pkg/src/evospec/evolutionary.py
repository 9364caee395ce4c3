"""Agent-based evolutionary spectrum access with complete information.

Each slot every user knows the population state. A user whose expected payoff
is below the channel-average payoff leaves its channel with probability
``(alpha / x_own) * (1 - U_own / U)`` (clamped to [0, 1]) and moves to a channel
drawn in proportion to its positive net fitness ``payoff_m - U``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import ChannelEnvironment
from .game import NetworkConfig, average_payoff, channel_payoffs, empirical_state, ess_equilibrium
from .validation import check_assignment, check_fraction, check_positive_int


@dataclass(frozen=True)
class MutationEvent:
    slot: int
    fraction: float

    def __post_init__(self):
        if self.slot < 0:
            raise ValueError(f"mutation slot must be non-negative, got {self.slot!r}")
        check_fraction(self.fraction, "mutation fraction")


@dataclass(frozen=True)
class EvolutionConfig:
    adaptation_factor: float = 0.5
    slots: int = 100
    seed: int = 0
    mutation_events: tuple = ()

    def __post_init__(self):
        check_fraction(self.adaptation_factor, "adaptation_factor")
        check_positive_int(self.slots, "slots")
        events = tuple(e if isinstance(e, MutationEvent) else MutationEvent(*e)
                       for e in self.mutation_events)
        object.__setattr__(self, "mutation_events", events)


@dataclass
class EvolutionTrace:
    states: np.ndarray  # (T, M) population state at the start of each slot
    payoffs: np.ndarray  # (T, M) expected per-channel payoffs
    average_payoff: np.ndarray  # (T,)
    throughput: np.ndarray  # (T,) realized system throughput in the slot
    final_assignment: np.ndarray
    equilibrium: np.ndarray = field(repr=False)
    cfg: NetworkConfig = field(repr=False)
    _lyapunov: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    @property
    def lyapunov(self) -> np.ndarray:
        """L(x*) - L(x(t)) per slot; computed on first access."""
        if self._lyapunov is None:
            from .dynamics import lyapunov_potential

            l_star = lyapunov_potential(self.equilibrium, self.cfg, method="exact")
            self._lyapunov = l_star - lyapunov_potential(self.states, self.cfg, method="exact")
        return self._lyapunov

    def distance(self, target: Optional[np.ndarray] = None) -> np.ndarray:
        target = self.equilibrium if target is None else target
        return np.abs(self.states - target).max(axis=1)

    def first_hit(self, tol: float, start: int = 0, target=None) -> Optional[int]:
        """First slot >= ``start`` with sup-distance below ``tol``."""
        d = self.distance(target)
        hits = np.flatnonzero(d[start:] < tol)
        return int(hits[0]) + start if len(hits) else None


def switch_probabilities(x: np.ndarray, cfg: NetworkConfig, alpha: float):
    """Per-channel probability that a user on that channel switches, and destination weights."""
    payoff = channel_payoffs(x, cfg)
    U = float(payoff.mean())
    below = payoff < U
    leave = np.zeros_like(payoff)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = alpha / x * (1.0 - payoff / U)
    leave[below & (x > 0)] = np.clip(raw[below & (x > 0)], 0.0, 1.0)
    fitness = np.maximum(payoff - U, 0.0)
    total = fitness.sum()
    if total <= 0.0:
        return np.zeros_like(payoff), None
    return leave, fitness / total


def evolution_step(assignment, cfg: NetworkConfig, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """One synchronous revision round; every user reads the slot-start state."""
    assignment = check_assignment(assignment, cfg.n_channels)
    x = empirical_state(assignment, cfg.n_channels)
    leave, dest = switch_probabilities(x, cfg, alpha)
    u = rng.random(len(assignment))
    if dest is None:
        return assignment.copy()
    movers = u < leave[assignment]
    new = assignment.copy()
    n_move = int(movers.sum())
    if n_move:
        new[movers] = rng.choice(cfg.n_channels, size=n_move, p=dest)
    return new


def expected_drift(x, cfg: NetworkConfig, alpha: float) -> np.ndarray:
    """alpha * (U_m / U - 1): the mean one-step change in the shares."""
    payoff = channel_payoffs(x, cfg)
    return alpha * (payoff / average_payoff(x, cfg) - 1.0)


def n_mutants(fraction: float, n_users: int) -> int:
    # guard against 0.9 * 200 = 180.00000000000003 style round-up
    return min(n_users, max(1, math.ceil(fraction * n_users - 1e-9)))


def apply_mutation(assignment, fraction: float, n_channels: int, rng: np.random.Generator) -> np.ndarray:
    """Reassign ceil(fraction * N) distinct random users to uniformly random channels."""
    check_fraction(fraction, "fraction")
    assignment = np.asarray(assignment).copy()
    k = n_mutants(fraction, len(assignment))
    who = rng.choice(len(assignment), size=k, replace=False)
    assignment[who] = rng.integers(n_channels, size=k)
    return assignment


def run_evolutionary(cfg: NetworkConfig, evo: EvolutionConfig, initial=None) -> EvolutionTrace:
    seeds = np.random.SeedSequence(evo.seed).spawn(3)
    rng_agents, rng_env, rng_mut = (np.random.default_rng(s) for s in seeds)
    env = ChannelEnvironment(cfg.channels, cfg.contention, rng_env)
    M, T = cfg.n_channels, evo.slots
    if initial is None:
        assignment = rng_agents.integers(M, size=cfg.n_users)
    else:
        assignment = check_assignment(initial, M)

    x_star = ess_equilibrium(cfg)
    mutations = {}
    for event in evo.mutation_events:
        mutations.setdefault(event.slot, []).append(event.fraction)

    states = np.empty((T, M))
    throughput = np.empty(T)
    for t in range(T):
        for fraction in mutations.get(t, ()):
            assignment = apply_mutation(assignment, fraction, M, rng_mut)
        states[t] = empirical_state(assignment, M)
        throughput[t] = env.run(assignment, 1).sum()
        assignment = evolution_step(assignment, cfg, evo.adaptation_factor, rng_agents)

    payoffs = channel_payoffs(states, cfg)
    return EvolutionTrace(states, payoffs, payoffs.mean(axis=1), throughput, assignment, x_star, cfg)
