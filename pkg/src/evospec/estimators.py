"""scikit-learn style wrappers around the functional API.

Each estimator is fitted on a :class:`~evospec.game.NetworkConfig` (there is no
data matrix). Mechanisms that end with one channel per user expose it as
``labels_``, so ``fit_predict(network)`` returns the per-user assignment.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .baselines import RlConfig, centralized_optimum, run_rl
from .evolutionary import EvolutionConfig, run_evolutionary
from .game import NetworkConfig, channel_payoffs, ess_equilibrium, occupancy, system_throughput
from .learning import LearningConfig, run_learning


def _check_network(network) -> NetworkConfig:
    if not isinstance(network, NetworkConfig):
        raise TypeError(f"expected a NetworkConfig, got {type(network).__name__}")
    return network


def _seed(random_state) -> int:
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    if isinstance(random_state, (bool, np.bool_)) or int(random_state) != random_state or random_state < 0:
        raise ValueError(f"random_state must be a non-negative integer or None, got {random_state!r}")
    return int(random_state)


class ESSSolver(BaseEstimator):
    """Equal-payoff population state of a network."""

    def __init__(self, method: str = "auto"):
        self.method = method

    def fit(self, network, y=None):
        cfg = _check_network(network)
        self.x_ = ess_equilibrium(cfg, self.method)
        self.payoffs_ = channel_payoffs(self.x_, cfg)
        self.average_payoff_ = float(self.payoffs_.mean())
        self.n_channels_ = cfg.n_channels
        return self

    def score(self, network=None, y=None) -> float:
        """Negative relative payoff spread; 0 at an exact equal-payoff state."""
        check_is_fitted(self, "x_")
        p = self.payoffs_
        return -float((p.max() - p.min()) / p.mean())


class _AssignmentMixin(ClusterMixin):
    def occupancy(self) -> np.ndarray:
        check_is_fitted(self, "labels_")
        return occupancy(self.labels_, self.n_channels_)

    def score(self, network, y=None) -> float:
        """Expected system throughput of the fitted assignment on ``network``."""
        check_is_fitted(self, "labels_")
        return system_throughput(self.occupancy(), _check_network(network))


class EvolutionarySpectrumAccess(_AssignmentMixin, BaseEstimator):
    """Agent-based evolutionary mechanism; ``labels_`` is the final assignment."""

    def __init__(self, adaptation_factor: float = 0.5, slots: int = 100, mutation_events=(),
                 random_state=0):
        self.adaptation_factor = adaptation_factor
        self.slots = slots
        self.mutation_events = mutation_events
        self.random_state = random_state

    def fit(self, network, y=None):
        cfg = _check_network(network)
        evo = EvolutionConfig(self.adaptation_factor, self.slots, _seed(self.random_state),
                              tuple(self.mutation_events))
        self.trace_ = run_evolutionary(cfg, evo)
        self.labels_ = self.trace_.final_assignment
        self.state_ = self.trace_.states[-1]
        self.equilibrium_ = self.trace_.equilibrium
        self.n_channels_ = cfg.n_channels
        return self


class LearningSpectrumAccess(_AssignmentMixin, BaseEstimator):
    """Distributed learning mechanism.

    ``strategies_`` holds the final mixed strategies and ``labels_`` each
    user's most likely channel under them.
    """

    def __init__(self, memory_weight: float = 0.99, period_slots: int = 100, periods: int = 500,
                 random_state=0):
        self.memory_weight = memory_weight
        self.period_slots = period_slots
        self.periods = periods
        self.random_state = random_state

    def fit(self, network, y=None):
        cfg = _check_network(network)
        lcfg = LearningConfig(self.memory_weight, self.period_slots, self.periods,
                              _seed(self.random_state))
        self.trace_ = run_learning(cfg, lcfg)
        self.strategies_ = self.trace_.strategies[-1]
        self.labels_ = self.strategies_.argmax(axis=1)
        self.time_average_ = self.trace_.time_average[-1]
        self.equilibrium_ = self.trace_.equilibrium
        self.n_channels_ = cfg.n_channels
        return self


class SoftmaxReinforcementLearning(_AssignmentMixin, BaseEstimator):
    """Softmax reinforcement-learning baseline."""

    def __init__(self, temperature: float = 10.0, smoothing: float = 100.0, periods: int = 500,
                 period_slots: int = 100, random_state=0):
        self.temperature = temperature
        self.smoothing = smoothing
        self.periods = periods
        self.period_slots = period_slots
        self.random_state = random_state

    def fit(self, network, y=None):
        cfg = _check_network(network)
        rl = RlConfig(self.temperature, self.smoothing, self.periods, self.period_slots,
                      _seed(self.random_state))
        self.trace_ = run_rl(cfg, rl)
        self.strategies_ = self.trace_.strategies[-1]
        self.labels_ = self.strategies_.argmax(axis=1)
        self.throughput_ = self.trace_.window_throughput()
        self.n_channels_ = cfg.n_channels
        return self


class CentralizedOptimum(_AssignmentMixin, BaseEstimator):
    """Throughput-maximizing occupancy; ``labels_`` lists users channel by channel."""

    def __init__(self, method: str = "auto"):
        self.method = method

    def fit(self, network, y=None):
        cfg = _check_network(network)
        res = centralized_optimum(cfg, self.method)
        self.counts_ = res.counts
        self.throughput_ = res.throughput
        self.labels_ = np.repeat(np.arange(cfg.n_channels), res.counts)
        self.n_channels_ = cfg.n_channels
        return self


__all__ = ["ESSSolver", "EvolutionarySpectrumAccess", "LearningSpectrumAccess",
           "SoftmaxReinforcementLearning", "CentralizedOptimum"]
