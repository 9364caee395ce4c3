"""Evolutionary and learning-based distributed spectrum access."""
from .baselines import (OptimumResult, RlConfig, RlTrace, brute_force_optimum, centralized_optimum,
                        rl_step, run_rl, softmax)
from .channel import (BUSY, CONSTANT_MEAN, EXPONENTIAL_RATE, IDLE, INFINITE, ChannelEnvironment,
                      ChannelSpec, ContentionSpec, MarkovSpec, channel_state_matrix, contend,
                      grab_probability, grab_probability_enumerated, sample_rate)
from .dynamics import (ASYMPTOTIC, MEAN_LEARNING, REPLICATOR, OdeSpec, StepSizeError, Trajectory,
                       asymptotic_rhs, integrate, learning_potential, lyapunov_kl,
                       lyapunov_potential, mean_learning_rhs, mean_payoff_map, replicator_rhs,
                       verify_descent)
from .estimators import (CentralizedOptimum, ESSSolver, EvolutionarySpectrumAccess,
                         LearningSpectrumAccess, SoftmaxReinforcementLearning)
from .evolutionary import (EvolutionConfig, EvolutionTrace, MutationEvent, apply_mutation,
                           evolution_step, expected_drift, run_evolutionary)
from .game import (NetworkConfig, average_payoff, channel_payoffs, ess_equilibrium,
                   expected_payoff, is_strict_nash, markov_channels, reference_channels,
                   reference_network, potential_equilibrium_counts, strict_nash_equilibria,
                   system_throughput)
from .harness import (ConfigError, Scenario, ScenarioError, ScenarioResult, export, load_config,
                      parse_config, preset, run_scenario)
from .learning import (LearnerState, LearningConfig, LearningTrace, initial_estimation,
                       run_learning, select_channel, strategy_update, update_scores)
from .validation import SolverError

__version__ = "0.1.0"
