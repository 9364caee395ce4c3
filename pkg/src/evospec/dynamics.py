"""Deterministic population and learning dynamics on the simplex.

Replicator velocities, the mean dynamics of the learning mechanism, a
fixed-step RK4 integrator with projective renormalization, and the Lyapunov
functions used to certify convergence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np
from scipy import integrate as _quad

from .channel import grab_probability
from .game import NetworkConfig, channel_payoffs, ess_equilibrium
from .validation import check_interior

REPLICATOR = "replicator-general"
ASYMPTOTIC = "replicator-asymptotic"
MEAN_LEARNING = "mean-learning"
ODE_KINDS = (REPLICATOR, ASYMPTOTIC, MEAN_LEARNING)

_NEG_TOL = 1e-9
_MAX_HALVINGS = 60
_ENUM_CAP = 10 ** 6


class StepSizeError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# velocity fields


def replicator_rhs(x, cfg: NetworkConfig, alpha: float = 1.0) -> np.ndarray:
    """alpha * (U_m(x) / U(x) - 1) for each channel; accepts a batch of states."""
    payoff = channel_payoffs(x, cfg)
    return alpha * (payoff / payoff.mean(axis=-1, keepdims=True) - 1.0)


def asymptotic_rhs(x, cfg: NetworkConfig, alpha: float = 1.0) -> np.ndarray:
    """Closed-form velocity when g(k) = 1/k; needs full support."""
    x = np.asarray(x, dtype=float)
    ratio = cfg.weights / x
    return alpha * (ratio / ratio.mean(axis=-1, keepdims=True) - 1.0)


def mean_learning_rhs(f, Q) -> np.ndarray:
    """f_mn * (Q_mn - sum_i f_in Q_in) for every user (rows) and channel (columns)."""
    f = np.asarray(f, dtype=float)
    Q = np.asarray(Q, dtype=float)
    avg = np.sum(f * Q, axis=-1, keepdims=True)
    return f * (Q - avg)


# --------------------------------------------------------------------------
# mean payoff map Q_{m,n}(f)


def poisson_binomial_pmf(probs) -> np.ndarray:
    pmf = np.ones(1)
    for p in np.asarray(probs, dtype=float):
        nxt = np.zeros(len(pmf) + 1)
        nxt[:-1] += pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def _entrant_table(cfg: NetworkConfig) -> np.ndarray:
    # g(1 + c) for c = 0..N-1 others on the channel
    return grab_probability(np.arange(1, cfg.n_users + 1, dtype=float), cfg.contention)


def mean_payoff_map(f, cfg: NetworkConfig, mode: str = "exact", n_samples: int = 10 ** 5,
                    rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Q[n, m]: expected payoff of user n on channel m when the others play ``f``.

    ``mode`` is ``"enumerate"`` (all joint choices of the other users),
    ``"exact"`` (Poisson-binomial count of the others on each channel) or
    ``"monte-carlo"``.
    """
    f = np.asarray(f, dtype=float)
    N, M = f.shape
    if N != cfg.n_users or M != cfg.n_channels:
        raise ValueError(f"strategy matrix has shape {f.shape}, expected ({cfg.n_users}, {cfg.n_channels})")
    g = _entrant_table(cfg)
    w = cfg.weights
    if mode == "enumerate":
        if M ** (N - 1) > _ENUM_CAP:
            raise ValueError(f"{M}^{N - 1} joint profiles exceed {_ENUM_CAP}; use mode='monte-carlo'")
        profiles = np.array(list(product(range(M), repeat=N - 1)), dtype=np.int64).reshape(-1, N - 1)
        Q = np.empty((N, M))
        for n in range(N):
            others = np.delete(np.arange(N), n)
            prob = np.prod(f[others[None, :], profiles], axis=1) if N > 1 else np.ones(1)
            for m in range(M):
                c = (profiles == m).sum(axis=1)
                Q[n, m] = w[m] * np.dot(prob, g[c])
        return Q
    if mode == "exact":
        Q = np.empty((N, M))
        for m in range(M):
            for n in range(N):
                pmf = poisson_binomial_pmf(np.delete(f[:, m], n))
                Q[n, m] = w[m] * np.dot(pmf, g[:len(pmf)])
        return Q
    if mode == "monte-carlo":
        rng = np.random.default_rng() if rng is None else rng
        cdf = np.cumsum(f, axis=1)
        cdf[:, -1] = 1.0
        total = np.zeros((N, M))
        chunk = max(1, 2_000_000 // (N * M))
        done = 0
        while done < n_samples:
            s = min(chunk, n_samples - done)
            u = rng.random((s, N, 1))
            choice = (u > cdf[None, :, :]).sum(axis=2)
            counts = np.stack([(choice == m).sum(axis=1) for m in range(M)], axis=1)  # (s, M)
            others = counts[:, None, :] - (choice[:, :, None] == np.arange(M))
            total += g[others].sum(axis=0)
            done += s
        return w * total / n_samples
    raise ValueError(f"unknown mode {mode!r}")


def learning_potential(f, cfg: NetworkConfig) -> float:
    """Expected discrete potential (1/N) sum_m sum_{j<=k_m} theta_m B_m g(j) under ``f``.

    Moving user n from channel m' to m changes it by exactly (Q_mn - Q_m'n) / N,
    so it cannot decrease along the mean learning dynamics.
    """
    f = np.asarray(f, dtype=float)
    N, M = f.shape
    g = grab_probability(np.arange(1, N + 1, dtype=float), cfg.contention)
    total = 0.0
    for m in range(M):
        pmf = poisson_binomial_pmf(f[:, m])
        cum = np.concatenate([[0.0], np.cumsum(cfg.weights[m] * g)])
        total += np.dot(pmf, cum[:len(pmf)])
    return total / N


# --------------------------------------------------------------------------
# Lyapunov functions


def _integrated_grab(K: np.ndarray, cfg: NetworkConfig) -> np.ndarray:
    """int_1^K g(k) dk for K >= 1."""
    K = np.asarray(K, dtype=float)
    if cfg.contention.is_infinite:
        return np.log(K)
    L = cfg.contention.backoff_slots
    if L == 1:
        return np.zeros_like(K)
    j = np.arange(1, L, dtype=float)
    logb = np.log(j / L)
    flat = K.reshape(-1)
    out = np.empty(flat.shape)
    chunk = max(1, 2_000_000 // len(logb))
    for i in range(0, flat.size, chunk):
        s = flat[i:i + chunk, None] - 1.0
        out[i:i + chunk] = np.sum(np.expm1(s * logb) / logb, axis=1) / L
    return out.reshape(K.shape)


def lyapunov_potential(x, cfg: NetworkConfig, method: str = "quad"):
    """sum_m int_0^{x_m} theta_m B_m g(max(N z, 1)) dz.

    The integrand is floored at one contender, which keeps the integral finite
    in the INFINITE-backoff case. ``method="exact"`` uses the closed-form
    antiderivative of the grab probability; ``"quad"`` integrates numerically.
    """
    x = np.asarray(x, dtype=float)
    N = cfg.n_users
    w = cfg.weights
    if method == "exact":
        K = np.maximum(N * x, 1.0)
        per = np.where(N * x <= 1.0, x, (1.0 + _integrated_grab(K, cfg)) / N)
        return (w * per).sum(axis=-1)
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    if x.ndim > 1:
        return np.array([lyapunov_potential(row, cfg, "quad") for row in x.reshape(-1, x.shape[-1])]
                        ).reshape(x.shape[:-1])
    total = 0.0
    for m, xm in enumerate(x):
        head = min(xm, 1.0 / N)
        total += w[m] * head
        if xm > 1.0 / N:
            val, _ = _quad.quad(lambda z: grab_probability(N * z, cfg.contention), 1.0 / N, xm,
                                epsabs=0.0, epsrel=1e-10, limit=200)
            total += w[m] * val
    return total


def lyapunov_kl(x, x_star):
    """-sum_m x*_m ln(x_m / x*_m); zero at x*, positive elsewhere on the simplex."""
    x = check_interior(x)
    x_star = np.asarray(x_star, dtype=float)
    return -np.sum(x_star * np.log(x / x_star), axis=-1)


# --------------------------------------------------------------------------
# integration


@dataclass
class OdeSpec:
    kind: str
    initial: np.ndarray
    step: float = 0.01
    horizon: float = 50.0
    alpha: float = 1.0
    record_every: int = 10
    payoff_mode: str = "exact"  # Q evaluation for mean-learning

    def __post_init__(self):
        if self.kind not in ODE_KINDS:
            raise ValueError(f"kind must be one of {ODE_KINDS}, got {self.kind!r}")
        if not self.step > 0.0:
            raise ValueError(f"step must be positive, got {self.step!r}")
        if not self.horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon!r}")
        self.initial = np.asarray(self.initial, dtype=float)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_records, *initial.shape)
    kind: str
    halvings: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _renormalize(y: np.ndarray) -> np.ndarray:
    y = np.clip(y, 0.0, None)
    return y / y.sum(axis=-1, keepdims=True)


def _rk4(fun, y, h):
    k1 = fun(y)
    k2 = fun(y + 0.5 * h * k1)
    k3 = fun(y + 0.5 * h * k2)
    k4 = fun(y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Stepper:
    def __init__(self, fun):
        self.fun = fun
        self.halvings = 0

    def advance(self, y, h, depth=0):
        """One step of size ``h`` for a batch of states; bad rows retry with two half steps."""
        with np.errstate(all="ignore"):
            y_new = _rk4(self.fun, y, h)
        flat = y_new.reshape(len(y_new), -1)
        bad = ~np.all(np.isfinite(flat), axis=1) | (flat.min(axis=1) < -_NEG_TOL)
        if bad.any():
            if depth >= _MAX_HALVINGS:
                raise StepSizeError(f"step size underflow after {_MAX_HALVINGS} halvings")
            self.halvings += 1
            sub = self.advance(y[bad], 0.5 * h, depth + 1)
            y_new[bad] = self.advance(sub, 0.5 * h, depth + 1)
        return _renormalize(y_new)


def integrate(spec: OdeSpec, cfg: NetworkConfig) -> Trajectory:
    """Fixed-step RK4 from ``spec.initial``.

    Replicator kinds take a single state (M,) or a batch (B, M); mean-learning
    takes an (N, M) strategy matrix.
    """
    y0 = spec.initial
    if spec.kind == MEAN_LEARNING:
        def one(f):
            return spec.alpha * mean_learning_rhs(f, mean_payoff_map(f, cfg, spec.payoff_mode))

        def fun(batch):
            return np.stack([one(f) for f in batch])

        y = y0[None]
    else:
        rhs = replicator_rhs if spec.kind == REPLICATOR else asymptotic_rhs

        def fun(batch):
            return rhs(batch, cfg, spec.alpha)

        y = y0[None] if y0.ndim == 1 else y0.copy()
    if np.any(y < 0.0) or np.any(np.abs(y.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("initial state must lie on the simplex")

    n_steps = int(round(spec.horizon / spec.step))
    stepper = _Stepper(fun)
    times, records = [0.0], [y.copy()]
    for i in range(1, n_steps + 1):
        y = stepper.advance(y, spec.step)
        if i % spec.record_every == 0 or i == n_steps:
            times.append(i * spec.step)
            records.append(y.copy())
    states = np.stack(records)
    if spec.kind == MEAN_LEARNING or y0.ndim == 1:
        states = states[:, 0]
    return Trajectory(np.array(times), states, spec.kind, stepper.halvings)


# --------------------------------------------------------------------------
# descent certificates


@dataclass
class DescentReport:
    max_increase: float
    violations: int
    values: np.ndarray = field(repr=False)


def lyapunov_values(trajectory: Trajectory, kind: str, cfg: Optional[NetworkConfig] = None,
                    x_star=None) -> np.ndarray:
    states = trajectory.states
    if kind == "kl":
        if x_star is None:
            x_star = ess_equilibrium(cfg)
        return lyapunov_kl(states, x_star)
    if kind == "potential":
        if x_star is None:
            x_star = ess_equilibrium(cfg)
        return lyapunov_potential(x_star, cfg, "exact") - lyapunov_potential(states, cfg, "exact")
    if kind == "learning-potential":
        # ascent function; negate so that the certificate is again a descent
        return -np.array([learning_potential(f, cfg) for f in states])
    raise ValueError(f"unknown Lyapunov kind {kind!r}")


def verify_descent(trajectory: Trajectory, kind: str, cfg: Optional[NetworkConfig] = None,
                   x_star=None, slack: float = 1e-9) -> DescentReport:
    """Largest sample-to-sample increase of the chosen Lyapunov function.

    ``kind`` is ``"potential"`` (L* - L), ``"kl"`` or ``"learning-potential"``.
    """
    values = lyapunov_values(trajectory, kind, cfg, x_star)
    diffs = np.diff(values, axis=0)
    max_inc = float(max(0.0, np.max(diffs))) if diffs.size else 0.0
    return DescentReport(max_inc, int(np.sum(diffs > slack)), values)
