"""Licensed-channel availability, per-slot rates and backoff contention.

A channel is idle with probability ``idle_prob`` (i.i.d. Bernoulli) or follows a
two-state Markov chain. When idle it offers a random rate with mean
``mean_rate`` (Mbps). Users sensing the same idle channel draw a uniform
integer backoff in ``1..backoff_slots``; the unique minimum grabs the channel,
a tie at the minimum is a collision and nobody transmits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize

INFINITE = math.inf

BUSY, IDLE = 0, 1

CONSTANT_MEAN = "constant-mean"
EXPONENTIAL_RATE = "exponential-rate"
RATE_MODELS = (CONSTANT_MEAN, EXPONENTIAL_RATE)

# direct summation up to this many mini-slots, Euler-Maclaurin tail above
_DIRECT_SUM_MAX = 16384
_EM_HEAD = 256
# B_{2p} / (2p)! for p = 1..4
_EM_COEFFS = (1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0, -1.0 / 1209600.0)


@dataclass(frozen=True)
class MarkovSpec:
    """Two-state chain over (busy, idle): busy->idle w.p. ``p``, idle->busy w.p. ``q``."""

    p: float
    q: float

    def __post_init__(self):
        for name in ("p", "q"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"markov.{name} must lie in (0, 1), got {value!r}")

    @property
    def stationary_idle(self) -> float:
        return self.p / (self.p + self.q)


@dataclass(frozen=True)
class ChannelSpec:
    idle_prob: float
    mean_rate: float
    rate_model: str = CONSTANT_MEAN
    markov: Optional[MarkovSpec] = None
    bandwidth_mhz: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.idle_prob < 1.0:
            raise ValueError(f"idle_prob must lie in (0, 1), got {self.idle_prob!r}")
        if not self.mean_rate > 0.0:
            raise ValueError(f"mean_rate must be positive, got {self.mean_rate!r}")
        if self.rate_model not in RATE_MODELS:
            raise ValueError(f"rate_model must be one of {RATE_MODELS}, got {self.rate_model!r}")
        if not self.bandwidth_mhz > 0.0:
            raise ValueError(f"bandwidth_mhz must be positive, got {self.bandwidth_mhz!r}")

    @property
    def long_run_idle(self) -> float:
        """Long-run idle fraction; the Markov stationary value when a chain is set."""
        if self.markov is not None:
            return self.markov.stationary_idle
        return self.idle_prob


@dataclass(frozen=True)
class ContentionSpec:
    """Backoff window size; ``INFINITE`` gives the collision-free 1/k limit."""

    backoff_slots: float = INFINITE

    def __post_init__(self):
        slots = self.backoff_slots
        if slots == INFINITE:
            return
        if isinstance(slots, bool) or int(slots) != slots or slots < 1:
            raise ValueError(f"backoff_slots must be a positive integer or INFINITE, got {slots!r}")
        object.__setattr__(self, "backoff_slots", int(slots))

    @property
    def is_infinite(self) -> bool:
        return self.backoff_slots == INFINITE


def _as_contention(contention) -> ContentionSpec:
    if isinstance(contention, ContentionSpec):
        return contention
    return ContentionSpec(contention)


# --------------------------------------------------------------------------
# grab probability


@lru_cache(maxsize=16)
def _log_bases(n_slots: int, start: int = 1) -> np.ndarray:
    j = np.arange(start, n_slots, dtype=float)
    return np.log(j / n_slots)


def _grab_direct(s: np.ndarray, n_slots: int) -> np.ndarray:
    # (1/L) sum_{j=1}^{L-1} (j/L)^s ; the j=0 term vanishes for s > 0
    logb = _log_bases(n_slots)
    flat = s.reshape(-1)
    out = np.empty(flat.shape)
    chunk = max(1, 2_000_000 // max(len(logb), 1))
    for i in range(0, flat.size, chunk):
        out[i:i + chunk] = np.exp(np.multiply.outer(flat[i:i + chunk], logb)).sum(axis=-1)
    return (out / n_slots).reshape(s.shape)


def _falling(s: np.ndarray, r: int) -> np.ndarray:
    out = np.ones_like(s)
    for i in range(r):
        out = out * (s - i)
    return out


def _grab_euler_maclaurin(s: np.ndarray, n_slots: int) -> np.ndarray:
    L = float(n_slots)
    J = _EM_HEAD
    head = np.exp(np.multiply.outer(s, _log_bases(J, 1) + math.log(J / L))).sum(axis=-1)
    # tail sum_{j=J}^{L} (j/L)^s, then drop the j=L term (=1)
    ratio = J / L
    f_j = ratio ** s
    tail = L / (s + 1.0) * (1.0 - ratio * f_j)
    tail += 0.5 * (f_j + 1.0)
    for p, coeff in enumerate(_EM_COEFFS, start=1):
        r = 2 * p - 1
        ff = _falling(s, r)
        tail += coeff * ff * (L ** -r - f_j * float(J) ** -r)
    return (head + tail - 1.0) / L


def grab_probability(k, contention):
    """Probability that one given contender out of ``k`` grabs an idle channel.

    ``k`` may be real-valued (>= 1) and array-like; the exponent is extended to
    real powers. INFINITE contention returns ``1/k``.
    """
    spec = _as_contention(contention)
    k_arr = np.asarray(k, dtype=float)
    if np.any(np.isnan(k_arr)) or np.any(k_arr < 1.0):
        raise ValueError(f"contender count must be >= 1, got {k!r}")
    if spec.is_infinite:
        out = 1.0 / k_arr
    else:
        s = k_arr - 1.0
        if spec.backoff_slots == 1:
            out = np.zeros_like(s)
        elif spec.backoff_slots <= _DIRECT_SUM_MAX:
            out = _grab_direct(s, spec.backoff_slots)
        else:
            out = _grab_euler_maclaurin(s, spec.backoff_slots)
        out = np.where(k_arr == 1.0, 1.0, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


def grab_probability_enumerated(k: int, backoff_slots: int) -> float:
    """Brute-force g(k): enumerate all backoff tuples. Test oracle for tiny sizes."""
    from fractions import Fraction
    from itertools import product

    wins = 0
    for draw in product(range(1, backoff_slots + 1), repeat=k):
        if all(draw[0] < d for d in draw[1:]):
            wins += 1
    return Fraction(wins, backoff_slots ** k)


# --------------------------------------------------------------------------
# channel state process


def step_channel_state(spec: ChannelSpec, prev: Optional[int], rng: np.random.Generator) -> int:
    """Draw this slot's state bit (1 = idle)."""
    if spec.markov is None:
        return IDLE if rng.random() < spec.idle_prob else BUSY
    if prev is None:
        return IDLE if rng.random() < spec.markov.stationary_idle else BUSY
    if prev == IDLE:
        return BUSY if rng.random() < spec.markov.q else IDLE
    return IDLE if rng.random() < spec.markov.p else BUSY


def channel_state_matrix(channels: Sequence[ChannelSpec], n_slots: int, rng: np.random.Generator,
                         prev: Optional[np.ndarray] = None) -> np.ndarray:
    """States of all channels over ``n_slots`` consecutive slots, shape (n_slots, M)."""
    M = len(channels)
    markov = np.array([c.markov is not None for c in channels])
    u = rng.random((n_slots, M))
    theta = np.array([c.idle_prob for c in channels])
    states = (u < theta).astype(np.int8)
    if not markov.any():
        return states
    p = np.array([c.markov.p if c.markov else 0.0 for c in channels])
    q = np.array([c.markov.q if c.markov else 0.0 for c in channels])
    pi = np.array([c.long_run_idle for c in channels])
    if prev is None:
        current = (rng.random(M) < pi).astype(np.int8)
        states[0, markov] = current[markov]
        first = 1
    else:
        current = np.asarray(prev, dtype=np.int8)
        first = 0
    for t in range(first, n_slots):
        flip = np.where(current == IDLE, u[t] < q, u[t] < p)
        nxt = np.where(flip, 1 - current, current).astype(np.int8)
        states[t, markov] = nxt[markov]
        current = nxt
    return states


# --------------------------------------------------------------------------
# rates


def shannon_mean_rate(snr_mean: float, bandwidth_mhz: float) -> float:
    """E[bandwidth * log2(1 + snr_mean * X)] with X ~ Exp(1), by quadrature."""
    val, _ = integrate.quad(lambda x: math.log2(1.0 + snr_mean * x) * math.exp(-x), 0.0, math.inf,
                            epsabs=1e-13, epsrel=1e-10, limit=200)
    return bandwidth_mhz * val


@lru_cache(maxsize=256)
def calibrate_snr(mean_rate: float, bandwidth_mhz: float) -> float:
    """Mean SNR of the exponential gain so the Shannon rate averages ``mean_rate``."""
    target = mean_rate / bandwidth_mhz
    hi = 2.0 ** (target + 2.0)
    while shannon_mean_rate(hi, bandwidth_mhz) < mean_rate:
        hi *= 2.0
    return optimize.brentq(lambda s: shannon_mean_rate(s, bandwidth_mhz) - mean_rate,
                           1e-12, hi, xtol=1e-14, rtol=1e-13)


def sample_rate(spec: ChannelSpec, rng: np.random.Generator, size=None, gain=None):
    """Rate (Mbps) offered by an idle channel.

    ``gain`` overrides the exponential draw with a fixed normalized gain X, so the
    SNR is ``snr_mean * X``.
    """
    if spec.rate_model == CONSTANT_MEAN:
        if size is None:
            return float(spec.mean_rate)
        return np.full(size, float(spec.mean_rate))
    snr_mean = calibrate_snr(float(spec.mean_rate), float(spec.bandwidth_mhz))
    if gain is None:
        gain = rng.exponential(1.0, size=size)
    rate = spec.bandwidth_mhz * np.log2(1.0 + snr_mean * np.asarray(gain, dtype=float))
    return float(rate) if np.ndim(rate) == 0 else rate


def shannon_rate(snr: float, bandwidth_mhz: float = 10.0) -> float:
    return bandwidth_mhz * math.log2(1.0 + snr)


# --------------------------------------------------------------------------
# contention


def contend(contenders: Sequence, contention, rng: np.random.Generator):
    """Resolve one slot's backoff race; returns the winner or ``None`` on collision."""
    contenders = list(contenders)
    if not contenders:
        raise ValueError("contend needs at least one contender")
    spec = _as_contention(contention)
    if len(contenders) == 1:
        return contenders[0]
    if spec.is_infinite:
        return contenders[int(rng.integers(len(contenders)))]
    backoff = rng.integers(1, spec.backoff_slots + 1, size=len(contenders))
    low = backoff.min()
    at_min = np.flatnonzero(backoff == low)
    if len(at_min) > 1:
        return None
    return contenders[int(at_min[0])]


def contention_winners(choices: np.ndarray, n_channels: int, n_slots: int, contention,
                       rng: np.random.Generator) -> np.ndarray:
    """Boolean (n_slots, N): did user n win the race on its chosen channel in slot t."""
    spec = _as_contention(contention)
    choices = np.asarray(choices)
    N = len(choices)
    won = np.zeros((n_slots, N), dtype=bool)
    if spec.is_infinite:
        for m in range(n_channels):
            idx = np.flatnonzero(choices == m)
            if len(idx) == 0:
                continue
            pick = rng.integers(len(idx), size=n_slots)
            won[np.arange(n_slots), idx[pick]] = True
        return won
    backoff = rng.integers(1, spec.backoff_slots + 1, size=(n_slots, N))
    for m in range(n_channels):
        idx = np.flatnonzero(choices == m)
        if len(idx) == 0:
            continue
        if len(idx) == 1:
            won[:, idx[0]] = True
            continue
        sub = backoff[:, idx]
        at_min = sub == sub.min(axis=1, keepdims=True)
        unique = at_min.sum(axis=1) == 1
        rows = np.flatnonzero(unique)
        won[rows, idx[at_min[rows].argmax(axis=1)]] = True
    return won


class ChannelEnvironment:
    """Slot simulator shared by the agent-based mechanisms.

    Users only ever see their own realized rate per slot: 0 when the channel
    was busy or the race was lost.
    """

    def __init__(self, channels: Sequence[ChannelSpec], contention, rng: np.random.Generator):
        self.channels = tuple(channels)
        self.contention = _as_contention(contention)
        self.rng = rng
        self._state = None
        self._markov = any(c.markov is not None for c in self.channels)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def _rates(self, n_slots: int) -> np.ndarray:
        cols = [sample_rate(c, self.rng, size=n_slots) for c in self.channels]
        return np.stack(cols, axis=1)

    def run(self, choices, n_slots: int = 1) -> np.ndarray:
        """Realized per-user rate for each slot, shape (n_slots, N)."""
        choices = np.asarray(choices, dtype=np.int64)
        states = channel_state_matrix(self.channels, n_slots, self.rng, self._state)
        if self._markov:
            self._state = states[-1].copy()
        rates = self._rates(n_slots) * states
        won = contention_winners(choices, self.n_channels, n_slots, self.contention, self.rng)
        return np.where(won, rates[:, choices], 0.0)
