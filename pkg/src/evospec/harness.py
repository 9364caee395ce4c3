"""Scenario files, seeded batch runs and CSV/JSON export."""
from __future__ import annotations

import copy
import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
import numpy as np
from scipy import stats

from .baselines import RlConfig, centralized_optimum, run_rl
from .channel import INFINITE, RATE_MODELS, ChannelSpec, ContentionSpec, MarkovSpec
from .dynamics import (ASYMPTOTIC, MEAN_LEARNING, ODE_KINDS, REPLICATOR, OdeSpec, integrate,
                       lyapunov_values)
from .evolutionary import EvolutionConfig, MutationEvent, run_evolutionary
from .game import (NetworkConfig, channel_payoffs, ess_equilibrium, payoff_spread,
                   potential_equilibrium_counts, system_throughput)
from .learning import LearningConfig, run_learning

MECHANISMS = ("evolutionary", "learning", "rl", "ode", "ess", "optimum", "compare")
COMPARE_USERS = (4, 5, 8, 10, 20, 50, 100, 200)


class ConfigError(ValueError):
    """Invalid scenario file; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ScenarioError(RuntimeError):
    """A module error raised while running a scenario, with the scenario named."""


@dataclass
class Scenario:
    name: str
    network: NetworkConfig
    mechanism: str
    params: dict = field(default_factory=dict)
    replications: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ConfigError("mechanism", f"unknown mechanism {self.mechanism!r}")
        if self.replications < 1:
            raise ConfigError("replications", "must be at least 1")


# --------------------------------------------------------------------------
# presets


def _reference_channels_raw():
    theta = ["2/3", "4/7", "5/9", "1/2", "4/5"]
    rates = [15, 70, 90, 20, 100]
    return [{"idle_prob": t, "mean_rate": b} for t, b in zip(theta, rates)]


PRESETS = {
    "paper-5ch": {
        "name": "paper-5ch",
        "users": 100,
        "channels": _reference_channels_raw(),
        "contention": {"slots": 100000},
        "mechanism": "evolutionary",
        "params": {"adaptation_factor": 0.5, "slots": 100},
        "replications": 20,
        "seed": 0,
    },
    "paper-10ch-markov": {
        "name": "paper-10ch-markov",
        "users": 100,
        "channels": [{"mean_rate": b, "markov": {"p": 0.3, "q": 0.3}}
                     for b in (10, 40, 50, 20, 80, 60, 15, 25, 30, 70)],
        "contention": {"slots": 100000},
        "mechanism": "learning",
        "params": {"memory_weight": 0.99, "period_slots": 100, "periods": 500},
        "replications": 10,
        "seed": 0,
    },
    "small-n4": {
        "name": "small-n4",
        "users": 4,
        "channels": _reference_channels_raw(),
        "contention": {"slots": 20},
        "mechanism": "evolutionary",
        "params": {"adaptation_factor": 0.5, "slots": 100},
        "replications": 20,
        "seed": 0,
    },
}


# --------------------------------------------------------------------------
# parsing


def _number(value, path: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(path, "expected a number")
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(path, f"cannot parse {value!r} as a number") from None
    if isinstance(value, (int, float)):
        return float(value)
    raise ConfigError(path, "expected a number")


def _integer(value, path: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(path, "expected an integer")
    if value < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return int(value)


def _require(raw: dict, key: str, path: str):
    if key not in raw:
        raise ConfigError(f"{path}{key}", "missing required field")
    return raw[key]


def _parse_channel(raw, path: str) -> ChannelSpec:
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    rate = _number(_require(raw, "mean_rate", path + "."), path + ".mean_rate")
    if not rate > 0.0:
        raise ConfigError(path + ".mean_rate", "must be positive")
    model = raw.get("rate_model", RATE_MODELS[0])
    if model not in RATE_MODELS:
        raise ConfigError(path + ".rate_model", f"must be one of {RATE_MODELS}")
    chain = None
    if raw.get("markov") is not None:
        m = raw["markov"]
        if not isinstance(m, dict):
            raise ConfigError(path + ".markov", "expected an object with p and q")
        pq = {}
        for key in ("p", "q"):
            value = _number(_require(m, key, path + ".markov."), f"{path}.markov.{key}")
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{path}.markov.{key}", "must lie in the open interval (0, 1)")
            pq[key] = value
        chain = MarkovSpec(pq["p"], pq["q"])
    if "idle_prob" in raw:
        idle = _number(raw["idle_prob"], path + ".idle_prob")
    elif chain is not None:
        idle = chain.stationary_idle
    else:
        raise ConfigError(path + ".idle_prob", "missing required field")
    if not 0.0 < idle < 1.0:
        raise ConfigError(path + ".idle_prob", "must lie in the open interval (0, 1)")
    bw = _number(raw.get("bandwidth_mhz", 10.0), path + ".bandwidth_mhz")
    if not bw > 0.0:
        raise ConfigError(path + ".bandwidth_mhz", "must be positive")
    return ChannelSpec(idle, rate, model, chain, bw)


def _parse_contention(raw) -> ContentionSpec:
    slots = raw.get("slots") if isinstance(raw, dict) else raw
    if isinstance(slots, str) and slots.strip().lower() in ("infinite", "inf"):
        return ContentionSpec(INFINITE)
    return ContentionSpec(_integer(slots, "contention.slots"))


_PARAM_KEYS = {
    "evolutionary": {"adaptation_factor", "slots", "mutation_events", "tolerance"},
    "learning": {"memory_weight", "period_slots", "periods", "tolerance"},
    "rl": {"temperature", "smoothing", "periods", "period_slots"},
    "ode": {"kind", "step", "horizon", "alpha", "record_every", "payoff_mode", "initial",
            "tolerance"},
    "ess": {"method"},
    "optimum": {"method"},
    "compare": {"n_values", "temperature", "smoothing", "periods", "period_slots"},
}


def _check_params(mechanism: str, params: dict, network: NetworkConfig) -> dict:
    if not isinstance(params, dict):
        raise ConfigError("params", "expected an object")
    unknown = set(params) - _PARAM_KEYS[mechanism]
    if unknown:
        raise ConfigError(f"params.{sorted(unknown)[0]}", f"not a parameter of {mechanism!r}")
    # build the mechanism config once so range errors surface at load time
    try:
        if mechanism == "evolutionary":
            _evolution_config(params, 0)
        elif mechanism == "learning":
            _learning_config(params, 0)
        elif mechanism in ("rl", "compare"):
            _rl_config(params, 0)
        elif mechanism == "ode":
            _ode_spec(params, network, np.random.default_rng(0))
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        key = str(exc).split()[0].strip("'") if str(exc) else ""
        field_path = f"params.{key}" if key in _PARAM_KEYS[mechanism] else "params"
        raise ConfigError(field_path, str(exc)) from None
    if mechanism == "compare":
        for i, n in enumerate(params.get("n_values", COMPARE_USERS)):
            _integer(n, f"params.n_values[{i}]")
    return params


def parse_config(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    users = _integer(_require(raw, "users", ""), "users")
    channels_raw = _require(raw, "channels", "")
    if not isinstance(channels_raw, list) or not channels_raw:
        raise ConfigError("channels", "expected a non-empty list")
    channels = [_parse_channel(c, f"channels[{i}]") for i, c in enumerate(channels_raw)]
    try:
        contention = _parse_contention(raw.get("contention", {"slots": "infinite"}))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("contention.slots", str(exc)) from None
    mechanism = _require(raw, "mechanism", "")
    if mechanism not in MECHANISMS:
        raise ConfigError("mechanism", f"unknown mechanism {mechanism!r}; expected one of {MECHANISMS}")
    network = NetworkConfig(users, channels, contention)
    params = _check_params(mechanism, raw.get("params", {}), network)
    replications = _integer(raw.get("replications", 1), "replications")
    seed = _integer(raw.get("seed", 0), "seed", minimum=0)
    if seed >= 2 ** 64:
        raise ConfigError("seed", "must fit in 64 bits")
    return Scenario(str(raw.get("name", "scenario")), network, mechanism, params, replications, seed)


def load_config(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(raw)


def preset(name: str, **overrides) -> Scenario:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    raw = copy.deepcopy(PRESETS[name])
    raw.update(overrides)
    return parse_config(raw)


# --------------------------------------------------------------------------
# running


def replication_seed(master: int, r: int) -> int:
    """Seed for replication ``r``; independent of how many replications run."""
    return int(np.random.SeedSequence(master, spawn_key=(r,)).generate_state(1, np.uint64)[0])


def _evolution_config(params: dict, seed: int) -> EvolutionConfig:
    events = tuple(MutationEvent(int(e["slot"]), float(e["fraction"]))
                   for e in params.get("mutation_events", ()))
    return EvolutionConfig(params.get("adaptation_factor", 0.5), params.get("slots", 100),
                           seed, events)


def _learning_config(params: dict, seed: int) -> LearningConfig:
    return LearningConfig(params.get("memory_weight", 0.99), params.get("period_slots", 100),
                          params.get("periods", 500), seed)


def _rl_config(params: dict, seed: int) -> RlConfig:
    return RlConfig(params.get("temperature", 10.0), params.get("smoothing", 100.0),
                    params.get("periods", 500), params.get("period_slots", 100), seed)


def _ode_spec(params: dict, cfg: NetworkConfig, rng: np.random.Generator) -> OdeSpec:
    kind = params.get("kind", REPLICATOR)
    if kind not in ODE_KINDS:
        raise ConfigError("params.kind", f"must be one of {ODE_KINDS}")
    M = cfg.n_channels
    if "initial" in params:
        initial = np.asarray(params["initial"], dtype=float)
    elif kind == MEAN_LEARNING:
        initial = rng.dirichlet(np.ones(M), size=cfg.n_users)
    else:
        initial = rng.dirichlet(np.ones(M))
    return OdeSpec(kind, initial, params.get("step", 0.01), params.get("horizon", 50.0),
                   params.get("alpha", 1.0), params.get("record_every", 10),
                   params.get("payoff_mode", "exact"))


def confidence_interval(values, level: float = 0.95):
    """Mean and Student-t interval; the interval is NaN with fewer than two values."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return float("nan"), float("nan"), float("nan")
    mean = float(v.mean())
    if v.size < 2:
        return mean, float("nan"), float("nan")
    half = stats.t.ppf(0.5 + level / 2, v.size - 1) * v.std(ddof=1) / np.sqrt(v.size)
    return mean, mean - float(half), mean + float(half)


@dataclass
class ScenarioResult:
    scenario: Scenario
    traces: list  # per replication trace objects (empty for table mechanisms)
    summaries: list  # per replication metric dicts
    aggregate: dict  # metric -> {"mean", "ci_low", "ci_high", "n"}
    table: list = field(default_factory=list)  # rows for ess / optimum / compare

    @property
    def is_table(self) -> bool:
        return self.scenario.mechanism in ("ess", "optimum", "compare")


def _aggregate(summaries: list) -> dict:
    out = {}
    for key in summaries[0] if summaries else ():
        vals = [np.nan if s[key] is None else s[key] for s in summaries]
        mean, lo, hi = confidence_interval(vals)
        out[key] = {"mean": mean, "ci_low": lo, "ci_high": hi,
                    "n": int(np.sum(np.isfinite(np.asarray(vals, dtype=float))))}
    return out


def _run_one(s: Scenario, seed: int):
    cfg, p = s.network, s.params
    if s.mechanism == "evolutionary":
        tr = run_evolutionary(cfg, _evolution_config(p, seed))
        tol = p.get("tolerance", 0.02)
        last = tr.states[-1]
        return tr, {"first_hit": tr.first_hit(tol), "final_distance": float(tr.distance()[-1]),
                    "final_spread": payoff_spread(last, cfg),
                    "mean_throughput": float(tr.throughput.mean())}
    if s.mechanism == "learning":
        tr = run_learning(cfg, _learning_config(p, seed))
        return tr, {"first_hit": tr.first_hit(p.get("tolerance", 0.05)),
                    "final_distance": float(tr.distance()[-1]),
                    "mean_throughput": float(tr.throughput.mean())}
    if s.mechanism == "rl":
        tr = run_rl(cfg, _rl_config(p, seed))
        return tr, {"window_throughput": tr.window_throughput(),
                    "mean_throughput": tr.time_average_throughput}
    if s.mechanism == "ode":
        spec = _ode_spec(p, cfg, np.random.default_rng(seed))
        traj = integrate(spec, cfg)
        x = _ode_shares(traj)
        dist = float(np.abs(x[-1] - ess_equilibrium(cfg)).max())
        return traj, {"final_distance": dist, "halvings": traj.halvings}
    raise AssertionError(s.mechanism)


def _ode_shares(traj) -> np.ndarray:
    return traj.states.mean(axis=1) if traj.kind == MEAN_LEARNING else traj.states


def _table(s: Scenario) -> list:
    cfg, p = s.network, s.params
    if s.mechanism == "ess":
        x = ess_equilibrium(cfg, p.get("method", "auto"))
        pay = channel_payoffs(x, cfg)
        return [{"channel": m + 1, "x": float(x[m]), "payoff": float(pay[m])}
                for m in range(cfg.n_channels)]
    if s.mechanism == "optimum":
        res = centralized_optimum(cfg, p.get("method", "auto"))
        row = {"n_users": cfg.n_users, "throughput": res.throughput, "method": res.method}
        row.update({f"k_{m + 1}": int(k) for m, k in enumerate(res.counts)})
        return [row]
    rows = []
    for n in p.get("n_values", COMPARE_USERS):
        net = cfg.with_users(int(n))
        opt = centralized_optimum(net).throughput
        evo = system_throughput(potential_equilibrium_counts(net), net)
        rl = [run_rl(net, _rl_config(p, replication_seed(s.seed, r))).window_throughput()
              for r in range(s.replications)]
        mean, lo, hi = confidence_interval(rl)
        rows.append({"n_users": int(n), "evolutionary": evo, "rl_mean": mean, "rl_ci_low": lo,
                     "rl_ci_high": hi, "optimum": opt, "loss_vs_optimum": 1.0 - evo / opt,
                     "gain_vs_rl": evo / mean - 1.0})
    return rows


def run_scenario(s: Scenario) -> ScenarioResult:
    try:
        if s.mechanism in ("ess", "optimum", "compare"):
            return ScenarioResult(s, [], [], {}, _table(s))
        traces, summaries = [], []
        for r in range(s.replications):
            tr, summary = _run_one(s, replication_seed(s.seed, r))
            traces.append(tr)
            summaries.append(summary)
        return ScenarioResult(s, traces, summaries, _aggregate(summaries))
    except ConfigError:
        raise
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        raise ScenarioError(f"scenario {s.name!r} ({s.mechanism}): {exc}") from exc


# --------------------------------------------------------------------------
# export


def trace_columns(n_channels: int) -> list:
    return (["replication", "t"] + [f"x_{m + 1}" for m in range(n_channels)]
            + [f"payoff_{m + 1}" for m in range(n_channels)]
            + ["avg_payoff", "system_throughput", "lyapunov"])


def _trace_arrays(mechanism: str, tr, cfg: NetworkConfig):
    """(t, x, payoffs, throughput, lyapunov or None) for one replication."""
    if mechanism == "evolutionary":
        return np.arange(len(tr.states)), tr.states, tr.payoffs, tr.throughput, tr.lyapunov
    if mechanism in ("learning", "rl"):
        x = tr.occupancy
        return np.arange(len(x)), x, channel_payoffs(x, cfg), tr.throughput, None
    x = _ode_shares(tr)
    pay = channel_payoffs(x, cfg)
    thr = cfg.n_users * (x * pay).sum(axis=1)
    kind = {REPLICATOR: "potential", ASYMPTOTIC: "kl", MEAN_LEARNING: "learning-potential"}[tr.kind]
    return tr.times, x, pay, thr, lyapunov_values(tr, kind, cfg)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def result_rows(result: ScenarioResult):
    """Header and rows of the CSV representation."""
    if result.is_table:
        header = list(result.table[0]) if result.table else []
        return header, [[row[k] for k in header] for row in result.table]
    cfg = result.scenario.network
    header = trace_columns(cfg.n_channels)
    rows = []
    for r, tr in enumerate(result.traces):
        t, x, pay, thr, lyap = _trace_arrays(result.scenario.mechanism, tr, cfg)
        avg = pay.mean(axis=1)
        for i in range(len(t)):
            rows.append([r, t[i], *x[i], *pay[i], avg[i], thr[i],
                         None if lyap is None else lyap[i]])
    return header, rows


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def result_dict(result: ScenarioResult) -> dict:
    s = result.scenario
    contention = s.network.contention
    out = {
        "name": s.name,
        "mechanism": s.mechanism,
        "users": s.network.n_users,
        "contention": "infinite" if contention.is_infinite else contention.backoff_slots,
        "replications": s.replications,
        "seed": s.seed,
        "params": s.params,
        "equilibrium": ess_equilibrium(s.network),
    }
    if result.is_table:
        out["table"] = result.table
    else:
        header, rows = result_rows(result)
        out["summaries"] = result.summaries
        out["aggregate"] = result.aggregate
        out["trace_columns"] = header
        out["trace"] = rows
    return _jsonable(out)


def export(result: ScenarioResult, fmt: str, path=None) -> str:
    """Write ``result`` as CSV or JSON to ``path`` (or return the text when ``path`` is None)."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    if fmt == "json":
        text = json.dumps(result_dict(result), indent=2, allow_nan=False) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header, rows = result_rows(result)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        text = buf.getvalue()
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from None
    return text


def read_trace_csv(path) -> tuple:
    """Parse an exported trace CSV back into (header, float array); blanks become NaN."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) if v != "" else np.nan for v in row] for row in reader]
    return header, np.array(data, dtype=float)
