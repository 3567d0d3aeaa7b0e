"""INI-style run configuration.

Sections: ``env``, ``topology``, ``features``, ``algorithm``, ``schedule``
(step-size overrides), ``nac``, ``run``, ``diagnostics``.  Every key has a
default so an empty file describes a valid run.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from ..errors import ConfigError
from ..algos.runners import ORACLE_METRICS

ALGORITHMS = ("sdac-re", "sdac-noi", "nac", "tdac-re", "tdac-noi", "dldac")
DEFAULT_SCHEDULE = {
    "sdac-re": "sdac-empirical",
    "sdac-noi": "sdac-empirical",
    "nac": "sdac-empirical",
    "tdac-re": "tdac",
    "tdac-noi": "tdac",
    "dldac": "dldac",
}
_FLOAT_OVERRIDES = {"alpha_bar", "beta_bar", "eta_bar", "p", "p_alpha", "p_beta", "p_eta", "beta_ratio", "eta_ratio"}
_INT_OVERRIDES = {"T_c", "T_c_comm", "T_r", "N", "N_c"}


@dataclass(frozen=True)
class RunConfig:
    # env
    env: str = "random"
    n_agents: int = 3
    n_states: int = 10
    actions: tuple = (2,)
    env_seed: int = 0
    gamma: float = 0.1
    r_max: float = 1.0
    side: int = 3
    landmarks: tuple = ()
    collision_penalty: float = 0.25
    distance_scale: float = 0.25
    max_states: int = 10**6
    # topology
    topology: str = "ring"
    # features
    critic_features: str = "tabular"
    reward_features: str = "tabular"
    feature_seed: int = 0
    # algorithm
    algorithm: str = "sdac-re"
    schedule: str = ""
    K: int = 1000
    K_c: int = 1
    K_r: int = 2
    sigma: float = 0.5
    sampling: str = "markovian"
    C_a: int = 1
    C_c: int = 1
    batch: int = 1
    td_at: str = "post"
    schedule_overrides: dict = field(default_factory=dict)
    # nac
    nac_N_a: int = 0
    nac_K_a: int = 50
    nac_K_z: int = 5
    nac_rho: float = 0.0
    nac_C_h: float = 100.0
    nac_sign: str = "ascent"
    # run
    n_mc_runs: int = 1
    seed: int = 0
    out: str = "runs/default"
    # diagnostics
    oracle: bool = True
    oracle_every: int = 100
    oracle_metrics: tuple = ("objective",)

    def __post_init__(self):
        if self.env not in ("random", "nav"):
            raise ConfigError(f"env must be 'random' or 'nav', got {self.env!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if not self.schedule:
            object.__setattr__(self, "schedule", DEFAULT_SCHEDULE[self.algorithm])
        if self.algorithm.startswith("tdac") and self.schedule != "tdac":
            raise ConfigError("tdac algorithms need the tdac schedule")
        if (self.algorithm == "dldac") != (self.schedule == "dldac"):
            raise ConfigError("the dldac schedule goes with the dldac algorithm only")
        if self.n_mc_runs < 1:
            raise ConfigError("n_mc_runs must be at least 1")
        if self.K < 0 or self.K_c < 1 or self.K_r < 1 or self.sigma < 0:
            raise ConfigError("need K >= 0, K_c >= 1, K_r >= 1, sigma >= 0")
        if self.oracle_every < 0:
            raise ConfigError("oracle_every must be nonnegative")
        bad = set(self.oracle_metrics) - set(ORACLE_METRICS)
        if bad:
            raise ConfigError(f"unknown oracle metrics {sorted(bad)}")
        if len(self.actions) not in (1, self.n_agents):
            raise ConfigError("actions needs one count or one per agent")

    @property
    def action_counts(self):
        if self.env == "nav":
            return (5,) * self.n_agents
        return tuple(self.actions) * self.n_agents if len(self.actions) == 1 else tuple(self.actions)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def env_key(self):
        """Fields that identify the environment, topology and seed sequence."""
        keys = ("env", "n_agents", "n_states", "actions", "env_seed", "gamma", "r_max", "side", "landmarks",
                "collision_penalty", "distance_scale", "topology", "seed", "n_mc_runs")
        return tuple((k, getattr(self, k)) for k in keys)

    def items(self):
        """Resolved ``(key, text)`` pairs in a fixed order, for metrics headers."""
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "schedule_overrides":
                out.extend((f"schedule.{k}", _fmt(v[k])) for k in sorted(v))
            else:
                out.append((f.name, _fmt(v)))
        return out


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def _ints(text):
    text = text.strip()
    return tuple(int(x) for x in text.split(",") if x.strip()) if text else ()


def _words(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


# (section, key) -> (field, parser)
_SCHEMA = {
    ("env", "kind"): ("env", str),
    ("env", "n_agents"): ("n_agents", int),
    ("env", "n_states"): ("n_states", int),
    ("env", "actions"): ("actions", _ints),
    ("env", "seed"): ("env_seed", int),
    ("env", "gamma"): ("gamma", float),
    ("env", "r_max"): ("r_max", float),
    ("env", "side"): ("side", int),
    ("env", "landmarks"): ("landmarks", _ints),
    ("env", "collision_penalty"): ("collision_penalty", float),
    ("env", "distance_scale"): ("distance_scale", float),
    ("env", "max_states"): ("max_states", int),
    ("topology", "graph"): ("topology", str),
    ("features", "critic"): ("critic_features", str),
    ("features", "reward"): ("reward_features", str),
    ("features", "seed"): ("feature_seed", int),
    ("algorithm", "name"): ("algorithm", str),
    ("algorithm", "schedule"): ("schedule", str),
    ("algorithm", "k"): ("K", int),
    ("algorithm", "k_c"): ("K_c", int),
    ("algorithm", "k_r"): ("K_r", int),
    ("algorithm", "sigma"): ("sigma", float),
    ("algorithm", "sampling"): ("sampling", str),
    ("algorithm", "c_a"): ("C_a", int),
    ("algorithm", "c_c"): ("C_c", int),
    ("algorithm", "batch"): ("batch", int),
    ("algorithm", "td_at"): ("td_at", str),
    ("nac", "n_a"): ("nac_N_a", int),
    ("nac", "k_a"): ("nac_K_a", int),
    ("nac", "k_z"): ("nac_K_z", int),
    ("nac", "rho"): ("nac_rho", float),
    ("nac", "c_h"): ("nac_C_h", float),
    ("nac", "sign"): ("nac_sign", str),
    ("run", "n_mc_runs"): ("n_mc_runs", int),
    ("run", "seed"): ("seed", int),
    ("run", "out"): ("out", str),
    ("diagnostics", "oracle"): ("oracle", None),
    ("diagnostics", "oracle_every"): ("oracle_every", int),
    ("diagnostics", "metrics"): ("oracle_metrics", _words),
}


def parse_config(text, source="<string>"):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values, overrides = {}, {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            if section == "schedule":
                name = next((n for n in _FLOAT_OVERRIDES | _INT_OVERRIDES if n.lower() == key), None)
                if name is None:
                    raise ConfigError(f"{source}: unknown schedule override {key!r}")
                try:
                    overrides[name] = int(raw) if name in _INT_OVERRIDES else float(raw)
                except ValueError as exc:
                    raise ConfigError(f"{source}: bad value for schedule.{key}: {raw!r}") from exc
                continue
            entry = _SCHEMA.get((section, key))
            if entry is None:
                raise ConfigError(f"{source}: unknown key [{section}] {key}")
            name, conv = entry
            try:
                values[name] = cp.getboolean(section, key) if conv is None else conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for [{section}] {key}: {raw!r}") from exc
    if overrides:
        values["schedule_overrides"] = overrides
    return RunConfig(**values)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, source=str(path))
