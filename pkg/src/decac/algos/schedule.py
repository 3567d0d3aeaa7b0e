"""Step-size schedules for the single-timescale, two-timescale and double-loop modes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import ConfigError

MODES = ("sdac-theory", "sdac-empirical", "tdac", "dldac")


@dataclass(frozen=True)
class DoubleLoop:
    """Loop structure of the double-loop baseline.

    T_c inner critic steps with batch N_c, T_c_comm critic gossip rounds per
    outer iteration, T_r reward gossip rounds, actor batch N.
    """

    T_c: int = 50
    T_c_comm: int = 10
    T_r: int = 5
    N: int = 100
    N_c: int = 10

    def __post_init__(self):
        if min(self.T_c, self.N, self.N_c) < 1 or min(self.T_c_comm, self.T_r) < 0:
            raise ConfigError("double-loop sizes must be positive")

    @property
    def samples_per_iteration(self):
        return self.T_c * self.N_c + self.N

    @property
    def rounds_per_iteration(self):
        return self.T_c_comm + self.T_r


@dataclass(frozen=True)
class StepSchedule:
    """``step_k = bar * (k+1)^(-p)``, or ``bar`` for every k when ``constant``."""

    mode: str
    alpha_bar: float
    beta_bar: float
    eta_bar: float
    p_alpha: float = 0.5
    p_beta: float = 0.5
    p_eta: float = 0.5
    constant: bool = False
    K: int = 0
    loop: DoubleLoop = field(default=None)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown schedule mode {self.mode!r}")
        if min(self.alpha_bar, self.beta_bar, self.eta_bar) < 0:
            raise ConfigError("step sizes must be nonnegative")
        if self.mode.startswith("sdac") and not (self.p_alpha == self.p_beta == self.p_eta):
            raise ConfigError("single-timescale schedules need equal decay exponents")
        if self.mode == "tdac" and not self.p_alpha > self.p_beta:
            raise ConfigError("two-timescale schedules need the actor to decay faster than the critic")
        if self.mode == "dldac" and self.loop is None:
            raise ConfigError("dldac schedules need a loop structure")

    def _step(self, bar, p, k):
        return bar if self.constant else bar * (k + 1) ** (-p)

    def alpha(self, k):
        return self._step(self.alpha_bar, self.p_alpha, k)

    def beta(self, k):
        return self._step(self.beta_bar, self.p_beta, k)

    def eta(self, k):
        return self._step(self.eta_bar, self.p_eta, k)


def make_schedule(mode, K=0, **overrides):
    """Resolve a named schedule.

    ``sdac-theory``: constant ``alpha = alpha_bar / sqrt(K)`` with
    ``beta = beta_ratio * alpha`` and ``eta = eta_ratio * alpha``.
    ``sdac-empirical``: 0.01, 0.1, 0.1 with exponent 0.5.
    ``tdac``: 0.01 (exponent 0.6), 0.1 and 0.1 (exponent 0.4).
    ``dldac``: constant 0.01 / 0.1 plus a :class:`DoubleLoop`.
    """
    ov = dict(overrides)

    def take(key, default):
        return ov.pop(key, default)

    if mode == "sdac-theory":
        if K < 1:
            raise ConfigError("sdac-theory needs the horizon K")
        a = take("alpha_bar", 1.0) / math.sqrt(K)
        sched = StepSchedule(
            mode, a, take("beta_ratio", 10.0) * a, take("eta_ratio", 10.0) * a, constant=True, K=K
        )
    elif mode == "sdac-empirical":
        p = take("p", 0.5)
        sched = StepSchedule(
            mode,
            take("alpha_bar", 0.01),
            take("beta_bar", 0.1),
            take("eta_bar", 0.1),
            take("p_alpha", p),
            take("p_beta", p),
            take("p_eta", p),
            K=K,
        )
    elif mode == "tdac":
        sched = StepSchedule(
            mode,
            take("alpha_bar", 0.01),
            take("beta_bar", 0.1),
            take("eta_bar", 0.1),
            take("p_alpha", 0.6),
            take("p_beta", 0.4),
            take("p_eta", 0.4),
            K=K,
        )
    elif mode == "dldac":
        loop = DoubleLoop(
            T_c=take("T_c", 50), T_c_comm=take("T_c_comm", 10), T_r=take("T_r", 5), N=take("N", 100), N_c=take("N_c", 10)
        )
        sched = StepSchedule(
            mode, take("alpha_bar", 0.01), take("beta_bar", 0.1), 0.0, constant=True, K=K, loop=loop
        )
    else:
        raise ConfigError(f"unknown schedule mode {mode!r}")
    if ov:
        raise ConfigError(f"unused schedule overrides for {mode}: {sorted(ov)}")
    return sched
