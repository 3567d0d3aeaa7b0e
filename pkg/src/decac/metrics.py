"""Per-iteration metrics rows and their CSV encoding."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

NAN = float("nan")


@dataclass
class MetricsRecord:
    """One row per iteration ``k``.

    ``samples`` and ``communications`` are cumulative through iteration k.
    ``reward`` is the network-average reward of the iteration's transition.
    Consensus errors and oracle columns describe the parameters entering
    iteration k; oracle columns are NaN except on diagnostic iterations.
    ``objective`` is ``J(theta_k) = E_{s0 ~ init_dist} V(s0)``.
    """

    k: int
    samples: int
    communications: int
    reward: float
    running_reward: float
    consensus_omega: float
    consensus_lambda: float = NAN
    gossip_err_before: float = NAN
    gossip_err_after: float = NAN
    objective: float = NAN
    grad_norm_sq: float = NAN
    critic_gap: float = NAN
    app_error_critic: float = NAN


COLUMNS = tuple(f.name for f in fields(MetricsRecord))
INT_COLUMNS = ("k", "samples", "communications")


def format_value(v):
    if isinstance(v, int):
        return str(v)
    return "nan" if math.isnan(v) else repr(float(v))


def record_to_row(rec):
    return [format_value(v) for v in astuple(rec)]


def row_to_record(row):
    vals = {}
    for name, text in zip(COLUMNS, row):
        vals[name] = int(text) if name in INT_COLUMNS else float(text)
    return MetricsRecord(**vals)
