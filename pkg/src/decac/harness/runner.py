"""Seeded Monte Carlo experiments, metrics files and aggregate tables."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..algos import NacParams, NoiseSpec, make_schedule, run_dldac, run_nac, run_sdac_noi, run_sdac_re
from ..errors import ConfigError, DecacError, MixingError, TopologyError
from ..features import SoftmaxPolicy, default_features
from ..mamdp import NavGridSpec, compile_nav_grid, make_random_mamdp
from ..metrics import COLUMNS, format_value, record_to_row
from ..oracle import PolicyEval, fisher_matrix
from ..topology import metropolis_weights, parse_graph

log = logging.getLogger("decac")

AGG_COLUMNS = ("k",) + tuple(f"{c}_{s}" for c in COLUMNS[1:] for s in ("mean", "sd"))
PLOT_COLUMNS = ("series", "x_kind", "x", "mean", "sd")


class SchemaError(DecacError, ValueError):
    """A metrics or aggregate file lacks required columns."""


@dataclass
class Setup:
    mdp: object
    weights: object
    features: object


def build_env(config):
    if config.env == "nav":
        spec = NavGridSpec(
            side=config.side,
            n_agents=config.n_agents,
            landmarks=tuple(divmod(int(c), config.side) for c in config.landmarks),
            collision_penalty=config.collision_penalty,
            distance_scale=config.distance_scale,
            r_max=config.r_max,
            gamma=config.gamma,
            max_states=config.max_states,
        )
        mdp = compile_nav_grid(spec)
    else:
        mdp = make_random_mamdp(
            config.n_agents, config.n_states, config.action_counts, config.env_seed, r_max=config.r_max,
            gamma=config.gamma,
        )
    return mdp


def build_setup(config):
    mdp = build_env(config)
    weights = metropolis_weights(parse_graph(config.topology, config.n_agents))
    features = default_features(mdp, config.critic_features, config.reward_features, config.feature_seed)
    return Setup(mdp, weights, features)


def run_single(config, seed, setup=None):
    """One Monte Carlo run of ``config`` with the given seed."""
    setup = setup or build_setup(config)
    algo = config.algorithm
    schedule = make_schedule(config.schedule, config.K, **config.schedule_overrides)
    kw = dict(
        seed=seed,
        sampling=config.sampling,
        oracle_every=config.oracle_every if config.oracle else 0,
        oracle_metrics=config.oracle_metrics,
    )
    common = (setup.mdp, setup.weights, setup.features, schedule, config.K)
    extra = dict(C_a=config.C_a, C_c=config.C_c, batch=config.batch, td_at=config.td_at)
    if algo in ("sdac-re", "tdac-re"):
        return run_sdac_re(*common, K_c=config.K_c, **extra, **kw)
    if algo in ("sdac-noi", "tdac-noi"):
        return run_sdac_noi(*common, K_c=config.K_c, noise=NoiseSpec(config.sigma, config.K_r), **extra, **kw)
    if algo == "nac":
        nac = NacParams(
            config.nac_N_a or None, config.nac_K_a, config.nac_K_z, config.nac_rho or None, config.nac_C_h,
            config.nac_sign,
        )
        return run_nac(*common, K_c=config.K_c, nac=nac, td_at=config.td_at, batch=config.batch, **kw)
    return run_dldac(*common, sigma=config.sigma, **kw)


def _header_lines(config, seed, settings):
    lines = [f"# {k}={v}" for k, v in config.items()]
    lines.append(f"# run_seed={seed}")
    lines.append("# objective=J(theta)=E_{s0~init_dist}[V(s0)]; reward=instantaneous network-mean reward")
    lines.extend(f"# resolved.{k}={v}" for k, v in sorted(settings.items()))
    return lines


def write_metrics(path, records, header_lines=()):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header_lines:
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for rec in records:
            w.writerow(record_to_row(rec))


def read_table(path):
    """Parse a CSV written by this module, skipping ``#`` comment lines."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise SchemaError(f"{path}: no header row")
    header, body = rows[0], rows[1:]
    cols = {name: [r[j] for r in body] for j, name in enumerate(header)}
    return header, cols


def _ensure_writable(out):
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _sidecar_logger(out):
    handler = logging.FileHandler(out / "run.log", mode="a", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def aggregate(records_by_run):
    """Per-iteration mean and sample sd across runs (sd = 0 for a single run)."""
    n_runs = len(records_by_run)
    K = min(len(r) for r in records_by_run) if records_by_run else 0
    rows = []
    for k in range(K):
        row = [str(k)]
        for c in COLUMNS[1:]:
            vals = np.array([float(getattr(recs[k], c)) for recs in records_by_run])
            if np.all(np.isnan(vals)):
                m = sd = math.nan
            else:
                m = float(np.mean(vals))
                sd = float(np.std(vals, ddof=1)) if n_runs > 1 else 0.0
            row += [format_value(m), format_value(sd)]
        rows.append(row)
    return rows


def run_experiment(config, out=None, seed=None):
    """Run ``config.n_mc_runs`` seeds and write per-run and aggregate CSVs.

    Returns ``(per-run paths, aggregate path)``.  Output files depend only on
    (config, seed); timestamps go to ``run.log``.
    """
    if seed is not None:
        config = config.replace(seed=seed)
    base = config.seed
    out = _ensure_writable(out or config.out)
    handler = _sidecar_logger(out)
    try:
        setup = build_setup(config)
        paths, all_records = [], []
        for r in range(config.n_mc_runs):
            s = base + r
            log.info("start run seed=%d algorithm=%s K=%d", s, config.algorithm, config.K)
            res = run_single(config, s, setup)
            path = out / f"run_seed{s}.csv"
            write_metrics(path, res.metrics, _header_lines(config, s, res.settings))
            log.info("finished run seed=%d -> %s", s, path.name)
            paths.append(path)
            all_records.append(res.metrics)
        agg_path = out / "aggregate.csv"
        with open(agg_path, "w", encoding="utf-8", newline="") as fh:
            for k, v in config.items():
                fh.write(f"# {k}={v}\n")
            fh.write(f"# seeds={','.join(str(base + r) for r in range(config.n_mc_runs))}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(AGG_COLUMNS)
            w.writerows(aggregate(all_records))
    finally:
        log.removeHandler(handler)
        handler.close()
    return paths, agg_path


def _agg_rows(agg_path):
    header, cols = read_table(agg_path)
    need = ("k", "samples_mean", "communications_mean", "reward_mean", "running_reward_mean", "objective_mean")
    missing = [c for c in need if c not in header]
    if missing:
        raise SchemaError(f"{agg_path}: missing columns {missing}")
    return cols


def ablation_kc(config, values, out=None):
    """One experiment per K_c with a shared seed sequence, joined on (K_c, k)."""
    values = list(values)
    if not values:
        raise ConfigError("ablation needs at least one K_c value")
    out = _ensure_writable(out or config.out)
    table = [("K_c", "k", "samples", "communications", "reward_mean", "reward_sd", "running_reward_mean",
              "objective_mean")]
    for kc in values:
        _, agg = run_experiment(config.replace(K_c=int(kc)), out / f"Kc{kc}")
        cols = _agg_rows(agg)
        for j in range(len(cols["k"])):
            table.append((str(kc), cols["k"][j], cols["samples_mean"][j], cols["communications_mean"][j],
                          cols["reward_mean"][j], cols["reward_sd"][j], cols["running_reward_mean"][j],
                          cols["objective_mean"][j]))
    path = out / "ablation_kc.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(table)
    return path


def compare_algorithms(configs, names=None, out=None):
    """Run several configs on a shared environment, topology and seed sequence."""
    configs = list(configs)
    if len(configs) < 2:
        raise ConfigError("comparison needs at least two configs")
    ref = configs[0].env_key()
    for c in configs[1:]:
        if c.env_key() != ref:
            diff = [k for (k, a), (_, b) in zip(ref, c.env_key()) if a != b]
            raise ConfigError(f"configs differ in environment/topology/seeds: {diff}")
    names = list(names) if names else [c.algorithm for c in configs]
    seen = {}
    for j, n in enumerate(names):
        seen[n] = seen.get(n, 0) + 1
        if seen[n] > 1:
            names[j] = f"{n}-{seen[n]}"
    out = _ensure_writable(out or configs[0].out)
    table = [("series", "k", "samples", "communications", "reward_mean", "running_reward_mean", "objective_mean")]
    for name, cfg in zip(names, configs):
        _, agg = run_experiment(cfg, out / name)
        cols = _agg_rows(agg)
        for j in range(len(cols["k"])):
            table.append((name, cols["k"][j], cols["samples_mean"][j], cols["communications_mean"][j],
                          cols["reward_mean"][j], cols["running_reward_mean"][j], cols["objective_mean"][j]))
    path = out / "comparison.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(table)
    return path


def emit_plot_data(aggregate_files, out_path, y="running_reward", series_names=None):
    """Long-format rows ``(series, x_kind, x, mean, sd)`` for sample- and communication-indexed curves."""
    aggregate_files = [Path(p) for p in aggregate_files]
    names = list(series_names) if series_names else [p.parent.name or p.stem for p in aggregate_files]
    rows = []
    for name, path in zip(names, aggregate_files):
        header, cols = read_table(path)
        need = ["samples_mean", "communications_mean", f"{y}_mean", f"{y}_sd"]
        missing = [c for c in need if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        for kind in ("samples", "communications"):
            for x, m, sd in zip(cols[f"{kind}_mean"], cols[f"{y}_mean"], cols[f"{y}_sd"]):
                rows.append((name, kind, x, m, sd))
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        w.writerows(rows)
    return out_path


@dataclass
class Check:
    name: str
    ok: bool
    detail: str
    fatal: bool = True


def validate(config):
    """Check the configured instance at the initial policy.

    Reward and feature bounds, the weight matrix, mixing of the initial
    policy's chain, and definiteness of the critic and reward systems are
    hard checks.  Fisher positivity is reported but never fatal: tabular
    softmax Fisher matrices are always singular.
    """
    mdp = build_env(config)
    features = default_features(mdp, config.critic_features, config.reward_features, config.feature_seed)
    checks = []
    rmax = float(np.abs(mdp.rewards).max())
    checks.append(Check("reward-bound", rmax <= mdp.r_max + 1e-12, f"max |r| = {rmax:.6g}, r_max = {mdp.r_max}"))
    checks.append(Check("feature-norms", True, f"d_omega={features.d_omega}, d_lambda={features.d_lambda}"))
    graph = parse_graph(config.topology, config.n_agents)
    try:
        weights = metropolis_weights(graph)
        W = weights.W
        ds = max(np.abs(W.sum(0) - 1).max(), np.abs(W.sum(1) - 1).max())
        checks.append(Check("doubly-stochastic", ds <= 1e-10 and weights.nu < 1,
                            f"row/col error {ds:.2e}, nu = {weights.nu:.6f}"))
    except TopologyError as exc:
        checks.append(Check("doubly-stochastic", False, str(exc)))
    policy = SoftmaxPolicy.zeros(mdp.n_states, mdp.action_counts)
    ev = PolicyEval(mdp, policy)
    try:
        mu = ev.mu
        checks.append(Check("mixing", float(mu.min()) > 0, f"min stationary mass {float(mu.min()):.3e}"))
    except MixingError as exc:
        checks.append(Check("mixing", False, str(exc)))
        return checks
    for name, sysfn in (("critic-definite", ev.critic_system), ("reward-definite", ev.reward_system)):
        lam = sysfn(features).lam
        checks.append(Check(name, lam > 1e-10, f"lambda = {lam:.3e} at theta_0"))
    try:
        lam_f = fisher_matrix(mdp, policy, ev=ev).lam_min
        checks.append(Check("fisher-positive", lam_f > 1e-10, f"lambda_min(F) = {lam_f:.3e} at theta_0", fatal=False))
    except DecacError as exc:
        checks.append(Check("fisher-positive", False, str(exc), fatal=False))
    return checks


def validation_failed(checks):
    return any(c.fatal and not c.ok for c in checks)

