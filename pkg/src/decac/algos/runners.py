"""Iteration engines: single-timescale AC (reward-estimator and noisy-reward
versions), the natural AC variant and the double-loop baseline.

Each iteration is a synchronous superstep: sample, periodic consensus,
then per-agent estimator / critic / actor updates.  All randomness comes
from one ``numpy.random.Generator`` seeded per run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import AssumptionViolation, ConfigError
from ..features import SoftmaxPolicy, project_ball
from ..mamdp import sample_state
from ..metrics import NAN, MetricsRecord
from ..oracle import PolicyEval, default_radii
from ..topology import WeightMatrix, disagreement_norm, scalar_gossip
from .nac import NacParams, nac_direction_solve, sample_scores
from .updates import actor_step, advantage_estimate, reward_direction, td_direction, td_error

SAMPLING_MODES = ("iid", "markovian")
ORACLE_METRICS = ("objective", "grad_norm", "critic_gap", "app_error")


@dataclass
class AgentParams:
    """Network state: per-agent actors plus stacked critics ``(N, d_omega)``
    and reward estimators ``(N, d_lambda)``."""

    theta: list
    omega: np.ndarray
    lam: np.ndarray

    @classmethod
    def zeros(cls, policy, features):
        N = policy.n_agents
        return cls(
            [np.zeros(policy.dim(i)) for i in range(N)],
            np.zeros((N, features.d_omega)),
            np.zeros((N, features.d_lambda)),
        )

    def copy(self):
        return AgentParams([t.copy() for t in self.theta], self.omega.copy(), self.lam.copy())


@dataclass
class RunResult:
    params: AgentParams
    metrics: list
    snapshots: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative reward noise ``r (1 + z)``, ``z ~ N(0, sigma^2)``, gossiped ``K_r`` rounds."""

    sigma: float = 0.5
    K_r: int = 2

    def __post_init__(self):
        if self.sigma < 0 or self.K_r < 1:
            raise ConfigError("noise needs sigma >= 0 and K_r >= 1")


class _Sampler:
    """Transition source shared by all agents (one global state)."""

    def __init__(self, mdp, mode, rng):
        if mode not in SAMPLING_MODES:
            raise ConfigError(f"unknown sampling mode {mode!r}")
        self.mdp, self.mode, self.rng = mdp, mode, rng
        self.strides = np.array([int(np.prod(mdp.action_counts[i + 1:])) for i in range(mdp.n_agents)])
        self.s = sample_state(mdp.init_dist, rng) if mode == "markovian" else None

    def draw(self, policy, mu):
        if self.mode == "iid":
            s = sample_state(mu(), self.rng)
        else:
            s = self.s
        a = policy.sample(s, self.rng)
        j = int(a @ self.strides)
        s_next = self.mdp.sample_next(s, j, self.rng)
        if self.mode == "markovian":
            self.s = s_next
        return s, a, j, s_next


class _StationaryCache:
    """Stationary law of the current policy, recomputed only after actor updates."""

    def __init__(self, mdp, policy):
        self.mdp, self.policy, self.value = mdp, policy, None

    def __call__(self):
        if self.value is None:
            self.value = PolicyEval(self.mdp, self.policy).mu
        return self.value

    def invalidate(self):
        self.value = None


def _diagnose(mdp, features, policy, params, which):
    ev = PolicyEval(mdp, policy)
    out = {}
    if "objective" in which:
        out["objective"] = ev.objective
    if "grad_norm" in which:
        out["grad_norm_sq"] = float(sum(g @ g for g in ev.policy_gradient()))
    if "critic_gap" in which or "app_error" in which:
        sysm = ev.critic_system(features)
        try:
            omega_star = np.linalg.solve(sysm.A, -sysm.b)
        except np.linalg.LinAlgError:
            omega_star = None
        if omega_star is not None and "critic_gap" in which:
            out["critic_gap"] = float(np.linalg.norm(params.omega.mean(axis=0) - omega_star))
        if omega_star is not None and "app_error" in which:
            v_hat = np.asarray(features.critic @ omega_star).ravel()
            out["app_error_critic"] = float(ev.mu @ (ev.value - v_hat) ** 2)
    return out


def _check_common(mdp, weights, features, K, K_c, C_a, C_c, batch, td_at, oracle_metrics):
    if not isinstance(weights, WeightMatrix):
        raise ConfigError("weights must be a validated WeightMatrix")
    if weights.n != mdp.n_agents:
        raise ConfigError("weight matrix size differs from the agent count")
    if features.n_states != mdp.n_states or features.n_joint_actions != mdp.n_joint_actions:
        raise ConfigError("features were built for a different MDP")
    if K < 0 or K_c < 1 or C_a < 1 or C_c < 1 or batch < 1:
        raise ConfigError("need K >= 0 and K_c, C_a, C_c, batch >= 1")
    if td_at not in ("pre", "post"):
        raise ConfigError("td_at must be 'pre' or 'post'")
    unknown = set(oracle_metrics) - set(ORACLE_METRICS)
    if unknown:
        raise ConfigError(f"unknown oracle metrics {sorted(unknown)}")


def _setup(mdp, features, policy, radii, init):
    base = policy if policy is not None else SoftmaxPolicy.zeros(mdp.n_states, mdp.action_counts)
    params = init.copy() if init is not None else AgentParams.zeros(base, features)
    if params.omega.shape != (mdp.n_agents, features.d_omega):
        raise ConfigError("initial critic parameters have the wrong shape")
    if params.lam.shape != (mdp.n_agents, features.d_lambda):
        raise ConfigError("initial reward-estimator parameters have the wrong shape")
    pol = base.with_theta(params.theta)
    if radii is None:
        try:
            radii = default_radii(mdp, pol, features)
        except AssumptionViolation as exc:
            raise ConfigError(f"cannot derive projection radii: {exc}") from exc
    return pol, params, radii


def _run(
    variant,
    mdp,
    weights,
    features,
    schedule,
    K,
    K_c=1,
    sampling="markovian",
    seed=0,
    C_a=1,
    C_c=1,
    batch=1,
    td_at="post",
    noise=None,
    nac=None,
    radii=None,
    policy=None,
    init=None,
    oracle_every=0,
    oracle_metrics=ORACLE_METRICS,
    snapshot_every=0,
):
    _check_common(mdp, weights, features, K, K_c, C_a, C_c, batch, td_at, oracle_metrics)
    pol, params, radii = _setup(mdp, features, policy, radii, init)
    if variant == "nac":
        nac = (nac or NacParams()).resolve(K, pol.score_bound())
    noise = noise or NoiseSpec()
    rng = np.random.default_rng(seed)
    sampler = _Sampler(mdp, sampling, rng)
    mu = _StationaryCache(mdp, pol)
    W = weights.W
    N, g = mdp.n_agents, mdp.gamma
    uses_lambda = variant in ("re", "nac")
    theta, Om, Lam = params.theta, params.omega, params.lam

    settings = dict(
        algorithm=variant, K=K, K_c=K_c, sampling=sampling, seed=seed, C_a=C_a, C_c=C_c, batch=batch,
        td_at=td_at, R_omega=radii.omega, R_lambda=radii.lam, nu=weights.nu, schedule=schedule.mode,
    )
    if variant == "noi":
        settings.update(sigma=noise.sigma, K_r=noise.K_r)
    if variant == "nac":
        settings.update(N_a=nac.N_a, K_a=nac.K_a, K_z=nac.K_z, rho=nac.rho, C_h=nac.C_h, nac_sign=nac.sign)

    metrics, snapshots = [], []
    samples = comm = 0
    reward_sum = 0.0
    for k in range(K):
        rec = MetricsRecord(
            k, 0, 0, NAN, NAN,
            consensus_omega=disagreement_norm(Om),
            consensus_lambda=disagreement_norm(Lam) if uses_lambda else NAN,
        )
        if oracle_every and k % oracle_every == 0:
            for key, val in _diagnose(mdp, features, pol, params, oracle_metrics).items():
                setattr(rec, key, val)
        if snapshot_every and k % snapshot_every == 0:
            snapshots.append((k, params.copy()))
        alpha, beta, eta = schedule.alpha(k), schedule.beta(k), schedule.eta(k)

        draws = [sampler.draw(pol, mu) for _ in range(batch)]
        samples += batch
        phi_s = [features.phi(d[0]) for d in draws]
        phi_n = [features.phi(d[3]) for d in draws]
        rew = [mdp.rewards[:, d[0], d[2]] for d in draws]

        if k % K_c == 0:
            Om_t = W @ Om
            comm += 1
            if uses_lambda:
                Lam_t = W @ Lam
                comm += 1
        else:
            Om_t = Om
            if uses_lambda:
                Lam_t = Lam

        if uses_lambda:
            phi_r = [features.phi_r(d[0], d[2]) for d in draws]
            lam_at = Lam if td_at == "pre" else Lam_t
        om_at = Om if td_at == "pre" else Om_t
        for _ in range(C_c):
            if uses_lambda:
                direc = sum(reward_direction(phi_r[b], lam_at, rew[b]) for b in range(batch)) / batch
                Lam_t = project_ball(Lam_t + eta * direc, radii.lam)
                lam_at = Lam_t
            direc = sum(td_direction(phi_s[b], phi_n[b], om_at, rew[b], g) for b in range(batch)) / batch
            Om_t = project_ball(Om_t + beta * direc, radii.omega)
            om_at = Om_t
        Om[...] = Om_t
        if uses_lambda:
            Lam[...] = Lam_t

        if variant == "noi":
            r_est = []
            for b in range(batch):
                r0 = rew[b] * (1.0 + rng.normal(0.0, noise.sigma, size=N)) if noise.sigma > 0 else rew[b].copy()
                rk = scalar_gossip(r0, W, noise.K_r)
                r_est.append(rk)
                if b == 0:
                    m0 = r0.mean()
                    rec.gossip_err_before = float(((r0 - m0) ** 2).sum())
                    rec.gossip_err_after = float(((rk - m0) ** 2).sum())
            comm += noise.K_r
            adv = [td_error(phi_s[b], phi_n[b], Om, r_est[b], g) for b in range(batch)]
        else:
            adv = [advantage_estimate(phi_r[b], phi_s[b], phi_n[b], Om, Lam, g) for b in range(batch)]

        if variant == "nac":
            extra = [sampler.draw(pol, mu) for _ in range(nac.N_a)]
            samples += nac.N_a
            scores = sample_scores(pol, [d[0] for d in extra], [d[1] for d in extra])
            adv_n = np.stack([
                advantage_estimate(features.phi_r(d[0], d[2]), features.phi(d[0]), features.phi(d[3]), Om, Lam, g)
                for d in extra
            ])
            g_a = [scores[i].T @ adv_n[:, i] / nac.N_a for i in range(N)]
            h = nac_direction_solve(scores, g_a, weights, nac)
            comm += nac.K_a * nac.K_z
            step = alpha if nac.sign == "ascent" else -alpha
            for i in range(N):
                theta[i] += step * h[i]
        elif alpha != 0.0:
            for _ in range(C_a):
                for i in range(N):
                    if batch == 1:
                        new = actor_step(theta[i], pol.score(i, draws[0][0], draws[0][1][i]), adv[0][i], alpha)
                    else:
                        direc = sum(adv[b][i] * pol.score(i, draws[b][0], draws[b][1][i]) for b in range(batch))
                        new = actor_step(theta[i], direc / batch, 1.0, alpha)
                    theta[i][...] = new
        if alpha != 0.0 and sampling == "iid":
            mu.invalidate()

        inst = float(np.mean([r.mean() for r in rew]))
        reward_sum += inst
        rec.samples, rec.communications = samples, comm
        rec.reward, rec.running_reward = inst, reward_sum / (k + 1)
        metrics.append(rec)

    if snapshot_every:
        snapshots.append((K, params.copy()))
    return RunResult(params, metrics, snapshots, settings)


def run_sdac_re(mdp, weights, features, schedule, K, K_c=1, sampling="markovian", seed=0, C_a=1, C_c=1, **kw):
    """Single-timescale decentralized AC with local reward estimators."""
    return _run("re", mdp, weights, features, schedule, K, K_c, sampling, seed, C_a, C_c, **kw)


def run_sdac_noi(mdp, weights, features, schedule, K, K_c=1, noise=None, sampling="markovian", seed=0, **kw):
    """Single-timescale decentralized AC driven by gossiped noisy rewards."""
    return _run("noi", mdp, weights, features, schedule, K, K_c, sampling, seed, noise=noise, **kw)


def run_nac(mdp, weights, features, schedule, K, K_c=1, nac=None, sampling="iid", seed=0, **kw):
    """Single-timescale decentralized natural AC."""
    return _run("nac", mdp, weights, features, schedule, K, K_c, sampling, seed, nac=nac, **kw)


def run_dldac(
    mdp,
    weights,
    features,
    schedule,
    K,
    sigma=0.1,
    sampling="markovian",
    seed=0,
    radii=None,
    policy=None,
    init=None,
    oracle_every=0,
    oracle_metrics=ORACLE_METRICS,
    snapshot_every=0,
):
    """Double-loop baseline: ``K`` outer iterations, each a batched critic
    inner loop, critic gossip, then one batched actor step on gossiped noisy
    rewards.  One metrics row per outer iteration."""
    if schedule.loop is None:
        raise ConfigError("run_dldac needs a dldac schedule")
    _check_common(mdp, weights, features, K, 1, 1, 1, 1, "post", oracle_metrics)
    if sigma < 0:
        raise ConfigError("sigma must be nonnegative")
    loop = schedule.loop
    pol, params, radii = _setup(mdp, features, policy, radii, init)
    rng = np.random.default_rng(seed)
    sampler = _Sampler(mdp, sampling, rng)
    mu = _StationaryCache(mdp, pol)
    W = weights.W
    N, g = mdp.n_agents, mdp.gamma
    theta, Om = params.theta, params.omega
    settings = dict(
        algorithm="dldac", K=K, sampling=sampling, seed=seed, sigma=sigma, T_c=loop.T_c, T_c_comm=loop.T_c_comm,
        T_r=loop.T_r, N=loop.N, N_c=loop.N_c, R_omega=radii.omega, nu=weights.nu, schedule=schedule.mode,
    )

    metrics, snapshots = [], []
    samples = comm = 0
    reward_sum = 0.0
    for k in range(K):
        rec = MetricsRecord(k, 0, 0, NAN, NAN, consensus_omega=disagreement_norm(Om))
        if oracle_every and k % oracle_every == 0:
            for key, val in _diagnose(mdp, features, pol, params, oracle_metrics).items():
                setattr(rec, key, val)
        if snapshot_every and k % snapshot_every == 0:
            snapshots.append((k, params.copy()))
        alpha, beta = schedule.alpha(k), schedule.beta(k)

        for _ in range(loop.T_c):
            draws = [sampler.draw(pol, mu) for _ in range(loop.N_c)]
            direc = sum(
                td_direction(features.phi(d[0]), features.phi(d[3]), Om, mdp.rewards[:, d[0], d[2]], g) for d in draws
            ) / loop.N_c
            Om[...] = project_ball(Om + beta * direc, radii.omega)
        samples += loop.T_c * loop.N_c
        for _ in range(loop.T_c_comm):
            Om[...] = W @ Om
        comm += loop.T_c_comm

        draws = [sampler.draw(pol, mu) for _ in range(loop.N)]
        samples += loop.N
        R0 = np.stack([mdp.rewards[:, d[0], d[2]] for d in draws], axis=1)  # (N_agents, batch)
        if sigma > 0:
            R0 = R0 * (1.0 + rng.normal(0.0, sigma, size=R0.shape))
        Rk = scalar_gossip(R0, W, loop.T_r)
        comm += loop.T_r
        m0 = R0[:, 0].mean()
        rec.gossip_err_before = float(((R0[:, 0] - m0) ** 2).sum())
        rec.gossip_err_after = float(((Rk[:, 0] - m0) ** 2).sum())
        for i in range(N):
            direc = sum(
                td_error(features.phi(d[0]), features.phi(d[3]), Om[i], Rk[i, n], g) * pol.score(i, d[0], d[1][i])
                for n, d in enumerate(draws)
            ) / loop.N
            theta[i] += alpha * direc
        if sampling == "iid":
            mu.invalidate()

        inst = float(np.mean([mdp.mean_rewards[d[0], d[2]] for d in draws]))
        reward_sum += inst
        rec.samples, rec.communications = samples, comm
        rec.reward, rec.running_reward = inst, reward_sum / (k + 1)
        metrics.append(rec)

    if snapshot_every:
        snapshots.append((K, params.copy()))
    return RunResult(params, metrics, snapshots, settings)


def communications_per_iteration(algorithm, K_c=1, K_r=2, nac=None, loop=None):
    """Closed-form average gossip rounds per iteration for each algorithm mode."""
    if algorithm in ("sdac-re", "tdac-re"):
        return 2.0 / K_c
    if algorithm in ("sdac-noi", "tdac-noi"):
        return 1.0 / K_c + K_r
    if algorithm == "nac":
        return 2.0 / K_c + nac.K_a * nac.K_z
    if algorithm == "dldac":
        return float(loop.rounds_per_iteration)
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def samples_per_iteration(algorithm, batch=1, nac=None, loop=None):
    if algorithm == "nac":
        return batch + nac.N_a
    if algorithm == "dldac":
        return loop.samples_per_iteration
    return batch


def consensus_bound(nu, k, K_c):
    """``nu ** floor(k / K_c)``: contraction guaranteed after k iterations without learning steps."""
    return nu ** math.floor(k / K_c)
