"""Exact ground truth on tabular MDPs.

All quantities are computed by dense linear algebra (or sparse products for
the navigation grid) from a fixed policy snapshot.  :class:`PolicyEval`
caches the shared pieces (kernel, stationary law, values) so that
diagnostics evaluating several quantities at one policy pay for them once.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import AssumptionViolation, CapacityError, ConfigError, MixingError
from .features import Radii

STATIONARY_TOL = 1e-12
MAX_POWER_ITERS = 10**6
DEFINITENESS_TOL = 1e-12
ENUM_CAP = 10**5
FISHER_RIDGE = 1e-8
FISHER_CAP = 5 * 10**7


@dataclass(frozen=True, eq=False)
class PolicyKernel:
    P: np.ndarray  # (S, S) state chain under the policy
    joint_probs: np.ndarray  # (S, A)


def policy_kernel(mdp, policy):
    pi = policy.joint_prob_table()
    S, A = pi.shape
    if mdp.is_sparse:
        M = sp.csr_array((pi.ravel(), (np.repeat(np.arange(S), A), np.arange(S * A))), shape=(S, S * A))
        P = (M @ mdp.transition).toarray()
    else:
        P = np.einsum("sa,sat->st", pi, mdp.transition.reshape(S, A, S))
    return PolicyKernel(P, pi)


def stationary_dist(kernel, tol=STATIONARY_TOL, max_iter=MAX_POWER_ITERS, start=None):
    """Left fixed point of a row-stochastic kernel by power iteration."""
    P = kernel.P if isinstance(kernel, PolicyKernel) else np.asarray(kernel)
    n = P.shape[0]
    mu = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=float)
    for _ in range(max_iter):
        nxt = mu @ P
        nxt /= nxt.sum()
        if np.abs(nxt - mu).sum() <= tol:
            return nxt
        mu = nxt
    raise MixingError(f"power iteration did not reach residual {tol} in {max_iter} steps")


def _weighted_gram(X, w, Y):
    """``X^T diag(w) Y`` as a dense array; ``X`` and ``Y`` may be sparse."""
    if sp.issparse(Y):
        WY = Y.multiply(w[:, None]).tocsr()
    else:
        WY = w[:, None] * Y
    out = X.T @ WY
    return out.toarray() if sp.issparse(out) else np.asarray(out)


def _as_dense(M):
    return M.toarray() if sp.issparse(M) else M


class PolicyEval:
    """Lazily computed exact quantities for one ``(mdp, policy)`` snapshot."""

    def __init__(self, mdp, policy):
        self.mdp = mdp
        self.policy = policy

    @cached_property
    def kernel(self):
        return policy_kernel(self.mdp, self.policy)

    @property
    def pi(self):
        return self.kernel.joint_probs

    @cached_property
    def mu(self):
        return stationary_dist(self.kernel)

    @cached_property
    def visitation(self):
        mdp = self.mdp
        M = np.eye(mdp.n_states) - mdp.gamma * self.kernel.P
        return (1 - mdp.gamma) * np.linalg.solve(M.T, mdp.init_dist)

    @cached_property
    def policy_reward(self):
        return (self.pi * self.mdp.mean_rewards).sum(axis=1)

    @cached_property
    def value(self):
        M = np.eye(self.mdp.n_states) - self.mdp.gamma * self.kernel.P
        return np.linalg.solve(M, self.policy_reward)

    @cached_property
    def q_values(self):
        mdp = self.mdp
        S, A = mdp.n_states, mdp.n_joint_actions
        nxt = np.asarray(mdp.transition @ self.value).reshape(S, A)
        return mdp.mean_rewards + mdp.gamma * nxt

    @property
    def advantage(self):
        return self.q_values - self.value[:, None]

    @property
    def objective(self):
        return float(self.mdp.init_dist @ self.value)

    def _check_enum(self, cap):
        pairs = self.mdp.n_states * self.mdp.n_joint_actions
        if pairs > cap:
            raise CapacityError(f"{pairs} (state, action) pairs exceed the enumeration cap {cap}")

    def policy_gradient(self, cap=ENUM_CAP):
        """Per-agent exact gradients of ``J`` as a list of vectors."""
        self._check_enum(cap)
        mdp = self.mdp
        w = self.visitation[:, None] * self.pi * self.advantage / (1 - mdp.gamma)
        w = w.reshape((mdp.n_states,) + mdp.action_counts)
        grads = []
        for i in range(mdp.n_agents):
            axes = tuple(1 + j for j in range(mdp.n_agents) if j != i)
            grads.append(self.policy.weighted_score_sum(i, w.sum(axis=axes)))
        return grads

    def critic_system(self, features):
        g = self.mdp.gamma
        Phi = _as_dense(features.critic)
        A = _weighted_gram(Phi, self.mu, g * (self.kernel.P @ Phi) - Phi)
        b = Phi.T @ (self.mu * self.policy_reward)
        return CriticSystem(A, b, _definiteness(A), self.mu)

    def reward_system(self, features):
        w = (self.mu[:, None] * self.pi).ravel()
        Phr = features.reward
        A = -_weighted_gram(Phr, w, Phr)
        b = np.asarray(Phr.T @ (w * self.mdp.mean_rewards.ravel())).ravel()
        return CriticSystem(A, b, _definiteness(A), self.mu)


@dataclass(frozen=True, eq=False)
class CriticSystem:
    """Linear system ``A x + b = 0`` with ``lam = -lambda_max((A + A^T) / 2)``."""

    A: np.ndarray
    b: np.ndarray
    lam: float
    mu: np.ndarray


def _definiteness(A):
    return float(-np.linalg.eigvalsh(0.5 * (A + A.T))[-1])


@dataclass(frozen=True, eq=False)
class LinearFixedPoint:
    x: np.ndarray
    lam: float
    residual: float
    bound: float

    @property
    def bound_ok(self):
        return bool(np.linalg.norm(self.x) <= self.bound * (1 + 1e-9))


def _solve_fixed_point(system, r_max, what):
    if system.lam <= DEFINITENESS_TOL:
        raise AssumptionViolation(
            "sufficient-exploration", f"{what} system is not negative definite (lam = {system.lam:.3g})"
        )
    x = np.linalg.solve(system.A, -system.b)
    res = float(np.linalg.norm(system.A @ x + system.b))
    return LinearFixedPoint(x, system.lam, res, r_max / system.lam)


def discounted_visitation(mdp, policy, mu0=None):
    ev = PolicyEval(mdp, policy)
    if mu0 is None:
        return ev.visitation
    M = np.eye(mdp.n_states) - mdp.gamma * ev.kernel.P
    return (1 - mdp.gamma) * np.linalg.solve(M.T, np.asarray(mu0, dtype=float))


def exact_value(mdp, policy):
    return PolicyEval(mdp, policy).value


def objective(mdp, policy):
    """``J(theta) = E_{s0 ~ init_dist} V(s0)``."""
    return PolicyEval(mdp, policy).objective


def optimal_critic(mdp, policy, features, ev=None):
    ev = ev or PolicyEval(mdp, policy)
    return _solve_fixed_point(ev.critic_system(features), mdp.r_max, "critic")


def optimal_reward_estimator(mdp, policy, features, ev=None):
    ev = ev or PolicyEval(mdp, policy)
    return _solve_fixed_point(ev.reward_system(features), mdp.r_max, "reward estimator")


def exact_policy_gradient(mdp, policy, agent=None, cap=ENUM_CAP):
    grads = PolicyEval(mdp, policy).policy_gradient(cap)
    return grads if agent is None else grads[agent]


@dataclass(frozen=True)
class AppError:
    critic: float
    reward_mean: float
    reward_max: float


def app_error(mdp, policy, features, ev=None):
    """Approximation errors of the best linear critic and reward estimator at this policy."""
    ev = ev or PolicyEval(mdp, policy)
    crit = ev.critic_system(features)
    omega = np.linalg.solve(crit.A, -crit.b)
    v_hat = np.asarray(features.critic @ omega).ravel()
    e_c = float(ev.mu @ (ev.value - v_hat) ** 2)

    rew = ev.reward_system(features)
    lam = np.linalg.solve(rew.A, -rew.b)
    S, A = mdp.n_states, mdp.n_joint_actions
    r_hat = np.asarray(features.reward @ lam).reshape(S, A)
    sq = (mdp.mean_rewards - r_hat) ** 2
    return AppError(e_c, float((ev.mu[:, None] * ev.pi * sq).sum()), float((ev.mu @ sq).max()))


@dataclass(frozen=True, eq=False)
class Fisher:
    F: np.ndarray
    lam_min: float


def fisher_matrix(mdp, policy, cap=ENUM_CAP, ev=None):
    """``E_{s ~ d, a ~ pi}[psi psi^T]`` over the concatenated agent parameters."""
    ev = ev or PolicyEval(mdp, policy)
    ev._check_enum(cap)
    S, A = mdp.n_states, mdp.n_joint_actions
    d = sum(policy.dim(i) for i in range(mdp.n_agents))
    if S * A * d > FISHER_CAP or d > 4000:
        raise CapacityError(f"Fisher enumeration over {S * A} pairs x {d} parameters is too large")
    acts = mdp.joint_actions
    psi = np.concatenate([policy.score_table(i)[:, acts[:, i], :] for i in range(mdp.n_agents)], axis=2)
    w = (ev.visitation[:, None] * ev.pi).reshape(S * A)
    psi = psi.reshape(S * A, -1)
    F = psi.T @ (w[:, None] * psi)
    F = 0.5 * (F + F.T)
    return Fisher(F, float(np.linalg.eigvalsh(F)[0]))


@dataclass(frozen=True, eq=False)
class NaturalDirection:
    h: np.ndarray
    grad: np.ndarray
    residual: float
    lam_min: float
    ridge_used: bool

    def split(self, dims):
        return np.split(self.h, np.cumsum(dims)[:-1])


def natural_direction(F, g, tol=1e-10, ridge=FISHER_RIDGE, refine=5):
    """Solve ``F h = g``; near-singular ``F`` gets a flagged ridge plus iterative refinement.

    With ``g`` in the range of ``F`` the refinement converges to the
    minimum-norm solution.
    """
    F = np.asarray(F, dtype=float)
    g = np.asarray(g, dtype=float)
    lam_min = float(np.linalg.eigvalsh(F)[0]) if F.size else 0.0
    if F.size == 0:
        return NaturalDirection(np.zeros(0), g, 0.0, 0.0, False)
    if lam_min > tol:
        h = sla.cho_solve(sla.cho_factor(F), g)
        ridge_used = False
    else:
        fac = sla.cho_factor(F + ridge * np.eye(F.shape[0]))
        h = sla.cho_solve(fac, g)
        for _ in range(refine):
            h = h + sla.cho_solve(fac, g - F @ h)
        ridge_used = True
    res = float(np.linalg.norm(F @ h - g))
    if ridge_used and res > 1e-6 * max(1.0, np.linalg.norm(g)):
        warnings.warn(f"Fisher matrix is ill-conditioned (lambda_min = {lam_min:.3g}); residual {res:.3g}")
    return NaturalDirection(h, g, res, lam_min, ridge_used)


def exact_npg_direction(mdp, policy, cap=ENUM_CAP):
    ev = PolicyEval(mdp, policy)
    fim = fisher_matrix(mdp, policy, cap, ev)
    g = np.concatenate(ev.policy_gradient(cap))
    return natural_direction(fim.F, g)


def default_radii(mdp, policy, features, safety=2.0):
    """``safety * r_max / lam`` for one-hot feature maps, measured at ``policy``."""
    one_hot = {"tabular", "state"}
    if features.critic_mode not in one_hot or features.reward_mode not in one_hot:
        raise ConfigError("non-tabular features need explicit projection radii")
    ev = PolicyEval(mdp, policy)
    lam_c = ev.critic_system(features).lam
    lam_r = ev.reward_system(features).lam
    if min(lam_c, lam_r) <= DEFINITENESS_TOL:
        raise AssumptionViolation("sufficient-exploration", "cannot size radii from a singular system")
    return Radii(safety * mdp.r_max / lam_c, safety * mdp.r_max / lam_r)
