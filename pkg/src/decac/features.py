"""Linear feature maps, the per-agent softmax policy and ball projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, ConfigError

NORM_TOL = 1e-12
TABULAR_REWARD_CAP = 20000


def _dense_row(M, i):
    if sp.issparse(M):
        lo, hi = M.indptr[i], M.indptr[i + 1]
        out = np.zeros(M.shape[1])
        out[M.indices[lo:hi]] = M.data[lo:hi]
        return out
    return M[i]


def _row_norms(M):
    if sp.issparse(M):
        return np.sqrt(np.asarray(M.multiply(M).sum(axis=1)).ravel())
    return np.linalg.norm(M, axis=1)


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Critic features ``phi(s)`` (rows of ``critic``) and reward features
    ``phi_r(s, a)`` (row ``s * n_joint_actions + a`` of ``reward``)."""

    critic: object
    reward: object
    n_joint_actions: int
    critic_mode: str = "custom"
    reward_mode: str = "custom"

    def __post_init__(self):
        for name in ("critic", "reward"):
            M = getattr(self, name)
            M = sp.csr_array(M, dtype=float) if sp.issparse(M) else np.asarray(M, dtype=float)
            if M.ndim != 2:
                raise ConfigError(f"{name} features must be a 2-D matrix")
            if np.max(_row_norms(M), initial=0.0) > 1 + NORM_TOL:
                raise ConfigError(f"{name} features violate the unit norm bound")
            object.__setattr__(self, name, M)
        if self.reward.shape[0] != self.critic.shape[0] * self.n_joint_actions:
            raise ConfigError("reward features need one row per (state, joint action)")

    @property
    def d_omega(self):
        return self.critic.shape[1]

    @property
    def d_lambda(self):
        return self.reward.shape[1]

    @property
    def n_states(self):
        return self.critic.shape[0]

    def phi(self, s):
        return _dense_row(self.critic, s)

    def phi_r(self, s, a_joint):
        return _dense_row(self.reward, s * self.n_joint_actions + a_joint)


def _one_hot(n, dense_cap=4096):
    return np.eye(n) if n <= dense_cap else sp.identity(n, format="csr")


def _random_unit_rows(rows, d, rng):
    if d < 1 or d > rows:
        raise ConfigError(f"random features need 1 <= d <= {rows}, got {d}")
    M = rng.standard_normal((rows, d))
    return M / np.linalg.norm(M, axis=1, keepdims=True)


def _parse_mode(mode):
    mode = mode.strip()
    if mode.startswith("random"):
        _, _, d = mode.partition(":")
        if not d:
            raise ConfigError("random features need a dimension, e.g. random:4")
        return "random", int(d)
    if mode in ("tabular", "state"):
        return mode, None
    raise ConfigError(f"unknown feature mode {mode!r}")


def default_features(mdp, critic="tabular", reward="tabular", seed=0):
    """Build a :class:`FeatureSet`.

    critic: ``tabular`` (one-hot state) or ``random:d``.
    reward: ``tabular`` (one-hot over (state, joint action)), ``state``
    (one-hot state, exact whenever rewards ignore the action) or ``random:d``.
    """
    rng = np.random.default_rng(seed)
    S, A = mdp.n_states, mdp.n_joint_actions

    kind, d = _parse_mode(critic)
    if kind in ("tabular", "state"):
        Phi = _one_hot(S)
    else:
        Phi = _random_unit_rows(S, d, rng)

    kind_r, d_r = _parse_mode(reward)
    if kind_r == "tabular":
        if S * A > TABULAR_REWARD_CAP:
            raise CapacityError(f"{S * A} (state, action) pairs exceed the tabular cap; use reward=state")
        Phr = _one_hot(S * A)
    elif kind_r == "state":
        Phr = sp.csr_array((np.ones(S * A), (np.arange(S * A), np.repeat(np.arange(S), A))), shape=(S * A, S))
        if S * A <= 4096:
            Phr = Phr.toarray()
    else:
        Phr = _random_unit_rows(S * A, d_r, rng)
    return FeatureSet(Phi, Phr, A, critic_mode=critic, reward_mode=reward)


def value_estimate(phi, omega):
    phi, omega = np.asarray(phi), np.asarray(omega)
    if phi.shape[-1] != omega.shape[-1]:
        raise ValueError("feature and parameter dimensions differ")
    return omega @ phi


def reward_estimate(phi_r, lam):
    return value_estimate(phi_r, lam)


def project_ball(v, R):
    """Euclidean projection onto the ball of radius ``R`` (row-wise for 2-D input)."""
    if R <= 0:
        raise ValueError("radius must be positive")
    v = np.asarray(v, dtype=float)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    scale = np.where(norms > R, R / np.where(norms > 0, norms, 1.0), 1.0)
    return v * scale


def softmax(logits):
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Radii:
    omega: float
    lam: float

    def __post_init__(self):
        if not (self.omega > 0 and self.lam > 0):
            raise ConfigError("projection radii must be positive")


@dataclass(frozen=True, eq=False)
class SoftmaxPolicy:
    """Product of independent per-agent softmax policies.

    ``features[i]`` has shape ``(S, A_i, d_theta)``; ``None`` selects one-hot
    features over ``(s, a_i)`` so that ``theta[i]`` reshapes to ``(S, A_i)``.
    The ``theta`` arrays are held by reference, not copied.
    """

    n_states: int
    action_counts: tuple
    theta: tuple
    features: tuple = None

    def __post_init__(self):
        counts = tuple(int(c) for c in self.action_counts)
        object.__setattr__(self, "action_counts", counts)
        if len(self.theta) != len(counts):
            raise ConfigError("one parameter vector per agent is required")
        for i, th in enumerate(self.theta):
            if np.shape(th) != (self.dim(i),):
                raise ConfigError(f"theta[{i}] has shape {np.shape(th)}, expected {(self.dim(i),)}")

    @classmethod
    def zeros(cls, n_states, action_counts, features=None):
        counts = tuple(int(c) for c in action_counts)
        dims = [n_states * c if features is None else features[i].shape[2] for i, c in enumerate(counts)]
        return cls(n_states, counts, tuple(np.zeros(d) for d in dims), features)

    @property
    def n_agents(self):
        return len(self.action_counts)

    @property
    def tabular(self):
        return self.features is None

    def dim(self, i):
        if self.features is None:
            return self.n_states * self.action_counts[i]
        return self.features[i].shape[2]

    def with_theta(self, theta):
        return SoftmaxPolicy(self.n_states, self.action_counts, tuple(theta), self.features)

    def score_bound(self):
        """``C_psi = 2 max ||x(s, a_i)||``."""
        if self.features is None:
            return 2.0
        return 2.0 * max(float(np.linalg.norm(X, axis=-1).max()) for X in self.features)

    def logits(self, i, s):
        if self.features is None:
            A = self.action_counts[i]
            return self.theta[i][s * A:(s + 1) * A]
        return self.features[i][s] @ self.theta[i]

    def agent_probs(self, i, s):
        return softmax(self.logits(i, s))

    def agent_prob_table(self, i):
        if self.features is None:
            return softmax(self.theta[i].reshape(self.n_states, self.action_counts[i]))
        return softmax(self.features[i] @ self.theta[i])

    def joint_prob_table(self):
        """``(S, A)`` joint action probabilities, joint index in C order over agents."""
        table = np.ones((self.n_states, 1))
        for i in range(self.n_agents):
            p = self.agent_prob_table(i)
            table = (table[:, :, None] * p[:, None, :]).reshape(self.n_states, -1)
        return table

    def log_prob(self, i, s, a_i):
        z = self.logits(i, s)
        m = z.max()
        return float(z[a_i] - m - np.log(np.exp(z - m).sum()))

    def sample(self, s, rng):
        out = np.empty(self.n_agents, dtype=int)
        for i in range(self.n_agents):
            cdf = np.cumsum(self.agent_probs(i, s))
            out[i] = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)
        return out

    def score(self, i, s, a_i):
        """``grad_{theta_i} log pi_i(a_i | s)``."""
        p = self.agent_probs(i, s)
        if self.features is None:
            A = self.action_counts[i]
            out = np.zeros(self.dim(i))
            blk = out[s * A:(s + 1) * A]
            blk -= p
            blk[a_i] += 1.0
            return out
        X = self.features[i][s]
        return X[a_i] - p @ X

    def score_table(self, i):
        """``(S, A_i, d_theta)`` table of all score vectors."""
        S, A = self.n_states, self.action_counts[i]
        p = self.agent_prob_table(i)
        if self.features is None:
            X = np.zeros((S, A, S * A))
            for s in range(S):
                X[s, :, s * A:(s + 1) * A] = np.eye(A)
        else:
            X = self.features[i]
        return X - np.einsum("sb,sbd->sd", p, X)[:, None, :]

    def weighted_score_sum(self, i, w):
        """``sum_{s, b} w[s, b] * score(i, s, b)`` for a ``(S, A_i)`` weight table."""
        p = self.agent_prob_table(i)
        if self.features is None:
            return (w - p * w.sum(axis=1, keepdims=True)).ravel()
        X = self.features[i]
        return np.einsum("sb,sbd->d", w, X) - np.einsum("s,sc,scd->d", w.sum(axis=1), p, X)


def score_function(policy, s, a_i, agent):
    """Softmax score ``x(s, a_i) - E_b x(s, b)`` for one agent."""
    return policy.score(agent, s, a_i)
