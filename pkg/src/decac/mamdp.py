"""Networked multi-agent MDPs, their samplers and two environment families.

Transitions are stored as a 2-D matrix with one row per (state, joint action)
pair, ``row = s * n_joint_actions + a``.  Small random MDPs use a dense
``ndarray``; the navigation grid, whose moves are deterministic, uses a
``scipy.sparse.csr_array`` so that three agents on a 3x3 grid stay cheap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, ConfigError

ROW_TOL = 1e-12
PROB_FLOOR = 1e-3
DEFAULT_STATE_CAP = 10**6

# stay, up, down, left, right
MOVES = np.array([(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)])


@dataclass(frozen=True, eq=False)
class TransitionSample:
    s: int
    a: tuple
    s_next: int


@dataclass(frozen=True, eq=False)
class TabularMAMDP:
    """Finite networked MDP ``(S, {A^i}, P, {r^i}, gamma)`` with initial law ``init_dist``.

    ``transition`` may be passed as an ``(S, A, S)`` tensor or as the
    ``(S*A, S)`` row matrix (dense or sparse); ``rewards`` has shape ``(N, S, A)``.
    """

    n_agents: int
    n_states: int
    action_counts: tuple
    transition: object
    rewards: np.ndarray
    gamma: float
    init_dist: np.ndarray
    r_max: float
    name: str = field(default="tabular", compare=False)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.action_counts)
        object.__setattr__(self, "action_counts", counts)
        if self.n_agents < 1 or len(counts) != self.n_agents:
            raise ConfigError("action_counts must list one count per agent")
        if self.n_states < 1 or min(counts) < 1:
            raise ConfigError("state and action counts must be positive")
        S, A = self.n_states, self.n_joint_actions

        P = self.transition
        if sp.issparse(P):
            P = sp.csr_array(P, dtype=float)
        else:
            P = np.asarray(P, dtype=float)
            if P.ndim == 3:
                P = P.reshape(S * A, S)
        if P.shape != (S * A, S):
            raise ConfigError(f"transition has shape {P.shape}, expected {(S * A, S)}")
        data = P.data if sp.issparse(P) else P
        if np.any(data < 0):
            raise ConfigError("transition probabilities must be nonnegative")
        rows = np.asarray(P.sum(axis=1)).ravel()
        if np.max(np.abs(rows - 1.0)) > ROW_TOL:
            raise ConfigError("every transition row must sum to 1")
        object.__setattr__(self, "transition", P)

        R = np.asarray(self.rewards, dtype=float)
        if R.shape != (self.n_agents, S, A):
            raise ConfigError(f"rewards have shape {R.shape}, expected {(self.n_agents, S, A)}")
        if self.r_max <= 0 or np.max(np.abs(R)) > self.r_max * (1 + 1e-12):
            raise ConfigError("rewards must be bounded by r_max > 0")
        object.__setattr__(self, "rewards", R)

        mu0 = np.asarray(self.init_dist, dtype=float)
        if mu0.shape != (S,) or np.any(mu0 < 0) or abs(mu0.sum() - 1.0) > ROW_TOL:
            raise ConfigError("init_dist must be a probability vector over states")
        object.__setattr__(self, "init_dist", mu0)
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")

    @property
    def n_joint_actions(self):
        return int(np.prod(self.action_counts))

    @property
    def is_sparse(self):
        return sp.issparse(self.transition)

    @cached_property
    def joint_actions(self):
        """``(A, N)`` table of per-agent actions for every joint index."""
        return np.stack(np.unravel_index(np.arange(self.n_joint_actions), self.action_counts), axis=1)

    def joint_index(self, a):
        return int(np.ravel_multi_index(tuple(int(x) for x in a), self.action_counts))

    @cached_property
    def mean_rewards(self):
        """``(S, A)`` table of the network-average reward."""
        return self.rewards.mean(axis=0)

    @cached_property
    def _sampler(self):
        P = sp.csr_array(self.transition)
        cum = np.empty_like(P.data)
        for r in range(P.shape[0]):
            lo, hi = P.indptr[r], P.indptr[r + 1]
            cum[lo:hi] = np.cumsum(P.data[lo:hi])
        return P.indptr, P.indices, cum

    def transition_row(self, s, a_joint):
        """Dense next-state distribution for ``(s, a_joint)``."""
        row = s * self.n_joint_actions + a_joint
        if self.is_sparse:
            return self.transition[[row], :].toarray().ravel()
        return self.transition[row]

    def sample_next(self, s, a_joint, rng):
        indptr, indices, cum = self._sampler
        row = s * self.n_joint_actions + a_joint
        lo, hi = indptr[row], indptr[row + 1]
        if hi - lo == 1:
            return int(indices[lo])
        j = np.searchsorted(cum[lo:hi], rng.random() * cum[hi - 1], side="right")
        return int(indices[lo + min(j, hi - lo - 1)])

    def to_json(self):
        P = self.transition.toarray() if self.is_sparse else self.transition
        doc = {
            "n_agents": self.n_agents,
            "n_states": self.n_states,
            "action_counts": list(self.action_counts),
            "transition": P.ravel().tolist(),
            "rewards": self.rewards.ravel().tolist(),
            "gamma": self.gamma,
            "init_dist": self.init_dist.tolist(),
            "r_max": self.r_max,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        S = doc["n_states"]
        counts = tuple(doc["action_counts"])
        A = int(np.prod(counts))
        return cls(
            n_agents=doc["n_agents"],
            n_states=S,
            action_counts=counts,
            transition=np.array(doc["transition"]).reshape(S * A, S),
            rewards=np.array(doc["rewards"]).reshape(doc["n_agents"], S, A),
            gamma=doc["gamma"],
            init_dist=np.array(doc["init_dist"]),
            r_max=doc.get("r_max", max(1e-12, float(np.max(np.abs(doc["rewards"]))))),
        )


def make_random_mamdp(n_agents, n_states, action_counts, seed, r_max=1.0, gamma=0.9, floor=PROB_FLOOR):
    """Random MDP with Dirichlet(1) rows floored at ``floor`` and uniform rewards.

    The floor makes every kernel irreducible and aperiodic whatever the policy.
    """
    if isinstance(action_counts, int):
        action_counts = (action_counts,) * n_agents
    action_counts = tuple(int(c) for c in action_counts)
    if n_agents < 1 or len(action_counts) != n_agents:
        raise ConfigError("need one action count per agent")
    if n_states < 2 or min(action_counts) < 2:
        raise ConfigError("random MDPs need at least 2 states and 2 actions per agent")
    if r_max <= 0:
        raise ConfigError("r_max must be positive")
    rng = np.random.default_rng(seed)
    A = int(np.prod(action_counts))
    P = rng.dirichlet(np.ones(n_states), size=n_states * A)
    P = np.maximum(P, floor)
    P /= P.sum(axis=1, keepdims=True)
    R = rng.uniform(-r_max, r_max, size=(n_agents, n_states, A))
    return TabularMAMDP(
        n_agents=n_agents,
        n_states=n_states,
        action_counts=action_counts,
        transition=P,
        rewards=R,
        gamma=gamma,
        init_dist=np.full(n_states, 1.0 / n_states),
        r_max=r_max,
        name=f"random-{n_agents}x{n_states}-seed{seed}",
    )


@dataclass(frozen=True)
class NavGridSpec:
    """Discretized cooperative navigation: one landmark per agent on a square grid.

    Reward of agent i at joint position s is
    ``-distance_scale * |pos_i - landmark_i|_1 - collision_penalty * (#others on pos_i)``,
    clipped to ``[-r_max, r_max]``.  Actions are stay/up/down/left/right.
    """

    side: int = 3
    n_agents: int = 3
    landmarks: tuple = ()
    collision_penalty: float = 0.25
    distance_scale: float = 0.25
    r_max: float = 1.0
    gamma: float = 0.95
    max_states: int = DEFAULT_STATE_CAP

    def resolved_landmarks(self):
        if self.landmarks:
            marks = tuple(tuple(int(x) for x in m) for m in self.landmarks)
        else:
            n = self.n_agents
            step = (self.side - 1) / max(n - 1, 1)
            marks = tuple((round(i * step), round(i * step)) for i in range(n))
        if len(marks) != self.n_agents:
            raise ConfigError("need exactly one landmark per agent")
        for r, c in marks:
            if not (0 <= r < self.side and 0 <= c < self.side):
                raise ConfigError(f"landmark {(r, c)} outside the grid")
        return marks


def nav_move(side, cell, action):
    r = min(max(cell[0] + MOVES[action][0], 0), side - 1)
    c = min(max(cell[1] + MOVES[action][1], 0), side - 1)
    return int(r), int(c)


def nav_rewards(spec, cells):
    """Per-agent rewards for a tuple of agent cells (uncompiled access)."""
    marks = spec.resolved_landmarks()
    out = np.empty(spec.n_agents)
    for i, (cell, mark) in enumerate(zip(cells, marks)):
        dist = abs(cell[0] - mark[0]) + abs(cell[1] - mark[1])
        others = sum(1 for j, c in enumerate(cells) if j != i and c == cell)
        out[i] = -spec.distance_scale * dist - spec.collision_penalty * others
    return np.clip(out, -spec.r_max, spec.r_max)


def compile_nav_grid(spec):
    """Enumerate joint positions of a :class:`NavGridSpec` into a :class:`TabularMAMDP`."""
    if spec.side < 1 or spec.n_agents < 1:
        raise ConfigError("grid side and agent count must be positive")
    cells = spec.side * spec.side
    n_states = cells**spec.n_agents
    if n_states > spec.max_states:
        raise CapacityError(
            f"{n_states} joint states exceed the cap of {spec.max_states}; use nav_move/nav_rewards directly"
        )
    N = spec.n_agents
    counts = (len(MOVES),) * N
    A = len(MOVES) ** N
    pos = np.stack(np.unravel_index(np.arange(n_states), (cells,) * N), axis=1)  # (S, N) cell ids
    rows_r, cols_c = np.divmod(pos, spec.side)
    acts = np.stack(np.unravel_index(np.arange(A), counts), axis=1)  # (A, N)

    nr = np.clip(rows_r[:, None, :] + MOVES[acts][None, :, :, 0], 0, spec.side - 1)
    nc = np.clip(cols_c[:, None, :] + MOVES[acts][None, :, :, 1], 0, spec.side - 1)
    next_cells = nr * spec.side + nc  # (S, A, N)
    next_state = np.ravel_multi_index(tuple(np.moveaxis(next_cells, -1, 0)), (cells,) * N)
    P = sp.csr_array(
        (np.ones(n_states * A), (np.arange(n_states * A), next_state.ravel())),
        shape=(n_states * A, n_states),
    )

    marks = np.array(spec.resolved_landmarks())
    dist = np.abs(rows_r - marks[:, 0]) + np.abs(cols_c - marks[:, 1])  # (S, N)
    same = (pos[:, :, None] == pos[:, None, :]).sum(axis=2) - 1
    r_state = np.clip(-spec.distance_scale * dist - spec.collision_penalty * same, -spec.r_max, spec.r_max)
    R = np.broadcast_to(r_state.T[:, :, None], (N, n_states, A)).copy()

    return TabularMAMDP(
        n_agents=N,
        n_states=n_states,
        action_counts=counts,
        transition=P,
        rewards=R,
        gamma=spec.gamma,
        init_dist=np.full(n_states, 1.0 / n_states),
        r_max=spec.r_max,
        name=f"navgrid-{spec.side}x{spec.side}-N{N}",
    )


def step_env(mdp, s, a, rng):
    """One environment transition; ``a`` is the vector of per-agent actions."""
    j = mdp.joint_index(a)
    s_next = mdp.sample_next(s, j, rng)
    return s_next, mdp.rewards[:, s, j].copy()


def sample_state(dist, rng):
    cdf = np.cumsum(dist)
    j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(j, len(dist) - 1)


def sample_iid(mdp, dist, policy, rng):
    """Draw ``s ~ dist, a ~ policy(.|s), s' ~ P(.|s, a)``."""
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (mdp.n_states,) or np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
        raise ValueError("dist must be a probability vector over states")
    s = sample_state(dist, rng)
    a = policy.sample(s, rng)
    s_next = mdp.sample_next(s, mdp.joint_index(a), rng)
    return TransitionSample(s, tuple(int(x) for x in a), s_next)


def mean_reward(mdp, s, a):
    """Network-average reward; for oracles and diagnostics only."""
    return float(mdp.rewards[:, s, mdp.joint_index(a)].mean())


def reward_bound_ok(mdp: TabularMAMDP) -> bool:
    return bool(np.max(np.abs(mdp.rewards)) <= mdp.r_max * (1 + 1e-12))
