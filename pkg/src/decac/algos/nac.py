"""Decentralized estimation of the natural gradient direction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..features import project_ball
from ..topology import scalar_gossip


@dataclass(frozen=True)
class NacParams:
    """Inner direction solver settings.

    ``N_a=None`` uses ``ceil(sqrt(K))`` samples per outer iteration and
    ``rho=None`` uses the largest admissible step ``1 / (2 C_psi^2)``.
    ``sign="ascent"`` moves along ``+h``; ``"paper"`` moves along ``-h``.
    """

    N_a: int = None
    K_a: int = 50
    K_z: int = 5
    rho: float = None
    C_h: float = 100.0
    sign: str = "ascent"

    def __post_init__(self):
        if self.N_a is not None and self.N_a < 1:
            raise ConfigError("N_a must be positive")
        if self.K_a < 1 or self.K_z < 1 or self.C_h <= 0:
            raise ConfigError("K_a, K_z and C_h must be positive")
        if self.rho is not None and self.rho <= 0:
            raise ConfigError("rho must be positive")
        if self.sign not in ("ascent", "paper"):
            raise ConfigError("nac sign must be 'ascent' or 'paper'")

    def resolve(self, K, score_bound):
        rho_max = 1.0 / (2.0 * score_bound**2)
        rho = rho_max if self.rho is None else self.rho
        if rho > rho_max * (1 + 1e-12):
            raise ConfigError(f"rho={rho} exceeds 1/(2 C_psi^2) = {rho_max}")
        n_a = self.N_a if self.N_a is not None else max(1, math.ceil(math.sqrt(max(K, 1))))
        return NacParams(n_a, self.K_a, self.K_z, rho, self.C_h, self.sign)


def sample_scores(policy, states, actions):
    """Per-agent ``(N_a, d_i)`` score matrices for a batch of (s, joint a)."""
    return [
        np.stack([policy.score(i, s, a[i]) for s, a in zip(states, actions)]) for i in range(policy.n_agents)
    ]


def nac_direction_solve(scores, g_a, weights, nac, h0=None, callback=None):
    """Projected gradient descent on ``0.5 h^T F h - g^T h`` with gossiped products.

    ``scores[i]`` is agent i's ``(N_a, d_i)`` score matrix, ``g_a[i]`` its
    gradient estimate.  Each iteration gossips the local products
    ``psi_i^T h_i`` for ``K_z`` rounds; N times the result estimates the
    network-wide product.  ``callback(k', h)`` sees every iterate.
    """
    N = len(scores)
    n_a = scores[0].shape[0]
    h = [np.zeros(sc.shape[1]) if h0 is None else np.array(h0[i], dtype=float) for i, sc in enumerate(scores)]
    for it in range(nac.K_a):
        z = np.stack([scores[i] @ h[i] for i in range(N)])
        z = scalar_gossip(z, weights, nac.K_z)
        for i in range(N):
            grad = (N / n_a) * (scores[i].T @ z[i]) - g_a[i]
            h[i] = project_ball(h[i] - nac.rho * grad, nac.C_h)
        if callback is not None:
            callback(it + 1, h)
    return h
