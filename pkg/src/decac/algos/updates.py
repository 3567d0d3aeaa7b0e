"""Single-step update kernels shared by every algorithm mode.

Parameters may be one agent's vector ``(d,)`` or the stacked network
state ``(N, d)`` with one reward per agent; the formulas broadcast.
"""

from __future__ import annotations

import numpy as np

from ..features import project_ball


def td_error(phi_s, phi_next, omega, reward, gamma):
    """``r + gamma * phi(s')^T w - phi(s)^T w``."""
    return reward + gamma * (omega @ phi_next) - omega @ phi_s


def td_direction(phi_s, phi_next, omega, reward, gamma):
    delta = np.asarray(td_error(phi_s, phi_next, omega, reward, gamma))
    return delta[..., None] * phi_s


def reward_direction(phi_r, lam, reward):
    resid = np.asarray(reward - lam @ phi_r)
    return resid[..., None] * phi_r


def critic_td_step(phi_s, phi_next, omega_tilde, reward, gamma, beta, radius, omega_td=None):
    """Projected TD(0) step from the consensus point ``omega_tilde``.

    The TD error is evaluated at ``omega_td`` when given (the pre-consensus
    iterate), otherwise at ``omega_tilde``.
    """
    at = omega_tilde if omega_td is None else omega_td
    return project_ball(omega_tilde + beta * td_direction(phi_s, phi_next, at, reward, gamma), radius)


def reward_estimator_step(phi_r, lam_tilde, reward, eta, radius, lam_td=None):
    at = lam_tilde if lam_td is None else lam_td
    return project_ball(lam_tilde + eta * reward_direction(phi_r, at, reward), radius)


def advantage_estimate(phi_r, phi_s, phi_next, omega, lam, gamma):
    """``r_hat(s, a) + gamma V_hat(s') - V_hat(s)`` from the local estimators."""
    return lam @ phi_r + gamma * (omega @ phi_next) - omega @ phi_s


def actor_step(theta, score, advantage, alpha):
    return theta + alpha * advantage * score


def actor_step_noisy(theta, score, reward_est, phi_s, phi_next, omega, gamma, alpha):
    """Actor step driven by a gossiped reward estimate instead of a reward model."""
    return theta + alpha * td_error(phi_s, phi_next, omega, reward_est, gamma) * score
