"""Benchmark instance generators."""

from __future__ import annotations

import numpy as np

from .model import MdpModel

NEGATIVE_FLOOR = 1e-3


def hard_mdp(p: float) -> MdpModel:
    """Two-state, two-action family where every policy induces [[1-p, p], [p, 1-p]].

    State 0 pays reward 1, state 1 pays 0; t_minorize = 1/(2p) for p <= 1/2.
    """
    if not 0 < p <= 0.5:
        raise ValueError("p must lie in (0, 0.5]")
    kernel = np.empty((2, 2, 2))
    kernel[0, :] = [1.0 - p, p]
    kernel[1, :] = [p, 1.0 - p]
    reward = np.array([[1.0, 1.0], [0.0, 0.0]])
    return MdpModel(reward=reward, kernel=kernel)


def random_mdp(n_states: int, n_actions: int, seed: int, sigma_max: float = 100.0,
               floor: float = NEGATIVE_FLOOR) -> MdpModel:
    """Random dense instance: rows are normalized Normal(1, sigma_{s,a}) draws.

    sigma_{s,a} ~ Uniform[0, sigma_max]. Draws below ``floor`` (including all
    negative ones) are raised to ``floor`` before normalizing, so every row
    keeps full support. Rewards are Uniform[0, 1].
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError("state and action counts must be positive")
    if sigma_max < 0:
        raise ValueError("sigma_max must be non-negative")
    rng = np.random.default_rng(seed)
    sigma = rng.uniform(0.0, sigma_max, size=(n_states, n_actions))
    raw = rng.normal(1.0, sigma[..., None], size=(n_states, n_actions, n_states))
    raw = np.maximum(raw, floor)
    kernel = raw / raw.sum(axis=-1, keepdims=True)
    reward = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    return MdpModel(reward=reward, kernel=kernel)
