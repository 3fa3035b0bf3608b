"""Tabular MDP container, generative-model sampling and basic chain computations."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NonErgodic

SUM_TOL = 1e-12
CLAMP_TOL = 1e-15
POWER_ITERATION_CAP = 1_000_000


def as_prob_vector(p, axis: int = -1) -> np.ndarray:
    """Validate probability vector(s) along ``axis``.

    Roundoff negatives down to -1e-15 are clamped to zero and the vector
    renormalized, so the support seen by the duals never changes spuriously.
    """
    p = np.array(p, dtype=float)
    if np.any(p < -CLAMP_TOL) or not np.all(np.isfinite(p)):
        raise ValueError("probability vector has negative or non-finite entries")
    if np.any(p < 0):
        p = np.where(p < 0, 0.0, p)
        p = p / p.sum(axis=axis, keepdims=True)
    sums = p.sum(axis=axis)
    if np.any(np.abs(sums - 1.0) > SUM_TOL):
        raise ValueError(f"probability vector sums deviate from 1 by {np.max(np.abs(sums - 1.0)):.3e}")
    return p


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MdpModel:
    """Finite MDP: reward table of shape (S, A) and kernel of shape (S, A, S)."""

    reward: np.ndarray
    kernel: np.ndarray

    def __post_init__(self):
        reward = np.asarray(self.reward, dtype=float)
        kernel = np.asarray(self.kernel, dtype=float)
        if reward.ndim != 2 or kernel.ndim != 3:
            raise ValueError("reward must be (S, A) and kernel (S, A, S)")
        S, A = reward.shape
        if S < 1 or A < 1 or kernel.shape != (S, A, S):
            raise ValueError(f"kernel shape {kernel.shape} does not match reward shape {reward.shape}")
        if np.any(reward < 0) or np.any(reward > 1) or not np.all(np.isfinite(reward)):
            raise ValueError("rewards must lie in [0, 1]")
        object.__setattr__(self, "reward", _freeze(reward))
        object.__setattr__(self, "kernel", _freeze(as_prob_vector(kernel)))

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "reward": self.reward.tolist(),
            "kernel": self.kernel.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MdpModel":
        model = cls(reward=np.asarray(d["reward"], dtype=float), kernel=np.asarray(d["kernel"], dtype=float))
        if "n_states" in d and d["n_states"] != model.n_states:
            raise ValueError("n_states field disagrees with the reward table")
        if "n_actions" in d and d["n_actions"] != model.n_actions:
            raise ValueError("n_actions field disagrees with the reward table")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MdpModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True, eq=False)
class EmpiricalKernel:
    """Per-(s, a) next-state counts from ``n`` generative-model draws."""

    counts: np.ndarray
    n: int

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 3 or counts.shape[0] != counts.shape[2]:
            raise ValueError("counts must have shape (S, A, S)")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if np.any(counts < 0) or np.any(counts.sum(axis=-1) != self.n):
            raise ValueError("every counts row must be non-negative and sum to n")
        object.__setattr__(self, "counts", _freeze(counts.astype(np.int64)))

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.n

    def to_dict(self) -> dict:
        return {"n": int(self.n), "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "EmpiricalKernel":
        return cls(counts=np.asarray(d["counts"], dtype=np.int64), n=int(d["n"]))


def check_policy(policy, n_states: int, n_actions: int) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.int64)
    if policy.shape != (n_states,):
        raise ValueError(f"policy must assign one action to each of {n_states} states")
    if np.any(policy < 0) or np.any(policy >= n_actions):
        raise ValueError("policy action index out of range")
    return policy


def row_generator(seed: int, s: int, a: int) -> np.random.Generator:
    """Independent stream for one (state, action) pair; independent of evaluation order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(s), int(a)])))


def sample_transitions(model: MdpModel, n: int, seed: int) -> EmpiricalKernel:
    """Draw ``n`` next states per (s, a) and return the counts.

    Only the counts enter the empirical kernel, so each row is drawn as a
    single multinomial, which has the law of ``n`` i.i.d. categorical draws.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    S, A = model.n_states, model.n_actions
    counts = np.empty((S, A, S), dtype=np.int64)
    for s in range(S):
        for a in range(A):
            counts[s, a] = row_generator(seed, s, a).multinomial(n, model.kernel[s, a])
    return EmpiricalKernel(counts=counts, n=n)


def induced_kernel(model: MdpModel, policy) -> np.ndarray:
    policy = check_policy(policy, model.n_states, model.n_actions)
    return model.kernel[np.arange(model.n_states), policy].copy()


def stationary_distribution(K, tol: float = 1e-12, max_iters: int = POWER_ITERATION_CAP) -> np.ndarray:
    """Stationary law of ``K`` by power iteration from the uniform distribution."""
    K = np.asarray(K, dtype=float)
    rho = np.full(K.shape[0], 1.0 / K.shape[0])
    for _ in range(max_iters):
        nxt = rho @ K
        nxt /= nxt.sum()
        if np.abs(nxt - rho).sum() <= tol:
            return nxt
        rho = nxt
    raise NonErgodic(f"power iteration did not reach {tol:g} within {max_iters} steps")


def average_reward(model: MdpModel, policy, tol: float = 1e-12) -> float:
    policy = check_policy(policy, model.n_states, model.n_actions)
    rho = stationary_distribution(induced_kernel(model, policy), tol=tol)
    r_pi = model.reward[np.arange(model.n_states), policy]
    return float(rho @ r_pi)


def min_support_probability(model: MdpModel) -> float:
    k = model.kernel
    pos = k[k > 0]
    if pos.size == 0:
        raise ValueError("kernel has no positive entry")
    return float(pos.min())
