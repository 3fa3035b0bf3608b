"""Discounted distributionally robust Bellman operators and value iteration.

Kernels are passed as plain ``(S, A, S)`` arrays so that the nominal kernel
of an :class:`~dramdp.model.MdpModel` and the empirical kernel
``EmpiricalKernel.probs`` are interchangeable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .duals import UncertaintySet, gamma_rows
from .errors import MaxItersExceeded
from .model import check_policy


@dataclass(frozen=True)
class DiscountedSolveParams:
    gamma: float
    tol: float = 1e-6
    max_iters: int | None = None

    def __post_init__(self):
        # gamma = 0 is allowed: one sample per pair gives gamma = 1 - 1/sqrt(1)
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    def iteration_cap(self) -> int:
        if self.max_iters is not None:
            return self.max_iters
        horizon = math.ceil(1.0 / (1.0 - self.gamma) - 1e-9)
        return int(200 * horizon * max(1.0, math.log10(1.0 / self.tol)))


@dataclass(frozen=True, eq=False)
class DiscountedSolution:
    values: np.ndarray
    policy: np.ndarray
    iterations: int
    residual: float


def robust_q(reward, kernel, uset: UncertaintySet, gamma: float, V) -> np.ndarray:
    """r(s, a) + gamma * Gamma_{s,a}(V) for every pair, shape (S, A)."""
    reward = np.asarray(reward, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    S, A = reward.shape
    g = gamma_rows(kernel.reshape(S * A, S), np.asarray(V, dtype=float), uset)
    return reward + gamma * g.reshape(S, A)


def greedy(q) -> np.ndarray:
    # np.argmax breaks ties toward the lowest action index
    return np.argmax(q, axis=1)


def optimal_operator(reward, kernel, uset: UncertaintySet, gamma: float, V) -> np.ndarray:
    return robust_q(reward, kernel, uset, gamma, V).max(axis=1)


def policy_operator(reward, kernel, uset: UncertaintySet, gamma: float, policy, V) -> np.ndarray:
    reward = np.asarray(reward, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    S, A = reward.shape
    policy = check_policy(policy, S, A)
    rows = kernel[np.arange(S), policy]
    return reward[np.arange(S), policy] + gamma * gamma_rows(rows, np.asarray(V, dtype=float), uset)


def _stop_threshold(tol: float, gamma: float) -> float:
    # ||V_{t+1} - V_t|| <= tol (1-gamma) / (2 gamma) puts V_{t+1} within tol of the fixed point
    return math.inf if gamma == 0 else tol * (1.0 - gamma) / (2.0 * gamma)


def solve_dr_dmdp(reward, kernel, uset: UncertaintySet, params: DiscountedSolveParams) -> DiscountedSolution:
    """Robust value iteration from V = 0, then a greedy policy at the result."""
    reward = np.asarray(reward, dtype=float)
    threshold = _stop_threshold(params.tol, params.gamma)
    cap = params.iteration_cap()
    V = np.zeros(reward.shape[0])
    residual = math.inf
    for it in range(1, cap + 1):
        V_next = optimal_operator(reward, kernel, uset, params.gamma, V)
        residual = float(np.max(np.abs(V_next - V)))
        V = V_next
        if residual <= threshold:
            policy = greedy(robust_q(reward, kernel, uset, params.gamma, V))
            return DiscountedSolution(values=V, policy=policy, iterations=it, residual=residual)
    raise MaxItersExceeded(f"value iteration did not converge in {cap} sweeps", V, residual)


def evaluate_policy(reward, kernel, uset: UncertaintySet, gamma: float, policy, tol: float = 1e-10,
                    max_iters: int | None = None) -> np.ndarray:
    """Robust value of a fixed policy: fixed point of the policy operator."""
    params = DiscountedSolveParams(gamma=gamma, tol=tol, max_iters=max_iters)
    threshold = _stop_threshold(tol, gamma)
    cap = params.iteration_cap()
    V = np.zeros(np.asarray(reward).shape[0])
    for _ in range(cap):
        V_next = policy_operator(reward, kernel, uset, gamma, policy, V)
        residual = float(np.max(np.abs(V_next - V)))
        V = V_next
        if residual <= threshold:
            return V
    raise MaxItersExceeded(f"policy evaluation did not converge in {cap} sweeps", V, residual)
