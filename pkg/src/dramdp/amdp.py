"""Average-reward robust solvers: reduction to a discounted problem, and anchoring.

Both take a kernel array (nominal or empirical) together with the sample
size ``n`` that calibrates them:

* reduction: discount gamma = 1 - 1/sqrt(n), estimate V*/sqrt(n);
* anchored: every ball member q is replaced by (1 - xi) q + xi * e_{s0}
  with xi = 1/sqrt(n), and the resulting average-reward equation is solved
  by relative value iteration.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .bellman import DiscountedSolveParams, greedy, solve_dr_dmdp
from .duals import Divergence, UncertaintySet, gamma_rows
from .errors import MaxItersExceeded
from .ergodicity import DEFAULT_M_MAX, model_minorization_time
from .model import EmpiricalKernel, MdpModel, min_support_probability

log = logging.getLogger(__name__)

RVI_ITER_CAP = 10_000_000


class Method(str, enum.Enum):
    REDUCTION = "reduction"
    ANCHORED = "anchored"


@dataclass(frozen=True, eq=False)
class AvgRewardSolution:
    gain: float
    bias: np.ndarray
    policy: np.ndarray
    method: Method
    n: int
    iterations: int

    def to_dict(self) -> dict:
        return {
            "gain": self.gain,
            "bias": self.bias.tolist(),
            "policy": self.policy.tolist(),
            "method": Method(self.method).value,
            "n": self.n,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class AnchorParams:
    anchor_state: int
    xi: float

    def __post_init__(self):
        if not 0 < self.xi < 1:
            raise ValueError("xi must lie in (0, 1)")


def _kernel_and_n(kernel, n):
    if isinstance(kernel, EmpiricalKernel):
        if n is not None and n != kernel.n:
            raise ValueError(f"n={n} disagrees with the empirical kernel's n={kernel.n}")
        return kernel.probs, kernel.n
    if n is None:
        raise ValueError("n is required when passing a raw kernel")
    if n < 1:
        raise ValueError("n must be at least 1")
    return np.asarray(kernel, dtype=float), int(n)


def reduce_to_dmdp(kernel, reward, uset: UncertaintySet, n: int | None = None, tol: float = 1e-6,
                   max_iters: int | None = None) -> AvgRewardSolution:
    """Solve the robust discounted problem at gamma = 1 - 1/sqrt(n) and rescale.

    ``bias`` holds the whole vector V*/sqrt(n); ``gain`` is its entry at state 0.
    """
    probs, n = _kernel_and_n(kernel, n)
    root = math.sqrt(n)
    sol = solve_dr_dmdp(reward, probs, uset, DiscountedSolveParams(1.0 - 1.0 / root, tol, max_iters))
    est = sol.values / root
    return AvgRewardSolution(float(est[0]), est, sol.policy, Method.REDUCTION, n, sol.iterations)


def anchored_gamma(uset: UncertaintySet, p_row, anchor: AnchorParams, v) -> float:
    """Robust expectation over the anchored ball {(1 - xi) q + xi e_{s0}}."""
    v = np.asarray(v, dtype=float)
    return float((1.0 - anchor.xi) * gamma_rows(p_row, v, uset)[0] + anchor.xi * v[anchor.anchor_state])


def _anchored_q(reward, probs, uset, xi, s0, v):
    S, A = reward.shape
    g = gamma_rows(probs.reshape(S * A, S), v, uset).reshape(S, A)
    return reward + (1.0 - xi) * g + xi * v[s0]


def anchored_rvi(probs, reward, uset: UncertaintySet, anchor: AnchorParams, tol: float = 1e-9,
                 max_iters: int = RVI_ITER_CAP):
    """Relative value iteration for the anchored equation v = T(v) - g.

    Iterates v <- T(w), w <- v - v(s0) until successive w differ by at most
    ``tol``; returns (gain, w, policy, iterations).
    """
    reward = np.asarray(reward, dtype=float)
    probs = np.asarray(probs, dtype=float)
    s0, xi = anchor.anchor_state, anchor.xi
    w = np.zeros(reward.shape[0])
    for it in range(1, max_iters + 1):
        v = _anchored_q(reward, probs, uset, xi, s0, w).max(axis=1)
        w_next = v - v[s0]
        residual = float(np.max(np.abs(w_next - w)))
        w = w_next
        if residual <= tol:
            gain = float(v[s0])
            policy = greedy(_anchored_q(reward, probs, uset, xi, s0, w))
            return gain, w, policy, it
    raise MaxItersExceeded(f"relative value iteration did not converge in {max_iters} sweeps", w, residual)


def anchored_amdp(kernel, reward, uset: UncertaintySet, n: int | None = None, anchor_state: int = 0,
                  tol: float = 1e-9, max_iters: int = RVI_ITER_CAP) -> AvgRewardSolution:
    probs, n = _kernel_and_n(kernel, n)
    if n < 2:
        raise ValueError("anchoring needs n >= 2 so that xi = 1/sqrt(n) < 1")
    anchor = AnchorParams(anchor_state, 1.0 / math.sqrt(n))
    gain, w, policy, it = anchored_rvi(probs, reward, uset, anchor, tol, max_iters)
    return AvgRewardSolution(gain, w, policy, Method.ANCHORED, n, it)


def ground_truth_gain(model: MdpModel, uset: UncertaintySet, precision: float = 1e-6,
                      anchor_state: int = 0) -> float:
    """Robust optimal gain of the nominal model via anchored RVI with xi = precision."""
    gain, *_ = anchored_rvi(model.kernel, model.reward, uset, AnchorParams(anchor_state, precision),
                            tol=precision * 1e-2)
    return gain


@dataclass(frozen=True)
class AdversarialPowerReport:
    m_vee: int
    p_min: float
    delta_max: float
    satisfied: bool
    approximate: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def delta_bound(p_min: float, m_vee: int, uset: UncertaintySet) -> float:
    """Largest radius allowed by the limited-adversary condition."""
    if uset.divergence is Divergence.KL:
        return p_min / (8.0 * m_vee**2)
    return p_min / (max(8.0, 4.0 * uset.k) * m_vee**2)


def check_adversarial_power(model: MdpModel, uset: UncertaintySet, m_max: int = DEFAULT_M_MAX,
                            policies=None) -> AdversarialPowerReport:
    mm = model_minorization_time(model, m_max, policies)
    p_min = min_support_probability(model)
    bound = delta_bound(p_min, mm.m_vee, uset)
    return AdversarialPowerReport(mm.m_vee, p_min, bound, uset.radius <= bound, mm.approximate)
