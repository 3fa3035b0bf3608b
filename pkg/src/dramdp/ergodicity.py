"""Doeblin certificates, minorization and mixing times, span semi-norm."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonErgodic, TooManyPolicies
from .model import MdpModel, induced_kernel, stationary_distribution

DEFAULT_M_MAX = 4096
HARD_M_CAP = 1 << 20
MAX_POLICIES = 1_000_000
CERT_TOL = 1e-12


def span_norm(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(v.max() - v.min())


@dataclass(frozen=True, eq=False)
class DoeblinCertificate:
    """K^m(s, .) >= p * psi(.) for every s.  ``psi`` is None when p = 0."""

    m: int
    p: float
    psi: np.ndarray | None

    @property
    def ratio(self) -> float:
        return self.m / self.p if self.p > 0 else math.inf

    def holds_for(self, K, tol: float = CERT_TOL) -> bool:
        if self.p == 0:
            return True
        Km = np.linalg.matrix_power(np.asarray(K, dtype=float), self.m)
        return bool(np.all(Km >= self.p * self.psi[None, :] - tol))

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "p": self.p,
            "psi": None if self.psi is None else self.psi.tolist(),
            "ratio": self.ratio,
        }


def _certificate_from_power(Km: np.ndarray, m: int) -> DoeblinCertificate:
    # normalized column minimums give the largest p at this horizon
    colmin = Km.min(axis=0)
    p = float(colmin.sum())
    if p <= 0:
        return DoeblinCertificate(m, 0.0, None)
    return DoeblinCertificate(m, min(p, 1.0), colmin / colmin.sum())


def doeblin_at_horizon(K, m: int) -> DoeblinCertificate:
    if m < 1:
        raise ValueError("horizon must be at least 1")
    K = np.asarray(K, dtype=float)
    return _certificate_from_power(np.linalg.matrix_power(K, m), m)


@dataclass(frozen=True, eq=False)
class MinorizationResult:
    t_minorize: float
    certificate: DoeblinCertificate

    @property
    def m_star(self) -> int:
        return self.certificate.m


def minorization_time(K, m_max: int = DEFAULT_M_MAX) -> MinorizationResult:
    """Smallest m / p(m) over horizons.

    The optimal horizon never exceeds the optimal ratio (p <= 1), so the scan
    stops once m passes the best ratio found; ``m_max`` is doubled on demand
    until it covers that ratio.
    """
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    K = np.asarray(K, dtype=float)
    best = None
    Km = np.eye(K.shape[0])
    limit = m_max
    m = 0
    while True:
        m += 1
        if best is not None and m > best.ratio:
            break
        if m > limit:
            if best is None or limit >= HARD_M_CAP:
                break
            limit = min(2 * limit, HARD_M_CAP)
        Km = Km @ K
        cert = _certificate_from_power(Km, m)
        if cert.p > 0 and (best is None or cert.ratio < best.ratio):
            best = cert
    if best is None:
        raise NonErgodic(f"no Doeblin minorization at any horizon up to {limit}")
    return MinorizationResult(best.ratio, best)


def mixing_time(K, m_max: int = DEFAULT_M_MAX) -> int:
    """First m with max_s TV(K^m(s, .), rho) <= 1/4 (TV as half the l1 distance)."""
    K = np.asarray(K, dtype=float)
    rho = stationary_distribution(K)
    Km = np.eye(K.shape[0])
    for m in range(1, m_max + 1):
        Km = Km @ K
        tv = 0.5 * np.abs(Km - rho[None, :]).sum(axis=1).max()
        if tv <= 0.25 + 1e-12:
            return m
    raise NonErgodic(f"worst-row TV distance stays above 1/4 up to m = {m_max}")


@dataclass(frozen=True, eq=False)
class ErgodicityReport:
    t_minorize: float
    best_cert: DoeblinCertificate
    t_mix: int

    @property
    def m_star(self) -> int:
        return self.best_cert.m

    def to_dict(self) -> dict:
        return {
            "t_minorize": self.t_minorize,
            "m_star": self.m_star,
            "t_mix": self.t_mix,
            "best_cert": self.best_cert.to_dict(),
        }


def diagnose_kernel(K, m_max: int = DEFAULT_M_MAX) -> ErgodicityReport:
    res = minorization_time(K, m_max)
    return ErgodicityReport(res.t_minorize, res.certificate, mixing_time(K, m_max))


@dataclass(frozen=True, eq=False)
class ModelMinorization:
    t_minorize: float
    m_vee: int
    worst_policy: np.ndarray
    approximate: bool

    def to_dict(self) -> dict:
        return {
            "t_minorize": self.t_minorize,
            "m_vee": self.m_vee,
            "worst_policy": self.worst_policy.tolist(),
            "approximate": self.approximate,
        }


def all_policies(n_states: int, n_actions: int):
    for actions in itertools.product(range(n_actions), repeat=n_states):
        yield np.array(actions, dtype=np.int64)


def model_minorization_time(model: MdpModel, m_max: int = DEFAULT_M_MAX, policies=None) -> ModelMinorization:
    """Worst minorization time over deterministic policies, and m_vee.

    Enumerates every policy when there are at most 10^6 of them; otherwise a
    caller-supplied policy list is required and the result is flagged
    approximate.
    """
    approximate = policies is not None
    if policies is None:
        if model.n_actions ** model.n_states > MAX_POLICIES:
            raise TooManyPolicies(
                f"{model.n_actions}^{model.n_states} policies exceed {MAX_POLICIES}; supply a policy list"
            )
        policies = all_policies(model.n_states, model.n_actions)
    seen: dict[bytes, MinorizationResult] = {}
    t_max, m_vee, worst = -math.inf, 0, None
    for pi in policies:
        K = induced_kernel(model, pi)
        key = K.tobytes()
        if key not in seen:
            seen[key] = minorization_time(K, m_max)
        res = seen[key]
        if res.t_minorize > t_max:
            t_max, worst = res.t_minorize, np.asarray(pi)
        m_vee = max(m_vee, res.m_star)
    if worst is None:
        raise ValueError("empty policy list")
    return ModelMinorization(t_max, m_vee, worst, approximate)
