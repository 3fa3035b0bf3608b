"""Robust expectation over KL and Cressie-Read (f_k) divergence balls.

For a nominal row ``p`` and value vector ``V`` the robust expectation is

    Gamma(V) = inf { <q, V> : D(q || p) <= delta }.

It is evaluated through its one-dimensional concave dual:

    KL:   sup_{alpha >= 0} -alpha*delta - alpha*log <p, exp(-V/alpha)>
    f_k:  sup_{alpha}      alpha - c_k(delta) * <p, (alpha - V)_+^{k*}>^{1/k*}

with k* = k/(k-1) and c_k(delta) = (1 + k(k-1)delta)^{1/k}. Everything is
restricted to the support of ``p``; states outside it never enter.

The ``*_rows`` functions take a matrix of nominal rows sharing one value
vector and solve all duals at once; Bellman sweeps use them directly.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import SupportTooLarge
from .optimize import golden_section_max

SPAN_TOL = 1e-12
ALPHA_FLOOR = 1e-12
ALPHA_TOL = 1e-10
# radii below this move <q, V> by less than double precision resolves
RADIUS_FLOOR = 1e-30


class Divergence(str, enum.Enum):
    KL = "kl"
    FK = "fk"


@dataclass(frozen=True)
class UncertaintySet:
    """Divergence family and radius of every per-(s, a) ball."""

    divergence: Divergence
    radius: float
    k: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "divergence", Divergence(self.divergence))
        if not self.radius >= 0:
            raise ValueError("radius must be non-negative")
        if self.divergence is Divergence.FK:
            if self.k is None or not self.k > 1:
                raise ValueError("f_k divergence needs k > 1")
        elif self.k is not None:
            raise ValueError("k is only meaningful for the f_k divergence")

    @classmethod
    def kl(cls, radius: float) -> "UncertaintySet":
        return cls(Divergence.KL, radius)

    @classmethod
    def fk(cls, radius: float, k: float = 2.0) -> "UncertaintySet":
        return cls(Divergence.FK, radius, k)

    @property
    def k_star(self) -> float:
        return self.k / (self.k - 1.0)

    @property
    def c_k(self) -> float:
        return (1.0 + self.k * (self.k - 1.0) * self.radius) ** (1.0 / self.k)

    def divergence_of(self, q, p) -> float:
        if self.divergence is Divergence.KL:
            return kl_divergence(q, p)
        return fk_divergence(q, p, self.k)

    def to_dict(self) -> dict:
        d = {"divergence": self.divergence.value, "radius": self.radius}
        if self.k is not None:
            d["k"] = self.k
        return d

    def label(self) -> str:
        if self.divergence is Divergence.KL:
            return f"kl(delta={self.radius:g})"
        return f"fk(k={self.k:g},delta={self.radius:g})"


@dataclass(frozen=True, eq=False)
class DualSolution:
    """Optimal dual multiplier and a worst-case measure for one ball.

    ``worst_case`` is None when V is constant on the support of the center:
    then every member of the ball attains the infimum.
    """

    value: float
    multiplier: float
    worst_case: np.ndarray | None
    achieved_divergence: float

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "multiplier": self.multiplier,
            "worst_case": "any-ball-member" if self.worst_case is None else self.worst_case.tolist(),
            "achieved_divergence": self.achieved_divergence,
        }


# divergences -----------------------------------------------------------------


def kl_divergence(q, p) -> float:
    q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
    if np.any((p <= 0) & (q > 0)):
        return math.inf
    m = q > 0
    return float(np.sum(q[m] * (np.log(q[m]) - np.log(p[m]))))


def f_k(t, k: float):
    t = np.asarray(t, dtype=float)
    return (t**k - k * t + k - 1.0) / (k * (k - 1.0))


def fk_divergence(q, p, k: float) -> float:
    q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
    if np.any((p <= 0) & (q > 0)):
        return math.inf
    m = p > 0
    return float(np.sum(p[m] * f_k(q[m] / p[m], k)))


# shared row preprocessing ----------------------------------------------------


def _support_stats(P: np.ndarray, V: np.ndarray):
    support = P > 0
    vmin = np.where(support, V, np.inf).min(axis=1)
    vmax = np.where(support, V, -np.inf).max(axis=1)
    # shifted values, zeroed off-support so they cannot overflow anything
    W = np.where(support, V[None, :] - vmin[:, None], 0.0)
    return support, vmin, vmax - vmin, W


def _as_rows(P, V):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    V = np.asarray(V, dtype=float)
    if P.shape[1] != V.shape[0]:
        raise ValueError("value vector length does not match the rows")
    if not np.all(np.isfinite(V)):
        raise ValueError("value vector must be finite")
    return P, V


def _decreasing_root(foc, start: float):
    """Root of a decreasing first-order condition on (0, inf).

    Brackets geometrically from ``start`` and returns a point with foc <= 0.
    Returns the largest finite point tried when foc stays positive, which
    happens only when the radius is below what floating point can resolve.
    """
    hi = start
    while foc(hi) > 0:
        if not math.isfinite(2.0 * hi):
            return hi
        hi *= 2.0
    lo = hi
    while foc(lo) <= 0:
        if lo / 2.0 == 0.0:
            return lo
        hi, lo = lo, lo / 2.0
    root = brentq(foc, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    # settle on the side where foc <= 0: there the measure stays inside the ball
    for _ in range(64):
        if foc(root) <= 0:
            return root
        root = np.nextafter(root, math.inf)
    return hi


# KL --------------------------------------------------------------------------


def _kl_objective(P, W, vmin, delta):
    def f(alpha):
        a = np.maximum(alpha, ALPHA_FLOOR)[:, None]
        # log<p, e^{-W/a}>: log1p/expm1 avoids cancellation when a >> span,
        # the plain sum keeps tiny argmin mass when a is small
        z = np.sum(P * np.exp(-W / a), axis=1)
        zm1 = np.sum(P * np.expm1(-W / a), axis=1)
        log_z = np.where(zm1 > -0.5, np.log1p(np.maximum(zm1, -0.5)), np.log(z))
        val = vmin - a[:, 0] * delta - a[:, 0] * log_z
        return np.where(alpha < ALPHA_FLOOR, vmin, val)

    return f


def kl_dual_rows(P, V, delta: float, return_multiplier: bool = False):
    """KL robust expectation of ``V`` for every row of ``P``."""
    P, V = _as_rows(P, V)
    if delta <= RADIUS_FLOOR:
        out = P @ V
        return (out, np.full(len(out), np.inf)) if return_multiplier else out
    _, vmin, span, W = _support_stats(P, V)
    value = vmin.copy()
    alpha = np.zeros(len(vmin))
    live = span >= SPAN_TOL
    if np.any(live):
        f = _kl_objective(P[live], W[live], vmin[live], delta)
        hi = span[live] / delta
        alpha[live], value[live] = golden_section_max(f, np.zeros_like(hi), hi, tol=ALPHA_TOL)
    return (value, alpha) if return_multiplier else value


def kl_dual_value(p, V, delta: float) -> float:
    return float(kl_dual_rows(p, V, delta)[0])


def _kl_tilt(p, W, alpha):
    w = p * np.exp(-W / alpha)
    return w / w.sum()


def _expm1_neg_plus(c):
    # expm1(-c) + c without cancellation for small |c|
    series = c * c * (0.5 - c * (1.0 / 6.0 - c * (1.0 / 24.0 - c / 120.0)))
    return np.where(np.abs(c) < 1e-2, series, np.expm1(-c) + c)


def _kl_tilt_divergence(p, W, alpha):
    """D(tilt_alpha || p), accurate also when alpha is far above the span."""
    on = p > 0
    ps, w = p[on], W[on]
    if alpha < w.max():
        return kl_divergence(_kl_tilt(p, W, alpha), p)
    # centre at the p-mean: with c = (W - <p, W>) / alpha, log(q/p) = -c - log z and
    # z = 1 + S, where S = <p, expm1(-c) + c> because <p, c> = 0
    c = (w - ps @ w) / alpha
    S = float(ps @ _expm1_neg_plus(c))
    return float(-(ps @ (np.expm1(-c) * c)) / (1.0 + S) - math.log1p(S))


def kl_worst_case(p, V, delta: float) -> DualSolution:
    """Worst-case measure of the KL ball: an exponential tilt of ``p``.

    When the argmin set U of V on supp(p) already satisfies
    delta >= -log p(U), the dual optimum sits at alpha = 0 and the
    conditional law of p on U is the minimizer.
    """
    if not delta > 0:
        raise ValueError("worst-case extraction needs delta > 0")
    P, V = _as_rows(p, V)
    p = P[0]
    _, vmin, span, W = _support_stats(P, V)
    vmin, span, W = float(vmin[0]), float(span[0]), W[0]
    if span < SPAN_TOL:
        return DualSolution(vmin, 0.0, None, 0.0)
    if delta <= RADIUS_FLOOR:
        return DualSolution(float(p @ np.where(p > 0, V, 0.0)), math.inf, p.copy(), 0.0)
    U = (p > 0) & (W <= 0)
    pU = float(p[U].sum())
    if delta >= -math.log(pU):
        q = np.where(U, p, 0.0) / pU
        return DualSolution(vmin, 0.0, q, kl_divergence(q, p))

    def foc(alpha):
        # d/dalpha of the dual equals D(tilt_alpha || p) - delta
        return _kl_tilt_divergence(p, W, alpha) - delta

    alpha = _decreasing_root(foc, span / delta)
    q = _kl_tilt(p, W, alpha)
    value = _kl_objective(p[None, :], W[None, :], np.array([vmin]), delta)(np.array([alpha]))[0]
    return DualSolution(float(value), float(alpha), q, kl_divergence(q, p))


# f_k -------------------------------------------------------------------------


def _fk_objective(P, W, vmin, span, ks, k, delta):
    ck = (1.0 + k * (k - 1.0) * delta) ** (1.0 / k)
    ck_minus_1 = np.expm1(np.log1p(k * (k - 1.0) * delta) / k)

    # beta = alpha - ess-inf V
    def f(beta):
        b = beta[:, None]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            x = np.maximum(b - W, 0.0)
            direct = vmin + beta - ck * np.sum(P * x**ks, axis=1) ** (1.0 / ks)
            # beta well above the span: write the norm as beta * (1 + eps) so the
            # leading beta terms cancel exactly; matters when delta is tiny
            u = np.sum(P * np.expm1(ks * np.log1p(-W / b)), axis=1)
            stable = vmin - ck_minus_1 * beta - ck * beta * np.expm1(np.log1p(u) / ks)
        return np.where(beta > 2.0 * span, stable, direct)

    return f


def _fk_upper_bracket(f, hi, max_doublings: int = 200):
    # dual is concave and eventually decreasing since c_k > 1
    f_hi = f(hi)
    for _ in range(max_doublings):
        nxt = 2.0 * hi
        f_nxt = f(nxt)
        grow = f_nxt > f_hi
        if not np.any(grow):
            return nxt
        hi = np.where(grow, nxt, hi)
        f_hi = np.where(grow, f_nxt, f_hi)
    return 2.0 * hi


def fk_dual_rows(P, V, delta: float, k: float, return_multiplier: bool = False):
    """f_k robust expectation of ``V`` for every row of ``P``."""
    P, V = _as_rows(P, V)
    if delta <= RADIUS_FLOOR:
        out = P @ V
        return (out, np.full(len(out), np.nan)) if return_multiplier else out
    ks = k / (k - 1.0)
    _, vmin, span, W = _support_stats(P, V)
    value = vmin.copy()
    beta = np.zeros(len(vmin))
    live = span >= SPAN_TOL
    if np.any(live):
        f = _fk_objective(P[live], W[live], vmin[live], span[live], ks, k, delta)
        hi = _fk_upper_bracket(f, span[live])
        beta[live], value[live] = golden_section_max(f, np.zeros_like(hi), hi, tol=ALPHA_TOL)
    return (value, vmin + beta) if return_multiplier else value


def fk_dual_value(p, V, delta: float, k: float) -> float:
    return float(fk_dual_rows(p, V, delta, k)[0])


def fk_worst_case(p, V, delta: float, k: float) -> DualSolution:
    """Worst-case measure of the f_k ball.

    Interior multiplier: q proportional to p * (alpha* - V)_+^{k*-1}.
    Boundary alpha* = ess-inf V: q is p conditioned on the argmin set.
    """
    if not delta > 0:
        raise ValueError("worst-case extraction needs delta > 0")
    P, V = _as_rows(p, V)
    p = P[0]
    ks = k / (k - 1.0)
    ck = (1.0 + k * (k - 1.0) * delta) ** (1.0 / k)
    _, vmin, span, W = _support_stats(P, V)
    vmin, span, W = float(vmin[0]), float(span[0]), W[0]
    if span < SPAN_TOL:
        return DualSolution(vmin, vmin, p.copy(), 0.0)
    if delta <= RADIUS_FLOOR:
        return DualSolution(float(p @ np.where(p > 0, V, 0.0)), math.inf, p.copy(), 0.0)
    U = (p > 0) & (W <= 0)
    pU = float(p[U].sum())
    # derivative of the dual at alpha = ess-inf^+ is 1 - c_k * p(U)^{1/k*}
    if ck * pU ** (1.0 / ks) >= 1.0:
        q = np.where(U, p, 0.0) / pU
        return DualSolution(vmin, vmin, q, fk_divergence(q, p, k))

    ck_minus_1 = math.expm1(math.log1p(k * (k - 1.0) * delta) / k)

    def log_ratio(x):
        # log <p, x^{k*-1}> / <p, x^{k*}>^{1/k}; scale free, so x is normalized first
        y = x / x.max()
        return math.log(np.sum(p * y ** (ks - 1.0))) - math.log(np.sum(p * y**ks)) / k

    def from_log_ratio(log_r):
        # 1 - c_k R, written so that c_k - 1 and 1 - R keep their precision
        return -math.expm1(log_r) - ck_minus_1 * math.exp(log_r)

    def foc(beta):
        if beta > 2.0 * span:
            t = np.log1p(-W / beta)
            return from_log_ratio(np.log1p(np.sum(p * np.expm1((ks - 1.0) * t)))
                                  - np.log1p(np.sum(p * np.expm1(ks * t))) / k)
        return from_log_ratio(log_ratio(np.maximum(beta - W, 0.0)))

    beta = _decreasing_root(foc, span)
    if beta <= 2.0 * span:
        # refine as an offset from the breakpoint below the root: there beta - W_j
        # is tiny and would otherwise only be resolved to the spacing of doubles near beta
        base = float(W[(p > 0) & (W <= beta)].max())
        gaps = base - W

        def foc_offset(t):
            return from_log_ratio(log_ratio(np.maximum(gaps + t, 0.0)))

        t = _decreasing_root(foc_offset, max(beta - base, np.finfo(float).tiny))
        x = np.maximum(gaps + t, 0.0)
        beta = base + t
    else:
        x = np.maximum(beta - W, 0.0)
    y = x / x.max()
    q = p * y ** (ks - 1.0)
    q = q / q.sum()
    value = _fk_objective(p[None, :], W[None, :], np.array([vmin]), np.array([span]), ks, k, delta)(
        np.array([beta]))[0]
    return DualSolution(float(value), float(vmin + beta), q, fk_divergence(q, p, k))


# dispatch --------------------------------------------------------------------


def gamma_rows(P, V, uset: UncertaintySet) -> np.ndarray:
    if uset.divergence is Divergence.KL:
        return kl_dual_rows(P, V, uset.radius)
    return fk_dual_rows(P, V, uset.radius, uset.k)


def gamma(p, V, uset: UncertaintySet) -> float:
    return float(gamma_rows(p, V, uset)[0])


def worst_case(p, V, uset: UncertaintySet) -> DualSolution:
    if uset.divergence is Divergence.KL:
        return kl_worst_case(p, V, uset.radius)
    return fk_worst_case(p, V, uset.radius, uset.k)


# primal grid oracle ----------------------------------------------------------


def _coord_div(q, p, uset):
    """Per-coordinate divergence contribution; q may be 0, p > 0."""
    if uset.divergence is Divergence.KL:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(q > 0, q * np.log(q / p), 0.0)
    return p * f_k(q / p, uset.k)


def brute_force_gamma(p, V, uset: UncertaintySet, grid_step: float, chunk: int = 1 << 20) -> float:
    """Primal oracle: minimize <q, V> over the ball by exhaustive search.

    The first (d - 2) support coordinates run over a grid of the given step.
    On each grid point the remaining two coordinates form a segment on which
    the divergence is convex and the objective linear, so the best feasible
    endpoint is located by bisection to machine precision.
    """
    p = np.asarray(p, dtype=float)
    V = np.asarray(V, dtype=float)
    idx = np.flatnonzero(p > 0)
    d = len(idx)
    if d > 4:
        raise SupportTooLarge(f"support size {d} exceeds 4")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    ps, vs = p[idx], V[idx]
    if d == 1:
        return float(vs[0])
    delta = uset.radius

    m = int(round(1.0 / grid_step))
    ticks = np.arange(m + 1) / m
    best = math.inf
    a, b = d - 2, d - 1
    prefixes = itertools.product(range(m + 1), repeat=d - 2) if d > 2 else [()]
    batch = []

    def flush(batch):
        nonlocal best
        X = np.array(batch, dtype=float).reshape(len(batch), d - 2)
        if d > 2:
            X = ticks[X.astype(int)]
        rem = 1.0 - X.sum(axis=1)
        ok = rem >= -1e-15
        X, rem = X[ok], np.maximum(rem[ok], 0.0)
        base = _coord_div(X, ps[: d - 2], uset).sum(axis=1) if d > 2 else np.zeros(len(rem))
        lin = X @ vs[: d - 2] if d > 2 else np.zeros(len(rem))

        def D(t):
            return base + _coord_div(t, ps[a], uset) + _coord_div(rem - t, ps[b], uset)

        t_star = rem * ps[a] / (ps[a] + ps[b])
        feas = D(t_star) <= delta
        if not np.any(feas):
            return
        rem, t_star, lin = rem[feas], t_star[feas], lin[feas]
        base = base[feas]

        def Df(t):
            return base + _coord_div(t, ps[a], uset) + _coord_div(rem - t, ps[b], uset)

        if vs[a] == vs[b]:
            t = t_star
        else:
            # move mass toward the cheaper coordinate until the ball boundary
            end = rem if vs[a] < vs[b] else np.zeros_like(rem)
            good, bad = t_star.copy(), end.copy()
            end_ok = Df(end) <= delta
            good[end_ok] = end[end_ok]
            for _ in range(200):
                mid = 0.5 * (good + bad)
                mok = Df(mid) <= delta
                good = np.where(mok, mid, good)
                bad = np.where(mok, bad, mid)
                if np.all(np.abs(good - bad) <= 1e-17 + 1e-16 * np.abs(good)):
                    break
            t = good
        vals = lin + t * vs[a] + (rem - t) * vs[b]
        best = min(best, float(vals.min()))

    for pre in prefixes:
        batch.append(pre)
        if len(batch) >= chunk:
            flush(batch)
            batch = []
    if batch:
        flush(batch)
    return best
