import itertools
import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import random_model
from dramdp.amdp import (
    AnchorParams,
    AvgRewardSolution,
    Method,
    anchored_amdp,
    anchored_gamma,
    check_adversarial_power,
    delta_bound,
    ground_truth_gain,
    reduce_to_dmdp,
)
from dramdp.bellman import DiscountedSolveParams, solve_dr_dmdp
from dramdp.duals import UncertaintySet, gamma_rows, kl_divergence, worst_case
from dramdp.ergodicity import model_minorization_time
from dramdp.instances import hard_mdp
from dramdp.model import MdpModel, average_reward, min_support_probability, sample_transitions

KL0 = UncertaintySet.kl(0.0)


def test_anchor_params_validation():
    for xi in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            AnchorParams(0, xi)


def test_kernel_n_consistency():
    m = hard_mdp(0.25)
    emp = sample_transitions(m, 100, seed=0)
    with pytest.raises(ValueError):
        reduce_to_dmdp(emp, m.reward, KL0, n=99)
    with pytest.raises(ValueError):
        reduce_to_dmdp(m.kernel, m.reward, KL0)
    with pytest.raises(ValueError):
        anchored_amdp(m.kernel, m.reward, KL0, n=1)


@pytest.mark.parametrize("uset", [KL0, UncertaintySet.kl(0.3), UncertaintySet.fk(0.3, 2.0)])
def test_constant_reward_gain(uset):
    m = random_model(np.random.default_rng(0), 4, 2)
    r = np.full((4, 2), 0.42)
    red = reduce_to_dmdp(m.kernel, r, uset, n=400, tol=1e-9)
    assert red.gain == pytest.approx(0.42, abs=1e-9)
    anc = anchored_amdp(m.kernel, r, uset, n=400)
    assert anc.gain == pytest.approx(0.42, abs=1e-9)


def test_reduction_hard_mdp_exact_kernel():
    m = hard_mdp(0.25)
    n = 10_000
    sol = reduce_to_dmdp(m.kernel, m.reward, KL0, n=n, tol=1e-8)
    assert abs(sol.gain - 0.5) <= 18 / math.sqrt(n)
    # closed-form discounted value at gamma = 1 - 1/sqrt(n)
    g = 1 - 1 / math.sqrt(n)
    v0 = (1 / (1 - g) + 1 / (1 - g * 0.5)) / 2
    assert sol.gain == pytest.approx(v0 / math.sqrt(n), abs=1e-9)
    np.testing.assert_allclose(sol.bias * math.sqrt(n),
                               solve_dr_dmdp(m.reward, m.kernel, KL0, DiscountedSolveParams(g, 1e-8)).values)


def test_anchored_hard_mdp_exact_kernel():
    m = hard_mdp(0.25)
    sol = anchored_amdp(m.kernel, m.reward, KL0, n=10_000)
    assert abs(sol.gain - 0.5) <= 0.18
    assert 0 <= sol.gain <= 1
    assert sol.bias[0] == 0.0


def test_anchored_gamma_limits():
    p = np.array([0.2, 0.5, 0.3])
    v = np.array([1.0, -2.0, 4.0])
    u = UncertaintySet.kl(0.2)
    assert anchored_gamma(u, p, AnchorParams(2, 1 - 1e-12), v) == pytest.approx(4.0, abs=1e-10)
    assert anchored_gamma(u, p, AnchorParams(1, 0.3), np.full(3, 1.5)) == pytest.approx(1.5, abs=1e-12)


@pytest.mark.parametrize("uset", [UncertaintySet.kl(0.1), UncertaintySet.fk(0.1, 2.0)])
def test_anchored_gamma_matches_explicit_anchored_ball(uset):
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(3))
    v = rng.uniform(-1, 1, 3)
    anchor = AnchorParams(1, 0.2)
    step = 1e-3
    m = int(round(1 / step))
    a, b = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
    keep = a + b <= m
    Q = np.stack([a[keep], b[keep], m - a[keep] - b[keep]], axis=1) / m
    feasible = np.array([uset.divergence_of(q, p) <= uset.radius for q in Q])
    anchored = (1 - anchor.xi) * Q[feasible] + anchor.xi * np.eye(3)[anchor.anchor_state]
    oracle = (anchored @ v).min()
    got = anchored_gamma(uset, p, anchor, v)
    assert got <= oracle + 1e-12
    assert oracle - got <= 3 * np.abs(v).max() * step


def test_anchored_bellman_residual():
    m = random_model(np.random.default_rng(2), 4, 3)
    u = UncertaintySet.kl(0.05)
    tol = 1e-10
    sol = anchored_amdp(m.kernel, m.reward, u, n=900, tol=tol)
    xi = 1 / 30
    S, A = m.reward.shape
    g = gamma_rows(m.kernel.reshape(S * A, S), sol.bias, u).reshape(S, A)
    T = (m.reward + (1 - xi) * g + xi * sol.bias[0]).max(axis=1)
    assert np.max(np.abs(T - sol.gain - sol.bias)) <= 10 * tol


@pytest.mark.parametrize("uset", [UncertaintySet.kl(0.02), UncertaintySet.fk(0.02, 2.0)])
def test_cross_algorithm_equivalence(uset):
    rng = np.random.default_rng(3)
    m = random_model(rng, 3, 2)
    emp = sample_transitions(m, 400, seed=5)
    anc = anchored_amdp(emp, m.reward, uset, tol=1e-10)
    red = reduce_to_dmdp(emp, m.reward, uset, tol=1e-10)
    assert abs(anc.gain - red.gain) <= 1e-8


def test_solution_json():
    m = hard_mdp(0.25)
    sol = anchored_amdp(m.kernel, m.reward, UncertaintySet.kl(0.01), n=100)
    d = json.loads(json.dumps(sol.to_dict()))
    assert set(d) == {"gain", "bias", "policy", "method", "n", "iterations"}
    assert d["method"] == "anchored"
    assert isinstance(sol, AvgRewardSolution) and sol.method is Method.ANCHORED


def test_ground_truth_nonrobust_hard():
    precision = 1e-6
    for p in (0.1, 0.25):
        g = ground_truth_gain(hard_mdp(p), KL0, precision)
        assert abs(g - 0.5) <= 18 * (1 / (2 * p)) * precision


def test_ground_truth_constant_reward():
    m = random_model(np.random.default_rng(4), 3, 2)
    const = MdpModel(reward=np.full((3, 2), 0.8), kernel=m.kernel)
    assert ground_truth_gain(const, UncertaintySet.fk(0.1, 2.0)) == pytest.approx(0.8, abs=1e-12)


def _kl_row_extreme(p_leave, delta, upward):
    # largest (or smallest) x with KL((1 - x, x) || (1 - p_leave, p_leave)) <= delta
    f = lambda x: kl_divergence([1 - x, x], [1 - p_leave, p_leave]) - delta
    return brentq(f, p_leave, 1.0 - 1e-15) if upward else brentq(f, 1e-15, p_leave)


def test_ground_truth_kl_hard_mdp_worst_kernel_search():
    p, delta = 0.25, 0.01
    g = ground_truth_gain(hard_mdp(p), UncertaintySet.kl(delta), precision=1e-6)
    # every policy sees the same kernel, so the adversary picks one row per state:
    # row 0 = (1 - x0, x0), row 1 = (x1, 1 - x1) and the gain is x1 / (x0 + x1)
    x0_max = _kl_row_extreme(p, delta, upward=True)
    x1_min = _kl_row_extreme(p, delta, upward=False)
    closed = x1_min / (x0_max + x1_min)
    grid = np.linspace(0.0, 1.0, 4001)
    row_div = np.array([kl_divergence([1 - x, x], [1 - p, p]) for x in grid])
    ok = grid[row_div <= delta]
    X0, X1 = np.meshgrid(ok, ok, indexing="ij")
    brute = (X1 / (X0 + X1)).min()
    assert brute == pytest.approx(closed, abs=1e-3)
    assert g == pytest.approx(closed, abs=18 * 4 * 1e-6)
    assert g < 0.5


def test_ground_truth_monotone_in_delta_and_below_nominal():
    m = random_model(np.random.default_rng(5), 3, 2)
    prev = None
    for delta in (0.0, 0.005, 0.02, 0.05):
        g = ground_truth_gain(m, UncertaintySet.kl(delta), precision=1e-5)
        if prev is not None:
            assert g <= prev + 1e-7
        prev = g
    u = UncertaintySet.kl(0.02)
    sol = anchored_amdp(m.kernel, m.reward, u, n=10**10)
    nominal = average_reward(m, sol.policy)
    assert ground_truth_gain(m, u, precision=1e-5) <= nominal + 1e-4


def test_gain_nearly_constant_across_anchor():
    m = random_model(np.random.default_rng(6), 4, 2)
    p_min = min_support_probability(m)
    mm = model_minorization_time(m)
    u = UncertaintySet.kl(delta_bound(p_min, mm.m_vee, KL0) / 2)
    xi, tol = 1e-5, 1e-11
    sols = [anchored_amdp(m.kernel, m.reward, u, n=round(1 / xi**2), anchor_state=s, tol=tol) for s in range(4)]
    gains = [s.gain for s in sols]
    # the anchored ball itself depends on s0, which moves the gain by at most xi * span(v)
    slack = 2 * tol + xi * max(np.ptp(s.bias) for s in sols)
    assert max(gains) - min(gains) <= slack


def test_worst_case_kernels_stay_ergodic():
    rng = np.random.default_rng(7)
    for m in [hard_mdp(0.25)] + [random_model(rng, 3, 2) for _ in range(5)]:
        mm = model_minorization_time(m)
        for uset_kind in ("kl", "fk"):
            bound = delta_bound(min_support_probability(m), mm.m_vee,
                                UncertaintySet.kl(0.0) if uset_kind == "kl" else UncertaintySet.fk(0.0, 2.0))
            u = UncertaintySet.kl(bound) if uset_kind == "kl" else UncertaintySet.fk(bound, 2.0)
            sol = anchored_amdp(m.kernel, m.reward, u, n=10**8, tol=1e-10)
            S, A = m.reward.shape
            Q = np.empty_like(m.kernel)
            for s, a in itertools.product(range(S), range(A)):
                wc = worst_case(m.kernel[s, a], sol.bias, u).worst_case
                Q[s, a] = m.kernel[s, a] if wc is None else wc
            worst = model_minorization_time(MdpModel(reward=m.reward, kernel=Q))
            assert worst.t_minorize <= 2 * mm.t_minorize + 1e-9


def test_adversarial_power_report():
    rep = check_adversarial_power(hard_mdp(0.25), UncertaintySet.kl(0.01))
    assert (rep.m_vee, rep.p_min) == (1, 0.25)
    assert rep.delta_max == pytest.approx(0.03125)
    assert rep.satisfied
    assert not check_adversarial_power(hard_mdp(0.25), UncertaintySet.kl(0.05)).satisfied
    assert delta_bound(0.25, 1, UncertaintySet.fk(0.0, 2.0)) == pytest.approx(0.25 / 8)
    assert delta_bound(0.25, 2, UncertaintySet.fk(0.0, 3.0)) == pytest.approx(0.25 / (12 * 4))
    m = random_model(np.random.default_rng(8), 3, 2)
    assert check_adversarial_power(m, UncertaintySet.kl(0.0)).satisfied
    assert check_adversarial_power(m, UncertaintySet.fk(0.0, 5.0)).satisfied
