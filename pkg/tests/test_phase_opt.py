import math

import numpy as np
import pytest

from ris_cnoma import conic
from ris_cnoma.bf_ps import AllBetaInfeasible, solve_bf_ps
from ris_cnoma.conic import Affine, SdpProblem, Status
from ris_cnoma.numerics import spectral_norm_subgradient
from ris_cnoma.phase_opt import (InfeasibleStart, PbagmOptions, PbagmState, build_p5,
                                 extract_column, lift, optimize_theta1, optimize_theta2,
                                 penalty, rank_residual)
from ris_cnoma.system import (Design, SystemParams, build_lifts, check_feasible,
                              effective_channel_phase1, phase2_gain, rate_u1, sinr_report)

from conftest import default_instance, random_channels, unit_phases
from oracles import phase_grid


def start_point(seed, N=4, M=8, gamma2=0.5, power_dbm=30.0):
    ch, p = default_instance(seed, N=N, M=M, gamma2=gamma2, power_dbm=power_dbm)
    rng = np.random.default_rng(seed)
    th1, th2 = unit_phases(rng, M), unit_phases(rng, M)
    bf = solve_bf_ps(ch, th1, th2, p)
    return ch, p, bf, th1, th2


def test_empty_ris():
    ch, p = default_instance(0, N=2, M=0)
    r = optimize_theta1(ch, np.ones(2), np.ones(2), 0.0, np.zeros(0), p)
    assert r.theta.shape == (0,) and r.trace == []
    r = optimize_theta2(ch, np.ones(2), np.ones(2), 0.3, np.zeros(0), p)
    assert r.theta.shape == (0,) and r.trace == []


def test_penalty_zero_at_rank_one(rng):
    th = unit_phases(rng, 6)
    T = lift(th)
    assert abs(penalty(T, spectral_norm_subgradient(T))) <= 1e-12 * np.trace(T).real
    assert abs(rank_residual(T)) <= 1e-12 * np.trace(T).real
    np.testing.assert_allclose(extract_column(T), th, atol=1e-12)


def test_p5_without_penalty_or_qos(rng):
    ch, p = default_instance(2, N=3, M=5, gamma2=0.0)
    w1 = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    w2 = np.zeros(3, complex)
    L = build_lifts(ch, w1, w2)
    st = PbagmState(Theta1_lift=lift(np.ones(5)), x_aux=0.0, y=1.0, c=0.0)
    sol = conic.solve(build_p5(L, lift(np.ones(5)), 0.0, p, st))
    ref = SdpProblem(blocks={"T": 6}, objective=Affine({"T": L.R[0] / p.sigma1_sq},
                                                      const=abs(L.b[0]) ** 2 / p.sigma1_sq))
    for i in range(6):
        E = np.zeros((6, 6))
        E[i, i] = 1
        ref.add(Affine({"T": E}), "==", 1.0)
    assert sol.status is Status.OPTIMAL
    assert sol.objective == pytest.approx(conic.solve(ref).objective, rel=1e-6)


def test_p5_coefficients_scalar_instance():
    """M = 1, N = 1: every P5 row against the expanded |theta a + b|^2 terms."""
    rng = np.random.default_rng(5)
    ch = random_channels(rng, 1, 1, scale=1e-3)
    p = SystemParams(N=1, M=1, P_s=1.0)
    w1, w2 = np.array([0.3 + 0.1j]), np.array([0.8 - 0.2j])
    L = build_lifts(ch, w1, w2)
    th2 = unit_phases(rng, 1)
    beta, y, x = 0.2, 1.7, 0.4
    st = PbagmState(Theta1_lift=lift(np.ones(1)), x_aux=x, y=y, c=0.0)
    prob = build_p5(L, lift(th2), beta, p, st)
    th = unit_phases(rng, 1)
    X, s = {"T": lift(th)}, {"x": x}

    def gain(h_r, h_d, w):
        a = (h_r.conj() * ch.G[:, 0])[0] * w[0]
        b = np.conj(h_d[0]) * w[0]
        return abs(th[0] * a + b) ** 2    # |a|^2 + |b|^2 + 2 Re(theta a b^*)
    T1, T2 = gain(ch.h_r1, ch.h_d1, w1), gain(ch.h_r1, ch.h_d1, w2)
    T3, T4 = gain(ch.h_r2, ch.h_d2, w1), gain(ch.h_r2, ch.h_d2, w2)
    s1, s2, t = p.sigma1_sq, p.sigma2_sq, p.sinr_target
    G5 = abs(phase2_gain(ch, th2)) ** 2
    rows = {c.name: c for c in prob.constraints}
    assert rows["sic"].expr.evaluate(X, s) == pytest.approx((1 - beta) * (T2 - t * T1) / s1)
    mrc = x + beta * p.eta * G5 * (T1 + T2) / s2
    assert rows["mrc"].expr.evaluate(X, s) == pytest.approx(mrc)
    agm = prob.socs[0]
    vals = [e.evaluate(X, s) for e in agm.terms]
    assert vals == pytest.approx([y * x, T3 / s2 / y])
    assert agm.bound.evaluate(X, s) == pytest.approx(2 * (T4 / s2 - x))
    assert prob.objective.evaluate(X, s) == pytest.approx((1 - beta) * T1 / s1)


def test_agm_surrogate_is_safe():
    """Points feasible for the surrogate satisfy x (T3 + 1) <= T4."""
    rng = np.random.default_rng(9)
    for _ in range(100):
        T3, T4 = rng.uniform(0, 10, 2)
        y = math.exp(rng.uniform(-3, 3))
        x = rng.uniform(0, 5)
        if (y * x) ** 2 + (T3 / y) ** 2 <= 2 * (T4 - x):
            assert x * (T3 + 1) <= T4 + 1e-12
        else:
            # shrink x until the surrogate holds, if possible
            xs = np.linspace(0, x, 200)
            ok = (y * xs) ** 2 + (T3 / y) ** 2 <= 2 * (T4 - xs)
            assert np.all(xs[ok] * (T3 + 1) <= T4 + 1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_pbagm_trace_invariants(seed):
    ch, p, bf, th1, th2 = start_point(seed)
    r = optimize_theta1(ch, bf.w1, bf.w2, bf.beta, th2, p, theta1_init=th1)
    assert r.trace
    for row in r.trace:
        x, T3, y = row["x"], row["T3"], row["y_next"]
        if x > 0:
            lhs = (y * x) ** 2 + (T3 / y) ** 2
            assert abs(lhs - 2 * x * T3) <= 1e-8 * 2 * x * T3
    d0 = Design(bf.beta, bf.w1, bf.w2, th1, th2)
    d1 = Design(bf.beta, bf.w1, bf.w2, r.theta, th2)
    assert rate_u1(ch, d1, p) >= rate_u1(ch, d0, p) - 1e-12
    assert check_feasible(ch, d1, p)["feasible"]
    np.testing.assert_allclose(np.abs(r.theta), 1.0, atol=1e-12)
    # the penalty weight grows geometrically
    cs = [row["c"] for row in r.trace]
    np.testing.assert_allclose(np.diff(np.log(cs)), np.log(3.0))


def test_penalty_monotonicity_rate():
    """delta is non-increasing in most runs (heuristic property)."""
    mono = 0
    n = 60
    for seed in range(n):
        ch, p, bf, th1, th2 = start_point(1000 + seed)
        r = optimize_theta1(ch, bf.w1, bf.w2, bf.beta, th2, p, theta1_init=th1)
        deltas = np.array([row["delta"] for row in r.trace])
        tr = ch.M + 1
        mono += bool(np.all(np.diff(deltas) <= 1e-6 * tr))
    assert mono / n >= 0.95


def test_extraction_consistency():
    for seed in range(6):
        ch, p, bf, th1, th2 = start_point(60 + seed)
        r = optimize_theta1(ch, bf.w1, bf.w2, bf.beta, th2, p, theta1_init=th1)
        for row in r.trace:
            if row["delta"] <= 1e-6 * (ch.M + 1):
                assert row["objective_extracted"] == pytest.approx(row["objective"], rel=0.01)


def test_infeasible_start():
    ch, p = default_instance(1, N=2, M=3)
    w1 = np.ones(2, complex) * 1e-2
    with pytest.raises(InfeasibleStart):
        optimize_theta1(ch, w1, np.zeros(2, complex), 0.0, np.ones(3), p)


def test_theta1_single_element_grid():
    """M = 1, N = 1, no QoS: PBAGM against a 0.5 degree phase grid."""
    ch, p = default_instance(7, N=1, M=1, gamma2=0.0)
    w = np.array([np.sqrt(p.P_s) + 0j])
    z = np.zeros(1, complex)
    r = optimize_theta1(ch, w, z, 0.0, np.ones(1), p, theta1_init=np.ones(1))
    grid = phase_grid(1, 0.5)
    best = max(rate_u1(ch, Design(0.0, w, z, th, np.ones(1)), p) for th in grid)
    got = rate_u1(ch, Design(0.0, w, z, r.theta, np.ones(1)), p)
    assert got >= best * (1 - 1e-3)


def _grid_rate_theta1(ch, p, beta, w1, w2, th2, step=2.0):
    """Best feasible rate over a theta1 phase lattice (vectorised evaluation)."""
    grid = phase_grid(ch.M, step)
    Gt1 = ch.h_r1.conj()[:, None] * ch.G
    Gt2 = ch.h_r2.conj()[:, None] * ch.G

    def pw(Gt, h_d, w):
        return np.abs(grid @ (Gt @ w) + np.vdot(h_d, w)) ** 2
    p11, p12 = pw(Gt1, ch.h_d1, w1), pw(Gt1, ch.h_d1, w2)
    p21, p22 = pw(Gt2, ch.h_d2, w1), pw(Gt2, ch.h_d2, w2)
    g5 = abs(phase2_gain(ch, th2)) ** 2
    t = p.sinr_target
    sic = (1 - beta) * p12 / ((1 - beta) * p11 + p.sigma1_sq)
    mrc = p22 / (p21 + p.sigma2_sq) + beta * p.eta * g5 * (p11 + p12) / p.sigma2_sq
    snr = (1 - beta) * p11 / p.sigma1_sq
    ok = (sic >= t * (1 - 1e-9)) & (mrc >= t * (1 - 1e-9))
    return 0.5 * np.log2(1 + np.max(snr[ok])) if ok.any() else -np.inf


@pytest.mark.parametrize("seed", range(6))
def test_theta1_two_elements_grid(seed):
    ch, p, bf, th1, th2 = start_point(500 + seed, N=2, M=2)
    r = optimize_theta1(ch, bf.w1, bf.w2, bf.beta, th2, p, theta1_init=th1)
    got = rate_u1(ch, Design(bf.beta, bf.w1, bf.w2, r.theta, th2), p)
    ref = _grid_rate_theta1(ch, p, bf.beta, bf.w1, bf.w2, th2)
    assert got >= 0.99 * ref


def test_theta2_beta_zero_returns_input(rng):
    ch, p, bf, th1, th2 = start_point(3)
    r = optimize_theta2(ch, bf.w1, bf.w2, 0.0, th1, p, theta2_init=th2)
    np.testing.assert_array_equal(r.theta, th2)
    assert not r.accepted


def test_theta2_single_element_grid():
    ch, p = default_instance(8, N=1, M=1)
    w1 = np.array([0.2 * np.sqrt(p.P_s) + 0j])
    w2 = np.array([0.9 * np.sqrt(p.P_s) + 0j])
    r = optimize_theta2(ch, w1, w2, 0.3, np.ones(1), p, theta2_init=np.ones(1))
    best = max(abs(phase2_gain(ch, th)) ** 2 for th in phase_grid(1, 0.5))
    assert abs(phase2_gain(ch, r.theta)) ** 2 >= best * (1 - 1e-3)


def test_theta2_safeguard_and_rank_one():
    ch, p = default_instance(12, N=2, M=4)
    rng = np.random.default_rng(1)
    th1, th2 = unit_phases(rng, 4), unit_phases(rng, 4)
    w1 = np.array([0.3, 0.1j]) * np.sqrt(p.P_s)
    w2 = np.array([0.8, -0.2]) * np.sqrt(p.P_s)
    d0 = Design(0.4, w1, w2, th1, th2)
    r = optimize_theta2(ch, w1, w2, 0.4, th1, p, theta2_init=th2)
    d1 = Design(0.4, w1, w2, th1, r.theta)
    assert (sinr_report(ch, d1, p)["sinr2_combined"]
            >= sinr_report(ch, d0, p)["sinr2_combined"] - 1e-12)
    last = r.trace[-1]
    if last["delta"] <= 1e-8 * 5:
        assert last["objective_extracted"] == pytest.approx(last["objective"], rel=1e-4)
