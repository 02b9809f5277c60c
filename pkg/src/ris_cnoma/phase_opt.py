"""RIS phase optimisation for the two transmission phases.

theta1 is updated by a penalised sequence of SDPs on the lifted variable
``Theta1 = [v; 1][v; 1]^H`` (``v = conj(theta1)``): the rank-one condition
is enforced through ``Tr(Theta) - ||Theta||_2 = 0`` with the spectral norm
linearised at the previous iterate, and the ratio in U2's phase-1 SINR is
bounded through an arithmetic-geometric mean surrogate.

theta2 only enters U2's relay link, so its update maximises the phase-2
gain ``|g_d^* + g_r^H diag(theta2) g|^2`` under the same penalty scheme,
subject to U2's combined SINR target.

Gains are normalised by the noise power (theta1) or by the largest possible
phase-2 gain (theta2) to keep the SDPs well scaled.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import Affine, SdpProblem, Status
from .numerics import project_unit_modulus, spectral_norm_subgradient
from .system import (Design, build_lifts, check_feasible, effective_channel_phase1,
                     lifted_vector, rate_u1, sinr_report)

log = logging.getLogger(__name__)

SOLVER_TOL = {"tol_feas": 1e-8, "tol_gap": 1e-7}


class InfeasibleStart(RuntimeError):
    pass


class PhaseInfeasible(RuntimeError):
    pass


class NumericalFailure(RuntimeError):
    pass


@dataclass
class PbagmOptions:
    c0: float = None        # None: c0_rel * |objective at the input point|
    c0_rel: float = 1e-3
    rho: float = 3.0
    eps: float = 1e-4
    max_iter: int = 30


@dataclass
class PbagmState:
    Theta1_lift: np.ndarray
    x_aux: float
    y: float
    c: float
    rho: float = 3.0
    iter: int = 0
    eps: float = 1e-4


@dataclass
class PhaseResult:
    theta: np.ndarray
    trace: list = field(default_factory=list)
    accepted: bool = True       # False when the safeguard kept the input
    Theta_lift: np.ndarray = None


def lift(theta):
    t = lifted_vector(theta)
    return np.outer(t, t.conj())


def extract_column(Theta):
    """Reflection coefficients from the last column of a lifted matrix."""
    M = Theta.shape[0] - 1
    v = Theta[:M, M] / Theta[M, M] if abs(Theta[M, M]) > 0 else Theta[:M, M]
    return project_unit_modulus(v).conj()


def penalty(Theta, S):
    """``Tr(Theta) - <S, Theta>``: zero at a rank-one Theta whose subgradient is S."""
    return float(np.real(np.trace(Theta)) - np.real(np.sum(S.T * Theta)))


def rank_residual(Theta):
    """``Tr(Theta) - ||Theta||_2`` for a PSD Theta."""
    H = 0.5 * (Theta + Theta.conj().T)
    return float(np.real(np.trace(H)) - np.linalg.eigvalsh(H)[-1])


def _tr(R, Theta):
    return float(np.real(np.sum(R.T * Theta)))


def _unit_diag(prob, name, n):
    for i in range(n):
        E = np.zeros((n, n))
        E[i, i] = 1.0
        prob.add(Affine({name: E}), "==", 1.0, name=f"diag{i}")


def phase2_gain_lift(lifts, Theta2_lift):
    """``Tr(R5 Theta2) + |b5|^2``, the phase-2 channel power gain."""
    return _tr(lifts.R[4], Theta2_lift) + abs(lifts.b[4]) ** 2


def build_p5(lifts, Theta2_lift, beta, p, state):
    """Penalised AGM surrogate for theta1 at the linearisation point in ``state``.

    Variables: lifted ``T`` (M+1) and the auxiliary ``x`` bounding U2's
    phase-1 SINR. Gains are divided by the noise powers.
    """
    if not state.y > 0:
        raise ValueError("AGM parameter y must be positive")
    R1, R2, R3, R4 = (R / s for R, s in zip(lifts.R[:4], (p.sigma1_sq, p.sigma1_sq,
                                                          p.sigma2_sq, p.sigma2_sq)))
    b1, b2 = abs(lifts.b[0]) ** 2 / p.sigma1_sq, abs(lifts.b[1]) ** 2 / p.sigma1_sq
    b3, b4 = abs(lifts.b[2]) ** 2 / p.sigma2_sq, abs(lifts.b[3]) ** 2 / p.sigma2_sq
    n = R1.shape[0]
    t = p.sinr_target
    y = state.y
    S = spectral_norm_subgradient(state.Theta1_lift)
    # maximise (1-beta) T1 - c (Tr T - <S, T>); Tr T is fixed by the diagonal
    obj = Affine({"T": (1 - beta) * R1 + state.c * (S - np.eye(n))}, const=(1 - beta) * b1)
    prob = SdpProblem(blocks={"T": n}, objective=obj, sense="max", scalars=["x"])
    # SIC: (1-beta) T2 >= t ((1-beta) T1 + 1)
    prob.add(Affine({"T": (1 - beta) * (R2 - t * R1)}, const=(1 - beta) * (b2 - t * b1)),
             ">=", t, name="sic")
    if t <= 0:
        # no QoS for U2: the AGM bound would still demand T3^2 <= 2 y^2 T4 at x = 0
        prob.add(Affine({}, {"x": 1.0}), "==", 0.0, name="x_zero")
        _unit_diag(prob, "T", n)
        return prob
    prob.add(Affine({}, {"x": 1.0}), ">=", 0.0, name="x_nonneg")
    # AGM surrogate of x T3 <= T4 - x:  (y x)^2 + (T3/y)^2 <= 2 (T4 - x)
    prob.add_sum_squares([Affine({}, {"x": y}), Affine({"T": R3 / y}, const=b3 / y)],
                         Affine({"T": 2.0 * R4}, {"x": -2.0}, const=2.0 * b4), name="agm")
    # x + beta eta G5 (T1 + T2) sigma1^2 / sigma2^2 >= t
    a = beta * p.eta * phase2_gain_lift(lifts, Theta2_lift) * p.sigma1_sq / p.sigma2_sq
    if a > 0:
        prob.add(Affine({"T": a * (R1 + R2)}, {"x": 1.0}, const=a * (b1 + b2)), ">=", t,
                 name="mrc")
    else:
        prob.add(Affine({}, {"x": 1.0}), ">=", t, name="mrc")
    _unit_diag(prob, "T", n)
    return prob


def _design(beta, w1, w2, theta1, theta2):
    return Design(beta, np.asarray(w1), np.asarray(w2), np.asarray(theta1), np.asarray(theta2))


def optimize_theta1(ch, w1, w2, beta, theta2, p, opts=None, theta1_init=None):
    """PBAGM iterations for theta1; never returns a worse or infeasible point.

    ``theta1_init`` is the current theta1 (the linearisation start and the
    safeguard reference).
    """
    opts = opts or PbagmOptions()
    M = ch.M
    if M == 0:
        return PhaseResult(theta=np.zeros(0, dtype=complex), trace=[])
    theta_in = (np.ones(M, dtype=complex) if theta1_init is None
                else np.asarray(theta1_init, dtype=complex))
    lifts = build_lifts(ch, w1, w2)
    Theta2 = lift(theta2)
    Theta = lift(theta_in)

    s3 = p.sigma2_sq
    T3 = (_tr(lifts.R[2], Theta) + abs(lifts.b[2]) ** 2) / s3
    T4 = (_tr(lifts.R[3], Theta) + abs(lifts.b[3]) ** 2) / s3
    # Smallest auxiliary the relay link allows at the input point.  Any
    # feasible input has phase-1 SINR T4 / (T3 + 1) >= x, so making the AGM
    # bound tight at x keeps the input feasible for the first surrogate.
    sinr_in = T4 / (T3 + 1.0)
    a = (beta * p.eta * phase2_gain_lift(lifts, Theta2) / s3
         * (_tr(lifts.R[0] + lifts.R[1], Theta) + abs(lifts.b[0]) ** 2 + abs(lifts.b[1]) ** 2))
    x = min(max(p.sinr_target - a, 0.0), sinr_in)
    if not x > 0:
        x = sinr_in
    y = math.sqrt(T3 / x) if x > 0 and T3 > 0 else 1.0

    def objective(Th):
        return (1 - beta) * (_tr(lifts.R[0], Th) + abs(lifts.b[0]) ** 2) / p.sigma1_sq

    obj_prev = objective(Theta)
    c = opts.c0 if opts.c0 is not None else opts.c0_rel * max(abs(obj_prev), 1e-12)
    state = PbagmState(Theta1_lift=Theta, x_aux=x, y=y, c=c, rho=opts.rho, eps=opts.eps)

    ref = _design(beta, w1, w2, theta_in, theta2)
    best_theta, best_rate = theta_in, rate_u1(ch, ref, p)
    best_ok = check_feasible(ch, ref, p)["feasible"]
    trace = []
    for n in range(opts.max_iter):
        sol = conic.solve(build_p5(lifts, Theta2, beta, p, state), **SOLVER_TOL)
        if sol.status is not Status.OPTIMAL:
            if n == 0:
                if sol.status is Status.INFEASIBLE:
                    raise InfeasibleStart("first PBAGM subproblem is infeasible")
                raise NumericalFailure("first PBAGM subproblem failed")
            log.debug("PBAGM stopped at iteration %d: %s", n, sol.status)
            break
        Theta = 0.5 * (sol.blocks["T"] + sol.blocks["T"].conj().T)
        x = max(sol.scalars["x"], 0.0)
        obj = objective(Theta)
        delta = rank_residual(Theta)
        tr = float(np.real(np.trace(Theta)))
        T3 = (_tr(lifts.R[2], Theta) + abs(lifts.b[2]) ** 2) / s3

        cand = extract_column(Theta)
        d = _design(beta, w1, w2, cand, theta2)
        r = rate_u1(ch, d, p)
        if r > best_rate or (not best_ok and r >= best_rate - 1e-9):
            if check_feasible(ch, d, p)["feasible"]:
                best_theta, best_rate, best_ok = cand, r, True

        row = {"iter": n + 1, "objective": obj, "delta": delta, "c": state.c,
               "y": state.y, "x": x, "T3": T3, "rate": r,
               "objective_extracted": objective(lift(cand))}
        # y that makes the AGM bound tight at the new point
        if x > 0 and T3 > 0:
            state.y = math.sqrt(T3 / x)
        row["y_next"] = state.y
        trace.append(row)

        converged = (n > 0 and abs(obj - obj_prev) <= opts.eps * max(1.0, abs(obj_prev))
                     and delta <= opts.eps * tr)
        obj_prev = obj
        state.Theta1_lift = Theta
        state.x_aux = x
        state.c *= state.rho
        state.iter = n + 1
        if converged:
            break
    accepted = best_theta is not theta_in
    return PhaseResult(theta=best_theta, trace=trace, accepted=accepted, Theta_lift=Theta)


def build_p6(lifts, Theta_prev, beta, p, sinr2_phase1, rx_power, c):
    """Penalised maximisation of the normalised phase-2 gain for theta2."""
    R5, b5 = lifts.R[4], lifts.b[4]
    n = R5.shape[0]
    # largest possible gain (sum |ghat_m| + |b5|)^2 sets the scale
    scale = (float(np.sum(np.abs(lifts.ghat))) + abs(b5)) ** 2
    scale = 1.0 / scale if scale > 0 else 1.0
    S = spectral_norm_subgradient(Theta_prev)
    obj = Affine({"T": scale * R5 + c * (S - np.eye(n))}, const=scale * abs(b5) ** 2)
    prob = SdpProblem(blocks={"T": n}, objective=obj, sense="max")
    need = p.sinr_target - sinr2_phase1
    k = beta * p.eta * rx_power / p.sigma2_sq
    if need > 0:
        # combined SINR of U2: sinr2_phase1 + k G5 >= t
        prob.add(Affine({"T": scale * R5}, const=scale * abs(b5) ** 2), ">=",
                 scale * need / k, name="mrc")
    _unit_diag(prob, "T", n)
    return prob, scale


def optimize_theta2(ch, w1, w2, beta, theta1, p, opts=None, theta2_init=None):
    """Penalised SDP iterations for theta2; returns the input when beta = 0."""
    opts = opts or PbagmOptions()
    M = ch.M
    if M == 0:
        return PhaseResult(theta=np.zeros(0, dtype=complex), trace=[])
    theta_in = (np.ones(M, dtype=complex) if theta2_init is None
                else np.asarray(theta2_init, dtype=complex))
    if beta == 0:
        return PhaseResult(theta=theta_in, trace=[], accepted=False)
    lifts = build_lifts(ch, w1, w2)
    ref = _design(beta, w1, w2, theta1, theta_in)
    rep = sinr_report(ch, ref, p)
    h1 = effective_channel_phase1(ch, theta1, 1)
    p11, p12 = abs(np.vdot(h1, w1)) ** 2, abs(np.vdot(h1, w2)) ** 2
    if rep["sinr2_phase1"] < p.sinr_target and p11 + p12 == 0:
        raise PhaseInfeasible("U2's SINR target cannot be met by any theta2")
    Theta = lift(theta_in)
    gain_in = phase2_gain_lift(lifts, Theta)
    c = None
    best_theta, best_sinr = theta_in, rep["sinr2_combined"]
    best_ok = check_feasible(ch, ref, p)["feasible"]
    obj_prev = None
    trace = []
    for n in range(opts.max_iter):
        prob, scale = build_p6(lifts, Theta, beta, p, rep["sinr2_phase1"], p11 + p12,
                               c if c is not None else 0.0)
        if c is None:
            c = opts.c0 if opts.c0 is not None else opts.c0_rel * max(scale * gain_in, 1e-12)
            prob, scale = build_p6(lifts, Theta, beta, p, rep["sinr2_phase1"], p11 + p12, c)
        sol = conic.solve(prob, **SOLVER_TOL)
        if sol.status is not Status.OPTIMAL:
            if n == 0:
                if sol.status is Status.INFEASIBLE:
                    raise PhaseInfeasible("U2's SINR target cannot be met by any theta2")
                raise NumericalFailure("first theta2 subproblem failed")
            break
        Theta = 0.5 * (sol.blocks["T"] + sol.blocks["T"].conj().T)
        gain = phase2_gain_lift(lifts, Theta)
        delta = rank_residual(Theta)
        tr = float(np.real(np.trace(Theta)))

        cand = extract_column(Theta)
        d = _design(beta, w1, w2, theta1, cand)
        s = sinr_report(ch, d, p)["sinr2_combined"]
        if s > best_sinr or (not best_ok and s >= best_sinr - 1e-12):
            if check_feasible(ch, d, p)["feasible"]:
                best_theta, best_sinr, best_ok = cand, s, True
        trace.append({"iter": n + 1, "objective": scale * gain, "delta": delta, "c": c,
                      "sinr2_combined": s,
                      "objective_extracted": scale * phase2_gain_lift(lifts, lift(cand))})
        obj = scale * gain
        converged = (obj_prev is not None
                     and abs(obj - obj_prev) <= opts.eps * max(1.0, abs(obj_prev))
                     and delta <= opts.eps * tr)
        obj_prev = obj
        c *= opts.rho
        if converged:
            break
    return PhaseResult(theta=best_theta, trace=trace, accepted=best_theta is not theta_in,
                       Theta_lift=Theta)
