"""Joint transmit beamforming and power splitting for fixed RIS phases.

For a fixed splitting ratio beta the lifted problem in ``W_i = w_i w_i^H``
is convex except for the MRC constraint of U2, whose phase-1 term is a
ratio of two traces.  That term is replaced by an auxiliary ``x`` with

    x * (Tr(A2 W1) + 1) <= Tr(A2 W2)

and the product is bounded from above by the arithmetic-geometric mean
surrogate ``((y x)^2 + (D / y)^2) / 2``, refined by updating ``y``.  Every
surrogate is an inner approximation, so each iterate is feasible for the
original constraint.  beta itself is searched on a grid and refined by a
golden-section step.

Internally all beamformer matrices are normalised by the power budget and
all gains by the noise power, so the SDPs are well scaled at any SNR.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import Affine, SdpProblem, Status
from .numerics import max_eigpair, rank_gap
from .system import (Design, check_feasible, effective_channel_phase1, phase2_gain,
                     rate_from_sinr)

log = logging.getLogger(__name__)

BETA_GRID = 41
GOLDEN_WIDTH = 1e-3
N_RANDOMIZATION = 200
RANDOMIZATION_SEED = 0x5EED_B5
RANK_TOL = 1e-4
SCA_ITERS = 6
SCA_RTOL = 1e-6
# relative duality gap requested from the conic layer; 1e-8 is at the limit
# of double precision for the ill-conditioned end game of these SDPs
SOLVER_TOL = {"tol_feas": 1e-8, "tol_gap": 1e-7}


class AllBetaInfeasible(RuntimeError):
    pass


class ExtractionFailed(RuntimeError):
    pass


@dataclass
class BfPsResult:
    W1: np.ndarray
    W2: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    beta: float
    objective: float            # rate of U1 in bit/s/Hz
    snr: float                  # SDR value of (1 - beta) |h1^H w1|^2 / sigma1^2
    rank_gap: tuple
    extraction: str = "eigen"   # eigen | randomization
    info: dict = field(default_factory=dict)


@dataclass
class _Context:
    """Fixed-phase quantities shared by all beta evaluations."""
    h1: np.ndarray
    h2: np.ndarray
    A1: np.ndarray          # P_s h1 h1^H / sigma1^2
    A2: np.ndarray          # P_s h2 h2^H / sigma2^2
    relay_gain: float       # eta |g_eff|^2 sigma1^2 / sigma2^2, times beta gives a
    t: float
    n_solves: int = 0


def make_context(ch, theta1, theta2, p):
    h1 = effective_channel_phase1(ch, theta1, 1)
    h2 = effective_channel_phase1(ch, theta1, 2)
    A1 = p.P_s * np.outer(h1, h1.conj()) / p.sigma1_sq
    A2 = p.P_s * np.outer(h2, h2.conj()) / p.sigma2_sq
    g2 = abs(phase2_gain(ch, theta2)) ** 2
    return _Context(h1=h1, h2=h2, A1=A1, A2=A2,
                    relay_gain=p.eta * g2 * p.sigma1_sq / p.sigma2_sq, t=p.sinr_target)


def _base_problem(ctx, beta, N):
    """Objective, power budget and SIC constraint; shared by every variant."""
    A1 = ctx.A1
    prob = SdpProblem(blocks={"W1": N, "W2": N},
                      objective=Affine({"W1": (1 - beta) * A1}), sense="max")
    I = np.eye(N)
    prob.add(Affine({"W1": I, "W2": I}), "<=", 1.0, name="power")
    # (1-beta) Tr(A1 W2) >= t ((1-beta) Tr(A1 W1) + 1)
    prob.add(Affine({"W1": -ctx.t * (1 - beta) * A1, "W2": (1 - beta) * A1}), ">=", ctx.t,
             name="sic")
    return prob


def _restricted(ctx, beta, N, x0):
    """Linear inner approximation with the auxiliary fixed at ``x0``."""
    prob = _base_problem(ctx, beta, N)
    a = beta * ctx.relay_gain
    prob.add(Affine({"W2": ctx.A2, "W1": -x0 * ctx.A2}), ">=", x0, name="mrc_phase1")
    if ctx.t - x0 > 0:
        if a <= 0:
            return None
        prob.add(Affine({"W1": a * ctx.A1, "W2": a * ctx.A1}), ">=", ctx.t - x0,
                 name="mrc_total")
    return prob


def _agm(ctx, beta, N, y):
    """Convex surrogate with the AGM bound at parameter ``y``."""
    prob = _base_problem(ctx, beta, N)
    prob.scalars = ["x"]
    a = beta * ctx.relay_gain
    prob.add(Affine({}, {"x": 1.0}), ">=", 0.0, name="x_nonneg")
    prob.add(Affine({"W1": a * ctx.A1, "W2": a * ctx.A1}, {"x": 1.0}), ">=", ctx.t,
             name="mrc_total")
    # x D <= T relaxed to (y x)^2 + (D/y)^2 <= 2 T
    prob.add_sum_squares([Affine({}, {"x": y}), Affine({"W1": ctx.A2 / y}, const=1.0 / y)],
                         Affine({"W2": 2.0 * ctx.A2}), name="mrc_agm")
    return prob


def _trace(A, W):
    return float(np.real(np.sum(A.T * W)))


def _solve(ctx, prob):
    ctx.n_solves += 1
    return conic.solve(prob, **SOLVER_TOL)


def solve_scaled(ctx, beta, N):
    """Best SCA value for fixed beta in normalised units, or ``None`` if infeasible.

    Returns the :class:`~ris_cnoma.conic.SdpSolution` of the last accepted
    iterate (blocks ``W1``, ``W2`` with unit power budget).
    """
    t = ctx.t
    a = beta * ctx.relay_gain
    # a feasible starting point: phase 1 alone (x = t), then increasingly
    # relay-assisted restrictions
    starts = [t] + ([0.75 * t, 0.5 * t, 0.25 * t, 0.0] if a > 0 and t > 0 else [])
    sol = x = None
    for x0 in starts:
        prob = _restricted(ctx, beta, N, x0)
        if prob is None:
            continue
        s = _solve(ctx, prob)
        if s.status is Status.OPTIMAL:
            sol, x = s, x0
            break
    if sol is None:
        return None
    if a <= 0 or t <= 0:
        return sol      # the surrogate cannot improve on x = t
    best = sol
    for _ in range(SCA_ITERS):
        D = _trace(ctx.A2, best.blocks["W1"]) + 1.0
        if x <= 1e-9 * t:
            break
        y = math.sqrt(D / x)
        s = _solve(ctx, _agm(ctx, beta, N, y))
        if s.status is not Status.OPTIMAL or s.objective < best.objective:
            break
        gain = s.objective - best.objective
        best, x = s, max(s.scalars["x"], 0.0)
        if gain <= SCA_RTOL * max(1.0, abs(best.objective)):
            break
    return best


def solve_p2_fixed_beta(ch, theta1, theta2, p, beta, ctx=None):
    """SDR of the beamforming problem for fixed ``beta``.

    The returned solution has blocks ``W1``, ``W2`` in watts and objective
    ``(1 - beta) Tr(H1 W1) / sigma1^2``.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    ctx = ctx or make_context(ch, theta1, theta2, p)
    N = ch.N
    if p.P_s == 0:
        if ctx.t > 0:
            return conic.SdpSolution(Status.INFEASIBLE, {}, {}, -np.inf, {})
        Z = np.zeros((N, N), dtype=complex)
        return conic.SdpSolution(Status.OPTIMAL, {"W1": Z, "W2": Z.copy()}, {}, 0.0, {})
    s = solve_scaled(ctx, beta, N)
    if s is None:
        return conic.SdpSolution(Status.INFEASIBLE, {}, {}, -np.inf, {})
    return conic.SdpSolution(Status.OPTIMAL,
                             {k: p.P_s * v for k, v in s.blocks.items() if k in ("W1", "W2")},
                             dict(s.scalars), s.objective, s.residuals, s.iterations)


def _relaxed_bound(ctx, N):
    """Upper bound on ``score(beta) / (1 - beta)`` valid for every beta.

    The SIC constraint only tightens with beta, and the relay SNR of U2 is at
    most ``eta |g_eff|^2 sigma1^2/sigma2^2 lambda_max(A1)`` for a unit budget,
    so phase 1 must deliver at least ``t - r_max`` in every feasible design.
    Returns ``-inf`` if even this relaxation is infeasible.
    """
    t = ctx.t
    r_max = ctx.relay_gain * float(np.linalg.eigvalsh(ctx.A1)[-1])
    x0 = max(t - r_max, 0.0)
    prob = _base_problem(ctx, 0.0, N)
    if x0 > 0:
        prob.add(Affine({"W2": ctx.A2, "W1": -x0 * ctx.A2}), ">=", x0, name="mrc_phase1")
    s = _solve(ctx, prob)
    if s.status is Status.INFEASIBLE:
        return -np.inf
    if s.status is not Status.OPTIMAL:
        return np.inf       # no usable bound
    return s.objective * (1.0 + 1e-7)


def search_beta(score, n_grid=BETA_GRID, width=GOLDEN_WIDTH, upper=None):
    """Maximise ``score`` over [0, 1): uniform grid then golden-section refinement.

    ``score`` returns ``-inf`` for infeasible points.  ``upper(b)``, if given,
    is an upper bound on ``score(b)``; points whose bound cannot beat the
    best value found so far are skipped.  Returns the best evaluated beta
    (ties toward smaller beta), the evaluations and the set of skipped points.
    """
    cache, skipped = {}, set()
    best = [-np.inf]

    def f(b):
        b = float(b)
        if b not in cache:
            if upper is not None and upper(b) < best[0]:
                skipped.add(b)
                cache[b] = -np.inf
            else:
                cache[b] = score(b)
                best[0] = max(best[0], cache[b])
        return cache[b]

    grid = np.arange(n_grid) / n_grid
    vals = [f(b) for b in grid]
    k = int(np.argmax(vals))    # first maximiser, i.e. the smallest beta
    if np.isfinite(vals[k]):
        step = 1.0 / n_grid
        lo, hi = max(0.0, grid[k] - step), min(grid[k] + step, 1.0 - 1e-9)
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        c, d = hi - invphi * (hi - lo), lo + invphi * (hi - lo)
        fc, fd = f(c), f(d)
        while hi - lo > width:
            if fc >= fd:
                hi, d, fd = d, c, fc
                c = hi - invphi * (hi - lo)
                fc = f(c)
            else:
                lo, c, fc = c, d, fd
                d = lo + invphi * (hi - lo)
                fd = f(d)
    items = [kv for kv in sorted(cache.items()) if kv[0] not in skipped] or sorted(cache.items())
    top = max(items, key=lambda kv: (kv[1], -kv[0]))
    return top[0], cache, skipped


def _rank_one(W):
    lam, u = max_eigpair(W)
    return math.sqrt(max(lam, 0.0)) * u


def _fit_power(w1, w2, P_s):
    tot = float(np.vdot(w1, w1).real + np.vdot(w2, w2).real)
    if tot > P_s and tot > 0:
        s = math.sqrt(P_s / tot)
        return w1 * s, w2 * s
    return w1, w2


def extract(ch, theta1, theta2, p, beta, W1, W2, seed=RANDOMIZATION_SEED,
            n_candidates=N_RANDOMIZATION):
    """Rank-one beamformers from an SDR solution; raises :class:`ExtractionFailed`."""
    def design(w1, w2):
        return Design(beta, w1, w2, theta1, theta2)

    gaps = (rank_gap(W1), rank_gap(W2))
    if max(gaps) <= RANK_TOL:
        w1, w2 = _fit_power(_rank_one(W1), _rank_one(W2), p.P_s)
        d = design(w1, w2)
        if check_feasible(ch, d, p)["feasible"]:
            return d, "eigen"

    # Gaussian randomisation: w_i = W_i^(1/2) r_i with r_i ~ CN(0, I)
    rng = np.random.default_rng(seed)
    roots = []
    for W in (W1, W2):
        lam, U = np.linalg.eigh(0.5 * (W + W.conj().T))
        roots.append(U * np.sqrt(np.clip(lam, 0.0, None)))
    N = W1.shape[0]
    best, best_rate = None, -np.inf
    for _ in range(n_candidates):
        r = (rng.standard_normal((2, N)) + 1j * rng.standard_normal((2, N))) / math.sqrt(2.0)
        w1, w2 = _fit_power(roots[0] @ r[0], roots[1] @ r[1], p.P_s)
        d = design(w1, w2)
        if not check_feasible(ch, d, p)["feasible"]:
            continue
        h1 = effective_channel_phase1(ch, theta1, 1)
        rate = (1 - beta) * abs(np.vdot(h1, w1)) ** 2
        if rate > best_rate:
            best, best_rate = d, rate
    if best is None:
        raise ExtractionFailed("no randomised candidate satisfies every constraint")
    return best, "randomization"


def solve_bf_ps(ch, theta1, theta2, p, n_grid=BETA_GRID):
    """Optimise (w1, w2, beta) for fixed phases; the result always passes
    :func:`~ris_cnoma.system.check_feasible`."""
    theta1 = np.asarray(theta1, dtype=complex)
    theta2 = np.asarray(theta2, dtype=complex)
    ctx = make_context(ch, theta1, theta2, p)
    N = ch.N
    sols = {}

    def score(beta):
        s = solve_p2_fixed_beta(ch, theta1, theta2, p, beta, ctx=ctx)
        sols[beta] = s
        return s.objective if s.status is Status.OPTIMAL else -np.inf

    U = _relaxed_bound(ctx, N) if p.P_s > 0 else np.inf
    if U == -np.inf:
        raise AllBetaInfeasible("no splitting ratio admits a feasible beamforming design")
    beta, cache, skipped = search_beta(score, n_grid=n_grid, upper=lambda b: (1.0 - b) * U)
    if not np.isfinite(cache[beta]):
        raise AllBetaInfeasible("no splitting ratio admits a feasible beamforming design")
    # try the best beta first, then the remaining feasible ones in order of value
    order = sorted((b for b, v in cache.items() if np.isfinite(v) and b not in skipped),
                   key=lambda b: (-cache[b], b))
    last_err = None
    for b in order[:5]:
        s = sols[b]
        W1, W2 = s.blocks["W1"], s.blocks["W2"]
        try:
            d, how = extract(ch, theta1, theta2, p, b, W1, W2)
        except ExtractionFailed as err:
            last_err = err
            continue
        rep = check_feasible(ch, d, p)
        snr1 = (1 - b) * abs(np.vdot(ctx.h1, d.w1)) ** 2 / p.sigma1_sq
        return BfPsResult(W1=W1, W2=W2, w1=d.w1, w2=d.w2, beta=b,
                          objective=float(rate_from_sinr(snr1)), snr=float(s.objective),
                          rank_gap=(rank_gap(W1), rank_gap(W2)), extraction=how,
                          info={"n_solves": ctx.n_solves, "n_beta": len(cache) - len(skipped),
                                "n_skipped": len(skipped),
                                "margins": rep["margins"]})
    raise last_err
