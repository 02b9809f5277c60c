"""Alternating optimisation over (w1, w2, beta), theta1 and theta2, plus baselines.

Every block update is safeguarded (a worse or infeasible update is
rejected), so the rate of U1 never decreases across outer iterations.
"""
import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .bf_ps import AllBetaInfeasible, ExtractionFailed, solve_bf_ps
from .phase_opt import (InfeasibleStart, NumericalFailure, PbagmOptions, PhaseInfeasible,
                        optimize_theta1, optimize_theta2)
from .system import Design, check_feasible, rate_u1

log = logging.getLogger(__name__)

PHASE_STREAM = 0x7E7A     # keeps phase draws independent of the channel draws


class AoStatus(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"


@dataclass
class AoOptions:
    max_outer: int = 20
    tol: float = 1e-4
    init_mode: str = "random"       # random | zero
    seed: int = 0
    pbagm: PbagmOptions = field(default_factory=PbagmOptions)


@dataclass
class AoResult:
    design: Design
    rate: float
    feasible: bool
    objective_trace: list
    iterations: int
    status: AoStatus
    info: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "status": self.status.value,
            "feasible": bool(self.feasible),
            "rate": float(self.rate) if self.feasible else None,
            "iterations": int(self.iterations),
            "objective_trace": [float(r) for r in self.objective_trace],
            "design": self.design.to_dict() if self.design is not None else None,
            "info": self.info,
        }


def random_phases(M, seed, attempt=0):
    """Two seeded vectors of uniform unit-modulus phases (theta1, theta2)."""
    rng = np.random.default_rng([int(seed), PHASE_STREAM, int(attempt)])
    phi = rng.uniform(0.0, 2.0 * np.pi, size=(2, M))
    return np.exp(1j * phi[0]), np.exp(1j * phi[1])


def initial_phases(M, opts, attempt=0):
    if opts.init_mode == "zero" and attempt == 0:
        return np.ones(M, dtype=complex), np.ones(M, dtype=complex)
    if opts.init_mode not in ("random", "zero"):
        raise ValueError(f"unknown init_mode {opts.init_mode!r}")
    return random_phases(M, opts.seed, attempt)


def _infeasible(M, N, info):
    z = np.zeros(N, dtype=complex)
    d = Design(0.0, z, z.copy(), np.ones(M, dtype=complex), np.ones(M, dtype=complex))
    return AoResult(design=d, rate=0.0, feasible=False, objective_trace=[], iterations=0,
                    status=AoStatus.INFEASIBLE, info=info)


def _from_bf(ch, p, theta1, theta2, info):
    """Single-shot scheme: beamforming and splitting for fixed phases."""
    try:
        r = solve_bf_ps(ch, theta1, theta2, p)
    except (AllBetaInfeasible, ExtractionFailed) as err:
        info["reason"] = type(err).__name__
        return _infeasible(ch.M, ch.N, info)
    d = Design(r.beta, r.w1, r.w2, np.asarray(theta1), np.asarray(theta2))
    rate = rate_u1(ch, d, p)
    ok = check_feasible(ch, d, p)["feasible"]
    info.update({"bf_solves": r.info.get("n_solves", 0), "extraction": r.extraction})
    return AoResult(design=d, rate=rate, feasible=ok, objective_trace=[rate], iterations=1,
                    status=AoStatus.CONVERGED if ok else AoStatus.INFEASIBLE, info=info)


def solve_random_phase(ch, p, seed=0):
    """Baseline: random phases drawn once, then beamforming and splitting only."""
    theta1, theta2 = random_phases(ch.M, seed)
    return _from_bf(ch, p, theta1, theta2, {"scheme": "random_phase", "seed": int(seed)})


def solve_without_ris(ch, p, seed=0):
    """Baseline: every RIS path removed (M = 0)."""
    empty = np.zeros(0, dtype=complex)
    return _from_bf(ch.without_ris(), p, empty, empty,
                    {"scheme": "without_ris", "seed": int(seed)})


def solve_ao(ch, p, opts=None):
    """Alternate P2 (beamforming + splitting), theta1 and theta2 until the rate settles."""
    opts = opts or AoOptions()
    M = ch.M
    info = {"scheme": "proposed", "seed": int(opts.seed), "init_mode": opts.init_mode,
            "retries": 0, "phase_traces": []}

    # first pass, with one re-initialisation if P2 is infeasible
    bf = None
    for attempt in range(2):
        theta1, theta2 = initial_phases(M, opts, attempt)
        try:
            bf = solve_bf_ps(ch, theta1, theta2, p)
            break
        except (AllBetaInfeasible, ExtractionFailed) as err:
            info["reason"] = type(err).__name__
            if M == 0 or attempt == 1:
                break
            info["retries"] += 1
    if bf is None:
        return _infeasible(M, ch.N, info)
    info.pop("reason", None)

    d = Design(bf.beta, bf.w1, bf.w2, theta1, theta2)
    if M == 0:
        rate = rate_u1(ch, d, p)
        return AoResult(design=d, rate=rate, feasible=check_feasible(ch, d, p)["feasible"],
                        objective_trace=[rate], iterations=1, status=AoStatus.CONVERGED,
                        info=info)

    trace = []
    status = AoStatus.MAX_ITER
    n = 0
    for n in range(1, opts.max_outer + 1):
        if n > 1:
            try:
                cand = solve_bf_ps(ch, d.theta1, d.theta2, p)
                dc = Design(cand.beta, cand.w1, cand.w2, d.theta1, d.theta2)
                if rate_u1(ch, dc, p) >= rate_u1(ch, d, p):
                    d = dc
            except (AllBetaInfeasible, ExtractionFailed):
                pass    # keep the current, feasible, beamformers
        rows = {"outer": n}
        try:
            r1 = optimize_theta1(ch, d.w1, d.w2, d.beta, d.theta2, p, opts.pbagm,
                                 theta1_init=d.theta1)
            d = Design(d.beta, d.w1, d.w2, r1.theta, d.theta2)
            rows["theta1"] = r1.trace
        except (InfeasibleStart, NumericalFailure) as err:
            rows["theta1_error"] = type(err).__name__
        try:
            r2 = optimize_theta2(ch, d.w1, d.w2, d.beta, d.theta1, p, opts.pbagm,
                                 theta2_init=d.theta2)
            d = Design(d.beta, d.w1, d.w2, d.theta1, r2.theta)
            rows["theta2"] = r2.trace
        except (PhaseInfeasible, NumericalFailure) as err:
            rows["theta2_error"] = type(err).__name__
        info["phase_traces"].append(rows)
        trace.append(rate_u1(ch, d, p))
        if n > 1 and abs(trace[-1] - trace[-2]) < opts.tol:
            status = AoStatus.CONVERGED
            break

    feasible = check_feasible(ch, d, p)["feasible"]
    return AoResult(design=d, rate=trace[-1], feasible=feasible, objective_trace=trace,
                    iterations=n, status=status if feasible else AoStatus.INFEASIBLE,
                    info=info)
