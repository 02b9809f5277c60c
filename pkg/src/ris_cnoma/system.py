"""Exact evaluation of the two-phase RIS-assisted cooperative NOMA link.

Everything here is closed-form and solver independent; the optimizers are
checked against these functions.

Lifted phase vectors follow the convention ``v = conj(theta)``, so that
``h_r^H diag(theta) G w = v^H diag(h_r^H) G w`` and the lifted variable is
``[v; 1][v; 1]^H``.  ``Design.theta1/theta2`` always hold the diagonal of the
reflection matrix itself.
"""
import json
from dataclasses import dataclass, field

import numpy as np


class InvalidInput(ValueError):
    pass


@dataclass
class SystemParams:
    N: int = 4
    M: int = 40
    P_s: float = 1.0
    sigma1_sq: float = 1e-8
    sigma2_sq: float = 1e-8
    eta: float = 0.8
    gamma2: float = 0.5
    tau: float = 0.5
    eps_feas: float = 1e-6

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise InvalidInput("eta must lie in (0, 1]")
        if self.P_s < 0:
            raise InvalidInput("P_s must be non-negative")
        if self.sigma1_sq <= 0 or self.sigma2_sq <= 0:
            raise InvalidInput("noise variances must be positive")
        if self.gamma2 < 0:
            raise InvalidInput("gamma2 must be non-negative")
        if self.tau != 0.5:
            raise InvalidInput("the two phases have equal length, tau = 1/2")

    @property
    def sinr_target(self):
        """SINR needed for rate ``gamma2`` over half a slot: ``2^(2 gamma2) - 1``."""
        return 2.0 ** (2.0 * self.gamma2) - 1.0


@dataclass
class Design:
    beta: float
    w1: np.ndarray
    w2: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray

    def copy(self):
        return Design(float(self.beta), self.w1.copy(), self.w2.copy(),
                      self.theta1.copy(), self.theta2.copy())

    def to_dict(self):
        def enc(v):
            return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex)]
        return {"beta": float(self.beta), "w1": enc(self.w1), "w2": enc(self.w2),
                "theta1": enc(self.theta1), "theta2": enc(self.theta2)}

    @classmethod
    def from_dict(cls, d):
        def dec(pairs):
            return np.array([complex(re, im) for re, im in pairs], dtype=complex)
        return cls(float(d["beta"]), dec(d["w1"]), dec(d["w2"]), dec(d["theta1"]),
                   dec(d["theta2"]))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


@dataclass
class LiftMatrices:
    R: list          # R1..R4 (phase 1) followed by R5 (phase 2), each (M+1, M+1)
    b: list          # b1..b5
    Gtilde_r1: np.ndarray
    Gtilde_r2: np.ndarray
    ghat: np.ndarray
    meta: dict = field(default_factory=dict)

    def gain(self, k, Theta):
        """``Tr(R_k Theta) + |b_k|^2`` for k in 1..5."""
        return float(np.real(np.trace(self.R[k - 1] @ Theta))) + abs(self.b[k - 1]) ** 2

    def gain_vec(self, k, theta):
        """Same as :meth:`gain` for a rank-one lift of diagonal ``theta``."""
        t = lifted_vector(theta)
        return float(np.real(t.conj() @ self.R[k - 1] @ t)) + abs(self.b[k - 1]) ** 2


def lifted_vector(theta):
    theta = np.asarray(theta, dtype=complex)
    return np.concatenate([theta.conj(), [1.0 + 0j]])


def _check_dims(ch, theta=None, w=None):
    if ch.G.shape != (ch.M, ch.N):
        raise InvalidInput("G must be M x N")
    if theta is not None and np.asarray(theta).shape != (ch.M,):
        raise InvalidInput(f"theta must have length M={ch.M}")
    if w is not None and np.asarray(w).shape != (ch.N,):
        raise InvalidInput(f"beamformer must have length N={ch.N}")


def effective_channel_phase1(ch, theta1, user):
    """Vector ``h`` with ``h^H w = (h_r^H diag(theta1) G + h_d^H) w``."""
    _check_dims(ch, theta1)
    if user == 1:
        h_r, h_d = ch.h_r1, ch.h_d1
    elif user == 2:
        h_r, h_d = ch.h_r2, ch.h_d2
    else:
        raise InvalidInput("user must be 1 or 2")
    theta1 = np.asarray(theta1, dtype=complex)
    return ch.G.conj().T @ (theta1.conj() * h_r) + h_d


def phase2_gain(ch, theta2):
    """Complex phase-2 channel ``g_d^* + g_r^H diag(theta2) g``."""
    _check_dims(ch, theta2)
    theta2 = np.asarray(theta2, dtype=complex)
    return complex(np.conj(ch.g_d) + np.sum(ch.g_r.conj() * theta2 * ch.g))


def received_powers(ch, d):
    """``|h_i^H w_j|^2`` for (i, j) in (1,1), (1,2), (2,1), (2,2)."""
    h1 = effective_channel_phase1(ch, d.theta1, 1)
    h2 = effective_channel_phase1(ch, d.theta1, 2)
    return (abs(np.vdot(h1, d.w1)) ** 2, abs(np.vdot(h1, d.w2)) ** 2,
            abs(np.vdot(h2, d.w1)) ** 2, abs(np.vdot(h2, d.w2)) ** 2)


def harvested_energy(ch, d, p):
    p11, p12, _, _ = received_powers(ch, d)
    return p.tau * d.beta * p.eta * (p11 + p12)


def harvested_transmit_power(ch, d, p):
    """Relay transmit power of U1, i.e. harvested energy divided by tau."""
    p11, p12, _, _ = received_powers(ch, d)
    return d.beta * p.eta * (p11 + p12)


def sinr_report(ch, d, p):
    p11, p12, p21, p22 = received_powers(ch, d)
    beta = d.beta
    sinr_1to2 = (1 - beta) * p12 / ((1 - beta) * p11 + p.sigma1_sq)
    snr_1 = (1 - beta) * p11 / p.sigma1_sq
    sinr2_phase1 = p22 / (p21 + p.sigma2_sq)
    snr2_phase2 = beta * p.eta * abs(phase2_gain(ch, d.theta2)) ** 2 * (p11 + p12) / p.sigma2_sq
    return {
        "sinr_1to2": sinr_1to2,
        "snr_1": snr_1,
        "sinr2_phase1": sinr2_phase1,
        "snr2_phase2": snr2_phase2,
        "sinr2_combined": sinr2_phase1 + snr2_phase2,
    }


def rate_from_sinr(s):
    return 0.5 * np.log2(1.0 + s)


def rate_u1(ch, d, p):
    return float(rate_from_sinr(sinr_report(ch, d, p)["snr_1"]))


def check_feasible(ch, d, p, eps_feas=None):
    """Signed slack of every constraint; feasible iff all are >= -eps_feas.

    Rate slacks are in bit/s/Hz, the power slack is relative to ``P_s``.
    """
    eps = p.eps_feas if eps_feas is None else eps_feas
    s = sinr_report(ch, d, p)
    power = float(np.vdot(d.w1, d.w1).real + np.vdot(d.w2, d.w2).real)
    margins = {
        "C1": float(rate_from_sinr(s["sinr_1to2"]) - p.gamma2),
        "C2": float(rate_from_sinr(s["sinr2_combined"]) - p.gamma2),
        "C3": (p.P_s - power) / p.P_s if p.P_s > 0 else -power,
        "C4": float(min(d.beta, 1.0 - d.beta)),
        "C5": -float(np.max(np.abs(np.abs(d.theta1) - 1.0), initial=0.0)),
        "C6": -float(np.max(np.abs(np.abs(d.theta2) - 1.0), initial=0.0)),
    }
    feasible = all(m >= -eps for m in margins.values())
    return {"feasible": feasible, "margins": margins}


def lift_block(a, b):
    """``[[a a^H, a b^*], [b a^H, 0]]`` so that ``[v;1]^H R [v;1] = |v^H a + b|^2 - |b|^2``."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    R = np.zeros((n + 1, n + 1), dtype=complex)
    R[:n, :n] = np.outer(a, a.conj())
    R[:n, n] = a * np.conj(b)
    R[n, :n] = b * a.conj()
    return R


def build_lifts(ch, w1, w2):
    """Lift matrices R1..R5 and constants b1..b5 for fixed beamformers.

    R1: (U1, w1), R2: (U1, w2), R3: (U2, w1), R4: (U2, w2) in phase 1 and R5
    for the phase-2 gain ``|g_d^* + v^H ghat|^2`` with ``ghat = diag(g_r^H) g``.
    """
    _check_dims(ch, w=w1)
    _check_dims(ch, w=w2)
    Gt1 = ch.h_r1.conj()[:, None] * ch.G
    Gt2 = ch.h_r2.conj()[:, None] * ch.G
    R, b = [], []
    for Gt, h_d in ((Gt1, ch.h_d1), (Gt2, ch.h_d2)):
        for w in (w1, w2):
            a = Gt @ w
            bk = complex(np.vdot(h_d, w))
            R.append(lift_block(a, bk))
            b.append(bk)
    ghat = ch.g_r.conj() * ch.g
    b5 = complex(np.conj(ch.g_d))
    R.append(lift_block(ghat, b5))
    b.append(b5)
    return LiftMatrices(R=R, b=b, Gtilde_r1=Gt1, Gtilde_r2=Gt2, ghat=ghat)
