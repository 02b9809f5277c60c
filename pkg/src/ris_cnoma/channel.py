"""Seeded channel realizations for the AP / RIS / two-user layout.

Large-scale loss follows ``PL(d) = pl_ref_db - 10 alpha log10(d)`` dB.
RIS-assisted links are Rician (deterministic ULA phase ramp as the LoS
part), direct links are Rayleigh.
"""
from dataclasses import dataclass, field, replace

import numpy as np


class InvalidGeometry(ValueError):
    pass


@dataclass(frozen=True)
class Geometry:
    ap_pos: tuple = (0.0, 2.0, 0.0)
    ris_pos: tuple = (11.0, 2.0, 0.0)
    u1_pos: tuple = (8.0, 0.0, 0.0)
    u2_pos: tuple = (12.0, 2.0, 0.0)

    def __post_init__(self):
        pts = [self.ap_pos, self.ris_pos, self.u1_pos, self.u2_pos]
        for i in range(4):
            if len(pts[i]) != 3:
                raise InvalidGeometry("positions must be 3-D coordinates")
            for j in range(i + 1, 4):
                if distance(pts[i], pts[j]) <= 0:
                    raise InvalidGeometry("all nodes must be at distinct positions")


@dataclass(frozen=True)
class FadingParams:
    alpha_direct_ap_u1: float = 3.5
    alpha_u1_u2: float = 3.5
    alpha_ap_u2: float = 4.0
    alpha_ris: float = 2.0
    rician_k: float = 2.0
    pl_ref_db: float = -30.0

    def __post_init__(self):
        for a in (self.alpha_direct_ap_u1, self.alpha_u1_u2, self.alpha_ap_u2, self.alpha_ris):
            if a < 2:
                raise ValueError("path-loss exponents must be >= 2")
        if self.rician_k < 0:
            raise ValueError("rician_k must be non-negative")


@dataclass
class ChannelSet:
    """All channel coefficients of one realization.

    ``h_d1``, ``h_d2`` are AP->U1/U2 (N,), ``G`` is AP->RIS (M, N), ``h_r1``,
    ``h_r2`` are RIS->U1/U2 (M,), ``g_d`` is U1->U2, ``g`` is U1->RIS (M,)
    and ``g_r`` is RIS->U2 (M,).
    """

    h_d1: np.ndarray
    h_d2: np.ndarray
    G: np.ndarray
    h_r1: np.ndarray
    h_r2: np.ndarray
    g_d: complex
    g: np.ndarray
    g_r: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def N(self):
        return self.h_d1.shape[0]

    @property
    def M(self):
        return self.h_r1.shape[0]

    def without_ris(self):
        """Same realization with every RIS path removed (M = 0)."""
        N = self.N
        empty = np.zeros(0, dtype=complex)
        return replace(self, G=np.zeros((0, N), dtype=complex), h_r1=empty, h_r2=empty,
                       g=empty, g_r=empty)

    def equals(self, other):
        names = ("h_d1", "h_d2", "G", "h_r1", "h_r2", "g", "g_r")
        return (all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names)
                and self.g_d == other.g_d)


def distance(a, b):
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def path_loss_linear(d, alpha, pl_ref_db=-30.0):
    """Power gain ``10^((pl_ref_db - 10 alpha log10 d) / 10)``."""
    if not d > 0:
        raise InvalidGeometry(f"distance must be positive, got {d}")
    return 10.0 ** ((pl_ref_db - 10.0 * alpha * np.log10(d)) / 10.0)


def _azimuth(src, dst):
    dx, dy = np.asarray(dst, dtype=float)[:2] - np.asarray(src, dtype=float)[:2]
    return float(np.arctan2(dy, dx))


def _ramp(n, angle):
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def link_gains(geom, fp):
    """Path-loss power gains of the seven links (independent of the seed)."""
    ref = fp.pl_ref_db
    d = {
        "h_d1": distance(geom.ap_pos, geom.u1_pos),
        "h_d2": distance(geom.ap_pos, geom.u2_pos),
        "g_d": distance(geom.u1_pos, geom.u2_pos),
        "G": distance(geom.ap_pos, geom.ris_pos),
        "h_r1": distance(geom.ris_pos, geom.u1_pos),
        "h_r2": distance(geom.ris_pos, geom.u2_pos),
        "g": distance(geom.u1_pos, geom.ris_pos),
        "g_r": distance(geom.ris_pos, geom.u2_pos),
    }
    alpha = {
        "h_d1": fp.alpha_direct_ap_u1,
        "h_d2": fp.alpha_ap_u2,
        "g_d": fp.alpha_u1_u2,
    }
    return {k: path_loss_linear(v, alpha.get(k, fp.alpha_ris), ref) for k, v in d.items()}


def los_components(geom, N, M):
    """Unit-modulus LoS parts of the RIS links (ULA phase ramps)."""
    phi_ap_ris = _azimuth(geom.ap_pos, geom.ris_pos)
    return {
        "G": np.outer(_ramp(M, phi_ap_ris), _ramp(N, phi_ap_ris).conj()),
        "h_r1": _ramp(M, _azimuth(geom.ris_pos, geom.u1_pos)),
        "h_r2": _ramp(M, _azimuth(geom.ris_pos, geom.u2_pos)),
        "g": _ramp(M, _azimuth(geom.u1_pos, geom.ris_pos)),
        "g_r": _ramp(M, _azimuth(geom.ris_pos, geom.u2_pos)),
    }


def sample_channels(geom, fp, params, seed):
    """Draw one :class:`ChannelSet` for ``params.N`` antennas and ``params.M`` elements."""
    N, M = int(params.N), int(params.M)
    rng = np.random.default_rng(seed)
    pl = link_gains(geom, fp)
    los = los_components(geom, N, M)
    k = fp.rician_k
    w_los, w_nlos = np.sqrt(k / (k + 1.0)), np.sqrt(1.0 / (k + 1.0))

    # fixed draw order keeps realizations stable when M or N change elsewhere
    h_d1 = np.sqrt(pl["h_d1"]) * _cn(rng, N)
    h_d2 = np.sqrt(pl["h_d2"]) * _cn(rng, N)
    g_d = complex(np.sqrt(pl["g_d"]) * _cn(rng, ()))

    def rician(name, shape):
        return np.sqrt(pl[name]) * (w_los * los[name] + w_nlos * _cn(rng, shape))

    G = rician("G", (M, N))
    h_r1 = rician("h_r1", M)
    h_r2 = rician("h_r2", M)
    g = rician("g", M)
    g_r = rician("g_r", M)
    return ChannelSet(h_d1=h_d1, h_d2=h_d2, G=G, h_r1=h_r1, h_r2=h_r2, g_d=g_d, g=g, g_r=g_r,
                      meta={"seed": int(seed)})


def realization_seed(base_seed, index):
    """Disjoint per-realization seed stream."""
    return (int(base_seed) ^ int(index)) & 0xFFFFFFFFFFFFFFFF
