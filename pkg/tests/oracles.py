"""Brute-force references for single-antenna instances.

With N = 1 a design is fully described by the two transmit powers, the
splitting ratio and the channel power gains ``a1 = |h1|^2``, ``a2 = |h2|^2``
(phase 1) and ``g5 = |g_eff|^2`` (phase 2).  The expressions below are
written out from the system model independently of ``ris_cnoma.system``.
"""
import numpy as np

TOL = 1e-9     # relative slack on SINR targets, far below the grid resolution


def scalar_metrics(a1, a2, g5, p1, p2, beta, p):
    s1, s2 = p.sigma1_sq, p.sigma2_sq
    snr1 = (1 - beta) * a1 * p1 / s1
    sic = (1 - beta) * a1 * p2 / ((1 - beta) * a1 * p1 + s1)
    mrc = a2 * p2 / (a2 * p1 + s2) + beta * p.eta * g5 * a1 * (p1 + p2) / s2
    return snr1, sic, mrc


def feasible_mask(sic, mrc, t):
    return (sic >= t * (1 - TOL)) & (mrc >= t * (1 - TOL))


def grid_powers(p, n=1000):
    """All (p1, p2) on a ``P_s / n`` lattice with ``p1 + p2 <= P_s``."""
    k = np.arange(n + 1)
    i, j = np.meshgrid(k, k, indexing="ij")
    keep = i + j <= n
    return i[keep] * p.P_s / n, j[keep] * p.P_s / n


def best_snr_fixed_beta(a1, a2, g5, beta, p, n=1000):
    """Largest (1-beta) a1 p1 / sigma1^2 over the 2-D power grid (-inf if none)."""
    p1, p2 = grid_powers(p, n)
    snr1, sic, mrc = scalar_metrics(a1, a2, g5, p1, p2, beta, p)
    ok = feasible_mask(sic, mrc, p.sinr_target)
    return float(np.max(snr1[ok])) if ok.any() else -np.inf


def best_snr_3d(a1, a2, g5, p, betas, n=1000):
    p1, p2 = grid_powers(p, n)
    best, arg = -np.inf, None
    for b in betas:
        snr1, sic, mrc = scalar_metrics(a1, a2, g5, p1, p2, b, p)
        ok = feasible_mask(sic, mrc, p.sinr_target)
        if ok.any():
            k = np.argmax(np.where(ok, snr1, -np.inf))
            if snr1[k] > best:
                best, arg = float(snr1[k]), (float(b), float(p1[k]), float(p2[k]))
    return best, arg


def best_snr_full_power(a1, a2, g5, p, betas, n=1000):
    """Best SNR of U1 for each (a1, a2) pair, powers on the line p1 + p2 = P_s.

    At fixed p1, raising p2 raises every SINR in the model and leaves the
    objective unchanged, so some optimum of the grid uses the whole budget.
    """
    a1 = np.atleast_1d(a1)[:, None, None]
    a2 = np.atleast_1d(a2)[:, None, None]
    b = np.asarray(betas)[None, :, None]
    p1 = (np.arange(n + 1) * p.P_s / n)[None, None, :]
    p2 = p.P_s - p1
    snr1, sic, mrc = scalar_metrics(a1, a2, g5, p1, p2, b, p)
    val = np.where(feasible_mask(sic, mrc, p.sinr_target), snr1, -np.inf)
    return val.reshape(val.shape[0], -1).max(axis=1)


def pareto_front(a1, a2):
    """Indices of points not dominated in both coordinates."""
    order = np.lexsort((-a2, -a1))      # a1 descending, then a2 descending
    keep, best2 = [], -np.inf
    for k in order:
        if a2[k] > best2:
            keep.append(k)
            best2 = a2[k]
    return np.array(keep, dtype=int)


def phase_grid(M, step_deg=2.0):
    """All unit-modulus vectors with phases on a ``step_deg`` lattice, shape (K, M)."""
    phi = np.deg2rad(np.arange(0.0, 360.0, step_deg))
    mesh = np.meshgrid(*([phi] * M), indexing="ij")
    return np.exp(1j * np.stack([m.ravel() for m in mesh], axis=1))


def rate(snr):
    return 0.5 * np.log2(1.0 + snr)
