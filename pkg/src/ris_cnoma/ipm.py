"""Primal-dual interior-point method for small complex Hermitian SDPs.

Standard form (minimisation)::

    min  sum_k <C_k, X_k> + c_v' v
    s.t. sum_k <A_ik, X_k> + a_i' v = b_i      i = 1..m
         X_k Hermitian PSD, v >= 0

plus optional free variables ``u`` entering as ``c_f' u`` and ``A_f u``,
which are eliminated through a small Schur system each iteration.

with ``<A, X> = Re Tr(A X)``.  Search directions are HKM with a Mehrotra
predictor-corrector, started from an infeasible interior point.  Constraint
matrices with few nonzeros (unit diagonals, single entries) are kept as
coordinate lists so that the Schur complement costs O(n^2) for them instead
of O(n^3).
"""
from dataclasses import dataclass, field

import logging

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)


@dataclass
class Block:
    n: int
    C: np.ndarray
    dense_rows: list = field(default_factory=list)
    dense_mats: list = field(default_factory=list)
    # coordinate entries of sparse constraint matrices: row id, p, q, value
    sp_row: list = field(default_factory=list)
    sp_p: list = field(default_factory=list)
    sp_q: list = field(default_factory=list)
    sp_val: list = field(default_factory=list)

    def add(self, row, A, sparse_max):
        nz = np.argwhere(np.abs(A) > 0)
        if len(nz) == 0:
            return
        if len(nz) <= sparse_max:
            for p, q in nz:
                self.sp_row.append(row)
                self.sp_p.append(p)
                self.sp_q.append(q)
                self.sp_val.append(A[p, q])
        else:
            self.dense_rows.append(row)
            self.dense_mats.append(A)

    def finalize(self, m):
        self.m = m
        self.sp_row = np.asarray(self.sp_row, dtype=int)
        self.sp_p = np.asarray(self.sp_p, dtype=int)
        self.sp_q = np.asarray(self.sp_q, dtype=int)
        self.sp_val = np.asarray(self.sp_val, dtype=complex)
        self.dense_rows = np.asarray(self.dense_rows, dtype=int)
        self.D = (np.array(self.dense_mats, dtype=complex) if self.dense_mats
                  else np.zeros((0, self.n, self.n), dtype=complex))
        # indicator mapping sparse entries to rows
        E = len(self.sp_row)
        self.S = np.zeros((m, E))
        if E:
            self.S[self.sp_row, np.arange(E)] = 1.0

    def scale_rows(self, r):
        if len(self.sp_row):
            self.sp_val = self.sp_val * r[self.sp_row]
        if len(self.dense_rows):
            self.D = self.D * r[self.dense_rows][:, None, None]

    def row_sq_norms(self, m):
        out = np.zeros(m)
        if len(self.sp_row):
            np.add.at(out, self.sp_row, np.abs(self.sp_val) ** 2)
        if len(self.dense_rows):
            np.add.at(out, self.dense_rows, np.sum(np.abs(self.D) ** 2, axis=(1, 2)))
        return out

    def op(self, Y):
        """``A(Y)``: vector of ``Re Tr(A_i Y)``."""
        out = np.zeros(self.m)
        if len(self.sp_row):
            vals = np.real(self.sp_val * Y[self.sp_q, self.sp_p])
            out += self.S @ vals
        if len(self.dense_rows):
            out[self.dense_rows] += np.real(np.einsum("kij,ji->k", self.D, Y))
        return out

    def adj(self, y):
        """``A*(y) = sum_i y_i A_i``."""
        Y = np.zeros((self.n, self.n), dtype=complex)
        if len(self.sp_row):
            np.add.at(Y, (self.sp_p, self.sp_q), y[self.sp_row] * self.sp_val)
        if len(self.dense_rows):
            Y += np.einsum("k,kij->ij", y[self.dense_rows], self.D)
        return Y

    def schur(self, X, Zi):
        """HKM Schur complement ``M_ij = Re Tr(A_i X A_j Z^-1)``."""
        m = self.m
        M = np.zeros((m, m))
        E = len(self.sp_row)
        if E:
            # entries e=(p,q,a), f=(r,s,b): a b X[q,r] Zi[s,p]
            K = (self.sp_val[:, None] * self.sp_val[None, :]
                 * X[np.ix_(self.sp_q, self.sp_p)] * Zi[np.ix_(self.sp_q, self.sp_p)].T)
            M += self.S @ np.real(K) @ self.S.T
        if len(self.dense_rows):
            Cd = np.zeros((m, m))
            for k, j in enumerate(self.dense_rows):
                Cd[:, j] = self._op_T(X @ self.D[k] @ Zi)
            CdT = Cd.T.copy()
            CdT[:, self.dense_rows] = 0.0   # dense-dense pairs already in Cd
            M += Cd + CdT
        return M

    def _op_T(self, G):
        # Re Tr(A_i G) for every row i
        out = np.zeros(self.m)
        if len(self.sp_row):
            out += self.S @ np.real(self.sp_val * G[self.sp_q, self.sp_p])
        if len(self.dense_rows):
            out[self.dense_rows] += np.real(np.einsum("kij,ji->k", self.D, G))
        return out


def _max_step(Li, dX):
    """Largest alpha with X + alpha dX PSD, given ``Li = chol(X)^-1``."""
    T = Li @ dX @ Li.conj().T
    lam = np.linalg.eigvalsh(0.5 * (T + T.conj().T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _chol_inv(X):
    L = np.linalg.cholesky(X)
    return sla.solve_triangular(L, np.eye(X.shape[0]), lower=True, check_finite=False)


def _herm(A):
    return 0.5 * (A + A.conj().T)


@dataclass
class IpmResult:
    status: str          # optimal | infeasible | unbounded | failed
    X: list
    v: np.ndarray
    u: np.ndarray
    y: np.ndarray
    pobj: float
    dobj: float
    iterations: int
    pinf: float
    dinf: float
    gap: float


def solve_standard(blocks, cv, Av, b, cf=None, Af=None, tol_feas=1e-8, tol_gap=1e-8,
                   max_iter=100):
    """Solve the standard-form problem described by ``blocks``, ``(cv, Av)`` and ``b``.

    ``blocks`` are finalised :class:`Block` objects, ``Av`` is an (m, nv)
    dense matrix for the nonnegative variables and ``Af`` (m, nf) the one
    for free variables.
    """
    m = len(b)
    nv = len(cv)
    b = np.asarray(b, dtype=float)
    cf = np.zeros(0) if cf is None else np.asarray(cf, dtype=float)
    Af = np.zeros((m, 0)) if Af is None else np.asarray(Af, dtype=float).reshape(m, -1)
    nf = len(cf)

    # row and objective scaling
    rn = (sum(blk.row_sq_norms(m) for blk in blocks) + np.sum(Av ** 2, axis=1)
          + np.sum(Af ** 2, axis=1))
    rs = 1.0 / np.sqrt(np.maximum(rn, 1e-300))
    rs[rn == 0] = 1.0
    for blk in blocks:
        blk.scale_rows(rs)
    Av = Av * rs[:, None]
    Af = Af * rs[:, None]
    b = b * rs
    cn = np.sqrt(sum(np.sum(np.abs(blk.C) ** 2) for blk in blocks) + np.sum(cv ** 2)
                 + np.sum(cf ** 2))
    cscale = 1.0 / cn if cn > 0 else 1.0
    Cs = [blk.C * cscale for blk in blocks]
    cv = cv * cscale
    cf = cf * cscale

    ntot = sum(blk.n for blk in blocks) + nv
    normb = np.linalg.norm(b)
    normC = np.sqrt(sum(np.sum(np.abs(C) ** 2) for C in Cs) + np.sum(cv ** 2) + np.sum(cf ** 2))

    xi = max(10.0, np.sqrt(ntot), (1 + np.max(np.abs(b), initial=0.0)) * np.sqrt(ntot))
    eta = max(10.0, np.sqrt(ntot), 1 + normC)
    X = [xi * np.eye(blk.n, dtype=complex) for blk in blocks]
    Z = [eta * np.eye(blk.n, dtype=complex) for blk in blocks]
    v = xi * np.ones(nv)
    zv = eta * np.ones(nv)
    u = np.zeros(nf)
    y = np.zeros(m)

    status = "failed"
    it = 0
    pinf = dinf = gap = np.inf
    best = None
    for it in range(1, max_iter + 1):
        AX = sum(blk.op(Xk) for blk, Xk in zip(blocks, X)) + Av @ v + Af @ u
        rp = b - AX
        Rd = [C - Zk - blk.adj(y) for blk, C, Zk in zip(blocks, Cs, Z)]
        rdv = cv - zv - Av.T @ y
        rf = cf - Af.T @ y
        pobj = sum(np.real(np.sum(C.T * Xk)) for C, Xk in zip(Cs, X)) + cv @ v + cf @ u
        dobj = b @ y
        comp = sum(np.real(np.sum(Xk.T * Zk)) for Xk, Zk in zip(X, Z)) + v @ zv
        mu = comp / ntot
        pinf = np.linalg.norm(rp) / (1 + normb)
        dinf = np.sqrt(sum(np.sum(np.abs(R) ** 2) for R in Rd) + np.sum(rdv ** 2)
                       + np.sum(rf ** 2)) / (1 + normC)
        # gap on the unscaled objective, as callers see it
        gap = abs(pobj - dobj) / cscale / (1 + (abs(pobj) + abs(dobj)) / cscale)
        log.debug("%3d pobj=%.8e dobj=%.8e pinf=%.1e dinf=%.1e gap=%.1e mu=%.1e",
                  it, pobj, dobj, pinf, dinf, gap, mu)
        if pinf <= tol_feas and dinf <= tol_feas and gap <= tol_gap:
            status = "optimal"
            break
        score = max(pinf, dinf, gap)
        if best is None or score < 0.5 * best[0]:
            best_it = it
        if best is None or score < best[0]:
            best = (score, [Xk.copy() for Xk in X], v.copy(), u.copy(), y.copy(),
                    pobj, dobj, pinf, dinf, gap)
        elif it - best_it > (4 if best[0] < 1e-5 else 25):
            break   # stalled, near optimal this is the limit of double precision
        # certificates on the ray of the iterates
        if dobj > 0 and dinf < 1e-2:
            ray = np.sqrt(sum(np.sum(np.abs(C - R) ** 2) for C, R in zip(Cs, Rd))
                          + np.sum((cv - rdv) ** 2)) / dobj
            if ray < 1e-8:
                status = "infeasible"
                break
        if pobj < 0 and pinf < 1e-2:
            ray = np.linalg.norm(b - rp) / (-pobj)
            if ray < 1e-8:
                status = "unbounded"
                break

        try:
            LXi = [_chol_inv(Xk) for Xk in X]
            LZi = [_chol_inv(Zk) for Zk in Z]
        except np.linalg.LinAlgError:
            break
        Zi = [L.conj().T @ L for L in LZi]
        d = v / zv
        M = Av @ (d[:, None] * Av.T)
        for blk, Xk, Zik in zip(blocks, X, Zi):
            M += blk.schur(Xk, Zik)
        M = 0.5 * (M + M.T)
        try:
            cho = sla.cho_factor(M + 1e-14 * np.trace(M) / max(m, 1) * np.eye(m))
        except (np.linalg.LinAlgError, ValueError):
            try:
                cho = sla.cho_factor(M + 1e-9 * np.trace(M) / max(m, 1) * np.eye(m))
            except (np.linalg.LinAlgError, ValueError):
                break
        if nf:
            MiAf = sla.cho_solve(cho, Af)
            Sf = Af.T @ MiAf

        def kkt_solve(r1, r2):
            # [[M, Af], [Af', 0]] [dy; du] = [r1; r2]
            dy = sla.cho_solve(cho, r1)
            du = np.zeros(nf)
            if nf:
                du = np.linalg.lstsq(Sf, Af.T @ dy - r2, rcond=None)[0]
                dy = dy - MiAf @ du
            return dy, du

        XRdZ = [Xk @ R @ Zik for Xk, R, Zik in zip(X, Rd, Zi)]

        def direction(sigma, corr):
            Rs = []
            for k, (Xk, Zik) in enumerate(zip(X, Zi)):
                R = sigma * mu * Zik - Xk
                if corr is not None:
                    R = R - corr[0][k] @ corr[1][k] @ Zik
                Rs.append(R)
            rv = sigma * mu / zv - v
            if corr is not None:
                rv = rv - corr[2] * corr[3] / zv
            rhs = rp.copy()
            for blk, R, XRZ in zip(blocks, Rs, XRdZ):
                rhs -= blk.op(R - XRZ)
            rhs -= Av @ (rv - d * rdv)
            dy, du = kkt_solve(rhs, rf)
            for _ in range(2):
                # iterative refinement against the unregularised system
                e1 = rhs - M @ dy - Af @ du
                e2 = rf - Af.T @ dy
                c1, c2 = kkt_solve(e1, e2)
                dy, du = dy + c1, du + c2
            dZ = [R - blk.adj(dy) for blk, R in zip(blocks, Rd)]
            dX = [_herm(R - Xk @ dZk @ Zik) for R, Xk, dZk, Zik in zip(Rs, X, dZ, Zi)]
            dzv = rdv - Av.T @ dy
            dv = rv - d * dzv
            return dX, dy, dZ, dv, dzv, du

        def steps(dX, dZ, dv, dzv):
            ap = min([_max_step(L, a) for L, a in zip(LXi, dX)]
                     + [np.min(np.where(dv < 0, -v / np.where(dv < 0, dv, -1), np.inf), initial=np.inf)])
            ad = min([_max_step(L, c) for L, c in zip(LZi, dZ)]
                     + [np.min(np.where(dzv < 0, -zv / np.where(dzv < 0, dzv, -1), np.inf), initial=np.inf)])
            return ap, ad

        dX, dy, dZ, dv, dzv, du = direction(0.0, None)
        ap, ad = steps(dX, dZ, dv, dzv)
        ap, ad = min(1.0, ap), min(1.0, ad)
        comp_aff = (sum(np.real(np.sum((Xk + ap * a).T * (Zk + ad * c)))
                        for Xk, a, Zk, c in zip(X, dX, Z, dZ))
                    + (v + ap * dv) @ (zv + ad * dzv))
        sigma = min(1.0, max(0.0, (comp_aff / comp) ** 3))
        dX, dy, dZ, dv, dzv, du = direction(sigma, (dX, dZ, dv, dzv))
        ap, ad = steps(dX, dZ, dv, dzv)
        gamma = 0.9 + 0.09 * min(ap, ad, 1.0)
        ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)
        if ap < 1e-12 and ad < 1e-12:
            break
        X = [Xk + ap * a for Xk, a in zip(X, dX)]
        v = v + ap * dv
        u = u + ap * du
        y = y + ad * dy
        Z = [Zk + ad * c for Zk, c in zip(Z, dZ)]
        zv = zv + ad * dzv

    if status == "failed" and best is not None and best[0] < max(pinf, dinf, gap):
        _, X, v, u, y, pobj, dobj, pinf, dinf, gap = best
    # undo objective scaling; row scaling leaves X untouched, y scales back
    return IpmResult(status=status, X=X, v=v, u=u, y=y * rs / cscale, pobj=pobj / cscale,
                     dobj=dobj / cscale, iterations=it, pinf=pinf, dinf=dinf, gap=gap)
