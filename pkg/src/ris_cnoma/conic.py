"""Small Hermitian SDP modelling layer with interchangeable interior-point backends.

A problem has complex Hermitian PSD blocks ``X_k``, real scalar auxiliaries
and affine expressions ``sum_k Re Tr(C_k X_k) + sum_s a_s s + const``.
Linear (in)equalities and second-order-cone rows ``||(e_1, ..., e_r)|| <= e_0``
are supported.

The default backend (:mod:`ris_cnoma.ipm`) works on the complex blocks
directly.  For the Clarabel and cvxopt backends each complex block of size n
is solved as a real symmetric PSD block of size 2n through ``X -> [[Re X, -Im X], [Im X, Re X]]``; a PSD solution of the real
problem is mapped back by averaging its two diagonal and off-diagonal
sub-blocks, which preserves both PSD-ness and every affine value.
"""
import enum
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class Affine:
    blocks: dict = field(default_factory=dict)    # name -> Hermitian coefficient C
    scalars: dict = field(default_factory=dict)   # name -> real coefficient
    const: float = 0.0

    def evaluate(self, X, s):
        val = self.const
        for name, C in self.blocks.items():
            val += float(np.real(np.sum(C.T * X[name])))
        for name, a in self.scalars.items():
            val += a * s[name]
        return val

    def __add__(self, other):
        blocks = dict(self.blocks)
        for k, C in other.blocks.items():
            blocks[k] = blocks[k] + C if k in blocks else C
        scalars = dict(self.scalars)
        for k, a in other.scalars.items():
            scalars[k] = scalars.get(k, 0.0) + a
        return Affine(blocks, scalars, self.const + other.const)

    def scale(self, c):
        return Affine({k: c * C for k, C in self.blocks.items()},
                      {k: c * a for k, a in self.scalars.items()}, c * self.const)


@dataclass
class Constraint:
    expr: Affine
    cmp: str      # "<=", ">=" or "=="
    rhs: float = 0.0
    name: str = ""


@dataclass
class SocConstraint:
    """``|| (e_1, ..., e_r) ||_2 <= bound``, or ``sum e_t^2 <= bound`` if ``squared``."""
    terms: list
    bound: Affine
    name: str = ""
    squared: bool = False

    def standard(self):
        """Terms and bound of an equivalent plain second-order cone."""
        if not self.squared:
            return self.terms, self.bound
        b = self.bound
        # sum e^2 <= b  <=>  ||(2e, b - 1)|| <= b + 1
        terms = [t.scale(2.0) for t in self.terms] + [Affine(b.blocks, b.scalars, b.const - 1.0)]
        return terms, Affine(b.blocks, b.scalars, b.const + 1.0)

    def violation(self, X, s):
        vals = [t.evaluate(X, s) for t in self.terms]
        rhs = self.bound.evaluate(X, s)
        if self.squared:
            return float(np.dot(vals, vals)) - rhs
        return float(np.linalg.norm(vals)) - rhs


@dataclass
class SdpProblem:
    blocks: dict                       # name -> dimension (complex Hermitian PSD)
    objective: Affine
    sense: str = "max"
    scalars: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    socs: list = field(default_factory=list)

    def add(self, expr, cmp, rhs=0.0, name=""):
        self.constraints.append(Constraint(expr, cmp, float(rhs), name))

    def add_soc(self, terms, bound, name=""):
        self.socs.append(SocConstraint(list(terms), bound, name))

    def add_sum_squares(self, terms, bound, name=""):
        """``sum_t terms_t^2 <= bound`` (a rotated second-order cone)."""
        self.socs.append(SocConstraint(list(terms), bound, name, squared=True))

    def to_dict(self):
        """Self-describing dump: Hermitian coefficients as (i, j, re, im) triplets."""
        def enc(e):
            out = {"const": e.const, "scalars": dict(e.scalars), "blocks": {}}
            for k, C in e.blocks.items():
                ii, jj = np.nonzero(np.abs(C) > 0)
                out["blocks"][k] = [[int(i), int(j), float(C[i, j].real), float(C[i, j].imag)]
                                    for i, j in zip(ii, jj)]
            return out
        return {
            "blocks": dict(self.blocks),
            "scalars": list(self.scalars),
            "sense": self.sense,
            "objective": enc(self.objective),
            "constraints": [{"name": c.name, "cmp": c.cmp, "rhs": c.rhs, "expr": enc(c.expr)}
                            for c in self.constraints],
            "socs": [{"name": q.name, "squared": q.squared, "bound": enc(q.bound),
                      "terms": [enc(t) for t in q.terms]} for q in self.socs],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


@dataclass
class SdpSolution:
    status: Status
    blocks: dict
    scalars: dict
    objective: float
    residuals: dict
    iterations: int = 0

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


# ---------------------------------------------------------------- embedding

def embed(X):
    """Real symmetric embedding ``[[Re X, -Im X], [Im X, Re X]]``."""
    X = np.asarray(X)
    return np.block([[X.real, -X.imag], [X.imag, X.real]])


def extract(Y):
    """Inverse of :func:`embed`, averaging the redundant sub-blocks."""
    n = Y.shape[0] // 2
    A, B, C, D = Y[:n, :n], Y[:n, n:], Y[n:, :n], Y[n:, n:]
    return 0.5 * (A + D) + 0.5j * (C - B)


_TRI_CACHE = {}


def _triu_colwise(m):
    # Clarabel's PSD triangle ordering: upper triangle, column by column
    if m not in _TRI_CACHE:
        rows, cols = np.tril_indices(m)   # row-wise lower == column-wise upper
        scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
        _TRI_CACHE[m] = (rows, cols, scale)
    return _TRI_CACHE[m]


def svec(S):
    rows, cols, scale = _triu_colwise(S.shape[0])
    return S[rows, cols] * scale


def smat(v, m):
    rows, cols, scale = _triu_colwise(m)
    S = np.zeros((m, m))
    S[rows, cols] = v / scale
    S[cols, rows] = v / scale
    return S


# ---------------------------------------------------------------- compile

class _Layout:
    def __init__(self, prob):
        self.offsets = {}
        pos = 0
        for name, n in prob.blocks.items():
            m = 2 * n
            self.offsets[name] = (pos, m)
            pos += m * (m + 1) // 2
        self.scalar_index = {}
        for name in prob.scalars:
            self.scalar_index[name] = pos
            pos += 1
        self.nvar = pos

    def row(self, e):
        """Dense coefficient row (length nvar) and constant of an affine expression."""
        r = np.zeros(self.nvar)
        for name, C in e.blocks.items():
            off, m = self.offsets[name]
            C = np.asarray(C, dtype=complex)
            C = 0.5 * (C + C.conj().T)
            # Tr(embed(C) embed(X)) = 2 Re Tr(C X)
            r[off:off + m * (m + 1) // 2] += 0.5 * svec(embed(C))
        for name, a in e.scalars.items():
            r[self.scalar_index[name]] += a
        return r, e.const


def _compile(prob):
    import clarabel

    lay = _Layout(prob)
    q_row, _ = lay.row(prob.objective)
    q = -q_row if prob.sense == "max" else q_row

    eq_rows, eq_b, ineq_rows, ineq_b = [], [], [], []
    for c in prob.constraints:
        r, k = lay.row(c.expr)
        if c.cmp == "==":
            eq_rows.append(r)
            eq_b.append(c.rhs - k)
        elif c.cmp == "<=":
            ineq_rows.append(r)
            ineq_b.append(c.rhs - k)
        elif c.cmp == ">=":
            ineq_rows.append(-r)
            ineq_b.append(k - c.rhs)
        else:
            raise ValueError(f"unknown comparison {c.cmp!r}")

    blocks_A, b_parts, cones = [], [], []
    if eq_rows:
        blocks_A.append(sp.csc_matrix(np.array(eq_rows)))
        b_parts.append(np.array(eq_b))
        cones.append(clarabel.ZeroConeT(len(eq_rows)))
    if ineq_rows:
        blocks_A.append(sp.csc_matrix(np.array(ineq_rows)))
        b_parts.append(np.array(ineq_b))
        cones.append(clarabel.NonnegativeConeT(len(ineq_rows)))
    for soc in prob.socs:
        rows, consts = [], []
        terms, bound = soc.standard()
        for e in [bound] + terms:
            r, k = lay.row(e)
            rows.append(-r)
            consts.append(k)
        blocks_A.append(sp.csc_matrix(np.array(rows)))
        b_parts.append(np.array(consts))
        cones.append(clarabel.SecondOrderConeT(len(rows)))
    for name in prob.blocks:
        off, m = lay.offsets[name]
        size = m * (m + 1) // 2
        sel = sp.csc_matrix((-np.ones(size), (np.arange(size), off + np.arange(size))),
                            shape=(size, lay.nvar))
        blocks_A.append(sel)
        b_parts.append(np.zeros(size))
        cones.append(clarabel.PSDTriangleConeT(m))
    A = sp.vstack(blocks_A, format="csc")
    b = np.concatenate(b_parts)
    P = sp.csc_matrix((lay.nvar, lay.nvar))
    return lay, P, q, A, b, cones


def _unpack(prob, lay, x):
    X, s = {}, {}
    for name in prob.blocks:
        off, m = lay.offsets[name]
        Y = smat(x[off:off + m * (m + 1) // 2], m)
        X[name] = extract(Y)
    for name, i in lay.scalar_index.items():
        s[name] = float(x[i])
    return X, s


def _term_scale(e, X, s):
    # size of the individual terms, so a violation is judged relative to them
    out = abs(e.const)
    for name, C in e.blocks.items():
        out += float(np.linalg.norm(C)) * float(np.linalg.norm(X[name]))
    for name, a in e.scalars.items():
        out += abs(a * s[name])
    return out


def primal_residual(prob, X, s):
    """Largest relative violation over constraints, cones and PSD-ness.

    Each violation is divided by ``1 + |rhs| + sum of term magnitudes``.
    """
    worst = 0.0
    for c in prob.constraints:
        v = c.expr.evaluate(X, s) - c.rhs
        scale = 1.0 + abs(c.rhs) + _term_scale(c.expr, X, s)
        if c.cmp == "==":
            viol = abs(v)
        elif c.cmp == "<=":
            viol = max(v, 0.0)
        else:
            viol = max(-v, 0.0)
        worst = max(worst, viol / scale)
    for q in prob.socs:
        mags = [_term_scale(e, X, s) for e in q.terms]
        if q.squared:
            scale = 1.0 + _term_scale(q.bound, X, s) + float(np.dot(mags, mags))
        else:
            scale = 1.0 + _term_scale(q.bound, X, s) + sum(mags)
        worst = max(worst, max(q.violation(X, s), 0.0) / scale)
    for name, Xk in X.items():
        ev = np.linalg.eigvalsh(0.5 * (Xk + Xk.conj().T))
        worst = max(worst, max(-ev[0], 0.0) / (1.0 + max(ev[-1], 0.0)))
    return worst


def _status_from(prob, X, s, ok, infeasible):
    if infeasible:
        return Status.INFEASIBLE
    res = primal_residual(prob, X, s)
    if ok or res <= 1e-6:
        return Status.OPTIMAL
    return Status.NUMERICAL_FAILURE


def _solve_clarabel(prob, tol_feas, tol_gap, max_iter):
    import clarabel

    lay, P, q, A, b, cones = _compile(prob)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol_feas
    settings.tol_gap_abs = tol_gap
    settings.tol_gap_rel = tol_gap
    settings.max_iter = max_iter
    settings.max_threads = 1
    sol = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
    st = str(sol.status).split(".")[-1]
    X, s = _unpack(prob, lay, np.array(sol.x))
    status = _status_from(prob, X, s, ok=(st == "Solved"), infeasible="PrimalInfeasible" in st)
    if st not in ("Solved", "AlmostSolved", "MaxIterations", "InsufficientProgress") \
            and status is Status.OPTIMAL:
        status = Status.NUMERICAL_FAILURE
    sign = -1.0 if prob.sense == "max" else 1.0
    return (status, X, s, sign * float(sol.obj_val), sign * float(sol.obj_val_dual),
            int(sol.iterations), float(sol.r_dual))


def _solve_cvxopt(prob, tol_feas, tol_gap, max_iter):
    # The model is read as the *dual* of a cvxopt cone program:
    #   max -h'z - b'y  s.t.  G'z + A'y + c = 0,  z in K
    # z collects inequality slacks, SOC vectors and the embedded PSD blocks,
    # y the free scalars; every model row becomes one column of G.
    from cvxopt import matrix, solvers

    sign = 1.0 if prob.sense == "max" else -1.0
    n_lin = sum(1 for c in prob.constraints if c.cmp != "==")
    soc_dims = [1 + len(q.standard()[0]) for q in prob.socs]
    psd = {name: 2 * n for name, n in prob.blocks.items()}
    psd_off, pos = {}, n_lin + sum(soc_dims)
    for name, m in psd.items():
        psd_off[name] = pos
        pos += m * m
    K = pos
    n_rows = len(prob.constraints) + sum(soc_dims)
    scal = {name: i for i, name in enumerate(prob.scalars)}

    G = np.zeros((K, n_rows))
    A = np.zeros((len(scal), n_rows))
    c = np.zeros(n_rows)

    def put(col, e, factor):
        for name, C in e.blocks.items():
            C = np.asarray(C, dtype=complex)
            C = 0.5 * (C + C.conj().T)
            m = psd[name]
            G[psd_off[name]:psd_off[name] + m * m, col] += factor * 0.5 * embed(C).ravel(order="F")
        for name, a in e.scalars.items():
            A[scal[name], col] += factor * a

    col, slack = 0, 0
    for con in prob.constraints:
        put(col, con.expr, 1.0)
        c[col] = con.expr.const - con.rhs
        if con.cmp == "<=":
            G[slack, col] = 1.0
            slack += 1
        elif con.cmp == ">=":
            G[slack, col] = -1.0
            slack += 1
        elif con.cmp != "==":
            raise ValueError(f"unknown comparison {con.cmp!r}")
        col += 1
    vpos = n_lin
    for q in prob.socs:
        terms, bound = q.standard()
        for e in [bound] + terms:
            G[vpos, col] = 1.0
            put(col, e, -1.0)
            c[col] = -e.const
            vpos += 1
            col += 1

    h = np.zeros(K)
    obj = prob.objective
    for name, C in obj.blocks.items():
        C = np.asarray(C, dtype=complex)
        C = 0.5 * (C + C.conj().T)
        m = psd[name]
        h[psd_off[name]:psd_off[name] + m * m] = -sign * 0.5 * embed(C).ravel(order="F")
    bvec = np.zeros(len(scal))
    for name, a in obj.scalars.items():
        bvec[scal[name]] = -sign * a

    dims = {"l": n_lin, "q": soc_dims, "s": list(psd.values())}
    opts = {"show_progress": False, "feastol": tol_feas, "abstol": tol_gap, "reltol": tol_gap,
            "maxiters": max_iter}
    kw = {}
    if scal:
        kw = {"A": matrix(A), "b": matrix(bvec)}
    sol = solvers.conelp(matrix(c), matrix(G), matrix(h), dims, options=opts, **kw)
    st = sol["status"]
    z = np.array(sol["z"]).ravel() if sol["z"] is not None else np.zeros(K)
    y = np.array(sol["y"]).ravel() if sol["y"] is not None else np.zeros(len(scal))
    X, s = {}, {}
    for name, m in psd.items():
        Y = z[psd_off[name]:psd_off[name] + m * m].reshape((m, m), order="F")
        Y = np.tril(Y) + np.tril(Y, -1).T
        X[name] = extract(Y)
    for name, i in scal.items():
        s[name] = float(y[i])
    status = _status_from(prob, X, s, ok=(st == "optimal"), infeasible=(st == "dual infeasible"))
    if st == "primal infeasible":
        status = Status.NUMERICAL_FAILURE   # model is unbounded
    pobj = sol["dual objective"]
    dobj = sol["primal objective"]
    pobj = sign * pobj if pobj is not None else np.nan
    dobj = sign * dobj if dobj is not None else np.nan
    # the model's dual is cvxopt's primal problem
    dres = sol["primal infeasibility"]
    return (status, X, s, pobj, dobj, int(sol["iterations"]),
            float(dres) if dres is not None else np.nan)


def _solve_ipm(prob, tol_feas, tol_gap, max_iter):
    from . import ipm

    sign = 1.0 if prob.sense == "max" else -1.0
    names = list(prob.blocks)
    blocks = [ipm.Block(n, np.zeros((n, n), dtype=complex)) for n in prob.blocks.values()]
    index = {name: k for k, name in enumerate(names)}
    arrow_base = len(blocks)
    for q in prob.socs:
        r = len(q.terms)
        blocks.append(ipm.Block(r + 1, np.zeros((r + 1, r + 1), dtype=complex)))

    # nonnegative variables are the inequality slacks, scalars stay free
    n_slack = sum(1 for c in prob.constraints if c.cmp != "==")
    scal = {name: i for i, name in enumerate(prob.scalars)}
    nv = n_slack
    rows_A, rows_b, rows_v, rows_f = [], [], [], []

    def expr_row(e, factor):
        mats = {}
        for name, C in e.blocks.items():
            C = np.asarray(C, dtype=complex)
            mats[index[name]] = factor * 0.5 * (C + C.conj().T)
        frow = np.zeros(len(scal))
        for name, a in e.scalars.items():
            frow[scal[name]] += factor * a
        rows_f.append(frow)
        return mats, np.zeros(nv)

    slack = 0
    for con in prob.constraints:
        mats, vrow = expr_row(con.expr, 1.0)
        if con.cmp == "<=":
            vrow[slack] = 1.0
            slack += 1
        elif con.cmp == ">=":
            vrow[slack] = -1.0
            slack += 1
        elif con.cmp != "==":
            raise ValueError(f"unknown comparison {con.cmp!r}")
        rows_A.append(mats)
        rows_v.append(vrow)
        rows_b.append(con.rhs - con.expr.const)

    def unit(n, i, j):
        E = np.zeros((n, n), dtype=complex)
        E[i, j] += 0.5
        E[j, i] += 0.5
        return E

    for qi, q in enumerate(prob.socs):
        k = arrow_base + qi
        n = len(q.terms) + 1
        # [[e0, e^T], [e, e0 I]] is PSD iff ||e|| <= e0, and
        # [[e0, e^T], [e, I]] is PSD iff ||e||^2 <= e0
        for t, e in enumerate([q.bound] + q.terms):
            mats, vrow = expr_row(e, -1.0)
            mats[k] = unit(n, 0, t)
            rows_A.append(mats)
            rows_v.append(vrow)
            rows_b.append(e.const)
        for t in range(1, n):
            if q.squared:
                rows_A.append({k: unit(n, t, t)})
                rows_b.append(1.0)
            else:
                rows_A.append({k: unit(n, t, t) - unit(n, 0, 0)})
                rows_b.append(0.0)
            rows_v.append(np.zeros(nv))
            rows_f.append(np.zeros(len(scal)))
            for u in range(t + 1, n):
                rows_A.append({k: unit(n, t, u)})
                rows_v.append(np.zeros(nv))
                rows_f.append(np.zeros(len(scal)))
                rows_b.append(0.0)

    m = len(rows_b)
    for i, mats in enumerate(rows_A):
        for k, A in mats.items():
            blocks[k].add(i, A, sparse_max=2 * blocks[k].n)
    for name, C in prob.objective.blocks.items():
        C = np.asarray(C, dtype=complex)
        blocks[index[name]].C = -sign * 0.5 * (C + C.conj().T)
    cv = np.zeros(nv)
    cf = np.zeros(len(scal))
    for name, a in prob.objective.scalars.items():
        cf[scal[name]] = -sign * a
    for blk in blocks:
        blk.finalize(m)
    Av = np.array(rows_v).reshape(m, nv)
    Af = np.array(rows_f).reshape(m, len(scal))

    res = ipm.solve_standard(blocks, cv, Av, np.array(rows_b), cf=cf, Af=Af,
                             tol_feas=tol_feas, tol_gap=tol_gap, max_iter=max_iter)
    X = {name: _hermitian(res.X[index[name]]) for name in names}
    s = {name: float(res.u[j]) for name, j in scal.items()}
    status = _status_from(prob, X, s, ok=res.status == "optimal",
                          infeasible=res.status == "infeasible")
    return status, X, s, -sign * res.pobj, -sign * res.dobj, res.iterations, float(res.dinf)


def _hermitian(X):
    return 0.5 * (X + X.conj().T)


_BACKENDS = {"ipm": _solve_ipm, "clarabel": _solve_clarabel, "cvxopt": _solve_cvxopt}


def solve(prob, tol_feas=1e-8, tol_gap=1e-8, max_iter=200, backend="ipm"):
    """Solve an :class:`SdpProblem`; deterministic for identical inputs.

    ``backend="ipm"`` (default) is the built-in complex interior-point method,
    which exploits sparse constraint matrices. ``"cvxopt"`` solves the real
    embedding through cvxopt's dual cone program and ``"clarabel"`` through
    Clarabel directly; both are kept for cross-checking.
    """
    if backend not in _BACKENDS:
        raise ValueError(f"unknown backend {backend!r}, expected one of {sorted(_BACKENDS)}")
    status, X, s, obj, obj_dual, iters, dres = _BACKENDS[backend](prob, tol_feas, tol_gap,
                                                                  max_iter)
    obj = obj + prob.objective.const if np.isfinite(obj) else np.nan
    obj_dual = obj_dual + prob.objective.const if np.isfinite(obj_dual) else np.nan
    if status is Status.OPTIMAL and not np.isfinite(obj):
        obj = prob.objective.evaluate(X, s)
    residuals = {
        "primal": primal_residual(prob, X, s) if status is not Status.INFEASIBLE else np.inf,
        "dual": dres,      # as reported by the backend, informational
        "gap": (abs(obj - obj_dual) / (1.0 + abs(obj) + abs(obj_dual))
                if np.isfinite(obj_dual) else np.inf),
    }
    if status is not Status.INFEASIBLE:
        # one acceptance rule for every backend, checked on the returned point
        ok = residuals["primal"] <= tol_feas and residuals["gap"] <= tol_gap
        status = Status.OPTIMAL if ok else Status.NUMERICAL_FAILURE
    return SdpSolution(status=status, blocks=X, scalars=s, objective=obj, residuals=residuals,
                       iterations=iters)
