"""Primal-dual interior-point solver for log-transformed GPs.

Affine equalities are eliminated up front by sparse Gaussian elimination,
which leaves an inequality-only problem in the free log variables.  That
problem is solved with a primal-dual barrier method: Newton steps on the
modified KKT system, backtracking on the residual norm inside a wide
neighbourhood of the central path, and a pure centring step whenever a short
step leaves the iterate off-centre or dual infeasibility lags the gap.  A
phase-I slack problem provides a strictly feasible start when the initial
point is not.
Multipliers of the log-space program are the GP sensitivities.
"""
from __future__ import annotations

import csv
import heapq
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .transform import ConvexProgram

__all__ = [
    "SolverOptions",
    "GpSolution",
    "KKTResiduals",
    "SolverError",
    "solve",
    "kkt_residuals",
    "sensitivities",
    "write_trace_csv",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"

_DENSE_LIMIT = 4_000_000
_DENSE_VARS = 400
_WIDE_NNZ = 64
_CENTRALITY = 1e-3
_LAG = 10.0


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 200
    feasibility_tol: float = 1e-8
    duality_gap_tol: float = 1e-8
    # target barrier weight is barrier_reduction * gap / m each Newton step
    barrier_reduction: float = 0.1
    initial_barrier_weight: float = 1.0
    backtrack_alpha: float = 0.01
    backtrack_beta: float = 0.5
    phase1_max_iterations: int = 100

    def __post_init__(self):
        if self.feasibility_tol <= 0 or self.duality_gap_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.barrier_reduction < 1.0:
            raise ValueError("barrier_reduction must lie in (0, 1)")
        if not (0.0 < self.backtrack_alpha < 0.5 and 0.0 < self.backtrack_beta < 1.0):
            raise ValueError("backtracking constants out of range")
        if self.initial_barrier_weight <= 0:
            raise ValueError("initial_barrier_weight must be positive")
        if self.max_iterations < 1 or self.phase1_max_iterations < 1:
            raise ValueError("iteration limits must be >= 1")


@dataclass(frozen=True)
class KKTResiduals:
    stationarity: float
    primal_feasibility: float
    dual_feasibility: float
    complementarity: float
    duality_gap: float

    def max_violation(self) -> float:
        return max(self.stationarity, self.primal_feasibility, max(0.0, -self.dual_feasibility),
                   self.complementarity)


@dataclass(frozen=True, eq=False)
class GpSolution:
    status: str
    primal: dict
    log_objective: float
    duals: dict
    iterations: int
    kkt: Optional[KKTResiduals] = None
    trace: list = field(default_factory=list)
    certificate: Optional[float] = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def objective(self) -> float:
        return math.exp(self.log_objective)

    def __getitem__(self, name: str) -> float:
        return self.primal[name]


def bound_label(name: str, side: str) -> str:
    return f"{name}.{side}"


# --------------------------------------------------------------------------
# equality elimination


class _Inconsistent(Exception):
    def __init__(self, residual):
        self.residual = residual


@dataclass
class _Reduction:
    free: np.ndarray
    y0: np.ndarray
    Z: sp.csr_matrix
    pivot_rows: list
    pivot_cols: list

    def full(self, z: np.ndarray) -> np.ndarray:
        return self.y0 + self.Z @ z


def _eliminate(A: sp.csr_matrix, b: np.ndarray, n: int) -> _Reduction:
    p = A.shape[0]
    if p == 0:
        return _Reduction(np.arange(n), np.zeros(n), sp.identity(n, format="csr"), [], [])
    A = A.tocsr()
    rows = []
    col_rows = defaultdict(set)
    for i in range(p):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        row = {int(j): float(a) for j, a in zip(A.indices[lo:hi], A.data[lo:hi]) if a != 0.0}
        rows.append(row)
        for j in row:
            col_rows[j].add(i)
    const = [float(x) for x in b]
    heap = [(len(r), i) for i, r in enumerate(rows)]
    heapq.heapify(heap)
    done = [False] * p
    pivots = []
    while heap:
        length, i = heapq.heappop(heap)
        if done[i] or length != len(rows[i]):
            continue
        done[i] = True
        row = rows[i]
        if not row:
            if abs(const[i]) > 1e-9:
                raise _Inconsistent(const[i])
            continue
        amax = max(abs(a) for a in row.values())
        piv = min((j for j, a in row.items() if abs(a) >= 0.1 * amax),
                  key=lambda j: (len(col_rows[j]), j))
        a_p = row[piv]
        expr = {j: -a / a_p for j, a in row.items() if j != piv}
        c_p = -const[i] / a_p
        for j in row:
            col_rows[j].discard(i)
        pivots.append((piv, i, expr, c_p))
        for r in sorted(col_rows[piv]):
            rr = rows[r]
            f = rr.pop(piv)
            for j, e in expr.items():
                v = rr.get(j, 0.0) + f * e
                if abs(v) <= 1e-12 * max(1.0, abs(f * e)):
                    if j in rr:
                        del rr[j]
                        col_rows[j].discard(r)
                else:
                    if j not in rr:
                        col_rows[j].add(r)
                    rr[j] = v
            const[r] += f * c_p
            heapq.heappush(heap, (len(rr), r))
        col_rows[piv].clear()

    final: dict[int, tuple[dict, float]] = {}
    for piv, _, expr, c in reversed(pivots):
        d: dict[int, float] = {}
        cc = c
        for j, e in expr.items():
            if j in final:
                dj, cj = final[j]
                cc += e * cj
                for k, v in dj.items():
                    d[k] = d.get(k, 0.0) + e * v
            else:
                d[j] = d.get(j, 0.0) + e
        final[piv] = (d, cc)

    pivot_cols = [pv for pv, _, _, _ in pivots]
    pivoted = set(pivot_cols)
    free = np.array([j for j in range(n) if j not in pivoted], dtype=np.intp)
    zpos = {int(j): k for k, j in enumerate(free)}
    zr, zc, zv = [], [], []
    y0 = np.zeros(n)
    for j in free:
        zr.append(j)
        zc.append(zpos[int(j)])
        zv.append(1.0)
    for piv, (d, cc) in final.items():
        y0[piv] = cc
        for k, v in d.items():
            if v != 0.0:
                zr.append(piv)
                zc.append(zpos[k])
                zv.append(v)
    Z = sp.csr_matrix((zv, (zr, zc)), shape=(n, len(free)))
    return _Reduction(free, y0, Z, [i for _, i, _, _ in pivots], pivot_cols)


# --------------------------------------------------------------------------
# inequality-only barrier problem


class _Functions:
    """``f_k(z) = logsumexp(F z + g)`` over term groups; ``k = 0`` is the objective."""

    def __init__(self, F, g, owner, nfun):
        order = np.argsort(owner, kind="stable")
        F = F[order] if sp.issparse(F) else F[order]
        self.g = np.asarray(g, dtype=float)[order]
        self.owner = np.asarray(owner)[order]
        self.nfun = nfun
        self.starts = np.searchsorted(self.owner, np.arange(nfun))
        counts = np.bincount(self.owner, minlength=nfun)
        if np.any(counts == 0):
            raise SolverError("function without terms")
        self.multi = counts > 1
        self.term_multi = self.multi[self.owner]
        self.nvar = F.shape[1]
        self.dense = self.nvar <= _DENSE_VARS and F.shape[0] * max(self.nvar, 1) <= _DENSE_LIMIT
        if self.dense:
            self.F = F.toarray() if sp.issparse(F) else np.asarray(F, dtype=float)
        else:
            self.F = sp.csr_matrix(F)
            # functions touching many variables go into a low-rank correction
            S = sp.csr_matrix((np.ones(len(self.owner)), (self.owner, np.arange(len(self.owner)))),
                              shape=(nfun, len(self.owner)))
            pattern = (S @ (self.F != 0).astype(float)).tocsr()
            self.wide = np.diff(pattern.indptr) > _WIDE_NNZ

    def values(self, z):
        u = self.F @ z + self.g
        umax = np.maximum.reduceat(u, self.starts)
        e = np.exp(u - umax[self.owner])
        s = np.add.reduceat(e, self.starts)
        return umax + np.log(s), e / s[self.owner]

    def grads(self, p):
        if self.dense:
            return np.add.reduceat(p[:, None] * self.F, self.starts, axis=0)
        S = sp.csr_matrix((p, (self.owner, np.arange(len(p)))), shape=(self.nfun, len(p)))
        return (S @ self.F).tocsr()

    def hessian(self, p, G, fun_weight, fun_extra):
        """``sum_k w_k hess f_k + G^T diag(extra) G``."""
        omega = fun_weight[self.owner] * p * self.term_multi
        d = fun_extra - fun_weight * self.multi
        if self.dense:
            H = (self.F.T * omega) @ self.F + (G.T * d) @ G
            return 0.5 * (H + H.T)
        narrow = ~self.wide
        A = self.F.T @ sp.diags(omega) @ self.F
        Gn = G[narrow]
        A = (A + Gn.T @ sp.diags(d[narrow]) @ Gn).tocsc()
        U = G[self.wide].T.toarray()
        return _LowRankHessian(A, U, d[self.wide])


@dataclass
class _LowRankHessian:
    """``A + U diag(D) U^T`` with sparse ``A``."""

    A: sp.csc_matrix
    U: np.ndarray
    D: np.ndarray

    def __matmul__(self, x):
        return self.A @ x + self.U @ (self.D * (self.U.T @ x))


def _newton_solve(H, rhs):
    if isinstance(H, _LowRankHessian):
        return _lowrank_solve(H, rhs)
    n = H.shape[0]
    scale = max(1.0, float(np.max(np.abs(np.diag(H))))) if n else 1.0
    reg = 0.0
    for _ in range(8):
        try:
            c = la.cho_factor(H + reg * np.eye(n), lower=False, check_finite=False)
            x = la.cho_solve(c, rhs, check_finite=False)
            if np.all(np.isfinite(x)):
                return x
        except la.LinAlgError:
            pass
        reg = scale * (1e-14 if reg == 0.0 else reg / scale * 100.0)
    return np.linalg.lstsq(H, rhs, rcond=None)[0]


def _lowrank_solve(H: _LowRankHessian, rhs):
    """Woodbury solve with one step of iterative refinement."""
    n = H.A.shape[0]
    diag = np.abs(H.A.diagonal())
    scale = max(1.0, float(diag.max(initial=0.0)))
    reg = 0.0
    for _ in range(8):
        try:
            A = H.A if reg == 0.0 else (H.A + reg * sp.identity(n, format="csc")).tocsc()
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
            AU = lu.solve(H.U) if H.U.shape[1] else np.zeros((n, 0))
            K = np.eye(H.U.shape[1]) + H.D[:, None] * (H.U.T @ AU)

            def apply(b):
                y = lu.solve(b)
                if H.U.shape[1]:
                    y = y - AU @ np.linalg.solve(K, H.D * (H.U.T @ y))
                return y

            x = apply(rhs)
            x = x + apply(rhs - H @ x)
            if np.all(np.isfinite(x)):
                return x
        except (RuntimeError, np.linalg.LinAlgError):
            pass
        reg = scale * (1e-14 if reg == 0.0 else reg / scale * 100.0)
    raise SolverError("Newton system could not be factorized")


def _primal_dual(fun: _Functions, z, opts: SolverOptions, stage: int, trace: list,
                 max_iter: int, stop=None):
    """Minimize ``f_0`` subject to ``f_k <= 0``; ``z`` must be strictly feasible."""
    f, p = fun.values(z)
    m = fun.nfun - 1
    lam = 1.0 / (opts.initial_barrier_weight * -f[1:])
    mu = 1.0 / opts.barrier_reduction
    alpha, beta = opts.backtrack_alpha, opts.backtrack_beta
    feas_tol = 0.5 * opts.feasibility_tol
    gap_tol = 0.5 * opts.duality_gap_tol
    status = ITERATION_LIMIT
    it = 0
    last_step = 1.0
    ref = None
    while True:
        G = fun.grads(p)
        g0 = G[0] if fun.dense else G[0].toarray().ravel()
        G1 = G[1:]
        r_dual = g0 + G1.T @ lam
        gap = float(-f[1:] @ lam)
        rd_norm = float(np.linalg.norm(r_dual))
        if ref is None:
            ref = max(rd_norm, 1e-300) / max(gap, 1e-300)
        trace.append({"stage": stage, "newton_iter": it, "objective": float(f[0]),
                      "gap": gap, "step_len": 0.0, "dual_res": rd_norm})
        if np.max(np.abs(r_dual), initial=0.0) <= feas_tol and gap <= gap_tol:
            status = OPTIMAL
            break
        if stop is not None and stop(z, f):
            status = "stopped"
            break
        if it >= max_iter:
            break
        it += 1
        # after a short step from an off-centre point, recentre before pushing the barrier weight
        comp = -lam * f[1:]
        centred = np.min(comp) >= 0.1 * gap / m
        # dual infeasibility lagging behind the gap: hold the barrier weight
        lagging = rd_norm > _LAG * ref * gap
        sigma = 1.0 if (lagging or (last_step < 0.2 and not centred)) else 1.0 / mu
        t = m / (sigma * gap) if gap > 0 else 1e16
        fi = f[1:]
        weight = np.concatenate(([1.0], lam))
        extra = np.concatenate(([0.0], lam / -fi))
        H = fun.hessian(p, G, weight, extra)
        rhs = g0 + (G1.T @ (1.0 / -fi)) / t
        dz = _newton_solve(H, -rhs)
        Gdz = G1 @ dz
        r_cent = -lam * fi - 1.0 / t
        dlam = -(lam / fi) * Gdz + r_cent / fi

        def resid(r_d, lam_, f_):
            return math.sqrt(float(r_d @ r_d) + float(np.sum((-lam_ * f_ - 1.0 / t) ** 2)))

        r0 = resid(r_dual, lam, fi)
        neg = dlam < 0
        s = min(1.0, float(np.min(-lam[neg] / dlam[neg]))) if np.any(neg) else 1.0
        s *= 0.99
        accepted = False
        for _ in range(60):
            z_new = z + s * dz
            f_new, p_new = fun.values(z_new)
            lam_new = lam + s * dlam
            comp = -lam_new * f_new[1:]
            # stay in a wide neighbourhood of the central path
            if (np.all(f_new[1:] < 0) and np.all(np.isfinite(f_new))
                    and np.min(comp) >= _CENTRALITY * float(np.sum(comp)) / m):
                G_new = fun.grads(p_new)
                g0n = G_new[0] if fun.dense else G_new[0].toarray().ravel()
                rd_new = g0n + G_new[1:].T @ lam_new
                gap_new = float(comp.sum())
                if (resid(rd_new, lam_new, f_new[1:]) <= (1.0 - alpha * s) * r0
                        and np.linalg.norm(rd_new) <= _LAG * ref * max(gap_new, gap_tol)):
                    accepted = True
                    break
            s *= beta
            if s < 1e-12:
                break
        trace[-1]["step_len"] = s if accepted else 0.0
        last_step = s if accepted else 0.0
        if not accepted:
            # no progress possible at this precision
            if np.max(np.abs(r_dual), initial=0.0) <= 1e3 * feas_tol and gap <= 1e3 * gap_tol:
                status = OPTIMAL
            break
        z, lam, f, p = z_new, lam_new, f_new, p_new
    return z, lam, f, status, it


# --------------------------------------------------------------------------


def _reduced_functions(program: ConvexProgram, red: _Reduction):
    """Objective, inequalities and finite bounds as functions of the free variables."""
    Fz = (program.F @ red.Z).tocsr()
    gz = program.g + program.F @ red.y0
    blocks_F = [Fz]
    blocks_g = [gz]
    owners = [program.owner]
    labels = list(program.ineq_labels)
    k = program.n_ineq + 1
    Zc = red.Z.tocsr()
    lo_idx = np.nonzero(np.isfinite(program.lb))[0]
    hi_idx = np.nonzero(np.isfinite(program.ub))[0]
    if len(lo_idx):
        blocks_F.append(-Zc[lo_idx])
        blocks_g.append(program.lb[lo_idx] - red.y0[lo_idx])
        owners.append(np.arange(k, k + len(lo_idx)))
        labels += [bound_label(program.var_names[j], "lower") for j in lo_idx]
        k += len(lo_idx)
    if len(hi_idx):
        blocks_F.append(Zc[hi_idx])
        blocks_g.append(red.y0[hi_idx] - program.ub[hi_idx])
        owners.append(np.arange(k, k + len(hi_idx)))
        labels += [bound_label(program.var_names[j], "upper") for j in hi_idx]
        k += len(hi_idx)
    F = sp.vstack(blocks_F).tocsr()
    g = np.concatenate(blocks_g)
    owner = np.concatenate(owners)
    return F, g, owner, k, labels


def _initial_point(program: ConvexProgram, red: _Reduction, x0: Optional[Mapping[str, float]]):
    lb, ub = program.lb, program.ub
    y = np.where(np.isfinite(lb) & np.isfinite(ub), 0.5 * (lb + ub),
                 np.where(np.isfinite(lb), lb + 1.0, np.where(np.isfinite(ub), ub - 1.0, 0.0)))
    if x0:
        for j, name in enumerate(program.var_names):
            if name in x0 and x0[name] > 0:
                y[j] = math.log(x0[name])
    return y[red.free].astype(float)


def solve(program: ConvexProgram, options: Optional[SolverOptions] = None,
          x0: Optional[Mapping[str, float]] = None) -> GpSolution:
    """Solve a log-transformed GP to KKT optimality.

    ``x0`` optionally supplies a starting point in GP space (e.g. the primal
    of a previous, similar solve).
    """
    opts = options or SolverOptions()
    trace: list = []
    try:
        red = _eliminate(program.A, program.b, program.n)
    except _Inconsistent as exc:
        return GpSolution(INFEASIBLE, {}, math.nan, {}, 0, trace=trace, certificate=abs(exc.residual))

    F, g, owner, nfun, labels = _reduced_functions(program, red)
    # constant functions (no dependence on the free variables) carry no barrier
    row_nnz = np.diff(F.tocsr().indptr)
    fun_nnz = np.bincount(owner, weights=row_nnz, minlength=nfun)
    const_fun = fun_nnz == 0
    const_fun[0] = False
    keep_terms = ~const_fun[owner]
    const_vals = {}
    if np.any(const_fun):
        cf = np.nonzero(const_fun)[0]
        vals = _group_lse(g, owner, nfun)
        for k in cf:
            if vals[k] > opts.feasibility_tol:
                return GpSolution(INFEASIBLE, {}, math.nan, {}, 0, trace=trace, certificate=float(vals[k]))
            const_vals[k] = vals[k]
    live = np.nonzero(~const_fun)[0]
    remap = np.full(nfun, -1)
    remap[live] = np.arange(len(live))
    fun = _Functions(F[keep_terms], g[keep_terms], remap[owner[keep_terms]], len(live))

    z = _initial_point(program, red, x0)
    f, _ = fun.values(z)
    iterations = 0
    if len(live) > 1 and not np.all(f[1:] < 0):
        z, ok, it1, cert = _phase1(fun, z, opts, trace)
        iterations += it1
        if not ok:
            return GpSolution(INFEASIBLE, {}, math.nan, {}, iterations, trace=trace, certificate=cert)

    if len(live) > 1:
        z, lam_live, f, status, it2 = _primal_dual(fun, z, opts, 2, trace, opts.max_iterations)
        iterations += it2
    else:
        raise SolverError("problem has no inequality constraints or bounds; GP is unbounded or trivial")

    y = red.full(z)
    lam = np.zeros(nfun - 1)
    lam[live[1:] - 1] = lam_live
    duals = dict(zip(labels, lam.tolist()))
    nu = _equality_duals(program, red, y, lam)
    duals.update(zip(program.eq_labels, nu.tolist()))
    primal = dict(zip(program.var_names, np.exp(y).tolist()))
    sol = GpSolution(status, primal, float(f[0]), duals, iterations, trace=trace)
    kkt = kkt_residuals(program, sol)
    return GpSolution(status, primal, float(f[0]), duals, iterations, kkt=kkt, trace=trace)


def _group_lse(u, owner, m):
    from .transform import logsumexp_groups
    return logsumexp_groups(u, owner, m)


def _phase1(fun: _Functions, z0, opts: SolverOptions, trace):
    """Find a strictly feasible point by minimizing a common slack ``s >= -1``."""
    n = fun.nvar
    cons = fun.owner > 0
    Fc = fun.F[cons]
    if fun.dense:
        F1 = np.hstack([Fc, -np.ones((Fc.shape[0], 1))])
        obj = np.zeros((1, n + 1))
        obj[0, n] = 1.0
        cap = np.zeros((1, n + 1))
        cap[0, n] = -1.0
        F = np.vstack([obj, F1, cap])
    else:
        F1 = sp.hstack([Fc, -np.ones((Fc.shape[0], 1))])
        obj = sp.csr_matrix(([1.0], ([0], [n])), shape=(1, n + 1))
        cap = sp.csr_matrix(([-1.0], ([0], [n])), shape=(1, n + 1))
        F = sp.vstack([obj, F1, cap]).tocsr()
    g = np.concatenate(([0.0], fun.g[cons], [-1.0]))
    owner = np.concatenate(([0], fun.owner[cons], [fun.nfun]))
    ph = _Functions(F, g, owner, fun.nfun + 1)
    f0, _ = fun.values(z0)
    s0 = max(float(np.max(f0[1:])), -0.5) + 1.0
    w = np.concatenate((z0, [s0]))

    def stop(wz, fv):
        return wz[-1] <= -0.5

    w, _, fv, status, it = _primal_dual(ph, w, opts, 1, trace, opts.phase1_max_iterations, stop)
    z = w[:-1]
    f, _ = fun.values(z)
    fmax = float(np.max(f[1:]))
    if fmax < 0:
        return z, True, it, fmax
    return z, False, it, fmax


def _equality_duals(program: ConvexProgram, red: _Reduction, y, lam) -> np.ndarray:
    nu = np.zeros(program.n_eq)
    if not red.pivot_rows:
        return nu
    r = _lagrangian_grad_no_eq(program, y, lam)
    AB = program.A[red.pivot_rows][:, red.pivot_cols].tocsc()
    sol = spla.spsolve(AB.T.tocsc(), -r[red.pivot_cols])
    nu[red.pivot_rows] = np.atleast_1d(sol)
    return nu


def _lagrangian_grad_no_eq(program: ConvexProgram, y, lam_all) -> np.ndarray:
    """Gradient of objective + inequalities + bounds (bounds follow inequalities in ``lam_all``)."""
    G = program.gradients(y)
    m = program.n_ineq
    r = np.asarray(G[0].toarray()).ravel() + G[1:].T @ lam_all[:m]
    k = m
    lo_idx = np.nonzero(np.isfinite(program.lb))[0]
    hi_idx = np.nonzero(np.isfinite(program.ub))[0]
    r[lo_idx] -= lam_all[k:k + len(lo_idx)]
    k += len(lo_idx)
    r[hi_idx] += lam_all[k:k + len(hi_idx)]
    return r


def kkt_residuals(program: ConvexProgram, solution: GpSolution) -> KKTResiduals:
    """KKT residuals of ``solution`` recomputed from the program alone.

    The Lagrangian is ``f_0 + sum(lam_k f_k) + sum(nu_j h_j)`` in log space,
    with box bounds entering as ``lb - y <= 0`` and ``y - ub <= 0``.
    """
    y = np.array([math.log(solution.primal[v]) for v in program.var_names])
    f = program.functions(y)
    lam = np.array([solution.duals.get(lbl, 0.0) for lbl in program.ineq_labels])
    lo_idx = np.nonzero(np.isfinite(program.lb))[0]
    hi_idx = np.nonzero(np.isfinite(program.ub))[0]
    lam_lo = np.array([solution.duals.get(bound_label(program.var_names[j], "lower"), 0.0) for j in lo_idx])
    lam_hi = np.array([solution.duals.get(bound_label(program.var_names[j], "upper"), 0.0) for j in hi_idx])
    nu = np.array([solution.duals.get(lbl, 0.0) for lbl in program.eq_labels])

    r = _lagrangian_grad_no_eq(program, y, np.concatenate((lam, lam_lo, lam_hi)))
    if program.n_eq:
        r = r + program.A.T @ nu
    c_lo = program.lb[lo_idx] - y[lo_idx]
    c_hi = y[hi_idx] - program.ub[hi_idx]
    cons = np.concatenate((f[1:], c_lo, c_hi))
    lam_all = np.concatenate((lam, lam_lo, lam_hi))
    h = program.equality_residual(y) if program.n_eq else np.zeros(0)
    primal = max(float(np.max(cons, initial=0.0)), float(np.max(np.abs(h), initial=0.0)), 0.0)
    return KKTResiduals(
        stationarity=float(np.max(np.abs(r), initial=0.0)),
        primal_feasibility=primal,
        dual_feasibility=float(np.min(lam_all, initial=0.0)),
        complementarity=float(np.max(np.abs(lam_all * cons), initial=0.0)),
        duality_gap=float(-(lam_all @ cons)),
    )


def sensitivities(solution: GpSolution) -> dict:
    """Log-log sensitivity of the optimal objective to each constraint.

    Scaling constraint ``k`` as ``c * p_k(x) <= 1`` changes the optimal
    ``log f_0`` by ``duals[k] * d log c`` to first order.
    """
    if solution.status != OPTIMAL:
        raise SolverError(f"sensitivities need an optimal solution, status is {solution.status!r}")
    return dict(solution.duals)


def write_trace_csv(solution: GpSolution, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "newton_iter", "objective", "gap", "step_len", "dual_res"])
        for row in solution.trace:
            w.writerow([row["stage"], row["newton_iter"], f"{row['objective']:.12g}",
                        f"{row['gap']:.12g}", f"{row['step_len']:.12g}", f"{row.get('dual_res', 0.0):.12g}"])
