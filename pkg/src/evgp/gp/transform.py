"""Log-space form of a geometric program.

With ``y = log x`` a monomial becomes the affine function ``log c + a.y``
and a posynomial inequality ``p(x) <= 1`` becomes
``logsumexp(F y + g) <= 0``, which is convex.  Monomial equalities stay
affine equalities ``A y + b = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .algebra import GpModel, Monomial

__all__ = ["ConvexProgram", "log_transform", "affine_of", "logsumexp_groups"]


@dataclass(frozen=True, eq=False)
class ConvexProgram:
    """Log-transformed GP.

    Attributes
    ----------
    var_names : names of the log variables, ``y_i = log x_i``.
    F, g, owner : every monomial term of the objective (owner 0) and of the
        inequality constraints (owner ``k + 1`` for constraint ``k``) as a row
        ``F[r] @ y + g[r]``.  Rows are grouped by owner.
    A, b : affine equalities ``A @ y + b == 0``.
    lb, ub : log-space box (``-inf``/``inf`` where unbounded).
    """

    var_names: tuple
    F: sp.csr_matrix
    g: np.ndarray
    owner: np.ndarray
    ineq_labels: tuple
    A: sp.csr_matrix
    b: np.ndarray
    eq_labels: tuple
    lb: np.ndarray
    ub: np.ndarray

    @property
    def n(self) -> int:
        return len(self.var_names)

    @property
    def n_ineq(self) -> int:
        return len(self.ineq_labels)

    @property
    def n_eq(self) -> int:
        return len(self.eq_labels)

    def functions(self, y: np.ndarray) -> np.ndarray:
        """Objective (index 0) and inequality values at ``y``."""
        return logsumexp_groups(self.F @ y + self.g, self.owner, self.n_ineq + 1)

    def objective(self, y: np.ndarray) -> float:
        return float(self.functions(y)[0])

    def equality_residual(self, y: np.ndarray) -> np.ndarray:
        return self.A @ y + self.b

    def gradients(self, y: np.ndarray) -> sp.csr_matrix:
        """Rows are gradients of objective and inequality functions."""
        u = self.F @ y + self.g
        f = logsumexp_groups(u, self.owner, self.n_ineq + 1)
        p = np.exp(u - f[self.owner])
        S = sp.csr_matrix((p, (self.owner, np.arange(len(p)))), shape=(self.n_ineq + 1, len(p)))
        return (S @ self.F).tocsr()


def logsumexp_groups(u: np.ndarray, owner: np.ndarray, m: int) -> np.ndarray:
    """``log(sum(exp(u[owner == k])))`` for each ``k < m``, max-shifted."""
    umax = np.full(m, -np.inf)
    np.maximum.at(umax, owner, u)
    e = np.exp(u - umax[owner])
    s = np.zeros(m)
    np.add.at(s, owner, e)
    with np.errstate(divide="ignore"):
        return umax + np.log(s)


def affine_of(m: Monomial, index: dict) -> tuple[dict, float]:
    """Sparse coefficients and constant of ``log m`` in log variables."""
    return {index[v]: a for v, a in m.exps}, math.log(m.coeff)


def log_transform(model: GpModel) -> ConvexProgram:
    names = model.var_names
    index = {v: i for i, v in enumerate(names)}

    rows, cols, vals, g, owner = [], [], [], [], []
    r = 0

    def add_terms(posy, k):
        nonlocal r
        for t in posy.terms:
            coefs, const = affine_of(t, index)
            for j, a in coefs.items():
                rows.append(r)
                cols.append(j)
                vals.append(a)
            g.append(const)
            owner.append(k)
            r += 1

    add_terms(model.objective, 0)
    ineq = model.ineq_constraints
    for k, c in enumerate(ineq, start=1):
        add_terms(c.expr, k)
    F = sp.csr_matrix((vals, (rows, cols)), shape=(r, len(names)))

    eqs = model.eq_constraints
    erows, ecols, evals, b = [], [], [], []
    for k, c in enumerate(eqs):
        coefs, const = affine_of(c.expr.terms[0], index)
        for j, a in coefs.items():
            erows.append(k)
            ecols.append(j)
            evals.append(a)
        b.append(const)
    A = sp.csr_matrix((evals, (erows, ecols)), shape=(len(eqs), len(names)))

    lb = np.array([math.log(v.lower) for v in model.variables])
    ub = np.array([math.log(v.upper) if math.isfinite(v.upper) else np.inf for v in model.variables])
    return ConvexProgram(
        var_names=names,
        F=F,
        g=np.asarray(g, dtype=float),
        owner=np.asarray(owner, dtype=np.intp),
        ineq_labels=tuple(c.label for c in ineq),
        A=A,
        b=np.asarray(b, dtype=float),
        eq_labels=tuple(c.label for c in eqs),
        lb=lb,
        ub=ub,
    )
