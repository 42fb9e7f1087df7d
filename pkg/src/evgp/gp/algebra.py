"""Monomials, posynomials and geometric-program models.

Expressions are immutable.  A :class:`Monomial` is a positive coefficient
times a power product of named variables; a :class:`Posynomial` is a sum of
monomials.  Constraints are stored in normal form, ``p(x) <= 1`` for
inequalities and ``m(x) == 1`` for equalities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from numbers import Real
from typing import Iterable, Mapping, Sequence, Union

__all__ = [
    "GpError",
    "Monomial",
    "Posynomial",
    "Variable",
    "Constraint",
    "VarSpec",
    "GpModel",
    "monomial_arith",
    "leq",
    "geq",
    "eq",
    "build_model",
    "dump_model",
]


class GpError(ValueError):
    """Raised for expressions or models that are not valid GPs."""


def _as_exponents(exps: Mapping[str, float] | Iterable[tuple[str, float]]) -> tuple:
    items = exps.items() if isinstance(exps, Mapping) else exps
    merged: dict[str, float] = {}
    for var, a in items:
        a = float(a)
        if not math.isfinite(a):
            raise GpError(f"non-finite exponent {a!r} on {var!r}")
        merged[var] = merged.get(var, 0.0) + a
    return tuple(sorted((v, a) for v, a in merged.items() if a != 0.0))


@dataclass(frozen=True)
class Monomial:
    """``coeff * prod(x_v ** a_v)`` with ``coeff > 0``."""

    coeff: float
    exps: tuple = ()

    def __post_init__(self):
        c = float(self.coeff)
        if not (c > 0.0 and math.isfinite(c)):
            raise GpError(f"monomial coefficient must be positive and finite, got {self.coeff!r}")
        object.__setattr__(self, "coeff", c)
        object.__setattr__(self, "exps", _as_exponents(self.exps))

    @classmethod
    def var(cls, name: str) -> "Monomial":
        return cls(1.0, ((name, 1.0),))

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.exps)

    def exponent(self, name: str) -> float:
        return dict(self.exps).get(name, 0.0)

    def evaluate(self, x: Mapping[str, float]) -> float:
        out = self.coeff
        for v, a in self.exps:
            out *= float(x[v]) ** a
        return out

    def __mul__(self, other):
        if isinstance(other, Monomial):
            return Monomial(self.coeff * other.coeff, self.exps + other.exps)
        if isinstance(other, Posynomial):
            return other * self
        if isinstance(other, Real):
            return Monomial(self.coeff * float(other), self.exps)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Monomial):
            return self * other ** -1
        if isinstance(other, Real):
            return Monomial(self.coeff / float(other), self.exps)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, Real):
            return float(other) * self ** -1
        return NotImplemented

    def __pow__(self, p):
        p = float(p)
        return Monomial(self.coeff ** p, tuple((v, a * p) for v, a in self.exps))

    def __add__(self, other):
        return Posynomial((self,)) + other

    __radd__ = __add__

    def __le__(self, other):
        return leq(self, other)

    def __ge__(self, other):
        return geq(self, other)

    def __repr__(self):
        return _fmt_monomial(self)


# Variables are just unit monomials with a readable constructor.
def Variable(name: str) -> Monomial:
    return Monomial.var(name)


def _term_key(m: Monomial):
    return (tuple(v for v, _ in m.exps), tuple(a for _, a in m.exps), m.coeff)


@dataclass(frozen=True)
class Posynomial:
    """Sum of monomials, with like terms merged and a canonical term order."""

    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise GpError("posynomial needs at least one term")
        merged: dict[tuple, float] = {}
        for t in terms:
            if not isinstance(t, Monomial):
                raise GpError(f"posynomial term must be a Monomial, got {type(t).__name__}")
            merged[t.exps] = merged.get(t.exps, 0.0) + t.coeff
        canon = sorted((Monomial(c, e) for e, c in merged.items()), key=_term_key)
        object.__setattr__(self, "terms", tuple(canon))

    @property
    def variables(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for t in self.terms:
            for v in t.variables:
                seen[v] = None
        return tuple(seen)

    @property
    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def evaluate(self, x: Mapping[str, float]) -> float:
        return sum(t.evaluate(x) for t in self.terms)

    def __add__(self, other):
        if isinstance(other, Monomial):
            return Posynomial(self.terms + (other,))
        if isinstance(other, Posynomial):
            return Posynomial(self.terms + other.terms)
        if isinstance(other, Real):
            return Posynomial(self.terms + (Monomial(float(other)),))
        return NotImplemented

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (Monomial, Real)):
            return Posynomial(tuple(t * other for t in self.terms))
        if isinstance(other, Posynomial):
            return Posynomial(tuple(a * b for a in self.terms for b in other.terms))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (Monomial, Real)):
            return Posynomial(tuple(t / other for t in self.terms))
        return NotImplemented

    def __le__(self, other):
        return leq(self, other)

    def __ge__(self, other):
        return geq(self, other)

    def __repr__(self):
        return " + ".join(_fmt_monomial(t) for t in self.terms)


Expr = Union[Monomial, Posynomial, Real]


def _to_posy(e: Expr) -> Posynomial:
    if isinstance(e, Posynomial):
        return e
    if isinstance(e, Monomial):
        return Posynomial((e,))
    if isinstance(e, Real):
        return Posynomial((Monomial(float(e)),))
    raise GpError(f"cannot use {type(e).__name__} in a GP expression")


def _to_mono(e: Expr, what: str) -> Monomial:
    if isinstance(e, Monomial):
        return e
    if isinstance(e, Real):
        return Monomial(float(e))
    if isinstance(e, Posynomial) and e.is_monomial:
        return e.terms[0]
    raise GpError(f"{what} must be a monomial")


def monomial_arith(op: str, a: Monomial, b) -> Monomial:
    """Apply ``mul``, ``div`` or ``pow`` to monomials (``b`` is a scalar for pow)."""
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    if op == "pow":
        return a ** b
    raise GpError(f"unknown monomial operation {op!r}")


@dataclass(frozen=True)
class Constraint:
    """A normalized constraint: ``expr <= 1`` (``kind='ineq'``) or ``expr == 1``."""

    expr: Posynomial
    kind: str = "ineq"
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("ineq", "eq"):
            raise GpError(f"constraint kind must be 'ineq' or 'eq', got {self.kind!r}")
        if self.kind == "eq" and not self.expr.is_monomial:
            raise GpError(f"posynomial equality is not a GP constraint ({self.label or 'unlabeled'})")

    def labeled(self, label: str) -> "Constraint":
        return Constraint(self.expr, self.kind, label)


def leq(lhs: Expr, rhs: Expr, label: str = "") -> Constraint:
    """``lhs <= rhs`` with a monomial right-hand side, normalized to ``lhs/rhs <= 1``."""
    rhs_m = _to_mono(rhs, "right-hand side of an inequality")
    return Constraint(_to_posy(lhs) / rhs_m, "ineq", label)


def geq(lhs: Expr, rhs: Expr, label: str = "") -> Constraint:
    return leq(rhs, lhs, label)


def eq(lhs: Expr, rhs: Expr, label: str = "") -> Constraint:
    lp, rp = _to_posy(lhs), _to_posy(rhs)
    if not (lp.is_monomial and rp.is_monomial):
        raise GpError(f"posynomial equality is not a GP constraint ({label or 'unlabeled'})")
    return Constraint(Posynomial((lp.terms[0] / rp.terms[0],)), "eq", label)


@dataclass(frozen=True)
class VarSpec:
    name: str
    lower: float
    upper: float = math.inf

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if not lo > 0.0:
            raise GpError(f"lower bound of {self.name!r} must be > 0, got {lo}")
        if not hi >= lo:
            raise GpError(f"bounds of {self.name!r} are inverted: [{lo}, {hi}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


@dataclass(frozen=True)
class GpModel:
    variables: tuple
    objective: Posynomial
    constraints: tuple
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def eq_constraints(self) -> tuple:
        return tuple(c for c in self.constraints if c.kind == "eq")

    @property
    def ineq_constraints(self) -> tuple:
        return tuple(c for c in self.constraints if c.kind == "ineq")

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def var(self, name: str) -> VarSpec:
        return self.variables[self._index[name]]

    def size(self) -> dict:
        """Counts of variables and constraints (finite bounds count as constraints)."""
        bounds = sum(1 for v in self.variables for b in (v.lower, v.upper) if math.isfinite(b))
        n_eq = len(self.eq_constraints)
        n_ineq = len(self.constraints) - n_eq
        return {
            "variables": len(self.variables),
            "equalities": n_eq,
            "inequalities": n_ineq,
            "bounds": bounds,
            "constraints": n_eq + n_ineq + bounds,
        }

    def with_constraints(self, extra: Sequence[Constraint], variables: Sequence[VarSpec] = ()) -> "GpModel":
        return build_model(tuple(self.variables) + tuple(variables), self.objective,
                           tuple(self.constraints) + tuple(extra))


def build_model(variables: Sequence[VarSpec | tuple], objective: Expr,
                constraints: Sequence[Constraint]) -> GpModel:
    """Validate and freeze a GP.

    ``variables`` holds :class:`VarSpec` entries or ``(name, lower, upper)``
    tuples.  Constraint labels default to ``c<index>`` and must be unique.
    """
    specs = []
    for v in variables:
        specs.append(v if isinstance(v, VarSpec) else VarSpec(*v))
    index: dict[str, int] = {}
    for i, v in enumerate(specs):
        if v.name in index:
            raise GpError(f"variable {v.name!r} declared twice")
        index[v.name] = i

    obj = _to_posy(objective)
    for name in obj.variables:
        if name not in index:
            raise GpError(f"objective uses undeclared variable {name!r}")

    out = []
    labels: set[str] = set()
    for k, c in enumerate(constraints):
        if not isinstance(c, Constraint):
            raise GpError(f"constraint {k} is a {type(c).__name__}, expected Constraint")
        if not c.label:
            c = c.labeled(f"c{k}")
        if c.label in labels:
            raise GpError(f"duplicate constraint label {c.label!r}")
        labels.add(c.label)
        for name in c.expr.variables:
            if name not in index:
                raise GpError(f"constraint {c.label!r} uses undeclared variable {name!r}")
        out.append(c)
    return GpModel(tuple(specs), obj, tuple(out), index)


def _fmt_num(x: float) -> str:
    return f"{x:.12g}"


def _fmt_monomial(m: Monomial) -> str:
    parts = [] if (m.coeff == 1.0 and m.exps) else [_fmt_num(m.coeff)]
    for v, a in m.exps:
        parts.append(v if a == 1.0 else f"{v}^{_fmt_num(a)}")
    return "*".join(parts)


def dump_model(model: GpModel) -> str:
    """Human-readable listing of a model, stable across runs."""
    lines = [f"minimize {model.objective!r}", "subject to"]
    for c in model.constraints:
        op = "<=" if c.kind == "ineq" else "=="
        lines.append(f"  [{c.label}] {c.expr!r} {op} 1")
    lines.append("bounds")
    for v in model.variables:
        hi = "inf" if math.isinf(v.upper) else _fmt_num(v.upper)
        lines.append(f"  {_fmt_num(v.lower)} <= {v.name} <= {hi}")
    return "\n".join(lines) + "\n"
