"""Motor and transmission sizing as a geometric program.

Units throughout: torque N*m, speed rpm, power W, mass kg.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cycles import LoadScenario, VehicleParams, mass_split
from .gp import (GpModel, GpSolution, SolverOptions, VarSpec, Variable, build_model, eq, leq,
                 log_transform, solve)

RPM = 2.0 * math.pi / 60.0

__all__ = [
    "MotorParams",
    "Topology",
    "OperatingPoint",
    "DesignResult",
    "TopologyError",
    "build_design_model",
    "solve_design",
    "design",
    "efficiency_map",
    "motor_efficiency",
    "write_efficiency_csv",
    "variable_mass_extension",
    "ratio_name",
    "feasible_point",
    "unpack",
    "round12",
]


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class MotorParams:
    hyperbola_const: float = 0.4161
    max_speed: float = 10000.0
    ref_power: float = 100e3
    loss_ref_speed: float = 787.35
    loss_ref_torque: float = 1566.67
    loss_ref_torque_sq: float = 9904.85
    loss_ref_const: float = 1059.34
    speed_exponent: float = 3.93
    power_cap: float = 8000e3

    def __post_init__(self):
        if not 0.0 < self.hyperbola_const <= 1.0:
            raise ValueError("hyperbola_const must lie in (0, 1]")
        for name in ("max_speed", "ref_power", "loss_ref_speed", "loss_ref_torque", "loss_ref_torque_sq",
                     "loss_ref_const", "speed_exponent", "power_cap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def corner_speed(self) -> float:
        return self.hyperbola_const * self.max_speed

    def max_torque(self, k: float) -> float:
        """Torque limit of a motor scaled by power factor ``k``."""
        return k * self.ref_power / (self.max_speed * RPM * self.hyperbola_const)


@dataclass(frozen=True)
class Topology:
    """Transmission layout.

    ``kind`` is ``'single'``, ``'cvt'`` or ``'fixed'``.  For ``'fixed'``,
    ``assignment`` gives the gear (1-based) of every non-guard scenario in
    order; a ``0`` entry leaves that scenario on its own free ratio, which is
    how partially fixed relaxations are expressed.  ``guard_gears`` maps
    guard scenarios (in order) to gears; by default the slowest guard goes to
    gear 1 and the others to the last gear.  ``link_ratios`` gives every fixed
    scenario its own ratio variable tied to its gear by an equality, so the
    equality duals price moving that scenario.
    """

    kind: str = "single"
    ratio_bounds: tuple = (1.0, 18.0)
    gear_count: int = 1
    assignment: Optional[tuple] = None
    guard_gears: Optional[tuple] = None
    link_ratios: bool = False
    order_gears: bool = True

    def __post_init__(self):
        if self.kind not in ("single", "cvt", "fixed"):
            raise TopologyError(f"unknown topology {self.kind!r}")
        lo, hi = self.ratio_bounds
        if not 0 < lo <= hi:
            raise TopologyError(f"invalid ratio bounds {self.ratio_bounds}")
        object.__setattr__(self, "ratio_bounds", (float(lo), float(hi)))
        if self.kind == "fixed":
            if self.gear_count < 1:
                raise TopologyError("gear_count must be >= 1")
            if self.assignment is None:
                raise TopologyError("fixed topology needs an assignment")
            a = tuple(int(g) for g in self.assignment)
            if any(g < 0 or g > self.gear_count for g in a):
                raise TopologyError(f"assignment entries must lie in 0..{self.gear_count}")
            object.__setattr__(self, "assignment", a)
        if self.guard_gears is not None:
            gg = tuple(int(g) for g in self.guard_gears)
            if any(g < 1 or g > max(self.gear_count, 1) for g in gg):
                raise TopologyError("guard gears out of range")
            object.__setattr__(self, "guard_gears", gg)

    @classmethod
    def single(cls, ratio_bounds=(1.0, 18.0)) -> "Topology":
        return cls("single", ratio_bounds)

    @classmethod
    def cvt(cls, ratio_bounds=(1.0, 18.0)) -> "Topology":
        return cls("cvt", ratio_bounds)

    @classmethod
    def fixed(cls, assignment: Sequence[int], gear_count: int = 2, ratio_bounds=(1.0, 18.0),
              guard_gears: Optional[Sequence[int]] = None, link_ratios: bool = False,
              order_gears: bool = True) -> "Topology":
        return cls("fixed", ratio_bounds, gear_count, tuple(assignment),
                   None if guard_gears is None else tuple(guard_gears), link_ratios, order_gears)


@dataclass(frozen=True)
class OperatingPoint:
    wheel_torque: float
    wheel_speed: float
    weight: float
    is_guard: bool
    ratio: float
    torque: float
    speed: float
    shaft_power: float
    input_power: float
    loss_speed: float
    loss_torque: float
    loss_torque_sq: float
    loss_const: float

    @property
    def losses(self) -> float:
        return self.loss_speed + self.loss_torque + self.loss_torque_sq + self.loss_const

    @property
    def efficiency(self) -> float:
        return self.shaft_power / (self.shaft_power + self.losses)


@dataclass(frozen=True)
class DesignResult:
    status: str
    topology: str
    ratios: tuple
    motor_max_torque: float
    motor_max_power: float
    power_factor: float
    avg_input_power: float
    log_objective: float
    operating_points: tuple
    tight: bool
    warnings: tuple
    iterations: int
    solution: GpSolution = field(repr=False)
    model_size: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "topology": self.topology,
            "ratios": list(self.ratios),
            "motor_max_torque_nm": self.motor_max_torque,
            "motor_max_power_w": self.motor_max_power,
            "power_factor": self.power_factor,
            "avg_input_power_w": self.avg_input_power,
            "log_objective": self.log_objective,
            "tight": self.tight,
            "warnings": list(self.warnings),
            "solver": {"iterations": self.iterations, "kkt_max_violation": self.solution.kkt.max_violation()
                       if self.solution.kkt is not None else None},
            "model_size": dict(self.model_size),
            "extra": dict(self.extra),
            "scenarios": [
                {"wheel_torque_nm": p.wheel_torque, "wheel_speed_rpm": p.wheel_speed, "weight": p.weight,
                 "is_guard": p.is_guard, "ratio": p.ratio, "motor_torque_nm": p.torque,
                 "motor_speed_rpm": p.speed, "shaft_power_w": p.shaft_power, "input_power_w": p.input_power,
                 "loss_speed_w": p.loss_speed, "loss_torque_w": p.loss_torque,
                 "loss_torque_sq_w": p.loss_torque_sq, "loss_const_w": p.loss_const}
                for p in self.operating_points
            ],
        }

    def to_json(self) -> str:
        return json.dumps(round12(self.to_dict()), indent=2, sort_keys=True) + "\n"


def round12(obj):
    """Floats rounded to 12 significant digits (non-finite become ``None``), recursively."""
    if isinstance(obj, float):
        return float(f"{obj:.12g}") if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round12(v) for v in obj]
    return obj


def ratio_name(topo: Topology, t: int, gear: Optional[int]) -> str:
    """Name of the ratio variable seen by scenario ``t``."""
    if topo.kind == "single":
        return "i"
    if topo.kind == "cvt" or gear == 0 or topo.link_ratios:
        return f"r[{t}]"
    return f"i[{gear}]"


def _scenario_gears(scenarios: Sequence[LoadScenario], topo: Topology) -> list[Optional[int]]:
    if topo.kind != "fixed":
        return [None] * len(scenarios)
    base = [t for t, s in enumerate(scenarios) if not s.is_guard]
    guards = [t for t, s in enumerate(scenarios) if s.is_guard]
    if len(topo.assignment) != len(base):
        raise TopologyError(f"assignment covers {len(topo.assignment)} scenarios, expected {len(base)}")
    gears: list[Optional[int]] = [None] * len(scenarios)
    for t, g in zip(base, topo.assignment):
        gears[t] = g
    if topo.guard_gears is not None:
        if len(topo.guard_gears) != len(guards):
            raise TopologyError("guard_gears must cover every guard scenario")
        gg = topo.guard_gears
    else:
        slowest = min(guards, key=lambda t: scenarios[t].speed) if guards else None
        gg = tuple(1 if t == slowest else topo.gear_count for t in guards)
    for t, g in zip(guards, gg):
        gears[t] = g
    return gears


def build_design_model(scenarios: Sequence[LoadScenario], vp: VehicleParams, mp: MotorParams,
                       topo: Topology) -> GpModel:
    if not scenarios:
        raise TopologyError("no scenarios")
    for s in scenarios:
        if not (s.torque > 0 and s.speed > 0):
            raise TopologyError("scenario torque and speed must be positive")
    gears = _scenario_gears(scenarios, topo)
    lo, hi = topo.ratio_bounds
    Nbar, A = mp.max_speed, mp.hyperbola_const
    eta = vp.gearbox_eff

    tbar, pbar, k, pavg = (Variable(n) for n in ("tbar", "pbar", "k", "pavg"))
    vars_ = [VarSpec("tbar", 1e-2, 1e5), VarSpec("pbar", 1.0, 1e8), VarSpec("k", 1e-6, 1e3),
             VarSpec("pavg", 1e-3, mp.power_cap)]
    cons = []

    if topo.kind == "single":
        vars_.append(VarSpec("i", lo, hi))
    elif topo.kind == "fixed":
        for g in range(1, topo.gear_count + 1):
            vars_.append(VarSpec(f"i[{g}]", lo, hi))
        if topo.order_gears:
            for g in range(1, topo.gear_count):
                cons.append(leq(Variable(f"i[{g + 1}]"), Variable(f"i[{g}]"), f"gear_order[{g}]"))

    cons.append(eq(pbar, Nbar * RPM * A * tbar, "rated_power"))
    cons.append(eq(k, pbar / mp.ref_power, "power_factor"))

    avg_terms = []
    for t, s in enumerate(scenarios):
        rn = ratio_name(topo, t, gears[t])
        if rn.startswith("r["):
            vars_.append(VarSpec(rn, lo, hi))
            if topo.kind == "fixed" and gears[t]:
                cons.append(eq(Variable(rn), Variable(f"i[{gears[t]}]"), f"gear_link[{t}]"))
        r = Variable(rn)
        tM, nM, pM, pin = (Variable(f"{n}[{t}]") for n in ("tM", "nM", "pM", "pin"))
        L1, L2, L3, Lc = (Variable(f"{n}[{t}]") for n in ("pL1", "pL2", "pL3", "pLc"))
        vars_ += [VarSpec(f"tM[{t}]", 1e-9, 1e6), VarSpec(f"nM[{t}]", 1e-9, 1e6),
                  VarSpec(f"pM[{t}]", 1e-20, 1e10), VarSpec(f"pin[{t}]", 1e-3)]
        vars_ += [VarSpec(f"{n}[{t}]", 1e-40, 1e10) for n in ("pL1", "pL2", "pL3", "pLc")]
        cons += [
            eq(tM * r * eta, s.torque, f"torque_link[{t}]"),
            eq(nM, r * s.speed, f"speed_link[{t}]"),
            leq(nM * RPM * tM, pbar, f"power_limit[{t}]"),
            leq(nM, Nbar, f"speed_limit[{t}]"),
            leq(tM, tbar, f"torque_limit[{t}]"),
            eq(L1, k * mp.loss_ref_speed * (tM / tbar) * (nM / (Nbar * A)) ** mp.speed_exponent,
               f"loss_speed[{t}]"),
            eq(L2, k * mp.loss_ref_torque * (tM / tbar), f"loss_torque[{t}]"),
            eq(L3, k * mp.loss_ref_torque_sq * (tM / tbar) ** 2, f"loss_torque_sq[{t}]"),
            eq(Lc, k * mp.loss_ref_const, f"loss_const[{t}]"),
            eq(pM, tM * RPM * nM, f"shaft_power[{t}]"),
            leq(pM + L1 + L2 + L3 + Lc, pin, f"input_power[{t}]"),
            leq(pin, mp.power_cap, f"input_cap[{t}]"),
        ]
        if not s.is_guard and s.weight > 0:
            avg_terms.append(s.weight * pin)
    if not avg_terms:
        raise TopologyError("no weighted scenarios")
    total = avg_terms[0]
    for term in avg_terms[1:]:
        total = total + term
    cons.insert(0, leq(total, pavg, "avg_power"))
    return build_model(vars_, pavg, cons)


def _n_scenarios(model: GpModel) -> int:
    return sum(1 for v in model.variables if v.name.startswith("tM["))


def solve_design(model: GpModel, options: Optional[SolverOptions] = None,
                 scenarios: Optional[Sequence[LoadScenario]] = None, x0=None,
                 tight_tol: float = 1e-6) -> DesignResult:
    """Solve a design model and unpack it.

    ``scenarios`` (the list the model was built from) fills in wheel loads and
    guard flags in the per-scenario table; without it they are inferred.
    """
    program = log_transform(model)
    sol = solve(program, options, x0)
    return unpack(model, sol, scenarios, tight_tol)


def unpack(model: GpModel, sol: GpSolution, scenarios: Optional[Sequence[LoadScenario]] = None,
           tight_tol: float = 1e-6) -> DesignResult:
    x = sol.primal
    n = _n_scenarios(model)
    names = set(model.var_names)
    msgs = []
    if "i" in names:
        ratios = (x["i"],)
        kind = "single"
    elif "i[1]" in names:
        G = sum(1 for v in names if v.startswith("i["))
        ratios = tuple(x[f"i[{g}]"] for g in range(1, G + 1))
        kind = "fixed"
    else:
        ratios = tuple(x[f"r[{t}]"] for t in range(n))
        kind = "cvt"
    # the averaging constraint is normalized by pavg, so its coefficients are the weights
    avg = next(c for c in model.constraints if c.label == "avg_power")
    weights = {}
    for term in avg.expr.terms:
        pin = next(v for v, _ in term.exps if v.startswith("pin["))
        weights[int(pin[4:-1])] = term.coeff
    points = []
    link = {c.label: c for c in model.constraints}
    for t in range(n):
        # speed_link is nM / (r * N) == 1
        sl = link[f"speed_link[{t}]"].expr.terms[0]
        rname = next(v for v, _ in sl.exps if not v.startswith("nM["))
        s = None if scenarios is None else scenarios[t]
        pts = dict(
            wheel_torque=math.nan if s is None else s.torque,
            wheel_speed=1.0 / sl.coeff if s is None else s.speed,
            weight=weights.get(t, 0.0) if s is None else s.weight,
            is_guard=(t not in weights) if s is None else s.is_guard,
            ratio=x[rname], torque=x[f"tM[{t}]"], speed=x[f"nM[{t}]"], shaft_power=x[f"pM[{t}]"],
            input_power=x[f"pin[{t}]"], loss_speed=x[f"pL1[{t}]"], loss_torque=x[f"pL2[{t}]"],
            loss_torque_sq=x[f"pL3[{t}]"], loss_const=x[f"pLc[{t}]"])
        points.append(OperatingPoint(**pts))

    tight = True
    if sol.optimal:
        wsum = sum(p.weight * p.input_power for p in points if not p.is_guard)
        if abs(x["pavg"] - wsum) > tight_tol * x["pavg"]:
            tight = False
            msgs.append(f"average-power constraint slack: {x['pavg']:.12g} vs {wsum:.12g}")
        for t, p in enumerate(points):
            if p.is_guard:
                continue
            need = p.shaft_power + p.losses
            if abs(p.input_power - need) > tight_tol * p.input_power:
                tight = False
                msgs.append(f"input-power constraint slack at scenario {t}")
        if not tight:
            warnings.warn("; ".join(msgs[:3]), RuntimeWarning, stacklevel=2)
    else:
        msgs.append(f"solver status {sol.status}")
    return DesignResult(
        status=sol.status, topology=kind, ratios=ratios,
        motor_max_torque=x["tbar"], motor_max_power=x["pbar"], power_factor=x["k"],
        avg_input_power=x["pavg"], log_objective=sol.log_objective, operating_points=tuple(points),
        tight=tight, warnings=tuple(msgs), iterations=sol.iterations, solution=sol,
        model_size=model.size())


def design(scenarios: Sequence[LoadScenario], topo: Topology, vp: Optional[VehicleParams] = None,
           mp: Optional[MotorParams] = None, options: Optional[SolverOptions] = None, x0=None) -> DesignResult:
    """Build and solve in one step."""
    vp = vp or VehicleParams()
    mp = mp or MotorParams()
    model = build_design_model(scenarios, vp, mp, topo)
    return solve_design(model, options, scenarios, x0)


def motor_efficiency(mp: MotorParams, k: float, torque, speed):
    """Efficiency and feasibility of a motor scaled by ``k`` at given points.

    Returns ``(efficiency, feasible, losses)`` arrays broadcast over inputs.
    """
    if not k > 0:
        raise ValueError("power factor must be positive")
    t = np.asarray(torque, dtype=float)
    n = np.asarray(speed, dtype=float)
    tbar = mp.max_torque(k)
    pbar = k * mp.ref_power
    rel_t = t / tbar
    rel_n = n / mp.corner_speed
    losses = k * (mp.loss_ref_speed * rel_t * np.abs(rel_n) ** mp.speed_exponent
                  + mp.loss_ref_torque * rel_t + mp.loss_ref_torque_sq * rel_t ** 2 + mp.loss_ref_const)
    shaft = t * RPM * n
    with np.errstate(divide="ignore", invalid="ignore"):
        eff = shaft / (shaft + losses)
    feasible = (t > 0) & (n > 0) & (t <= tbar * (1 + 1e-12)) & (n <= mp.max_speed * (1 + 1e-12)) \
        & (shaft <= pbar * (1 + 1e-12))
    return eff, feasible, losses


def efficiency_map(mp: MotorParams, k: float = 1.0, n_torque: int = 50, n_speed: int = 50,
                   torque_max: Optional[float] = None, speed_max: Optional[float] = None):
    """Efficiency on a torque x speed grid.

    Grids start one step above zero and end at the motor limits unless other
    maxima are given.  Returns ``(torque, speed, efficiency, feasible)`` with
    2-d arrays indexed ``[torque, speed]``.
    """
    if n_torque < 1 or n_speed < 1:
        raise ValueError("grid sizes must be >= 1")
    tmax = mp.max_torque(k) if torque_max is None else torque_max
    nmax = mp.max_speed if speed_max is None else speed_max
    tq = tmax * np.arange(1, n_torque + 1) / n_torque
    sp = nmax * np.arange(1, n_speed + 1) / n_speed
    T, N = np.meshgrid(tq, sp, indexing="ij")
    eff, feas, _ = motor_efficiency(mp, k, T, N)
    return tq, sp, eff, feas


def write_efficiency_csv(path, torque, speed, eff, feasible) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["torque_nm", "speed_rpm", "efficiency", "feasible"])
        for a, t in enumerate(torque):
            for b, n in enumerate(speed):
                w.writerow([f"{t:.12g}", f"{n:.12g}", f"{eff[a, b]:.12g}", int(feasible[a, b])])


def variable_mass_extension(model: GpModel, scenarios: Sequence[LoadScenario], vp: VehicleParams,
                            rho_m: float) -> GpModel:
    """Make vehicle mass a variable driven by motor size.

    Adds ``m`` and ``mM`` with ``mM = rho_m * pbar`` and ``m >= fixed masses + mM``;
    each wheel torque becomes a variable ``tW[t] >= delta_t * m + gamma_t``.
    ``rho_m`` is in kg/W and has no default.  With ``rho_m == 0`` the motor
    mass only carries a 1e-12 kg floor.
    """
    if rho_m is None or rho_m < 0:
        raise ValueError("rho_m must be given and >= 0")
    n = _n_scenarios(model)
    if len(scenarios) != n:
        raise ValueError("scenario list does not match the model")
    m, mM, pbar = Variable("m"), Variable("mM"), Variable("pbar")
    base = vp.mass
    new_vars = [VarSpec("m", base, 1e5), VarSpec("mM", 1e-12, 1e5)]
    extra = [leq(base + mM, m, "vehicle_mass")]
    if rho_m > 0:
        extra.append(eq(mM, rho_m * pbar, "motor_mass"))
    replaced = {}
    for t, s in enumerate(scenarios):
        if s.velocity is None or s.accel is None:
            raise ValueError(f"scenario {t} has no kinematics")
        delta, gamma = mass_split(vp, s.velocity, s.accel, s.slope)
        tW = Variable(f"tW[{t}]")
        new_vars.append(VarSpec(f"tW[{t}]", 1e-9, 1e7))
        lhs = delta * m if gamma <= 0 else delta * m + gamma
        extra.append(leq(lhs, tW, f"wheel_torque[{t}]"))
        replaced[f"torque_link[{t}]"] = (s.torque, tW)
    cons = []
    for c in model.constraints:
        if c.label in replaced:
            T, tW = replaced[c.label]
            # tM*r*eta/T == 1  ->  tM*r*eta/tW == 1
            cons.append(eq(c.expr.terms[0] * T, tW, c.label))
        else:
            cons.append(c)
    return build_model(tuple(model.variables) + tuple(new_vars), model.objective, cons + extra)


def feasible_point(scenarios: Sequence[LoadScenario], vp: VehicleParams, mp: MotorParams,
                   topo: Topology, margin: float = 1.2) -> Optional[dict]:
    """A strictly feasible point of :func:`build_design_model`'s model, or ``None``.

    Ratios sit just inside the speed limit of their scenarios; the motor
    rating and input powers are then padded by ``margin``.
    """
    lo, hi = topo.ratio_bounds
    gears = _scenario_gears(scenarios, topo)
    Nbar = mp.max_speed

    inner = (lo * hi ** 0.02) ** (1 / 1.02), (hi * lo ** 0.02) ** (1 / 1.02)

    def pick(speed_max):
        return min(inner[1], 0.9 * Nbar / speed_max)

    x: dict[str, float] = {}
    ratio = []
    if topo.kind == "single":
        x["i"] = pick(max(s.speed for s in scenarios))
        ratio = [x["i"]] * len(scenarios)
    elif topo.kind == "cvt":
        ratio = [pick(s.speed) for s in scenarios]
    else:
        G = topo.gear_count
        top = {}
        for g in range(1, G + 1):
            members = [scenarios[t].speed for t, gt in enumerate(gears) if gt == g]
            top[g] = pick(max(members)) if members else math.sqrt(lo * hi)
        if topo.order_gears:
            # i[1] >= i[2] >= ... with a little room
            for g in range(2, G + 1):
                top[g] = min(top[g], top[g - 1] / 1.01)
        for g in range(1, G + 1):
            x[f"i[{g}]"] = top[g]
        ratio = [top[g] if g else pick(s.speed) for s, g in zip(scenarios, gears)]
    if min(ratio) <= inner[0]:
        return None
    eta = vp.gearbox_eff
    tM = [s.torque / (r * eta) for s, r in zip(scenarios, ratio)]
    nM = [r * s.speed for s, r in zip(scenarios, ratio)]
    tbar = margin * max(max(tM), max(t * n for t, n in zip(tM, nM)) / (Nbar * mp.hyperbola_const))
    pbar = Nbar * RPM * mp.hyperbola_const * tbar
    k = pbar / mp.ref_power
    x.update(tbar=tbar, pbar=pbar, k=k)
    avg = 0.0
    for t, (s, r) in enumerate(zip(scenarios, ratio)):
        if topo.kind == "cvt" or gears[t] == 0 or topo.link_ratios:
            x[f"r[{t}]"] = r
        rel_t = tM[t] / tbar
        L = (k * mp.loss_ref_speed * rel_t * (nM[t] / mp.corner_speed) ** mp.speed_exponent,
             k * mp.loss_ref_torque * rel_t, k * mp.loss_ref_torque_sq * rel_t ** 2, k * mp.loss_ref_const)
        pM = tM[t] * RPM * nM[t]
        pin = margin * (pM + sum(L))
        x.update({f"tM[{t}]": tM[t], f"nM[{t}]": nM[t], f"pM[{t}]": pM, f"pin[{t}]": pin,
                  f"pL1[{t}]": L[0], f"pL2[{t}]": L[1], f"pL3[{t}]": L[2], f"pLc[{t}]": L[3]})
        if not s.is_guard:
            avg += s.weight * pin
        if pin >= mp.power_cap:
            return None
    x["pavg"] = margin * avg
    if x["pavg"] >= mp.power_cap or tbar >= 1e5:
        return None
    return x
