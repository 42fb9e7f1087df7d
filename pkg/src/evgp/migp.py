"""Two-speed gear assignment: brute force, Benders decomposition and a heuristic.

Every engine works on the same subproblem: for a fixed assignment of the
non-guard scenarios to gears, the design GP with one ratio variable per gear.
Guard scenarios ride in the gear of the non-guard scenario closest to them in
(log) speed, and no ordering is imposed between the gear ratios.  The
subproblem value therefore depends only on the partition of the scenarios,
so assignments that differ by relabelling the gears are equivalent and only
canonical ones (scenario 0 in gear 1) are enumerated.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from .cycles import (LoadScenario, VehicleParams, central_difference, cluster_scenarios,
                     guard_scenarios, to_wheel_loads)
from .fixtures import available_cycles, load_fixture
from .gp import SolverOptions, log_transform, solve
from .powertrain import (DesignResult, MotorParams, Topology, build_design_model, design,
                         feasible_point)

__all__ = [
    "MigpError",
    "GearAssignment",
    "BendersCut",
    "MigpResult",
    "Subproblem",
    "Instance",
    "stirling2",
    "enumerate_assignments",
    "brute_force",
    "benders",
    "heuristic",
    "generate_instances",
    "compare",
    "write_comparison_csv",
    "comparison_markdown",
    "write_cut_log",
    "ENGINES",
    "REFERENCE_K_RANGE",
]

GEARS = 2
BRUTE_FORCE_CAP = 16
REFERENCE_K_RANGE = (6, 12)
ENGINES = ("BF", "B", "B+H", "H")


class MigpError(RuntimeError):
    pass


def stirling2(n: int, k: int) -> int:
    """Number of partitions of ``n`` items into ``k`` non-empty blocks."""
    if n < 0 or k < 0:
        raise ValueError("n and k must be non-negative")
    if k > n:
        return 0
    total = sum((-1) ** j * math.comb(k, j) * (k - j) ** n for j in range(k + 1))
    return total // math.factorial(k)


@dataclass(frozen=True)
class GearAssignment:
    """Gear (1-based) of each non-guard scenario."""

    gears: tuple

    def __post_init__(self):
        g = tuple(int(x) for x in self.gears)
        if any(x < 1 or x > GEARS for x in g):
            raise MigpError(f"gears must lie in 1..{GEARS}: {g}")
        object.__setattr__(self, "gears", g)

    def __len__(self):
        return len(self.gears)

    @property
    def canonical(self) -> bool:
        return bool(self.gears) and self.gears[0] == 1

    def complement(self) -> "GearAssignment":
        return GearAssignment(tuple(GEARS + 1 - g for g in self.gears))

    def canonicalize(self) -> "GearAssignment":
        return self if self.canonical or not self.gears else self.complement()

    @property
    def digits(self) -> str:
        return "".join(str(g) for g in self.gears)

    def __str__(self):
        return self.digits


def enumerate_assignments(n: int, gears: int = GEARS) -> Iterator[GearAssignment]:
    """Canonical two-gear assignments of ``n`` scenarios in lexicographic order."""
    if gears != GEARS:
        raise MigpError("only two-speed assignments are supported")
    if n < 1:
        raise MigpError("need at least one scenario")
    for m in range(1, 2 ** (n - 1)):
        yield GearAssignment((1,) + tuple(1 + ((m >> (n - 2 - j)) & 1) for j in range(n - 1)))


# --------------------------------------------------------------------------
# subproblem


@dataclass(frozen=True)
class Evaluation:
    assignment: GearAssignment
    gears: tuple          # gear of every scenario, guards included
    feasible: bool
    log_objective: float
    link_duals: np.ndarray  # price of each scenario's ratio link
    ratios: tuple


class Subproblem:
    """Fixed-assignment design GP for one scenario set.

    The log-transformed program is built once; an assignment only changes
    which ratio column each scenario's torque and speed links point at.
    Results are memoized, so engines sharing an instance share solves while
    counting their own requests.
    """

    def __init__(self, scenarios: Sequence[LoadScenario], vp: Optional[VehicleParams] = None,
                 mp: Optional[MotorParams] = None, ratio_bounds=(1.0, 18.0),
                 options: Optional[SolverOptions] = None):
        self.scenarios = list(scenarios)
        self.vp = vp or VehicleParams()
        self.mp = mp or MotorParams()
        self.ratio_bounds = (float(ratio_bounds[0]), float(ratio_bounds[1]))
        self.options = options
        self.base = [t for t, s in enumerate(self.scenarios) if not s.is_guard]
        self.guards = [t for t, s in enumerate(self.scenarios) if s.is_guard]
        if not self.base:
            raise MigpError("no non-guard scenarios")
        logs = np.log([self.scenarios[t].speed for t in self.base])
        self.anchor = {g: self.base[int(np.argmin(np.abs(logs - math.log(self.scenarios[g].speed))))]
                       for g in self.guards}
        self.cache: dict[tuple, Evaluation] = {}
        self.solves = 0

        topo = self._topology(GearAssignment((1,) * len(self.base)))
        self.program = log_transform(build_design_model(self.scenarios, self.vp, self.mp, topo))
        names = {v: j for j, v in enumerate(self.program.var_names)}
        self.gear_cols = [names[f"i[{g}]"] for g in range(1, GEARS + 1)]
        rows = {lab: r for r, lab in enumerate(self.program.eq_labels)}
        A = self.program.A
        self.slots = []
        for t in range(len(self.scenarios)):
            pos = []
            for lab in (f"torque_link[{t}]", f"speed_link[{t}]"):
                r = rows[lab]
                lo, hi = A.indptr[r], A.indptr[r + 1]
                pos.append(lo + int(np.nonzero(A.indices[lo:hi] == self.gear_cols[0])[0][0]))
            self.slots.append(pos)

    @property
    def n(self) -> int:
        return len(self.base)

    def guard_gears(self, a: GearAssignment) -> tuple:
        """Gear of each guard: that of the nearest non-guard scenario in speed."""
        gear_of = dict(zip(self.base, a.gears))
        return tuple(gear_of[self.anchor[g]] for g in self.guards)

    def full_gears(self, a: GearAssignment) -> tuple:
        if len(a) != self.n:
            raise MigpError(f"assignment has {len(a)} entries, expected {self.n}")
        gears = [0] * len(self.scenarios)
        for t, g in zip(self.base, a.gears):
            gears[t] = g
        for t, g in zip(self.guards, self.guard_gears(a)):
            gears[t] = g
        return tuple(gears)

    def _topology(self, a: GearAssignment) -> Topology:
        return Topology.fixed(a.gears, GEARS, self.ratio_bounds, self.guard_gears(a), order_gears=False)

    def program_for(self, a: GearAssignment):
        A = self.program.A.copy()
        for t, g in enumerate(self.full_gears(a)):
            A.indices[self.slots[t]] = self.gear_cols[g - 1]
        A.has_sorted_indices = False
        A.sort_indices()
        return replace(self.program, A=A)

    def start(self, a: GearAssignment):
        return feasible_point(self.scenarios, self.vp, self.mp, self._topology(a))

    def evaluate(self, a: GearAssignment) -> Evaluation:
        gears = self.full_gears(a)
        key = gears
        if key in self.cache:
            return self.cache[key]
        self.solves += 1
        sol = solve(self.program_for(a), self.options, self.start(a))
        nt = len(self.scenarios)
        if sol.optimal:
            nu = np.array([sol.duals[f"speed_link[{t}]"] - sol.duals[f"torque_link[{t}]"] for t in range(nt)])
            ev = Evaluation(a, gears, True, sol.log_objective, nu,
                            tuple(sol.primal[f"i[{g}]"] for g in range(1, GEARS + 1)))
        else:
            ev = Evaluation(a, gears, False, math.inf, np.zeros(nt), ())
        self.cache[key] = ev
        return ev

    def design(self, a: GearAssignment) -> DesignResult:
        """Fresh build and solve of the subproblem, unpacked."""
        return design(self.scenarios, self._topology(a), self.vp, self.mp, self.options, self.start(a))


# --------------------------------------------------------------------------
# results and cuts


@dataclass(frozen=True)
class MigpResult:
    engine: str
    best_assignment: GearAssignment
    design: DesignResult
    log_objective: float
    iterations: int
    evaluations: int
    lower_bound: float = math.nan
    gap: float = 0.0
    cut_log: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "engine": self.engine,
            "assignment": list(self.best_assignment.gears),
            "log_objective": self.log_objective,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "lower_bound": self.lower_bound,
            "gap": self.gap,
            "design": self.design.to_dict(),
            "trace": self.trace,
        }


@dataclass(frozen=True)
class BendersCut:
    """Lower bound on the subproblem value from one solved assignment.

    With the gear links dualized at their optimal prices, the dual function
    depends on an assignment ``b`` only through the per-gear price sums
    ``c_g(b) = sum_t coefficients[t, g] * b[t, g]``.  Minimizing over each
    gear ratio in its box gives ``h(c) = -max(c log hi, c log lo)``, hence

        value(b) = intercept + sum_g h(c_g(b)) <= subproblem(b).
    """

    intercept: float
    coefficients: np.ndarray   # (scenarios incl. guards, gears)
    log_bounds: tuple
    source_assignment: GearAssignment
    source_objective: float

    @classmethod
    def from_evaluation(cls, ev: Evaluation, ratio_bounds) -> "BendersCut":
        lb = (math.log(ratio_bounds[0]), math.log(ratio_bounds[1]))
        gears = np.asarray(ev.gears)
        coef = np.repeat(ev.link_duals[:, None], GEARS, axis=1)
        onehot = gears[:, None] == np.arange(1, GEARS + 1)[None, :]
        c_hat = (coef * onehot).sum(axis=0)
        intercept = ev.log_objective - float(np.sum(_h(c_hat, lb)))
        return cls(intercept, coef, lb, ev.assignment, ev.log_objective)

    def values(self, gears: np.ndarray) -> np.ndarray:
        """Cut value for each row of a (m, scenarios) matrix of full gear vectors."""
        out = np.full(gears.shape[0], self.intercept)
        for g in range(GEARS):
            c = (gears == g + 1).astype(float) @ self.coefficients[:, g]
            out += _h(c, self.log_bounds)
        return out

    def value(self, gears: Sequence[int]) -> float:
        return float(self.values(np.asarray([gears]))[0])


def _h(c, log_bounds):
    lo, hi = log_bounds
    c = np.asarray(c, dtype=float)
    return -np.maximum(c * hi, c * lo)


# --------------------------------------------------------------------------
# engines


def _as_subproblem(scenarios, vp, mp, bounds, options) -> Subproblem:
    if isinstance(scenarios, Subproblem):
        return scenarios
    return Subproblem(scenarios, vp, mp, bounds, options)


def _finish(engine, sub: Subproblem, best: GearAssignment, iterations, evaluations, **kw) -> MigpResult:
    d = sub.design(best)
    if not d.optimal:
        raise MigpError(f"{engine}: re-solve of {best} ended with status {d.status}")
    return MigpResult(engine, best, d, d.log_objective, iterations, evaluations, **kw)


def brute_force(scenarios, vp: Optional[VehicleParams] = None, mp: Optional[MotorParams] = None,
                bounds=(1.0, 18.0), options: Optional[SolverOptions] = None,
                cap: int = BRUTE_FORCE_CAP) -> MigpResult:
    """Solve every canonical assignment and keep the best (first on ties)."""
    sub = _as_subproblem(scenarios, vp, mp, bounds, options)
    n = sub.n
    if n > cap:
        raise MigpError(f"brute force over {n} scenarios needs {stirling2(n, 2)} solves "
                        f"(cap is n <= {cap}); use benders or heuristic")
    if n < 2:
        raise MigpError("two gears need at least two non-guard scenarios")
    best, best_val, count = None, math.inf, 0
    for a in enumerate_assignments(n):
        ev = sub.evaluate(a)
        count += 1
        if ev.log_objective < best_val:
            best, best_val = a, ev.log_objective
    if best is None:
        raise MigpError("no feasible assignment")
    return _finish("BF", sub, best, count, count, lower_bound=best_val)


def benders(scenarios, vp: Optional[VehicleParams] = None, mp: Optional[MotorParams] = None,
            bounds=(1.0, 18.0), options: Optional[SolverOptions] = None, tol: float = 1e-6,
            max_iterations: Optional[int] = None, start: Optional[GearAssignment] = None,
            engine: str = "B") -> MigpResult:
    """Benders decomposition with an enumerated master.

    The master picks the unevaluated canonical assignment with the smallest
    cut bound (both gear labellings of every candidate are bounded).  Solved
    assignments are excluded from the master; infeasible ones act as no-good
    cuts.  ``start`` seeds the first subproblem and the incumbent.
    """
    sub = _as_subproblem(scenarios, vp, mp, bounds, options)
    n = sub.n
    if n < 2:
        raise MigpError("two gears need at least two non-guard scenarios")
    cands = list(enumerate_assignments(n))
    index = {a.gears: j for j, a in enumerate(cands)}
    G = np.array([sub.full_gears(a) for a in cands])
    Gc = GEARS + 1 - G
    bound = np.full(len(cands), -np.inf)
    done = np.zeros(len(cands), dtype=bool)
    limit = len(cands) if max_iterations is None else max_iterations
    cuts, log = [], []
    ub, lb, best = math.inf, -math.inf, None
    it = 0
    pick = index[start.canonicalize().gears] if start is not None else None
    while True:
        open_ = ~done
        master = float(bound[open_].min()) if open_.any() else math.inf
        # bounds are valid throughout, so the running maximum is too
        lb = max(lb, min(ub, master))
        log.append({"iter": it, "lower_bound": lb, "upper_bound": ub,
                    "assignment": "" if best is None else best.digits})
        if ub - lb <= tol or not open_.any() or it >= limit:
            break
        if pick is None:
            pick = int(np.flatnonzero(open_ & (bound == master))[0])
        a = cands[pick]
        ev = sub.evaluate(a)
        it += 1
        done[pick] = True
        pick = None
        if not ev.feasible:
            continue
        cut = BendersCut.from_evaluation(ev, sub.ratio_bounds)
        cuts.append(cut)
        bound = np.maximum(bound, np.maximum(cut.values(G), cut.values(Gc)))
        if ev.log_objective < ub or (ev.log_objective == ub and a.gears < best.gears):
            ub, best = ev.log_objective, a
    if best is None:
        raise MigpError("no feasible assignment")
    return _finish(engine, sub, best, it, it, lower_bound=lb, gap=max(0.0, ub - lb), cut_log=log,
                   trace=[{"cuts": len(cuts)}])


def heuristic(scenarios, vp: Optional[VehicleParams] = None, mp: Optional[MotorParams] = None,
              bounds=(1.0, 18.0), options: Optional[SolverOptions] = None, tau: float = 0.15,
              engine: str = "H") -> MigpResult:
    """Iterative assignment from relaxed ratios.

    Starting from the CVT relaxation, the highest-torque load is fixed to gear
    1 and the fastest to gear 2.  Each round re-solves with the fixed loads on
    their gear ratios and the rest on free ratios, then fixes every free load
    whose ratio lies within ``tau`` (log units) of a gear ratio; ``tau`` halves
    every round and at least the closest load is fixed.
    """
    sub = _as_subproblem(scenarios, vp, mp, bounds, options)
    S, base = sub.scenarios, sub.base
    n = sub.n
    if n < 2:
        raise MigpError("two gears need at least two non-guard scenarios")
    cvt = design(S, Topology.cvt(sub.ratio_bounds), sub.vp, sub.mp, sub.options)
    if not cvt.optimal:
        raise MigpError(f"CVT relaxation failed: {cvt.status}")
    solves = 1
    torque = [S[t].torque for t in base]
    speed = [S[t].speed for t in base]
    assign = [0] * n
    first = int(np.argmax(torque))
    assign[first] = 1
    order = sorted(range(n), key=lambda j: (-speed[j], j))
    assign[next(j for j in order if j != first)] = 2
    trace = [{"iteration": 0, "assignment": "".join(map(str, assign)), "tau": tau,
              "ratios": [cvt.operating_points[t].ratio for t in base]}]
    last_batch: list = []
    backtracked = False
    iterations = 1
    while 0 in assign:
        res = _partial_solve(sub, assign)
        solves += 1
        if res is None:
            if backtracked or not last_batch:
                raise MigpError("partially fixed relaxation infeasible")
            backtracked = True
            for j, _ in last_batch:
                assign[j] = 0
            j, g = last_batch[0]
            assign[j] = g
            last_batch = [(j, g)]
            trace.append({"iteration": iterations, "assignment": "".join(map(str, assign)),
                          "tau": tau, "backtrack": True})
            continue
        ratios, gear_ratio = res
        free = [j for j in range(n) if assign[j] == 0]
        dist = {j: [abs(math.log(ratios[j] / gear_ratio[g])) for g in range(GEARS)] for j in free}
        close = sorted(free, key=lambda j: (min(dist[j]), j))
        batch = [j for j in close if min(dist[j]) <= tau] or close[:1]
        last_batch = [(j, 1 + int(np.argmin(dist[j]))) for j in batch]
        for j, g in last_batch:
            assign[j] = g
        iterations += 1
        trace.append({"iteration": iterations - 1, "assignment": "".join(map(str, assign)), "tau": tau,
                      "gear_ratios": list(gear_ratio), "ratios": [ratios[j] for j in range(n)]})
        tau *= 0.5
    best = GearAssignment(assign).canonicalize()
    ev = sub.evaluate(best)
    solves += 1
    if not ev.feasible:
        raise MigpError(f"heuristic assignment {best} infeasible")
    return _finish(engine, sub, best, iterations, solves, lower_bound=math.nan, trace=trace)


def _partial_solve(sub: Subproblem, assign: list):
    """Relaxation with unassigned loads on free ratios; ``None`` if infeasible."""
    S, base = sub.scenarios, sub.base
    fixed = [(math.log(S[t].speed), assign[j]) for j, t in enumerate(base) if assign[j]]
    gg = tuple(min(fixed, key=lambda p: abs(p[0] - math.log(S[t].speed)))[1] for t in sub.guards)
    topo = Topology.fixed(assign, GEARS, sub.ratio_bounds, gg, order_gears=False)
    d = design(S, topo, sub.vp, sub.mp, sub.options)
    if not d.optimal:
        return None
    return [d.operating_points[t].ratio for t in base], d.ratios


# --------------------------------------------------------------------------
# instances and comparison


@dataclass(frozen=True)
class Instance:
    id: int
    cycle: str
    k: int
    seed: int
    scenarios: tuple
    out_of_range: bool = False


def generate_instances(cycles: Sequence[str], ks: Sequence[int], seeds: Sequence[int],
                       vp: Optional[VehicleParams] = None, grade: float = 0.66,
                       top_speed: float = 160.0 / 3.6) -> list[Instance]:
    """k-means reductions for every (cycle, k, seed), guards appended."""
    vp = vp or VehicleParams()
    known = available_cycles()
    for c in cycles:
        if c.lower() not in known:
            raise MigpError(f"unknown cycle {c!r}; available fixtures: {', '.join(known)}")
    guards = guard_scenarios(vp, grade, top_speed)
    out = []
    for c in cycles:
        loads = to_wheel_loads(central_difference(load_fixture(c)), vp)
        for k in ks:
            for seed in seeds:
                S = cluster_scenarios(loads, k, seed=seed, params=vp) + guards
                flag = not REFERENCE_K_RANGE[0] <= k <= REFERENCE_K_RANGE[1]
                out.append(Instance(len(out) + 1, c.lower(), k, seed, tuple(S), flag))
    return out


COLUMNS = ("ID", "BF/P", "B/P", "B+H/P", "H/P", "B/#it", "B+H/#it", "BF/#it", "CYCLE")


def compare(instances: Sequence[Instance], engines: Sequence[str] = ENGINES,
            vp: Optional[VehicleParams] = None, mp: Optional[MotorParams] = None,
            bounds=(1.0, 18.0), options: Optional[SolverOptions] = None,
            bf_cap: int = BRUTE_FORCE_CAP) -> list[dict]:
    """One row per instance; a failing engine leaves an ``error: ...`` cell."""
    engines = list(engines)
    if not engines:
        raise MigpError("no engines selected")
    bad = [e for e in engines if e not in ENGINES]
    if bad:
        raise MigpError(f"unknown engines {bad}; choose from {list(ENGINES)}")
    rows = []
    for inst in instances:
        row: dict = {c: "" for c in COLUMNS}
        row["ID"], row["CYCLE"] = inst.id, inst.cycle
        try:
            sub = Subproblem(inst.scenarios, vp, mp, bounds, options)
        except Exception as exc:  # noqa: BLE001 - recorded per cell
            for e in engines:
                row[f"{e}/P"] = f"error: {exc}"
            rows.append(row)
            continue
        h = None
        if "H" in engines or "B+H" in engines:
            try:
                h = heuristic(sub)
                if "H" in engines:
                    row["H/P"] = h.log_objective
            except Exception as exc:  # noqa: BLE001
                row["H/P"] = f"error: {exc}"
        runs = [("BF", lambda: brute_force(sub, cap=bf_cap)), ("B", lambda: benders(sub))]
        if h is not None:
            runs.append(("B+H", lambda: benders(sub, start=h.best_assignment, engine="B+H")))
        elif "B+H" in engines:
            row["B+H/P"] = "error: heuristic failed"
        for name, fn in runs:
            if name not in engines:
                continue
            try:
                r = fn()
                row[f"{name}/P"] = r.log_objective
                row[f"{name}/#it"] = r.iterations
            except Exception as exc:  # noqa: BLE001
                row[f"{name}/P"] = f"error: {exc}"
        rows.append(row)
    return rows


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def write_comparison_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(comparison_csv(rows))


def comparison_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in COLUMNS])
    return buf.getvalue()


def comparison_markdown(rows: Sequence[dict]) -> str:
    lines = ["| " + " | ".join(COLUMNS) + " |", "|" + "---|" * len(COLUMNS)]
    for r in rows:
        lines.append("| " + " | ".join(_cell(r.get(c, "")) for c in COLUMNS) + " |")
    return "\n".join(lines) + "\n"


def write_cut_log(result: MigpResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "lower_bound", "upper_bound", "assignment"])
        for e in result.cut_log:
            w.writerow([e["iter"], _cell(float(e["lower_bound"])), _cell(float(e["upper_bound"])),
                        e["assignment"]])
