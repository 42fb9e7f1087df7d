"""Command-line entry point: ``evgp <preprocess|optimize|migp|compare|effmap>``.

Settings come from built-in defaults, then an optional JSON config with flat
dotted keys (``--config``), then flags.  Artifacts are written to a temporary
name and renamed on success, so a failed run leaves nothing behind.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .cycles import (CycleError, DrivingCycle, VehicleParams, central_difference, cluster_scenarios,
                     guard_scenarios, load_cycle, to_wheel_loads)
from .fixtures import FIXTURE_ENV, available_cycles, load_fixture
from .gp import SolverOptions
from .migp import (BRUTE_FORCE_CAP, ENGINES, MigpError, Subproblem, benders, brute_force,
                   comparison_csv, comparison_markdown, compare, generate_instances, heuristic)
from .powertrain import MotorParams, Topology, design, efficiency_map, round12

ENGINE_ALIASES = {
    "bruteforce": "BF", "bf": "BF",
    "benders": "B", "b": "B",
    "heuristic": "H", "h": "H",
    "benders+heuristic": "B+H", "b+h": "B+H",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Fully resolved run settings; defaults are the reference vehicle and motor."""

    cycles: list = field(default_factory=lambda: ["wltc"])
    velocity_unit: str = "m/s"
    vehicle: dict = field(default_factory=dict)
    motor: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    topology: str = "single"
    k: Optional[int] = None
    ks: list = field(default_factory=lambda: [6, 8, 10, 12])
    seed: int = 0
    seeds: list = field(default_factory=lambda: [0])
    engine: str = "B"
    engines: list = field(default_factory=lambda: list(ENGINES))
    ratio_lo: float = 1.0
    ratio_hi: float = 18.0
    grade: float = 0.66
    top_speed_kmh: float = 160.0
    guards: bool = True
    bf_cap: int = BRUTE_FORCE_CAP
    out: Optional[str] = None

    # dotted config key -> attribute; "vehicle.*", "motor.*" and "solver.*" are open
    KEYS = {
        "cycle": "cycles", "cycles": "cycles", "velocity_unit": "velocity_unit",
        "topology": "topology", "k": "k", "ks": "ks", "seed": "seed", "seeds": "seeds",
        "engine": "engine", "engines": "engines", "ratio.lo": "ratio_lo", "ratio.hi": "ratio_hi",
        "guard.grade": "grade", "guard.top_speed_kmh": "top_speed_kmh", "guard.enabled": "guards",
        "bruteforce.cap": "bf_cap", "out": "out",
    }
    GROUPS = {"vehicle": VehicleParams, "motor": MotorParams, "solver": SolverOptions}

    def update(self, flat: dict) -> None:
        for key, value in flat.items():
            group, _, name = key.partition(".")
            if group in self.GROUPS and name:
                names = {f.name for f in dataclasses.fields(self.GROUPS[group])}
                if name not in names:
                    raise ConfigError(f"unknown {group} parameter {name!r}")
                getattr(self, group)[name] = value
            elif key in self.KEYS:
                attr = self.KEYS[key]
                if attr in ("cycles", "ks", "seeds", "engines") and not isinstance(value, list):
                    value = [value]
                setattr(self, attr, value)
            else:
                raise ConfigError(f"unknown config key {key!r}")

    def vehicle_params(self) -> VehicleParams:
        return VehicleParams(**self.vehicle)

    def motor_params(self) -> MotorParams:
        return MotorParams(**self.motor)

    def solver_options(self) -> Optional[SolverOptions]:
        return SolverOptions(**self.solver) if self.solver else None

    @property
    def ratio_bounds(self) -> tuple:
        return (float(self.ratio_lo), float(self.ratio_hi))


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
        raise ConfigError(f"{path}: expected a flat object with dotted keys")
    return data


def _resolve_cycle(spec: str, unit: str) -> DrivingCycle:
    """A CSV path if it exists, otherwise a fixture name (``wltc.csv`` works too)."""
    p = Path(spec)
    if p.is_file():
        return load_cycle(p, unit, name=p.stem)
    name = p.name[:-4] if p.name.lower().endswith(".csv") else p.name
    try:
        return load_fixture(name)
    except KeyError:
        raise ConfigError(f"cycle {spec!r} is neither a file nor a fixture; available fixtures: "
                          f"{', '.join(available_cycles())} (extra fixtures via {FIXTURE_ENV})") from None


def _scenarios(cfg: RunConfig, cycle_spec: str):
    vp = cfg.vehicle_params()
    loads = to_wheel_loads(central_difference(_resolve_cycle(cycle_spec, cfg.velocity_unit)), vp)
    if cfg.k is not None:
        loads = cluster_scenarios(loads, int(cfg.k), seed=int(cfg.seed), params=vp)
    if cfg.guards:
        loads = loads + guard_scenarios(vp, cfg.grade, cfg.top_speed_kmh / 3.6)
    return loads


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(cfg: RunConfig, default_name: str, text: str, out_flag: Optional[str] = None) -> None:
    target = out_flag or cfg.out
    if target is None or target == "-":
        sys.stdout.write(text)
        return
    p = Path(target)
    if p.is_dir() or target.endswith(os.sep):
        p = p / default_name
    _atomic_write(p, text)
    print(f"wrote {p}", file=sys.stderr)


def _json(obj) -> str:
    return json.dumps(round12(obj), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# subcommands


def cmd_preprocess(cfg: RunConfig, args) -> int:
    import io
    S = _scenarios(cfg, cfg.cycles[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["torque_nm", "speed_rpm", "weight", "is_guard"])
    for s in S:
        w.writerow([f"{s.torque:.12g}", f"{s.speed:.12g}", f"{s.weight:.12g}", int(s.is_guard)])
    _emit(cfg, "scenarios.csv", buf.getvalue())
    n_guard = sum(s.is_guard for s in S)
    print(f"{len(S) - n_guard} scenarios, {n_guard} guards", file=sys.stderr)
    return 0


def cmd_optimize(cfg: RunConfig, args) -> int:
    if cfg.topology == "single":
        topo = Topology.single(cfg.ratio_bounds)
    elif cfg.topology == "cvt":
        topo = Topology.cvt(cfg.ratio_bounds)
    else:
        raise ConfigError(f"optimize supports topologies 'single' and 'cvt', not {cfg.topology!r}; "
                          "use the migp command for gear assignment")
    S = _scenarios(cfg, cfg.cycles[0])
    res = design(S, topo, cfg.vehicle_params(), cfg.motor_params(), cfg.solver_options())
    if not res.optimal:
        print(f"error: solver finished with status {res.status}", file=sys.stderr)
        return 1
    _emit(cfg, "design.json", res.to_json())
    return 0


def cmd_migp(cfg: RunConfig, args) -> int:
    engine = ENGINE_ALIASES.get(cfg.engine.lower(), cfg.engine)
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {cfg.engine!r}; choose bruteforce, benders, heuristic "
                          "or benders+heuristic")
    if cfg.k is None:
        cfg.k = 8
    S = _scenarios(cfg, cfg.cycles[0])
    n = sum(not s.is_guard for s in S)
    if engine == "BF" and n > cfg.bf_cap:
        raise MigpError(f"brute force over {n} scenarios is capped at n <= {cfg.bf_cap}; "
                        "use --engine benders or heuristic")
    sub = Subproblem(S, cfg.vehicle_params(), cfg.motor_params(), cfg.ratio_bounds, cfg.solver_options())
    if engine == "BF":
        res = brute_force(sub, cap=cfg.bf_cap)
    elif engine == "B":
        res = benders(sub)
    elif engine == "H":
        res = heuristic(sub)
    else:
        h = heuristic(sub)
        res = benders(sub, start=h.best_assignment, engine="B+H")
    out = Path(cfg.out or "migp_out")
    out.mkdir(parents=True, exist_ok=True)
    if res.cut_log:
        rows = ["iter,lower_bound,upper_bound,assignment"]
        rows += [f"{e['iter']},{e['lower_bound']:.12g},{e['upper_bound']:.12g},{e['assignment']}"
                 for e in res.cut_log]
        _atomic_write(out / "cut_log.csv", "\n".join(rows) + "\n")
    if engine == "H":
        _atomic_write(out / "trace.json", _json(res.trace))
    _atomic_write(out / "result.json", _json(res.to_dict()))
    print(f"{res.engine}: assignment {res.best_assignment} log objective {res.log_objective:.12g} "
          f"({res.iterations} iterations)", file=sys.stderr)
    return 0


def cmd_compare(cfg: RunConfig, args) -> int:
    engines = [ENGINE_ALIASES.get(e.lower(), e) for e in cfg.engines]
    for e in engines:
        if e not in ENGINES:
            raise ConfigError(f"unknown engine {e!r}")
    inst = generate_instances(cfg.cycles, [int(k) for k in cfg.ks], [int(s) for s in cfg.seeds],
                              cfg.vehicle_params(), cfg.grade, cfg.top_speed_kmh / 3.6)
    for i in inst:
        if i.out_of_range:
            print(f"note: instance {i.id} uses k={i.k}, outside the reference range 6-12", file=sys.stderr)
    rows = compare(inst, engines, cfg.vehicle_params(), cfg.motor_params(), cfg.ratio_bounds,
                   cfg.solver_options(), cfg.bf_cap)
    fmt = args.format
    text = comparison_markdown(rows) if fmt == "markdown" else comparison_csv(rows)
    _emit(cfg, "comparison.md" if fmt == "markdown" else "comparison.csv", text)
    return 0


def cmd_effmap(cfg: RunConfig, args) -> int:
    import io
    tq, sp, eff, feas = efficiency_map(cfg.motor_params(), args.power_factor, args.n_torque, args.n_speed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["torque_nm", "speed_rpm", "efficiency", "feasible"])
    for a, t in enumerate(tq):
        for b, s in enumerate(sp):
            w.writerow([f"{t:.12g}", f"{s:.12g}", f"{eff[a, b]:.12g}", int(feas[a, b])])
    _emit(cfg, "effmap.csv", buf.getvalue())
    return 0


# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, multi: bool = False) -> None:
    p.add_argument("--config", help="JSON file with flat dotted keys")
    if multi:
        p.add_argument("--cycles", nargs="+", help="fixture names")
        p.add_argument("--ks", nargs="+", type=int, help="scenario counts")
        p.add_argument("--seeds", nargs="+", type=int, help="clustering seeds")
    else:
        p.add_argument("--cycle", help="cycle CSV path or fixture name")
        p.add_argument("--velocity-unit", choices=["m/s", "km/h"], help="unit of a CSV path (default m/s)")
        p.add_argument("--k", type=int, help="number of k-means scenarios (default: every load)")
        p.add_argument("--seed", type=int, help="k-means seed")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a dotted config key, e.g. vehicle.base_mass=1200")
    p.add_argument("--no-guards", action="store_true", help="drop the launch and top-speed guards")
    p.add_argument("--out", help="output file or directory ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evgp", description="Electric powertrain design by geometric programming.")
    ap.add_argument("--version", action="version", version=f"evgp {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="cycle to wheel-load scenario CSV")
    _common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("optimize", help="single-speed or CVT design to JSON")
    _common(p)
    p.add_argument("--topology", choices=["single", "cvt"])
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("migp", help="two-speed gear assignment with one engine")
    _common(p)
    p.add_argument("--engine", help="bruteforce, benders, heuristic or benders+heuristic")
    p.set_defaults(func=cmd_migp)

    p = sub.add_parser("compare", help="engine comparison table")
    _common(p, multi=True)
    p.add_argument("--engines", nargs="+", help="subset of BF B B+H H")
    p.add_argument("--format", choices=["csv", "markdown"], default="csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("effmap", help="motor efficiency grid CSV")
    p.add_argument("--config", help="JSON file with flat dotted keys")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--power-factor", type=float, default=1.0, help="motor scale k")
    p.add_argument("--n-torque", type=int, default=50)
    p.add_argument("--n-speed", type=int, default=50)
    p.add_argument("--out", help="output file or directory ('-' for stdout)")
    p.set_defaults(func=cmd_effmap)
    return ap


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg.update(_load_config_file(args.config))
    flat = {}
    for item in getattr(args, "set", []):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        flat[key.strip()] = _parse_value(value)
    for flag, key in (("cycle", "cycles"), ("cycles", "cycles"), ("velocity_unit", "velocity_unit"),
                      ("k", "k"), ("seed", "seed"), ("ks", "ks"), ("seeds", "seeds"),
                      ("topology", "topology"), ("engine", "engine"), ("engines", "engines"),
                      ("out", "out")):
        v = getattr(args, flag, None)
        if v is not None:
            flat[key] = v
    if getattr(args, "no_guards", False):
        flat["guard.enabled"] = False
    cfg.update(flat)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(cfg, args)
    except (ConfigError, CycleError, MigpError, ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"evgp {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
