"""Driving cycles, wheel loads and scenario reduction."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "CycleError",
    "DrivingCycle",
    "VehicleParams",
    "LoadScenario",
    "EPS_POS",
    "LAUNCH_WHEEL_SPEED_RPM",
    "load_cycle",
    "central_difference",
    "wheel_torque",
    "wheel_speed_rpm",
    "to_wheel_loads",
    "cluster_scenarios",
    "guard_scenarios",
    "write_scenarios",
    "read_scenarios",
]

EPS_POS = 1e-6
# wheel-side speed of the launch guard; motor side stays below 0.36 rpm for ratios up to 18
LAUNCH_WHEEL_SPEED_RPM = 0.02
KMH = 1.0 / 3.6


class CycleError(ValueError):
    pass


@dataclass(frozen=True)
class DrivingCycle:
    """Sampled velocity trace in SI units.

    ``accel`` is ``None`` until derived with :func:`central_difference`.
    """

    time: np.ndarray
    velocity: np.ndarray
    accel: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        v = np.asarray(self.velocity, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise CycleError("time and velocity must be 1-d arrays of equal length")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            k = int(np.nonzero(np.diff(t) <= 0)[0][0]) + 1
            raise CycleError(f"time must be strictly increasing (sample {k}: t={t[k]})")
        if np.any(v < 0):
            raise CycleError("velocities must be non-negative")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "velocity", v)
        if self.accel is not None:
            a = np.asarray(self.accel, dtype=float)
            if a.shape != t.shape:
                raise CycleError("acceleration must match the time axis")
            object.__setattr__(self, "accel", a)

    def __len__(self):
        return len(self.time)


@dataclass(frozen=True)
class VehicleParams:
    base_mass: float = 1100.0
    driver_mass: float = 75.0
    aux_mass: float = 75.0
    battery_mass: float = 550.0
    gravity: float = 9.81
    slope_angle: float = 0.0
    air_density: float = 1.2041
    drag_coeff: float = 0.3
    frontal_area: float = 2.2
    rolling_coeff: float = 0.01
    wheel_radius: float = 0.3
    inertia_factor: float = 1.0
    gearbox_eff: float = 0.98

    def __post_init__(self):
        for name in ("base_mass", "driver_mass", "aux_mass", "battery_mass", "gravity", "air_density",
                     "drag_coeff", "frontal_area", "rolling_coeff", "wheel_radius", "inertia_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.slope_angle < 0:
            raise ValueError("slope_angle must be >= 0")
        if not 0.0 < self.gearbox_eff <= 1.0:
            raise ValueError("gearbox_eff must lie in (0, 1]")

    @property
    def mass(self) -> float:
        return self.base_mass + self.driver_mass + self.aux_mass + self.battery_mass


@dataclass(frozen=True)
class LoadScenario:
    """Wheel-side operating point with its probability weight.

    ``velocity``/``accel`` keep the kinematics the point was derived from
    (needed to rebuild the torque for a variable vehicle mass).
    """

    torque: float
    speed: float
    weight: float
    is_guard: bool = False
    velocity: Optional[float] = None
    accel: Optional[float] = None
    slope: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not (self.torque > 0 and self.speed > 0):
            raise CycleError(f"scenario torque and speed must be positive ({self.torque}, {self.speed})")
        if self.weight < 0:
            raise CycleError("scenario weight must be >= 0")
        if self.is_guard and self.weight != 0:
            raise CycleError("guard scenarios carry zero weight")


def load_cycle(path, velocity_unit: str = "m/s", name: Optional[str] = None) -> DrivingCycle:
    """Read a ``t,v[,a]`` CSV; ``velocity_unit`` is ``'m/s'`` or ``'km/h'``."""
    if velocity_unit not in ("m/s", "km/h"):
        raise CycleError(f"unknown velocity unit {velocity_unit!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    scale = KMH if velocity_unit == "km/h" else 1.0
    t, v, a = [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise CycleError(f"{path}: empty file") from None
        if "t" not in header or "v" not in header:
            raise CycleError(f"{path}: header needs columns 't' and 'v', got {header}")
        it, iv = header.index("t"), header.index("v")
        ia = header.index("a") if "a" in header else None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                t.append(float(row[it]))
                v.append(float(row[iv]) * scale)
                if ia is not None:
                    a.append(float(row[ia]))
            except (ValueError, IndexError):
                raise CycleError(f"{path}: cannot parse line {lineno}: {','.join(row)!r}") from None
    return DrivingCycle(np.array(t), np.array(v), np.array(a) if ia is not None else None,
                        name or path.stem)


def central_difference(cycle: DrivingCycle) -> DrivingCycle:
    """Fill in acceleration: central differences inside, one-sided at the ends."""
    if len(cycle) < 3:
        raise CycleError("need at least 3 samples for central differences")
    t, v = cycle.time, cycle.velocity
    a = np.empty_like(v)
    a[1:-1] = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
    a[0] = (v[1] - v[0]) / (t[1] - t[0])
    a[-1] = (v[-1] - v[-2]) / (t[-1] - t[-2])
    return replace(cycle, accel=a)


def wheel_torque(params: VehicleParams, velocity, accel, slope_angle: Optional[float] = None,
                 mass: Optional[float] = None):
    """Longitudinal model: wheel torque in N*m (vectorized)."""
    m = params.mass if mass is None else mass
    alpha = params.slope_angle if slope_angle is None else slope_angle
    v = np.asarray(velocity, dtype=float)
    force = (params.inertia_factor * m * np.asarray(accel, dtype=float)
             + m * params.gravity * (math.sin(alpha) + params.rolling_coeff)
             + 0.5 * params.air_density * params.drag_coeff * params.frontal_area * v ** 2)
    return force * params.wheel_radius


def wheel_speed_rpm(params: VehicleParams, velocity):
    return 60.0 * np.asarray(velocity, dtype=float) / (2.0 * math.pi * params.wheel_radius)


def mass_split(params: VehicleParams, velocity: float, accel: float, slope_angle: float = 0.0):
    """Torque as ``delta * m + gamma``: returns ``(delta, gamma)``."""
    r = params.wheel_radius
    delta = (params.inertia_factor * accel + params.gravity * (math.sin(slope_angle) + params.rolling_coeff)) * r
    gamma = 0.5 * params.air_density * params.drag_coeff * params.frontal_area * velocity ** 2 * r
    return delta, gamma


def to_wheel_loads(cycle: DrivingCycle, params: VehicleParams) -> list[LoadScenario]:
    """Wheel loads of all steps with positive speed and acceleration, equally weighted."""
    if cycle.accel is None:
        raise CycleError("cycle has no acceleration; run central_difference first")
    keep = np.nonzero((cycle.velocity > 0) & (cycle.accel > 0))[0]
    if len(keep) == 0:
        raise CycleError("no positive-power steps in cycle")
    v, a = cycle.velocity[keep], cycle.accel[keep]
    T = np.maximum(wheel_torque(params, v, a), EPS_POS)
    N = np.maximum(wheel_speed_rpm(params, v), EPS_POS)
    w = 1.0 / len(keep)
    return [LoadScenario(float(T[k]), float(N[k]), w, False, float(v[k]), float(a[k]),
                         params.slope_angle, f"{cycle.name}:{int(keep[k])}")
            for k in range(len(keep))]


def cluster_scenarios(loads: Sequence[LoadScenario], k: int, seed: int = 0,
                      params: Optional[VehicleParams] = None) -> list[LoadScenario]:
    """Reduce non-guard loads to ``k`` weighted k-means centroids.

    Clustering runs on (velocity, acceleration) scaled to unit variance;
    each centroid is the weighted mean of its members' kinematics, mapped back
    to torque and speed with the longitudinal model.  Guard loads are passed
    through unchanged after the centroids.
    """
    from sklearn.cluster import KMeans

    params = params or VehicleParams()
    base = [s for s in loads if not s.is_guard]
    guards = [s for s in loads if s.is_guard]
    if k < 1:
        raise CycleError("k must be >= 1")
    if k > len(base):
        raise CycleError(f"k={k} exceeds the number of loads ({len(base)})")
    if any(s.velocity is None or s.accel is None for s in base):
        raise CycleError("clustering needs loads with kinematics (velocity, accel)")
    X = np.array([[s.velocity, s.accel] for s in base])
    w = np.array([s.weight for s in base])
    w = w / w.sum()
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    if k == len(base):
        labels = np.arange(len(base))
    else:
        km = KMeans(n_clusters=k, n_init=10, random_state=seed, algorithm="lloyd")
        labels = km.fit_predict(X / scale, sample_weight=w)
    out = []
    for c in range(k):
        idx = np.nonzero(labels == c)[0]
        if len(idx) == 0:
            continue
        wc = w[idx].sum()
        vc, ac = (w[idx] @ X[idx]) / wc
        if len(idx) == 1:
            vc, ac = X[idx[0]]
        T = max(float(wheel_torque(params, vc, ac)), EPS_POS)
        N = max(float(wheel_speed_rpm(params, vc)), EPS_POS)
        out.append(LoadScenario(T, N, float(wc), False, float(vc), float(ac), params.slope_angle,
                                f"cluster{c}"))
    total = sum(s.weight for s in out)
    out = [replace(s, weight=s.weight / total) for s in out]
    # deterministic order independent of label numbering: by speed, then torque
    out.sort(key=lambda s: (s.speed, s.torque))
    return out + guards


def guard_scenarios(params: VehicleParams, grade: float = 0.66, top_speed: float = 160.0 / 3.6,
                    top_accel: float = 0.3) -> list[LoadScenario]:
    """Zero-weight launch (gradeability) and top-speed operating points."""
    if not grade > 0:
        raise CycleError("grade must be positive")
    if not top_speed > 0:
        raise CycleError("top_speed must be positive")
    alpha = math.atan(grade)
    launch_T = float(wheel_torque(params, 0.0, 0.0, slope_angle=alpha))
    top_T = float(wheel_torque(params, top_speed, top_accel))
    top_N = float(wheel_speed_rpm(params, top_speed))
    return [
        LoadScenario(launch_T, LAUNCH_WHEEL_SPEED_RPM, 0.0, True, 0.0, 0.0, alpha, "launch"),
        LoadScenario(top_T, top_N, 0.0, True, top_speed, top_accel, 0.0, "top_speed"),
    ]


def write_scenarios(scenarios: Sequence[LoadScenario], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["torque_nm", "speed_rpm", "weight", "is_guard"])
        for s in scenarios:
            w.writerow([f"{s.torque:.12g}", f"{s.speed:.12g}", f"{s.weight:.12g}", int(s.is_guard)])


def read_scenarios(path) -> list[LoadScenario]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(LoadScenario(float(row["torque_nm"]), float(row["speed_rpm"]), float(row["weight"]),
                                    bool(int(row["is_guard"]))))
    return out
