"""Bundled driving-cycle fixtures.

Extra cycles can be dropped into the directory named by ``EVGP_FIXTURE_DIR``
as ``<name>.csv`` (velocity in m/s) or ``<name>.kmh.csv`` (velocity in km/h).
"""
from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

from .cycles import DrivingCycle, load_cycle

FIXTURE_ENV = "EVGP_FIXTURE_DIR"

# name -> (file, velocity unit)
BUNDLED = {
    "wltc": ("wltc_class3b.csv", "km/h"),
    "ftp75": ("ftp75.csv", "m/s"),
    "us06": ("us06.csv", "m/s"),
    "hwfet": ("hwfet.csv", "m/s"),
}


def _bundled_dir() -> Path:
    return Path(str(resources.files("evgp") / "data" / "cycles"))


def _user_fixtures() -> dict[str, tuple[Path, str]]:
    root = os.environ.get(FIXTURE_ENV)
    out: dict[str, tuple[Path, str]] = {}
    if not root or not Path(root).is_dir():
        return out
    for p in sorted(Path(root).glob("*.csv")):
        if p.name.endswith(".kmh.csv"):
            out[p.name[: -len(".kmh.csv")].lower()] = (p, "km/h")
        else:
            out[p.stem.lower()] = (p, "m/s")
    return out


def available_cycles() -> list[str]:
    return sorted(set(BUNDLED) | set(_user_fixtures()))


def fixture_path(name: str) -> tuple[Path, str]:
    key = name.lower()
    user = _user_fixtures()
    if key in user:
        return user[key]
    if key in BUNDLED:
        fname, unit = BUNDLED[key]
        return _bundled_dir() / fname, unit
    raise KeyError(f"unknown cycle {name!r}; available fixtures: {', '.join(available_cycles())}")


def load_fixture(name: str) -> DrivingCycle:
    path, unit = fixture_path(name)
    return load_cycle(path, unit, name=name.lower())
