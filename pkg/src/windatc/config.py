"""Study configuration: TOML file plus the CSV inputs it references."""

from __future__ import annotations

import csv
import dataclasses
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .pdipm import SolverOptions
from .turbine_power import FarmSpec, TurbineCurve
from .wind_scenarios import TemporalProfile

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "StudyConfig", "load_config", "default_config_path",
           "read_forecast", "read_temporal_profile", "write_scenarios"]


class ConfigError(ValueError):
    """Invalid or unreadable study configuration."""


def default_config_path() -> Path:
    return Path(str(resources.files("windatc") / "data" / "default_study.toml"))


@dataclass
class StudyConfig:
    case_path: Path
    farms: list[FarmSpec]
    forecast: np.ndarray  # farms x 24, m/s (a single row broadcasts)
    profile: TemporalProfile
    load_profile: np.ndarray  # 24 load coefficients
    rho: float = 0.5
    seed: int = 2024
    sending: list[int] | None = None
    curve: TurbineCurve = field(default_factory=TurbineCurve)
    rho_values: list[float] = field(default_factory=lambda: [0.0, 0.3, 0.5, 0.8, 1.0])
    multi_farm_buses: list[int] = field(default_factory=list)
    multi_farm_turbines: int = 20
    capacities_mw: list[float] = field(default_factory=lambda: [0, 100, 300, 600, 800, 1000])
    location_hours: list[int] = field(default_factory=lambda: [3, 6, 15, 22])
    location_fixed_bus: int = 16
    location_receiving: list[int] = field(default_factory=list)
    location_sending: list[int] = field(default_factory=list)
    method_hours: list[int] = field(default_factory=lambda: [1, 4, 10, 14, 19])
    method_sending_bus: int = 38
    method_receiving_bus: int = 39
    method_replaced_mw: float = 200.0
    method_farms: int = 2
    method_farm_turbines: int = 20
    resolution_min: int = 60
    solver: SolverOptions = field(default_factory=SolverOptions)
    output_dir: Path | None = None

    def __post_init__(self):
        self.load_profile = np.asarray(self.load_profile, float)
        if self.load_profile.shape != (24,):
            raise ConfigError("load profile needs exactly 24 hourly coefficients")
        if np.any(self.load_profile <= 0):
            raise ConfigError("load coefficients must be strictly positive")
        for r in [self.rho, *self.rho_values]:
            if not 0 <= r <= 1:
                raise ConfigError(f"rho values must lie in [0, 1], got {r}")
        self.forecast = np.atleast_2d(np.asarray(self.forecast, float))
        if self.forecast.shape[1] != 24:
            raise ConfigError("forecast needs 24 hourly columns")
        if np.any(self.forecast < 0):
            raise ConfigError("forecast speeds must be non-negative")
        if self.profile.n_hours != 24:
            raise ConfigError("temporal profile needs 24 entries")
        if not self.case_path.exists():
            raise ConfigError(f"case file not found: {self.case_path}")

    def forecast_for(self, n_farms: int) -> np.ndarray:
        if self.forecast.shape[0] == 1:
            return np.repeat(self.forecast, n_farms, axis=0)
        if self.forecast.shape[0] < n_farms:
            raise ConfigError(
                f"forecast has {self.forecast.shape[0]} rows but {n_farms} farms are used")
        return self.forecast[:n_farms]

    def replace(self, **changes) -> "StudyConfig":
        return dataclasses.replace(self, **changes)


def read_forecast(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: forecast values must be numbers") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: forecast rows must be non-empty and equally long")
    return np.array(rows)


def read_temporal_profile(path: Path) -> TemporalProfile:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None or not {"hour", "autocorr", "stddev"} <= set(rd.fieldnames):
            raise ConfigError(f"{path}: expected columns hour,autocorr,stddev")
        rows = sorted(rd, key=lambda r: int(r["hour"]))
    try:
        return TemporalProfile([float(r["autocorr"]) for r in rows],
                               [float(r["stddev"]) for r in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def write_scenarios(scenarios, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["farm", "hour", "forecast", "error", "speed"])
        for farm, hour, f, e, v in scenarios.rows():
            wr.writerow([farm, hour, f"{f:.6f}", f"{e:.6f}", f"{v:.6f}"])


def load_config(path: str | Path | None = None) -> StudyConfig:
    """Read a study TOML file; ``None`` loads the bundled default."""
    path = Path(path) if path is not None else default_config_path()
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    here = path.parent

    def rel(p):
        p = Path(p)
        return p if p.is_absolute() else here / p

    try:
        t = raw.get("turbine", {})
        curve = TurbineCurve(t.get("cut_in", 3.0), t.get("rated_speed", 13.0),
                             t.get("cut_out", 25.0), t.get("rated_power", 5.0))
        farms = [FarmSpec(int(f["bus"]), int(f["turbines"]), curve) for f in raw.get("farms", [])]
        wind = raw.get("wind", {})
        forecast_file = rel(wind["forecast"])
        profile_file = rel(wind["temporal_profile"])
        for p in (forecast_file, profile_file):
            if not p.exists():
                raise ConfigError(f"file not found: {p}")
        corr = raw.get("correlation", {})
        cap = raw.get("capacity", {})
        loc = raw.get("location", {})
        meth = raw.get("method", {})
        ts = raw.get("timeseries", {})
        case = raw["case"]
        return StudyConfig(
            case_path=rel(case["path"]),
            sending=case.get("sending"),
            farms=farms,
            curve=curve,
            forecast=read_forecast(forecast_file),
            profile=read_temporal_profile(profile_file),
            load_profile=raw["load"]["profile"],
            rho=float(wind.get("rho", 0.5)),
            seed=int(wind.get("seed", 2024)),
            rho_values=[float(r) for r in corr.get("rho_values", [0.0, 0.3, 0.5, 0.8, 1.0])],
            multi_farm_buses=[int(b) for b in corr.get("multi_farm_buses", [])],
            multi_farm_turbines=int(corr.get("multi_farm_turbines", 20)),
            capacities_mw=[float(c) for c in cap.get("capacities_mw", [0, 100, 300, 600, 800, 1000])],
            location_hours=[int(h) for h in loc.get("hours", [3, 6, 15, 22])],
            location_fixed_bus=int(loc.get("fixed_bus", 16)),
            location_receiving=[int(b) for b in loc.get("receiving", [])],
            location_sending=[int(b) for b in loc.get("sending", [])],
            method_hours=[int(h) for h in meth.get("hours", [1, 4, 10, 14, 19])],
            method_sending_bus=int(meth.get("sending_bus", 38)),
            method_receiving_bus=int(meth.get("receiving_bus", 39)),
            method_replaced_mw=float(meth.get("replaced_mw", 200.0)),
            method_farms=int(meth.get("farms", 2)),
            method_farm_turbines=int(meth.get("farm_turbines", 20)),
            resolution_min=int(ts.get("resolution_min", 60)),
            solver=SolverOptions(**raw.get("solver", {})),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid configuration ({exc!r})") from None
