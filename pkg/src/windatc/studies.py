"""Batch ATC studies on a two-area network with wind farms.

Every study solves one ATC program per (parameter, hour) cell and records
each outcome, failures included. Solves run serially, so results are
deterministic for a fixed configuration and seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .atc_opf import AtcProblem, assemble
from .config import ConfigError, StudyConfig
from .grid_model import (AreaPartition, BaseState, PowerFlowError, PowerNetwork,
                         parse_case, solve_base_power_flow)
from .pdipm import PdipmSolution, SolverOptions, solve, write_trace
from .turbine_power import FarmSpec, farm_output
from .wind_scenarios import WindScenarioSet, build_spatial_correlation, generate_scenarios

__all__ = [
    "ResultRow",
    "StudyResult",
    "AtcRunner",
    "scenarios_for",
    "run_correlation_sweep",
    "run_capacity_sweep",
    "detect_plateau",
    "run_location_study",
    "run_integration_method_study",
    "run_time_series",
    "run_all",
]

logger = logging.getLogger(__name__)

PLATEAU_TOL_MW = 0.1


@dataclass(frozen=True)
class ResultRow:
    study: str
    param: str
    hour: float
    atc_mw: float
    status: str
    iters: int


@dataclass
class StudyResult:
    study: str
    rows: list[ResultRow] = field(default_factory=list)
    params: list[str] = field(default_factory=list)  # swept values in configured order
    summary: dict = field(default_factory=dict)
    solutions: dict = field(default_factory=dict)  # (param, hour) -> (problem, solution)
    by_hour: bool = False  # order rows by time alone (time series)

    def add(self, param: str, hour: float, atc: float, status: str, iters: int):
        if param not in self.params:
            self.params.append(param)
        self.rows.append(ResultRow(self.study, param, float(hour), atc, status, iters))

    def sorted_rows(self) -> list[ResultRow]:
        if self.by_hour:
            return sorted(self.rows, key=lambda r: r.hour)
        rank = {p: k for k, p in enumerate(self.params)}
        return sorted(self.rows, key=lambda r: (rank[r.param], r.hour))

    @property
    def all_converged(self) -> bool:
        return bool(self.rows) and all(r.status == "converged" for r in self.rows)

    def series(self, param: str) -> tuple[np.ndarray, np.ndarray]:
        rows = [r for r in self.sorted_rows() if r.param == param]
        return np.array([r.hour for r in rows]), np.array([r.atc_mw for r in rows])

    def value(self, param: str, hour: float) -> float:
        for r in self.rows:
            if r.param == param and r.hour == hour:
                return r.atc_mw
        raise KeyError((param, hour))


class AtcRunner:
    """Solves single-hour ATC programs on one network, caching base states per load level."""

    def __init__(self, net: PowerNetwork, partition: AreaPartition,
                 options: SolverOptions | None = None, trace_dir: Path | None = None,
                 keep_solutions: bool = False):
        self.net = net
        self.partition = partition
        self.options = options or SolverOptions()
        self.trace_dir = trace_dir
        self.keep_solutions = keep_solutions
        self._bases: dict[float, BaseState] = {}

    @classmethod
    def from_config(cls, config: StudyConfig, **kw) -> "AtcRunner":
        net = parse_case(config.case_path)
        return cls(net, net.partition(config.sending), config.solver, **kw)

    def base(self, load_scale: float) -> BaseState:
        """No-wind base state of the unmodified network; supplies P0 for every study."""
        key = round(float(load_scale), 12)
        if key not in self._bases:
            self._bases[key] = solve_base_power_flow(self.net, load_scale,
                                                     partition=self.partition)
        return self._bases[key]

    def solve(self, wind: dict[int, float], load_scale: float,
              net: PowerNetwork | None = None) -> tuple[AtcProblem, PdipmSolution]:
        problem = assemble(net or self.net, self.partition, wind, load_scale,
                           self.base(load_scale))
        return problem, solve(problem, self.options)

    def record(self, result: StudyResult, param: str, hour: float,
               wind: dict[int, float], load_scale: float, net: PowerNetwork | None = None):
        """Solve one cell and append its row; failures become rows, not exceptions."""
        try:
            problem, sol = self.solve(wind, load_scale, net)
        except (PowerFlowError, np.linalg.LinAlgError) as exc:
            logger.warning("%s %s h=%g: %s", result.study, param, hour, exc)
            result.add(param, hour, math.nan, "numerical_failure", 0)
            return
        atc = sol.objective * self.net.base_mva if np.isfinite(sol.objective) else math.nan
        if not sol.converged:
            logger.warning("%s %s h=%g: %s %s", result.study, param, hour, sol.status,
                           sol.message)
        result.add(param, hour, atc, sol.status, sol.iterations)
        if self.keep_solutions:
            result.solutions[(param, float(hour))] = (problem, sol)
        if self.trace_dir is not None:
            self.trace_dir.mkdir(parents=True, exist_ok=True)
            tag = param.replace(":", "_").replace("/", "_")
            write_trace(sol, self.trace_dir / f"{result.study}_{tag}_h{hour:g}.csv")


def scenarios_for(config: StudyConfig, n_farms: int, rho: float | None = None) -> WindScenarioSet:
    rho = config.rho if rho is None else rho
    return generate_scenarios(config.forecast_for(n_farms),
                              build_spatial_correlation(rho, n_farms),
                              config.profile, config.seed)


def _wind_at(farms: list[FarmSpec], speeds: np.ndarray) -> dict[int, float]:
    """Farm outputs (MW) summed per bus for one column of speeds."""
    out: dict[int, float] = {}
    for farm, v in zip(farms, speeds):
        out[farm.bus_id] = out.get(farm.bus_id, 0.0) + float(farm_output(v, farm))
    return out


def _check_farm_buses(runner: AtcRunner, farms: list[FarmSpec]):
    for f in farms:
        if f.bus_id not in runner.net.index:
            raise ConfigError(f"wind farm bus {f.bus_id} is not in the case")


def run_correlation_sweep(config: StudyConfig, farms: list[FarmSpec] | None = None,
                          study: str = "correlation_sweep",
                          runner: AtcRunner | None = None) -> StudyResult:
    """ATC for every configured rho and hour; one seed shared across rho values."""
    farms = list(config.farms if farms is None else farms)
    if len(farms) < 2:
        raise ConfigError("a correlation sweep needs at least two farms")
    runner = runner or AtcRunner.from_config(config)
    _check_farm_buses(runner, farms)
    result = StudyResult(study)
    for rho in config.rho_values:
        speeds = scenarios_for(config, len(farms), rho).speeds
        for h in range(24):
            runner.record(result, f"{rho:g}", h + 1, _wind_at(farms, speeds[:, h]),
                          config.load_profile[h])
    return result


def multi_farm_specs(config: StudyConfig) -> list[FarmSpec]:
    return [FarmSpec(b, config.multi_farm_turbines, config.curve)
            for b in config.multi_farm_buses]


def detect_plateau(capacities, peak_atc, tol: float = PLATEAU_TOL_MW) -> float | None:
    """Smallest capacity past which peak ATC rises by less than ``tol`` at every later step."""
    caps = list(capacities)
    peak = np.asarray(peak_atc, float)
    for k in range(len(caps) - 1):
        if np.all(np.diff(peak[k:]) < tol):
            return caps[k]
    return None


def run_capacity_sweep(config: StudyConfig, capacities=None,
                       runner: AtcRunner | None = None) -> StudyResult:
    """ATC series for each per-farm capacity (MW); capacity 0 means no farms."""
    caps = [float(c) for c in (config.capacities_mw if capacities is None else capacities)]
    runner = runner or AtcRunner.from_config(config)
    _check_farm_buses(runner, config.farms)
    speeds = scenarios_for(config, len(config.farms)).speeds
    result = StudyResult("capacity_sweep")
    peaks = []
    for cap in caps:
        count = cap / config.curve.rated_power
        if cap < 0 or abs(count - round(count)) > 1e-9:
            raise ConfigError(
                f"capacity {cap:g} MW is not a whole number of {config.curve.rated_power:g} MW turbines")
        farms = [FarmSpec(f.bus_id, int(round(count)), config.curve)
                 for f in config.farms] if count >= 1 else []
        for h in range(24):
            wind = _wind_at(farms, speeds[:, h]) if farms else {}
            runner.record(result, f"{cap:g}", h + 1, wind, config.load_profile[h])
        peaks.append(float(np.max(result.series(f"{cap:g}")[1])))
    result.summary = {
        "capacities_mw": caps,
        "peak_atc_mw": peaks,
        "plateau_capacity_mw": detect_plateau(caps, peaks),
    }
    return result


def run_location_study(config: StudyConfig, locations=None,
                       runner: AtcRunner | None = None) -> StudyResult:
    """ATC for farm-pair sitings at the configured hours, plus a no-wind baseline.

    ``locations`` is a list of ``(label, bus_1, bus_2)``; by default farm 1
    stays at the fixed bus and farm 2 moves over the receiving and sending
    candidates.
    """
    runner = runner or AtcRunner.from_config(config)
    if locations is None:
        fb = config.location_fixed_bus
        locations = ([("receiving", fb, b) for b in config.location_receiving]
                     + [("sending", fb, b) for b in config.location_sending])
    counts = [f.turbine_count for f in config.farms[:2]]
    if len(counts) < 2:
        raise ConfigError("the location study needs two farms in the configuration")
    speeds = scenarios_for(config, 2).speeds
    result = StudyResult("location_study")
    for h in config.location_hours:
        runner.record(result, "none", h, {}, config.load_profile[h - 1])
    for label, b1, b2 in locations:
        farms = [FarmSpec(b1, counts[0], config.curve), FarmSpec(b2, counts[1], config.curve)]
        _check_farm_buses(runner, farms)
        for h in config.location_hours:
            runner.record(result, f"{label}:{b1}-{b2}", h,
                          _wind_at(farms, speeds[:, h - 1]), config.load_profile[h - 1])
    return result


def run_integration_method_study(config: StudyConfig, replaced_mw: float | None = None,
                                 runner: AtcRunner | None = None) -> StudyResult:
    """Wind replacing conventional capacity at a sending (a) or receiving (b) bus.

    Replacement lowers that bus's generator ``p_max`` by ``replaced_mw`` and
    connects the configured farms there. P0 always comes from the unmodified
    no-wind base at the same load level.
    """
    runner = runner or AtcRunner.from_config(config)
    replaced = config.method_replaced_mw if replaced_mw is None else float(replaced_mw)
    net = runner.net
    speeds = scenarios_for(config, config.method_farms).speeds
    result = StudyResult("integration_method")
    for h in config.method_hours:
        runner.record(result, "none", h, {}, config.load_profile[h - 1])
    for label, bus in (("a", config.method_sending_bus), ("b", config.method_receiving_bus)):
        gens = net.generators_at(bus)
        if not gens:
            raise ConfigError(f"no generator at replacement bus {bus}")
        k = gens[0]
        g = net.generators[k]
        if g.p < replaced:
            raise ConfigError(
                f"generator at bus {bus} dispatches {g.p:g} MW, less than the {replaced:g} MW replaced")
        if replaced > 0:
            modified = net.with_generator(k, p_max=g.p_max - replaced,
                                          p=min(g.p, g.p_max - replaced))
            farms = [FarmSpec(bus, config.method_farm_turbines, config.curve)
                     for _ in range(config.method_farms)]
        else:
            modified, farms = net, []
        for h in config.method_hours:
            wind = _wind_at(farms, speeds[:, h - 1]) if farms else {}
            runner.record(result, f"{label}:{bus}", h, wind, config.load_profile[h - 1],
                          net=modified)
    return result


def _periodic_interp(hourly: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Linear interpolation of hourly samples at 0-based fractional times, wrapping at 24."""
    hourly = np.asarray(hourly, float)
    k = np.floor(t).astype(int) % 24
    frac = t - np.floor(t)
    return hourly[..., k] * (1 - frac) + hourly[..., (k + 1) % 24] * frac


def run_time_series(config: StudyConfig, resolution: int | None = None,
                    runner: AtcRunner | None = None) -> StudyResult:
    """ATC over one day at ``resolution`` minutes; ``param`` carries the load coefficient."""
    res = config.resolution_min if resolution is None else int(resolution)
    if res < 1 or (24 * 60) % res:
        raise ConfigError(f"resolution {res} min does not divide a day")
    runner = runner or AtcRunner.from_config(config)
    _check_farm_buses(runner, config.farms)
    n = 24 * 60 // res
    t = np.arange(n) * res / 60.0
    load = _periodic_interp(config.load_profile, t)
    speeds = _periodic_interp(scenarios_for(config, len(config.farms)).speeds, t)
    result = StudyResult("time_series", by_hour=True)
    for k in range(n):
        # round so the cached base state and the reported coefficient agree
        b = round(float(load[k]), 9)
        runner.record(result, f"{b:.9g}", 1 + t[k], _wind_at(config.farms, speeds[:, k]), b)
    return result


def run_all(config: StudyConfig, runner: AtcRunner | None = None) -> list[StudyResult]:
    runner = runner or AtcRunner.from_config(config)
    results = [run_correlation_sweep(config, runner=runner)]
    if len(config.multi_farm_buses) >= 2:
        results.append(run_correlation_sweep(config, multi_farm_specs(config),
                                             "correlation_multi", runner))
    results += [
        run_capacity_sweep(config, runner=runner),
        run_location_study(config, runner=runner),
        run_integration_method_study(config, runner=runner),
        run_time_series(config, runner=runner),
    ]
    return results
