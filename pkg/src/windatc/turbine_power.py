"""Piecewise-linear turbine power curve and farm aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["TurbineCurve", "FarmSpec", "turbine_output", "farm_output"]


@dataclass(frozen=True)
class TurbineCurve:
    cut_in: float = 3.0
    rated_speed: float = 13.0
    cut_out: float = 25.0
    rated_power: float = 5.0  # MW

    def __post_init__(self):
        if not 0 < self.cut_in < self.rated_speed < self.cut_out:
            raise ValueError("need 0 < cut_in < rated_speed < cut_out")
        if self.rated_power <= 0:
            raise ValueError("rated_power must be positive")


@dataclass(frozen=True)
class FarmSpec:
    bus_id: int
    turbine_count: int
    curve: TurbineCurve = TurbineCurve()

    def __post_init__(self):
        if self.turbine_count < 1:
            raise ValueError("a farm needs at least one turbine")

    @property
    def capacity(self) -> float:
        return self.turbine_count * self.curve.rated_power


def turbine_output(v, curve: TurbineCurve):
    """Turbine output in MW. Zero below cut-in and strictly above cut-out,
    linear between cut-in and rated speed, rated power up to and including cut-out.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("wind speed must be non-negative")
    ramp = curve.rated_power * (v - curve.cut_in) / (curve.rated_speed - curve.cut_in)
    p = np.where(v < curve.cut_in, 0.0,
                 np.where(v <= curve.rated_speed, ramp,
                          np.where(v <= curve.cut_out, curve.rated_power, 0.0)))
    return float(p) if p.ndim == 0 else p


def farm_output(v, farm: FarmSpec):
    """All turbines in a farm see the same speed."""
    return farm.turbine_count * turbine_output(v, farm.curve)
