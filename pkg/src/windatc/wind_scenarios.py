"""Spatiotemporally correlated wind-speed scenarios.

White Gaussian errors are shaped in two passes: every hour-column is mixed
across farms with a factor of the spatial correlation matrix, then every
farm-row is mixed across hours with a factor of that farm's temporal
covariance ``K = V R V`` (``R`` Toeplitz in the autocorrelation vector, ``V``
the diagonal of per-hour standard deviations). The shaped errors are added to
the forecast and clipped at zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "NotPositiveSemidefiniteError",
    "ScenarioDims",
    "SpatialCorrelation",
    "TemporalProfile",
    "TemporalCovariance",
    "SymmetricFactor",
    "ErrorMatrix",
    "WindScenarioSet",
    "build_spatial_correlation",
    "spatial_correlation_from_matrix",
    "factor_symmetric",
    "sample_raw_errors",
    "apply_spatial",
    "build_temporal_covariance",
    "apply_temporal",
    "generate_scenarios",
    "geometric_profile",
]

SYM_TOL = 1e-12
EIG_TOL = 1e-10


class NotPositiveSemidefiniteError(ValueError):
    def __init__(self, message: str, eigenvalue: float):
        super().__init__(message)
        self.eigenvalue = eigenvalue


@dataclass(frozen=True)
class ScenarioDims:
    n_farms: int
    n_hours: int

    def __post_init__(self):
        if self.n_farms < 1 or self.n_hours < 1:
            raise ValueError("need at least one farm and one hour")


@dataclass(frozen=True)
class SpatialCorrelation:
    matrix: np.ndarray

    @property
    def n_farms(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class TemporalProfile:
    """Autocorrelation by lag (``autocorr[0]`` is lag 0) and per-hour error std (m/s)."""

    autocorr: np.ndarray
    stddev: np.ndarray

    def __post_init__(self):
        ac = np.asarray(self.autocorr, float)
        sd = np.asarray(self.stddev, float)
        object.__setattr__(self, "autocorr", ac)
        object.__setattr__(self, "stddev", sd)
        if ac.ndim != 1 or ac.shape != sd.shape or len(ac) == 0:
            raise ValueError("autocorr and stddev must be equal-length vectors")
        if not np.isclose(ac[0], 1.0, rtol=0, atol=1e-12):
            raise ValueError("autocorr[0] (lag 0) must equal 1")
        if np.any(np.abs(ac) > 1):
            raise ValueError("autocorrelation entries must lie in [-1, 1]")
        if np.any(sd < 0) or not np.all(np.isfinite(sd)):
            raise ValueError("standard deviations must be finite and non-negative")

    @property
    def n_hours(self) -> int:
        return len(self.autocorr)


@dataclass(frozen=True)
class TemporalCovariance:
    toeplitz_corr: np.ndarray
    variance_diag: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class SymmetricFactor:
    """``m = unitary @ diag(singular_values) @ unitary.T``."""

    unitary: np.ndarray
    singular_values: np.ndarray

    @property
    def shaping(self) -> np.ndarray:
        """``U Sigma^(1/2)``; maps white noise to noise with covariance ``m``."""
        return self.unitary * np.sqrt(self.singular_values)

    def reconstruct(self) -> np.ndarray:
        return (self.unitary * self.singular_values) @ self.unitary.T


@dataclass(frozen=True)
class ErrorMatrix:
    values: np.ndarray  # farms x hours, m/s
    stage: str  # "raw" | "spatial" | "spatiotemporal"


@dataclass(frozen=True)
class WindScenarioSet:
    dims: ScenarioDims
    forecast: np.ndarray
    errors: ErrorMatrix
    speeds: np.ndarray
    rng_seed: int

    def rows(self):
        """Yield (farm, hour, forecast, error, speed) with 1-based farm/hour."""
        for w in range(self.dims.n_farms):
            for h in range(self.dims.n_hours):
                yield (w + 1, h + 1, self.forecast[w, h], self.errors.values[w, h],
                       self.speeds[w, h])


def build_spatial_correlation(rho: float, n_farms: int) -> SpatialCorrelation:
    """Equicorrelation matrix with unit diagonal and ``rho`` elsewhere."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if n_farms < 1:
        raise ValueError("n_farms must be at least 1")
    m = np.full((n_farms, n_farms), float(rho))
    np.fill_diagonal(m, 1.0)
    return SpatialCorrelation(m)


def spatial_correlation_from_matrix(matrix) -> SpatialCorrelation:
    """Validate a user-supplied correlation matrix."""
    m = np.array(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("correlation matrix must be square")
    if not np.allclose(m, m.T, rtol=0, atol=SYM_TOL):
        raise ValueError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(m), 1.0, rtol=0, atol=SYM_TOL):
        raise ValueError("correlation matrix must have a unit diagonal")
    if np.any(np.abs(m) > 1):
        raise ValueError("correlations must lie in [-1, 1]")
    lo = float(np.linalg.eigvalsh(m).min())
    if lo < -EIG_TOL:
        raise NotPositiveSemidefiniteError(
            f"correlation matrix is not positive semidefinite (eigenvalue {lo:.3e})", lo)
    return SpatialCorrelation(m)


def factor_symmetric(m) -> SymmetricFactor:
    """Symmetric eigendecomposition of a PSD matrix (its SVD, for PSD input).

    Eigenvalues in [-1e-10, 0) are rounded up to zero; anything lower raises.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(m, m.T, rtol=0, atol=SYM_TOL):
        raise ValueError("matrix must be symmetric")
    vals, vecs = scipy.linalg.eigh(m)
    if vals.size and vals.min() < -EIG_TOL:
        raise NotPositiveSemidefiniteError(
            f"matrix is not positive semidefinite (eigenvalue {vals.min():.3e})",
            float(vals.min()))
    vals = np.clip(vals, 0.0, None)
    order = np.argsort(-vals, kind="stable")
    vecs = vecs[:, order]
    # fix each eigenvector's sign: largest-magnitude entry positive
    pivot = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])]
    vecs = vecs * np.where(pivot < 0, -1.0, 1.0)
    return SymmetricFactor(vecs, vals[order])


def sample_raw_errors(dims: ScenarioDims, seed: int) -> ErrorMatrix:
    rng = np.random.default_rng(seed)
    return ErrorMatrix(rng.standard_normal((dims.n_farms, dims.n_hours)), "raw")


def apply_spatial(factor: SymmetricFactor, raw: ErrorMatrix,
                  per_hour: Sequence[SymmetricFactor] | None = None) -> ErrorMatrix:
    """Mix each hour-column across farms: ``W_S[:, h] = U Sigma^(1/2) W[:, h]``.

    ``per_hour`` optionally supplies a different factor for every hour.
    """
    if raw.stage != "raw":
        raise ValueError(f"spatial shaping expects raw errors, got stage {raw.stage!r}")
    n_farms, n_hours = raw.values.shape
    if per_hour is None:
        if factor.unitary.shape[0] != n_farms:
            raise ValueError(
                f"factor is {factor.unitary.shape[0]}x{factor.unitary.shape[0]} but "
                f"errors have {n_farms} farms")
        return ErrorMatrix(factor.shaping @ raw.values, "spatial")
    if len(per_hour) != n_hours:
        raise ValueError("need one spatial factor per hour")
    cols = []
    for h, fac in enumerate(per_hour):
        if fac.unitary.shape[0] != n_farms:
            raise ValueError(f"hour {h + 1}: factor size does not match farm count")
        cols.append(fac.shaping @ raw.values[:, h])
    return ErrorMatrix(np.column_stack(cols), "spatial")


def build_temporal_covariance(profile: TemporalProfile) -> TemporalCovariance:
    """Toeplitz correlation ``R[p, f] = autocorr[|p - f|]`` scaled to ``K = V R V``."""
    R = scipy.linalg.toeplitz(profile.autocorr)
    V = np.diag(profile.stddev)
    K = V @ R @ V
    lo = float(np.linalg.eigvalsh(K).min()) if K.size else 0.0
    if lo < -EIG_TOL:
        raise NotPositiveSemidefiniteError(
            "autocorrelation vector is invalid: its Toeplitz matrix is not positive "
            f"semidefinite (eigenvalue {lo:.3e})", lo)
    return TemporalCovariance(R, V, K)


def apply_temporal(factor: SymmetricFactor, spatial_row) -> np.ndarray:
    """Mix one farm's error row across hours: ``W_ST = W_S (U Sigma^(1/2))^T``.

    Also accepts a 2-D array of rows, each shaped independently.
    """
    row = np.asarray(spatial_row, dtype=float)
    n = factor.unitary.shape[0]
    if row.shape[-1] != n:
        raise ValueError(f"row has {row.shape[-1]} hours, factor expects {n}")
    return row @ factor.shaping.T


def generate_scenarios(forecast, spatial: SpatialCorrelation,
                       profiles: Sequence[TemporalProfile] | TemporalProfile,
                       seed: int) -> WindScenarioSet:
    """Forecast plus spatiotemporally correlated errors, clipped at zero."""
    F = np.atleast_2d(np.asarray(forecast, dtype=float))
    if np.any(F < 0) or not np.all(np.isfinite(F)):
        raise ValueError("forecast speeds must be finite and non-negative")
    dims = ScenarioDims(*F.shape)
    if spatial.n_farms != dims.n_farms:
        raise ValueError(
            f"spatial correlation is for {spatial.n_farms} farms, forecast has {dims.n_farms}")
    if isinstance(profiles, TemporalProfile):
        profiles = [profiles] * dims.n_farms
    if len(profiles) != dims.n_farms:
        raise ValueError("need one temporal profile per farm")

    raw = sample_raw_errors(dims, seed)
    spatial_err = apply_spatial(factor_symmetric(spatial.matrix), raw)
    rows = []
    for w, prof in enumerate(profiles):
        if prof.n_hours != dims.n_hours:
            raise ValueError(
                f"farm {w + 1}: profile covers {prof.n_hours} hours, forecast {dims.n_hours}")
        K = build_temporal_covariance(prof).covariance
        rows.append(apply_temporal(factor_symmetric(K), spatial_err.values[w]))
    errors = ErrorMatrix(np.vstack(rows), "spatiotemporal")
    speeds = np.maximum(F + errors.values, 0.0)
    return WindScenarioSet(dims, F, errors, speeds, seed)


def geometric_profile(n_hours: int, decay: float = 0.8, stddev: float = 0.05) -> TemporalProfile:
    """Autocorrelation ``decay**lag`` with a constant error std."""
    lags = np.arange(n_hours)
    return TemporalProfile(decay ** lags, np.full(n_hours, float(stddev)))
