"""Randomized invariants over inputs the example tests do not enumerate."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from windatc.pdipm import Direction, IterationState, step_lengths, update_barrier
from windatc.turbine_power import TurbineCurve, turbine_output
from windatc.wind_scenarios import (TemporalProfile, build_temporal_covariance,
                                    factor_symmetric)

speeds = st.floats(0, 40, allow_nan=False)
positive = arrays(float, 4, elements=st.floats(1e-3, 1e3))
signed = arrays(float, 4, elements=st.floats(-1e3, 1e3))


@given(speeds)
def test_power_bounded(v):
    assert 0.0 <= turbine_output(v, TurbineCurve()) <= 5.0


@given(speeds, speeds)
def test_power_monotone_up_to_cut_out(a, b):
    c = TurbineCurve()
    a, b = sorted((a, b))
    if b <= c.cut_out:
        assert turbine_output(a, c) <= turbine_output(b, c)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_factor_reconstructs_psd(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n))
    m = a @ a.T
    f = factor_symmetric(m)
    assert np.linalg.norm(f.reconstruct() - m) <= 1e-9 * max(np.linalg.norm(m), 1.0)
    assert np.all(np.diff(f.singular_values) <= 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 0.95), st.integers(2, 24))
def test_geometric_autocorrelation_gives_psd_covariance(decay, n):
    cov = build_temporal_covariance(TemporalProfile(decay ** np.arange(n), np.ones(n)))
    assert np.linalg.eigvalsh(cov.covariance).min() > -1e-10


@given(positive, positive, positive, positive, signed, signed, signed, signed)
def test_step_keeps_interior(l, u, z, w, dl, du, dz, dw):
    state = IterationState(np.zeros(1), l, u, np.zeros(0), z, -w)
    d = Direction(np.zeros(1), dl, du, np.zeros(0), dz, dw)
    ap, ad = step_lengths(state, d, 0.9995)
    assert 0 < ap <= 1 and 0 < ad <= 1
    tol = 1e-9
    assert np.all(l + ap * dl >= (1 - 0.9995) * l * (1 - tol))
    assert np.all(u + ap * du >= (1 - 0.9995) * u * (1 - tol))
    assert np.all(z + ad * dz >= (1 - 0.9995) * z * (1 - tol))
    assert np.all(-w + ad * dw <= -(1 - 0.9995) * w * (1 - tol))


@given(st.floats(0, 1e6), st.floats(0, 1e6), st.integers(1, 1000))
def test_barrier_monotone(g1, g2, n):
    lo, hi = sorted((g1, g2))
    assert update_barrier(lo, 0.1, n) <= update_barrier(hi, 0.1, n)
