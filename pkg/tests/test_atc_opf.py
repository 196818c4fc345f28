import numpy as np
import pytest

from derivcheck import derivative_errors, problem_for, random_feasible_point
from windatc.atc_opf import VariableIndex, assemble


@pytest.fixture(scope="module")
def p39(ieee39):
    return problem_for(ieee39)


class TestAssemble:
    def test_base_state_feasible(self, p39):
        g, _ = p39.equalities(p39.x0)
        assert np.max(np.abs(g)) < 1e-8
        assert p39.objective(p39.x0)[0] == pytest.approx(0.0, abs=1e-12)

    def test_dimensions(self, p39):
        assert p39.n_eq == 78
        assert p39.n == 38 + 39 + 10 + 10
        g, Jg = p39.equalities(p39.x0)
        h, Jh = p39.inequalities(p39.x0)
        assert Jg.shape == (78, p39.n)
        assert len(h) == len(p39.h_lower) == len(p39.h_upper) == Jh.shape[0]
        assert len(h) == 2 * 10 + 46 + 39

    def test_single_wind_bus(self, ieee39, ieee39_base):
        prob = assemble(ieee39, ieee39.partition(), {16: 300.0}, 1.0, ieee39_base)
        nz = np.flatnonzero(prob.wind_p)
        assert list(nz) == [ieee39.index[16]]
        assert prob.wind_p[nz[0]] == 300.0

    def test_unknown_wind_bus(self, ieee39, ieee39_base):
        with pytest.raises(KeyError, match="bus 99"):
            assemble(ieee39, ieee39.partition(), {99: 10.0}, 1.0, ieee39_base)

    def test_load_scale_in_residuals(self, ieee39, ieee39_base):
        part = ieee39.partition()
        a = assemble(ieee39, part, None, 1.0, ieee39_base)
        b = assemble(ieee39, part, None, 1.05, ieee39_base)
        x = a.x0
        diff = b.equalities(x)[0] - a.equalities(x)[0]
        n = ieee39.n_bus
        np.testing.assert_allclose(diff[:n], 0.05 * ieee39.load_p / 100, atol=1e-14)
        np.testing.assert_allclose(diff[n:], 0.05 * ieee39.load_q / 100, atol=1e-14)

    def test_wind_enters_one_residual(self, ieee39, ieee39_base):
        part = ieee39.partition()
        a = assemble(ieee39, part, None, 1.0, ieee39_base)
        b = assemble(ieee39, part, {23: 10.0}, 1.0, ieee39_base)
        diff = b.equalities(a.x0)[0] - a.equalities(a.x0)[0]
        k = ieee39.index[23]
        assert diff[k] == pytest.approx(-0.1, abs=1e-14)
        assert np.count_nonzero(np.abs(diff) > 1e-15) == 1

    def test_base_secure(self, p39, ieee39):
        h, _ = p39.inequalities(p39.x0)
        lo, hi = p39.h_lower, p39.h_upper
        assert np.all(h >= lo) and np.all(h <= hi)
        # set points scheduled exactly at a limit are the only rows on a bound
        pinned = {k for k, g in enumerate(ieee39.generators)
                  if g.p in (g.p_min, g.p_max) and k != ieee39.generators_at(31)[0]}
        on_bound = set(np.flatnonzero((h <= lo) | (h >= hi)))
        assert on_bound <= pinned

    def test_voltage_rows_identity(self, p39, rng):
        x = random_feasible_point(p39, rng)
        h, Jh = p39.inequalities(x)
        nv = p39.net.n_bus
        np.testing.assert_array_equal(h[-nv:], x[p39.index.u])
        np.testing.assert_array_equal(Jh[-nv:][:, p39.index.u], np.eye(nv))

    def test_base_mismatch_requires_partition(self, ieee39):
        from windatc.grid_model import solve_base_power_flow
        base = solve_base_power_flow(ieee39)
        with pytest.raises(ValueError):
            assemble(ieee39, ieee39.partition(), None, 1.0, base)

    def test_pack_unpack_roundtrip(self, p39):
        st = p39.state(p39.x0)
        np.testing.assert_allclose(p39.index.pack(st, 100.0), p39.x0)


class TestObjective:
    def test_gradient_sparsity(self, p39, ieee39):
        _, grad = p39.objective(p39.x0)
        ends = set()
        for k, _, _ in p39.partition.tie_lines:
            br = ieee39.branches[k]
            ends |= {ieee39.index[br.from_bus], ieee39.index[br.to_bus]}
        idx = p39.index
        allowed = {int(idx.u[b]) for b in ends}
        allowed |= {int(idx.theta[b]) for b in ends if idx.theta[b] < idx.size}
        nz = set(np.flatnonzero(grad))
        assert nz and nz <= allowed
        assert not nz & set(idx.pg) and not nz & set(idx.qg)

    def test_non_endpoint_voltage_invisible(self, p39, ieee39):
        x = p39.x0.copy()
        k = ieee39.index[5]
        x[p39.index.u[k]] += 1e-3
        assert p39.objective(x)[0] == pytest.approx(0.0, abs=1e-14)

    def test_transfer_in_mw(self, p39):
        assert p39.transfer_mw(p39.x0) == pytest.approx(0.0, abs=1e-9)


class TestHessian:
    def test_objective_only_two_bus(self, case2):
        prob = problem_for(case2)
        x = prob.x0.copy()
        idx = prob.index
        th = 0.12
        x[idx.theta[1]] = -th  # slack at bus 1 so theta_12 = th
        x[idx.u] = [1.0, 1.0]
        H = prob.lagrangian_hessian(x, np.zeros(prob.n_eq), np.zeros(len(prob.h_lower)), 1.0)
        # f = U1 U2 B sin(th12) with B = 10: d2f/dth2^2 = -B U1 U2 sin(th12)
        t2 = idx.theta[1]
        assert H[t2, t2] == pytest.approx(-10.0 * np.sin(th), abs=1e-12)
        np.testing.assert_array_equal(H, H.T)

    def test_symmetry(self, p39, rng):
        x = random_feasible_point(p39, rng)
        H = p39.lagrangian_hessian(x, rng.standard_normal(p39.n_eq),
                                   rng.standard_normal(len(p39.h_lower)))
        assert np.max(np.abs(H - H.T)) == 0.0


@pytest.mark.parametrize("case", ["case2", "case9", "ieee39"])
def test_derivatives_against_finite_differences(case, request, rng):
    prob = problem_for(request.getfixturevalue(case), load_scale=1.0)
    for _ in range(3):
        x = random_feasible_point(prob, rng)
        e_obj, e_eq, e_in, e_hess = derivative_errors(prob, x, rng)
        assert e_obj < 1e-5
        assert e_eq < 1e-5
        assert e_in < 1e-5
        assert e_hess < 1e-4


def test_variable_index_bijection():
    idx = VariableIndex(5, 2, slack=2)
    assert idx.theta[2] == idx.size
    cols = np.concatenate([np.delete(idx.theta, 2), idx.u, idx.pg, idx.qg])
    assert sorted(cols) == list(range(idx.size))
    assert idx.size == 4 + 5 + 2 + 2
