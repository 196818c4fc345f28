import numpy as np
import pytest

from windatc.grid_model import (
    Branch,
    CaseFormatError,
    PowerFlowError,
    branch_flow,
    build_admittance,
    parse_case_text,
    power_mismatch,
    solve_base_power_flow,
    tie_transfer,
)

TWO_BUS = """
base_mva 100
[bus]
1 slack 0 0 0 0 0.9 1.1 A
2 PQ {load} 0 0 0 0.9 1.1 B
[gen]
1 0 0 -300 300 1.0 0 300
[branch]
1 2 {r} {x} 0 300 1
"""


def two_bus(load=100.0, r=0.0, x=0.1):
    return parse_case_text(TWO_BUS.format(load=load, r=r, x=x), "two-bus")


class TestParse:
    def test_ieee39_counts(self, ieee39):
        assert ieee39.n_bus == 39
        assert ieee39.n_gen == 10
        assert len(ieee39.branches) == 46
        assert ieee39.total_load == pytest.approx(6254.23, abs=1e-6)

    def test_ieee39_partition(self, ieee39):
        part = ieee39.partition()
        pairs = sorted(tuple(sorted((s, r))) for _, s, r in part.tie_lines)
        assert pairs == [(14, 15), (17, 18), (25, 26)]
        assert {s for _, s, _ in part.tie_lines} == {15, 17, 26}
        assert part.sending | part.receiving == set(ieee39.index)
        assert not part.sending & part.receiving

    def test_two_bus_fixture(self, case2):
        kinds = sorted(b.kind for b in case2.buses)
        assert kinds == ["PQ", "slack"]
        assert len(case2.branches) == 1

    def test_duplicate_slack_names_both(self):
        text = TWO_BUS.format(load=0, r=0, x=0.1).replace("2 PQ", "2 slack")
        with pytest.raises(CaseFormatError, match=r"\[1, 2\]"):
            parse_case_text(text)

    def test_dangling_branch(self):
        text = TWO_BUS.format(load=0, r=0, x=0.1).replace("1 2 0 0.1", "1 7 0 0.1")
        with pytest.raises(CaseFormatError, match="unknown bus 7"):
            parse_case_text(text)

    def test_dangling_generator(self):
        text = TWO_BUS.format(load=0, r=0, x=0.1).replace("\n1 0 0 -300", "\n9 0 0 -300")
        with pytest.raises(CaseFormatError, match="unknown bus 9"):
            parse_case_text(text)

    def test_syntax_error_line_number(self):
        text = "base_mva 100\n[bus]\n1 slack 0 0 0 0 0.9 1.1\n"
        with pytest.raises(CaseFormatError, match="line 3"):
            parse_case_text(text)

    def test_bad_number_line_number(self):
        text = TWO_BUS.format(load="abc", r=0, x=0.1)
        with pytest.raises(CaseFormatError, match="line 5"):
            parse_case_text(text)

    def test_unknown_section(self):
        with pytest.raises(CaseFormatError, match="line 1"):
            parse_case_text("[loads]\n")

    def test_duplicate_bus(self):
        text = TWO_BUS.format(load=0, r=0, x=0.1).replace("2 PQ", "1 PQ")
        with pytest.raises(CaseFormatError, match="duplicate"):
            parse_case_text(text)

    def test_branch_to_itself(self):
        with pytest.raises(CaseFormatError):
            Branch(1, 1, 0.0, 0.1, 0.0, 0.0, 1.0)


class TestAdmittance:
    def test_two_bus_hand_built(self):
        # y = 1 - j10  <=>  z = 1 / (1 - j10)
        z = 1 / (1 - 10j)
        net = two_bus(r=z.real, x=z.imag)
        Y = build_admittance(net)
        y = 1 - 10j
        np.testing.assert_allclose(Y, [[y, -y], [-y, y]], atol=1e-12)

    def test_empty_branch_set(self, case9):
        Y = build_admittance(case9, branches=[], include_shunts=False)
        assert np.all(Y == 0)

    def test_parallel_branch_doubles(self, case2):
        br = case2.branches[0]
        Y1 = build_admittance(case2)
        Y2 = build_admittance(case2, branches=[br, br])
        np.testing.assert_allclose(Y2[0, 1], 2 * Y1[0, 1])

    def test_union_is_sum(self, ieee39):
        brs = ieee39.branches
        a = build_admittance(ieee39, brs[:20], include_shunts=False)
        b = build_admittance(ieee39, brs[20:], include_shunts=False)
        full = build_admittance(ieee39, include_shunts=False)
        np.testing.assert_allclose(a + b, full, atol=1e-12)

    def test_symmetric(self, ieee39):
        Y = build_admittance(ieee39)
        np.testing.assert_allclose(Y, Y.T, atol=1e-12)


class TestPowerFlow:
    def test_zero_load_flat(self):
        net = two_bus(load=0.0)
        bs = solve_base_power_flow(net, partition=net.partition())
        np.testing.assert_allclose(bs.state.voltage_mag, 1.0)
        np.testing.assert_allclose(bs.state.voltage_ang, 0.0, atol=1e-14)
        assert abs(bs.total_tie_flow) < 1e-9

    def test_two_bus_analytic(self):
        net = two_bus(load=100.0)
        bs = solve_base_power_flow(net, partition=net.partition())
        U2 = bs.state.voltage_mag[1]
        dth = bs.state.voltage_ang[0] - bs.state.voltage_ang[1]
        # lossless line: P = U1 U2 B sin(dth), B = 1/x = 10 pu
        assert dth == pytest.approx(np.arcsin(1.0 / (U2 * 10.0)), abs=1e-8)
        assert bs.state.gen_p[0] == pytest.approx(100.0, abs=1e-6)
        assert bs.total_tie_flow == pytest.approx(100.0, abs=1e-6)

    def test_ieee39_converges(self, ieee39_base):
        assert ieee39_base.iterations <= 10
        assert ieee39_base.mismatch < 1e-8

    def test_ieee39_against_pypower(self, ieee39, ieee39_base):
        pypower = pytest.importorskip("pypower.api")
        from pypower.ppoption import ppoption

        res, ok = pypower.runpf(pypower.case39(), ppoption(VERBOSE=0, OUT_ALL=0))
        assert ok
        vm = {int(r[0]): r[7] for r in res["bus"]}
        va = {int(r[0]): np.deg2rad(r[8]) for r in res["bus"]}
        st = ieee39_base.state
        for bid, k in ieee39.index.items():
            assert st.voltage_mag[k] == pytest.approx(vm[bid], abs=1e-6)
            assert st.voltage_ang[k] == pytest.approx(va[bid], abs=1e-6)
        # pypower's from-end branch flows for the ties
        flows = {}
        for row in res["branch"]:
            f, t = int(row[0]), int(row[1])
            flows[(f, t)] = row[13]
            flows[(t, f)] = row[15]
        part = ieee39.partition()
        expected = [flows[(s, r)] for _, s, r in part.tie_lines]
        np.testing.assert_allclose(ieee39_base.tie_flows, expected, atol=0.1)

    def test_nonconvergence_reports_mismatch(self):
        net = two_bus(load=5000.0)
        with pytest.raises(PowerFlowError) as err:
            solve_base_power_flow(net, max_iter=5)
        assert err.value.mismatch > 0
        assert err.value.iterations == 5

    def test_bus_balance_at_solution(self, ieee39, ieee39_base):
        # injection minus load minus outgoing branch flows, per bus
        st = ieee39_base.state
        n = ieee39.n_bus
        bal = np.zeros(n)
        np.add.at(bal, ieee39.gen_bus, st.gen_p)
        bal -= ieee39.load_p
        bal -= np.array([b.shunt_g for b in ieee39.buses]) * st.voltage_mag**2
        for br in ieee39.branches:
            bal[ieee39.index[br.from_bus]] -= branch_flow(st, ieee39, br, at_from=True)
            bal[ieee39.index[br.to_bus]] -= branch_flow(st, ieee39, br, at_from=False)
        assert np.max(np.abs(bal)) / ieee39.base_mva < 1e-6

    def test_fixpoint(self, ieee39, ieee39_base):
        r = power_mismatch(ieee39, ieee39_base.state)
        assert np.max(np.abs(r)) < 1e-8

    def test_load_scale_validated(self, case2):
        with pytest.raises(ValueError):
            solve_base_power_flow(case2, load_scale=0.0)


class TestBranchFlow:
    def test_flat_state_zero_flow(self, ieee39):
        from windatc.grid_model import NetworkState
        st = NetworkState(np.ones(39), np.zeros(39), np.zeros(10), np.zeros(10))
        for br in ieee39.branches[:10]:
            assert abs(branch_flow(st, ieee39, br)) < 1e-9

    def test_lossless_formula(self):
        from windatc.grid_model import NetworkState
        net = two_bus(x=0.1)  # B_ij = 10
        st = NetworkState(np.ones(2), np.array([0.1, 0.0]), np.zeros(1), np.zeros(1))
        p = branch_flow(st, net, 0) / net.base_mva
        assert p == pytest.approx(10 * np.sin(0.1), abs=1e-12)
        assert p == pytest.approx(0.9983, abs=1e-4)
        assert branch_flow(st, net, 0, at_from=False) == pytest.approx(-p * net.base_mva)

    def test_lossy_formula_pinned(self):
        # P_L = Ui Uj (G cos + B sin) - Ui^2 G with G, B the off-diagonal entries
        from windatc.grid_model import NetworkState
        net = two_bus(r=0.02, x=0.1)
        Y = build_admittance(net)
        G, B = Y[0, 1].real, Y[0, 1].imag
        Ui, Uj, th = 1.03, 0.98, 0.07
        st = NetworkState(np.array([Ui, Uj]), np.array([th, 0.0]), np.zeros(1), np.zeros(1))
        expected = Ui * Uj * (G * np.cos(th) + B * np.sin(th)) - Ui**2 * G
        assert branch_flow(st, net, 0) / 100 == pytest.approx(expected, abs=1e-12)

    def test_tie_transfer_consistency(self, ieee39, ieee39_base):
        flows, total = tie_transfer(ieee39, ieee39_base.state, ieee39.partition())
        np.testing.assert_allclose(flows, ieee39_base.tie_flows)
        assert total == pytest.approx(ieee39_base.total_tie_flow)

    def test_zero_angle_lossless_tie(self, case2):
        from windatc.grid_model import NetworkState
        st = NetworkState(np.ones(2), np.zeros(2), np.zeros(1), np.zeros(1))
        assert tie_transfer(case2, st, case2.partition())[1] == pytest.approx(0.0, abs=1e-12)

    def test_reversed_partition_negates(self, case2):
        from windatc.grid_model import NetworkState
        st = NetworkState(np.array([1.0, 0.97]), np.array([0.05, -0.02]), np.zeros(1), np.zeros(1))
        part = case2.partition()
        fwd = tie_transfer(case2, st, part)[1]
        back = tie_transfer(case2, st, part.reversed())[1]
        assert back == pytest.approx(-fwd, abs=1e-12)
