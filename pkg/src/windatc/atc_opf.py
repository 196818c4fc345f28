"""Single-hour ATC maximization as a smooth nonlinear program.

Decision vector ``x = [theta (non-slack), U (all buses), P_G, Q_G]`` in
per-unit. The problem maximizes the increase of the sending-to-receiving
tie-line transfer over its base value subject to the AC bus balance with wind
injections and the generator, branch-flow and voltage bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid_model import (
    AreaPartition,
    BaseState,
    NetworkState,
    PowerNetwork,
    branch_end_coefficients,
    build_admittance,
)

__all__ = ["VariableIndex", "AtcProblem", "assemble"]


class _PairTerms:
    """Sum of terms ``U_i U_j (a cos(th_i - th_j) + c sin(th_i - th_j))`` per output row.

    ``i == j`` gives the quadratic ``a U_i^2``. Value, Jacobian and weighted
    Hessian are evaluated in closed form; slack-angle columns point at a dummy
    column that is dropped.
    """

    def __init__(self, n_rows, row, i, j, a, c, th_col, u_col, n_x):
        self.n_rows = n_rows
        self.row = np.asarray(row, int)
        self.i = np.asarray(i, int)
        self.j = np.asarray(j, int)
        self.a = np.asarray(a, float)
        self.c = np.asarray(c, float)
        self.n_x = n_x
        self.cols = np.stack(
            [th_col[self.i], th_col[self.j], u_col[self.i], u_col[self.j]], axis=1
        )

    def _parts(self, U, th):
        d = th[self.i] - th[self.j]
        s, co = np.sin(d), np.cos(d)
        A = self.a * co + self.c * s
        dA = -self.a * s + self.c * co
        return U[self.i], U[self.j], A, dA

    def value(self, U, th):
        Ui, Uj, A, _ = self._parts(U, th)
        return np.bincount(self.row, Ui * Uj * A, minlength=self.n_rows)

    def jacobian(self, U, th):
        Ui, Uj, A, dA = self._parts(U, th)
        d = np.stack([Ui * Uj * dA, -Ui * Uj * dA, Uj * A, Ui * A], axis=1)
        J = np.zeros((self.n_rows, self.n_x + 1))
        np.add.at(J, (np.repeat(self.row, 4), self.cols.ravel()), d.ravel())
        return J[:, :-1]

    def hessian(self, U, th, weights):
        Ui, Uj, A, dA = self._parts(U, th)
        w = np.asarray(weights)[self.row]
        UU = Ui * Uj
        # rows/cols ordered (th_i, th_j, U_i, U_j)
        h = np.empty((len(w), 4, 4))
        h[:, 0, 0] = -UU * A
        h[:, 0, 1] = UU * A
        h[:, 1, 1] = -UU * A
        h[:, 0, 2] = Uj * dA
        h[:, 0, 3] = Ui * dA
        h[:, 1, 2] = -Uj * dA
        h[:, 1, 3] = -Ui * dA
        h[:, 2, 2] = 0.0
        h[:, 2, 3] = A
        h[:, 3, 3] = 0.0
        iu = np.triu_indices(4, 1)
        h[:, iu[1], iu[0]] = h[:, iu[0], iu[1]]
        h *= w[:, None, None]
        H = np.zeros((self.n_x + 1, self.n_x + 1))
        rows = np.repeat(self.cols, 4, axis=1)
        cols = np.tile(self.cols, (1, 4))
        np.add.at(H, (rows.ravel(), cols.ravel()), h.ravel())
        return H[:-1, :-1]


@dataclass(frozen=True)
class VariableIndex:
    """Positions of each entity in the decision vector."""

    n_bus: int
    n_gen: int
    slack: int

    @property
    def theta(self) -> np.ndarray:
        """Column of each bus angle; the slack maps to the dropped column ``size``."""
        col = np.full(self.n_bus, self.size)
        others = [k for k in range(self.n_bus) if k != self.slack]
        col[others] = np.arange(self.n_bus - 1)
        return col

    @property
    def u(self) -> np.ndarray:
        return self.n_bus - 1 + np.arange(self.n_bus)

    @property
    def pg(self) -> np.ndarray:
        return 2 * self.n_bus - 1 + np.arange(self.n_gen)

    @property
    def qg(self) -> np.ndarray:
        return 2 * self.n_bus - 1 + self.n_gen + np.arange(self.n_gen)

    @property
    def size(self) -> int:
        return 2 * self.n_bus - 1 + 2 * self.n_gen

    def pack(self, state: NetworkState, base_mva: float) -> np.ndarray:
        x = np.empty(self.size)
        th = self.theta
        mask = th < self.size
        x[th[mask]] = state.voltage_ang[mask] - state.voltage_ang[self.slack]
        x[self.u] = state.voltage_mag
        x[self.pg] = state.gen_p / base_mva
        x[self.qg] = state.gen_q / base_mva
        return x

    def unpack(self, x: np.ndarray, base_mva: float) -> NetworkState:
        th = np.append(np.asarray(x, float), 0.0)[self.theta]
        return NetworkState(
            voltage_mag=np.array(x[self.u]),
            voltage_ang=th,
            gen_p=np.array(x[self.pg]) * base_mva,
            gen_q=np.array(x[self.qg]) * base_mva,
        )

    def split(self, x):
        th = np.append(np.asarray(x, float), 0.0)[self.theta]
        return np.asarray(x)[self.u], th


@dataclass
class AtcProblem:
    """ATC program for one hour. Build with :func:`assemble`."""

    net: PowerNetwork
    partition: AreaPartition
    wind_p: np.ndarray  # MW per bus
    load_scale: float
    base: BaseState
    Y: np.ndarray
    index: VariableIndex
    flow_rows: np.ndarray  # branch indices with a finite rating
    maximize: bool = field(default=True, init=False)

    def __post_init__(self):
        net, idx = self.net, self.index
        n, nx = net.n_bus, idx.size
        th_col, u_col = idx.theta, idx.u
        nz_i, nz_j = np.nonzero(self.Y)
        G = self.Y.real[nz_i, nz_j]
        B = self.Y.imag[nz_i, nz_j]
        self._inj = _PairTerms(
            2 * n,
            np.concatenate([nz_i, n + nz_i]),
            np.concatenate([nz_i, nz_i]),
            np.concatenate([nz_j, nz_j]),
            np.concatenate([G, -B]),
            np.concatenate([B, G]),
            th_col, u_col, nx,
        )
        self._flows = self._end_terms(
            [(k, True) for k in self.flow_rows], th_col, u_col, nx
        )
        ties = [(k, net.branches[k].from_bus == s) for k, s, _ in self.partition.tie_lines]
        self._tie = self._end_terms(ties, th_col, u_col, nx, single_row=True)
        mva = net.base_mva
        self._spec_p = (self.wind_p - self.load_scale * net.load_p) / mva
        self._spec_q = -self.load_scale * net.load_q / mva
        self._gen_inc = np.zeros((n, net.n_gen))
        self._gen_inc[net.gen_bus, np.arange(net.n_gen)] = 1.0
        self.p0 = self.base.total_tie_flow / mva

    def _end_terms(self, ends, th_col, u_col, nx, single_row=False):
        row, i, j, a, c = [], [], [], [], []
        for r, (k, at_from) in enumerate(ends):
            br = self.net.branches[k]
            near, far = br.from_bus, br.to_bus
            if not at_from:
                near, far = far, near
            p, q = self.net.index[near], self.net.index[far]
            G, B, Gs = branch_end_coefficients(br, at_from)
            r = 0 if single_row else r
            row += [r, r]
            i += [p, p]
            j += [q, p]
            a += [G, Gs]
            c += [B, 0.0]
        return _PairTerms(1 if single_row else len(ends), row, i, j, a, c, th_col, u_col, nx)

    # -- problem data -------------------------------------------------------

    @property
    def n(self) -> int:
        return self.index.size

    @property
    def x0(self) -> np.ndarray:
        return self.index.pack(self.base.state, self.net.base_mva)

    @property
    def n_eq(self) -> int:
        return 2 * self.net.n_bus

    @property
    def h_lower(self) -> np.ndarray:
        net, mva = self.net, self.net.base_mva
        return np.concatenate([
            [g.p_min / mva for g in net.generators],
            [g.q_min / mva for g in net.generators],
            [net.branches[k].flow_min / mva for k in self.flow_rows],
            [b.voltage_min for b in net.buses],
        ])

    @property
    def h_upper(self) -> np.ndarray:
        net, mva = self.net, self.net.base_mva
        return np.concatenate([
            [g.p_max / mva for g in net.generators],
            [g.q_max / mva for g in net.generators],
            [net.branches[k].flow_max / mva for k in self.flow_rows],
            [b.voltage_max for b in net.buses],
        ])

    def state(self, x) -> NetworkState:
        return self.index.unpack(x, self.net.base_mva)

    # -- evaluation ---------------------------------------------------------

    def objective(self, x) -> tuple[float, np.ndarray]:
        """Incremental tie transfer (pu) over the base state, with gradient."""
        U, th = self.index.split(x)
        f = self._tie.value(U, th)[0] - self.p0
        return float(f), self._tie.jacobian(U, th)[0]

    def equalities(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Bus balance residuals [P; Q] (computed minus specified) and Jacobian."""
        idx = self.index
        U, th = idx.split(x)
        n = self.net.n_bus
        inj = self._inj.value(U, th)
        gp = self._gen_inc @ x[idx.pg]
        gq = self._gen_inc @ x[idx.qg]
        g = inj - np.concatenate([gp + self._spec_p, gq + self._spec_q])
        J = self._inj.jacobian(U, th)
        J[:n, idx.pg] -= self._gen_inc
        J[n:, idx.qg] -= self._gen_inc
        return g, J

    def inequalities(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Rows [P_G, Q_G, P_L (rated branches), U] and their Jacobian."""
        idx = self.index
        U, th = idx.split(x)
        ng, n = self.net.n_gen, self.net.n_bus
        flows = self._flows.value(U, th)
        h = np.concatenate([x[idx.pg], x[idx.qg], flows, U])
        J = np.zeros((len(h), idx.size))
        J[np.arange(ng), idx.pg] = 1.0
        J[ng + np.arange(ng), idx.qg] = 1.0
        nf = len(self.flow_rows)
        J[2 * ng: 2 * ng + nf] = self._flows.jacobian(U, th)
        J[2 * ng + nf + np.arange(n), idx.u] = 1.0
        return h, J

    def lagrangian_hessian(self, x, eq_multipliers, ineq_multipliers,
                           obj_weight: float = 1.0) -> np.ndarray:
        """Hessian of ``obj_weight*f + eq_multipliers.g + ineq_multipliers.h``."""
        U, th = self.index.split(x)
        ng = self.net.n_gen
        nf = len(self.flow_rows)
        H = self._inj.hessian(U, th, eq_multipliers)
        lam = np.asarray(ineq_multipliers)
        if nf:
            H += self._flows.hessian(U, th, lam[2 * ng: 2 * ng + nf])
        if obj_weight:
            H += self._tie.hessian(U, th, [obj_weight])
        return 0.5 * (H + H.T)

    def transfer_mw(self, x) -> float:
        """ATC in MW at ``x``."""
        return self.objective(x)[0] * self.net.base_mva


def assemble(net: PowerNetwork, partition: AreaPartition, wind: dict[int, float] | None,
             load_scale: float, base: BaseState) -> AtcProblem:
    """Build the ATC program for one hour.

    ``wind`` maps bus id to farm output in MW (Q_w = 0). ``base`` supplies the
    base tie flows and the starting point; it should be solved at the same
    ``load_scale``.
    """
    if load_scale <= 0:
        raise ValueError("load coefficient must be positive")
    wind_p = np.zeros(net.n_bus)
    for bus_id, mw in (wind or {}).items():
        if bus_id not in net.index:
            raise KeyError(f"wind farm at bus {bus_id}, which is not in the case")
        if mw < 0:
            raise ValueError(f"negative wind injection at bus {bus_id}")
        wind_p[net.index[bus_id]] += mw
    if len(base.tie_flows) != len(partition.tie_lines):
        raise ValueError("base state was solved without this partition's tie lines")
    flow_rows = np.array([k for k, br in enumerate(net.branches) if br.rate > 0], int)
    return AtcProblem(
        net=net,
        partition=partition,
        wind_p=wind_p,
        load_scale=load_scale,
        base=base,
        Y=build_admittance(net),
        index=VariableIndex(net.n_bus, net.n_gen, net.slack),
        flow_rows=flow_rows,
    )
