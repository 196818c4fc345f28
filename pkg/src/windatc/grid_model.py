"""AC network model: case parsing, admittance matrix, base power flow, branch flows.

All internal quantities are per-unit on ``base_mva``; the case file and the
public result fields are in MW / MVAr.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CaseFormatError",
    "PowerFlowError",
    "Bus",
    "Branch",
    "Generator",
    "AreaPartition",
    "PowerNetwork",
    "NetworkState",
    "BaseState",
    "parse_case",
    "parse_case_text",
    "build_admittance",
    "solve_base_power_flow",
    "base_dispatch",
    "power_mismatch",
    "branch_flow",
    "tie_transfer",
]

BUS_KINDS = ("slack", "PV", "PQ")


class CaseFormatError(ValueError):
    """Raised for malformed or semantically invalid case files."""


class PowerFlowError(RuntimeError):
    """Newton-Raphson power flow failed to converge."""

    def __init__(self, message: str, mismatch: float, iterations: int):
        super().__init__(message)
        self.mismatch = mismatch
        self.iterations = iterations


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    load_p: float = 0.0
    load_q: float = 0.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    voltage_min: float = 0.94
    voltage_max: float = 1.06
    area: str | None = None

    def __post_init__(self):
        if self.kind not in BUS_KINDS:
            raise CaseFormatError(f"bus {self.id}: unknown type {self.kind!r}")
        if not 0 < self.voltage_min <= self.voltage_max:
            raise CaseFormatError(
                f"bus {self.id}: voltage bounds must satisfy 0 < vmin <= vmax"
            )


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    rate: float = 0.0  # MW; 0 means unlimited
    ratio: float = 1.0

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise CaseFormatError(f"branch {self.from_bus}-{self.to_bus}: from == to")
        if self.r == 0 and self.x == 0:
            raise CaseFormatError(f"branch {self.from_bus}-{self.to_bus}: zero impedance")
        if self.rate < 0:
            raise CaseFormatError(f"branch {self.from_bus}-{self.to_bus}: negative rating")

    @property
    def flow_max(self) -> float:
        return self.rate if self.rate > 0 else np.inf

    @property
    def flow_min(self) -> float:
        return -self.flow_max

    def series_admittance(self) -> complex:
        return 1.0 / complex(self.r, self.x)

    def admittance_block(self) -> tuple[complex, complex, complex, complex]:
        """(Yff, Yft, Ytf, Ytt) of the branch pi-model, charging included."""
        ys = self.series_admittance()
        t = self.ratio
        ytt = ys + 0.5j * self.b
        return ytt / t**2, -ys / t, -ys / t, ytt


@dataclass(frozen=True)
class Generator:
    bus_id: int
    p: float
    q: float
    q_min: float
    q_max: float
    v_set: float
    p_min: float
    p_max: float

    def __post_init__(self):
        if self.p_min > self.p_max:
            raise CaseFormatError(f"generator at bus {self.bus_id}: pmin > pmax")
        if self.q_min > self.q_max:
            raise CaseFormatError(f"generator at bus {self.bus_id}: qmin > qmax")


@dataclass(frozen=True)
class AreaPartition:
    """Two-area split. ``tie_lines`` holds (branch index, sending bus, receiving bus)."""

    sending: frozenset[int]
    receiving: frozenset[int]
    tie_lines: tuple[tuple[int, int, int], ...]

    def reversed(self) -> "AreaPartition":
        ties = tuple((k, j, i) for k, i, j in self.tie_lines)
        return AreaPartition(self.receiving, self.sending, ties)


@dataclass
class PowerNetwork:
    buses: list[Bus]
    branches: list[Branch]
    generators: list[Generator]
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise CaseFormatError(f"duplicate bus ids: {dup}")
        slacks = [b.id for b in self.buses if b.kind == "slack"]
        if len(slacks) != 1:
            if slacks:
                raise CaseFormatError(
                    f"exactly one slack bus required, found buses {slacks}"
                )
            raise CaseFormatError("exactly one slack bus required, found none")
        self.index = {bid: k for k, bid in enumerate(ids)}
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in self.index:
                    raise CaseFormatError(
                        f"branch {br.from_bus}-{br.to_bus} references unknown bus {end}"
                    )
        for g in self.generators:
            if g.bus_id not in self.index:
                raise CaseFormatError(f"generator references unknown bus {g.bus_id}")
        self.slack = self.index[slacks[0]]

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def load_p(self) -> np.ndarray:
        return np.array([b.load_p for b in self.buses])

    @property
    def load_q(self) -> np.ndarray:
        return np.array([b.load_q for b in self.buses])

    @property
    def total_load(self) -> float:
        return float(self.load_p.sum())

    @property
    def gen_bus(self) -> np.ndarray:
        return np.array([self.index[g.bus_id] for g in self.generators], dtype=int)

    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def with_generator(self, k: int, **changes) -> "PowerNetwork":
        gens = list(self.generators)
        gens[k] = dataclasses.replace(gens[k], **changes)
        return dataclasses.replace(self, generators=gens)

    def generators_at(self, bus_id: int) -> list[int]:
        return [k for k, g in enumerate(self.generators) if g.bus_id == bus_id]

    def partition(self, sending: Iterable[int] | None = None) -> AreaPartition:
        """Build the two-area partition from ``sending`` ids or the case area tags."""
        if sending is None:
            tags = {b.area for b in self.buses}
            if not tags <= {"A", "B"}:
                raise CaseFormatError("case lacks A/B area tags; give sending buses")
            sending = [b.id for b in self.buses if b.area == "A"]
        send = frozenset(int(i) for i in sending)
        unknown = send - set(self.index)
        if unknown:
            raise CaseFormatError(f"partition names unknown buses {sorted(unknown)}")
        recv = frozenset(self.index) - send
        if not send or not recv:
            raise CaseFormatError("both areas must be non-empty")
        ties = []
        for k, br in enumerate(self.branches):
            if br.from_bus in send and br.to_bus in recv:
                ties.append((k, br.from_bus, br.to_bus))
            elif br.to_bus in send and br.from_bus in recv:
                ties.append((k, br.to_bus, br.from_bus))
        return AreaPartition(send, recv, tuple(ties))


@dataclass(frozen=True)
class NetworkState:
    """Polar voltages plus generator dispatch. Angles in radians, powers in MW/MVAr."""

    voltage_mag: np.ndarray
    voltage_ang: np.ndarray
    gen_p: np.ndarray
    gen_q: np.ndarray

    @property
    def complex_voltage(self) -> np.ndarray:
        return self.voltage_mag * np.exp(1j * self.voltage_ang)


@dataclass(frozen=True)
class BaseState:
    state: NetworkState
    tie_flows: np.ndarray  # MW per tie line, sending end
    load_scale: float
    iterations: int
    mismatch: float

    @property
    def total_tie_flow(self) -> float:
        return float(self.tie_flows.sum())


# ---------------------------------------------------------------------------
# case file parsing

_SECTIONS = {
    "bus": 9,
    "gen": 8,
    "branch": 7,
}


def parse_case(path: str | Path) -> PowerNetwork:
    path = Path(path)
    return parse_case_text(path.read_text(), name=path.stem)


def parse_case_text(text: str, name: str = "") -> PowerNetwork:
    """Parse the plain-text table format documented in ``docs/case_format.md``.

    Lines after ``#`` are comments. Sections open with ``[bus]``, ``[gen]`` or
    ``[branch]``; rows are whitespace separated with a fixed column order.
    """
    base_mva = 100.0
    section = None
    rows: dict[str, list[tuple[int, list[str]]]] = {s: [] for s in _SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            key = line.strip("[]").strip().lower()
            if not line.endswith("]") or key not in _SECTIONS:
                raise CaseFormatError(f"line {lineno}: unknown section header {line!r}")
            section = key
            continue
        parts = line.split()
        if section is None:
            if parts[0] == "base_mva" and len(parts) == 2:
                base_mva = _number(parts[1], lineno)
                continue
            raise CaseFormatError(f"line {lineno}: data outside of a section")
        width = _SECTIONS[section]
        if len(parts) != width:
            raise CaseFormatError(
                f"line {lineno}: [{section}] rows need {width} columns, got {len(parts)}"
            )
        rows[section].append((lineno, parts))

    buses = []
    for lineno, p in rows["bus"]:
        kind = {k.lower(): k for k in BUS_KINDS}.get(p[1].lower(), p[1])
        area = None if p[8] == "-" else p[8]
        try:
            buses.append(Bus(_int(p[0], lineno), kind, *(_number(v, lineno) for v in p[2:8]), area))
        except CaseFormatError as exc:
            raise CaseFormatError(f"line {lineno}: {exc}") from None
    gens = []
    for lineno, p in rows["gen"]:
        v = [_number(s, lineno) for s in p[1:]]
        try:
            gens.append(Generator(_int(p[0], lineno), v[0], v[1], v[2], v[3], v[4], v[5], v[6]))
        except CaseFormatError as exc:
            raise CaseFormatError(f"line {lineno}: {exc}") from None
    branches = []
    for lineno, p in rows["branch"]:
        v = [_number(s, lineno) for s in p[2:]]
        ratio = v[4] if v[4] != 0 else 1.0
        try:
            branches.append(Branch(_int(p[0], lineno), _int(p[1], lineno), v[0], v[1], v[2], v[3], ratio))
        except CaseFormatError as exc:
            raise CaseFormatError(f"line {lineno}: {exc}") from None
    return PowerNetwork(buses, branches, gens, base_mva=base_mva, name=name)


def _number(s: str, lineno: int) -> float:
    try:
        return float(s)
    except ValueError:
        raise CaseFormatError(f"line {lineno}: expected a number, got {s!r}") from None


def _int(s: str, lineno: int) -> int:
    try:
        return int(s)
    except ValueError:
        raise CaseFormatError(f"line {lineno}: expected an integer id, got {s!r}") from None


# ---------------------------------------------------------------------------
# network equations


def build_admittance(net: PowerNetwork, branches: Sequence[Branch] | None = None,
                     include_shunts: bool = True) -> np.ndarray:
    """Dense complex bus admittance matrix (per-unit)."""
    n = net.n_bus
    Y = np.zeros((n, n), dtype=complex)
    for br in net.branches if branches is None else branches:
        f, t = net.index[br.from_bus], net.index[br.to_bus]
        yff, yft, ytf, ytt = br.admittance_block()
        Y[f, f] += yff
        Y[f, t] += yft
        Y[t, f] += ytf
        Y[t, t] += ytt
    if include_shunts:
        for k, bus in enumerate(net.buses):
            Y[k, k] += complex(bus.shunt_g, bus.shunt_b) / net.base_mva
    return Y


def bus_injection(V: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Complex power injected into each bus, per-unit."""
    return V * np.conj(Y @ V)


def power_mismatch(net: PowerNetwork, state: NetworkState, Y: np.ndarray | None = None,
                   load_scale: float = 1.0, wind_p: np.ndarray | None = None) -> np.ndarray:
    """Per-unit residual [P; Q] of the bus balance equations (computed minus specified)."""
    if Y is None:
        Y = build_admittance(net)
    S = bus_injection(state.complex_voltage, Y)
    spec = _specified_injection(net, state.gen_p, state.gen_q, load_scale, wind_p)
    d = S - spec
    return np.concatenate([d.real, d.imag])


def _specified_injection(net, gen_p, gen_q, load_scale, wind_p):
    n = net.n_bus
    gen = np.zeros(n, dtype=complex)
    np.add.at(gen, net.gen_bus, np.asarray(gen_p) + 1j * np.asarray(gen_q))
    wind = np.zeros(n) if wind_p is None else np.asarray(wind_p, dtype=float)
    load = load_scale * (net.load_p + 1j * net.load_q)
    return (gen + wind - load) / net.base_mva


def base_dispatch(net: PowerNetwork, load_scale: float) -> np.ndarray:
    """Generator set points that follow the load coefficient, clipped to [pmin, pmax]."""
    p = np.array([g.p for g in net.generators]) * load_scale
    lo = np.array([g.p_min for g in net.generators])
    hi = np.array([g.p_max for g in net.generators])
    return np.clip(p, lo, hi)


def solve_base_power_flow(net: PowerNetwork, load_scale: float = 1.0,
                          wind_p: np.ndarray | None = None,
                          partition: AreaPartition | None = None,
                          gen_p: np.ndarray | None = None,
                          tol: float = 1e-8, max_iter: int = 20) -> BaseState:
    """Full Newton-Raphson power flow in polar form from a flat start.

    Non-slack generator outputs are fixed at ``gen_p`` (default
    :func:`base_dispatch`); the slack generator covers the remaining balance
    and losses. PV buses hold their generator voltage set points.
    """
    if load_scale <= 0:
        raise ValueError("load_scale must be positive")
    n = net.n_bus
    Y = build_admittance(net)
    gbus = net.gen_bus
    pg = base_dispatch(net, load_scale) if gen_p is None else np.asarray(gen_p, float).copy()
    wind = np.zeros(n) if wind_p is None else np.asarray(wind_p, float)

    kinds = np.array([b.kind for b in net.buses])
    pv = np.flatnonzero(kinds == "PV")
    pq = np.flatnonzero(kinds == "PQ")
    # PV buses without an in-service generator behave as PQ
    has_gen = np.zeros(n, bool)
    has_gen[gbus] = True
    pq = np.sort(np.concatenate([pq, pv[~has_gen[pv]]]))
    pv = pv[has_gen[pv]]
    pvpq = np.concatenate([pv, pq])

    Vm = np.ones(n)
    Va = np.zeros(n)
    for g, bus in zip(net.generators, gbus):
        if kinds[bus] != "PQ":
            Vm[bus] = g.v_set
    Sspec = _specified_injection(net, pg, np.zeros(net.n_gen), load_scale, wind)

    def mismatch(V):
        dS = bus_injection(V, Y) - Sspec
        return np.concatenate([dS.real[pvpq], dS.imag[pq]])

    V = Vm * np.exp(1j * Va)
    F = mismatch(V)
    it = 0
    while np.max(np.abs(F), initial=0.0) >= tol:
        if it >= max_iter:
            raise PowerFlowError(
                f"power flow did not converge in {max_iter} iterations "
                f"(mismatch {np.max(np.abs(F)):.3e} pu)", float(np.max(np.abs(F))), it)
        dS_dVa, dS_dVm = _dsbus_dv(Y, V)
        J = np.block([
            [dS_dVa.real[np.ix_(pvpq, pvpq)], dS_dVm.real[np.ix_(pvpq, pq)]],
            [dS_dVa.imag[np.ix_(pq, pvpq)], dS_dVm.imag[np.ix_(pq, pq)]],
        ])
        dx = np.linalg.solve(J, -F)
        Va[pvpq] += dx[: len(pvpq)]
        Vm[pq] += dx[len(pvpq):]
        V = Vm * np.exp(1j * Va)
        F = mismatch(V)
        it += 1

    # back out slack P and all generator Q from the converged injections
    S = bus_injection(V, Y) * net.base_mva
    load = load_scale * (net.load_p + 1j * net.load_q)
    need = S + load - wind
    pg = pg.copy()
    qg = np.zeros(net.n_gen)
    slack_gens = np.flatnonzero(gbus == net.slack)
    if len(slack_gens):
        others = pg[slack_gens[1:]].sum()
        pg[slack_gens[0]] = need[net.slack].real - others
    for bus in np.unique(gbus):
        ks = np.flatnonzero(gbus == bus)
        qg[ks] = need[bus].imag / len(ks)

    state = NetworkState(Vm.copy(), Va.copy(), pg, qg)
    resid = float(np.max(np.abs(power_mismatch(net, state, Y, load_scale, wind))))
    ties = np.zeros(0)
    if partition is not None:
        ties = tie_transfer(net, state, partition)[0]
    return BaseState(state, ties, load_scale, it, resid)


def _dsbus_dv(Y: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of bus injections w.r.t. angle and magnitude."""
    Ibus = Y @ V
    diagV = np.diag(V)
    diagI = np.diag(Ibus)
    diagVn = np.diag(V / np.abs(V))
    dS_dVm = diagV @ np.conj(Y @ diagVn) + np.conj(diagI) @ diagVn
    dS_dVa = 1j * diagV @ np.conj(diagI - Y @ diagV)
    return dS_dVa, dS_dVm


# ---------------------------------------------------------------------------
# branch flows


def branch_end_coefficients(br: Branch, at_from: bool = True) -> tuple[float, float, float]:
    """(G_ij, B_ij, G_self) for the active flow leaving one end of a branch.

    ``G_ij + jB_ij`` is the branch's contribution to the off-diagonal entry of
    Y and ``G_self`` the series part of its diagonal contribution at the near
    end. For a branch without an off-nominal tap ``G_self == -G_ij``.
    """
    ys = br.series_admittance()
    t = br.ratio
    if at_from:
        return (-ys / t).real, (-ys / t).imag, (ys / t**2).real
    return (-ys / t).real, (-ys / t).imag, ys.real


def branch_flow(state: NetworkState, net: PowerNetwork, branch: Branch | int,
                at_from: bool = True) -> float:
    """Active power (MW) leaving one end of a branch.

    P_L = U_i U_j (G_ij cos th_ij + B_ij sin th_ij) + U_i^2 G_self, which for a
    nominal-ratio line reads U_i U_j (G_ij cos th_ij + B_ij sin th_ij) - U_i^2 G_ij.
    """
    br = net.branches[branch] if isinstance(branch, (int, np.integer)) else branch
    i, j = net.index[br.from_bus], net.index[br.to_bus]
    if not at_from:
        i, j = j, i
    G, B, Gs = branch_end_coefficients(br, at_from)
    Ui, Uj = state.voltage_mag[i], state.voltage_mag[j]
    th = state.voltage_ang[i] - state.voltage_ang[j]
    return float((Ui * Uj * (G * np.cos(th) + B * np.sin(th)) + Ui**2 * Gs) * net.base_mva)


def tie_transfer(net: PowerNetwork, state: NetworkState,
                 partition: AreaPartition) -> tuple[np.ndarray, float]:
    """Per-tie MW measured at the sending-area end, and their total."""
    flows = []
    for k, send, _ in partition.tie_lines:
        br = net.branches[k]
        flows.append(branch_flow(state, net, br, at_from=(br.from_bus == send)))
    flows = np.array(flows)
    return flows, float(flows.sum())
