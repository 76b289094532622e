"""AC network model: CDF parsing, admittances, measurement map and Jacobian.

State layout: ``x = [E_1 .. E_k, delta_i for every non-slack bus]`` in bus
file order, angles in radians, slack angle fixed at zero.

IEEE Common Data Format, fields used (1-based inclusive columns)
-----------------------------------------------------------------
Title line:  32-37 system MVA base.

Bus records (section "BUS DATA FOLLOWS", ended by a line starting -999):
  1-4 bus number, 6-17 name, 25-26 type (3 slack, 2 PV, 1 PQ-limited, 0 PQ),
  28-33 final voltage (pu), 34-40 final angle (deg), 41-49 load MW,
  50-59 load MVAR, 60-67 generation MW, 68-75 generation MVAR,
  77-83 base kV, 107-114 shunt conductance G (pu), 115-122 shunt
  susceptance B (pu).

Branch records (section "BRANCH DATA FOLLOWS", ended by -999):
  1-4 tap/from bus, 6-9 Z/to bus, 19 type, 20-29 resistance R (pu),
  30-40 reactance X (pu), 41-50 line charging B (pu), 77-82 transformer
  final turns ratio (0 means nominal), 84-90 phase shift angle (deg).

Power flow formulas
-------------------
For a branch end at bus i towards bus j the flow is::

    P_ij = E_i E_j Y cos(th + d_i - d_j) - E_i^2 Y cos(th) + E_i^2 Ys cos(ths)
    Q_ij = E_i E_j Y sin(th + d_i - d_j) - E_i^2 Y sin(th) + E_i^2 Ys sin(ths)

With the π-equivalent series admittance y and end shunt ys of the branch,
physical power flow ``S_ij = V_i conj(I_ij)`` is reproduced by
``Y e^{j th} = -conj(y)`` and ``Ys e^{j ths} = conj(ys)``. Injections are
the sum of the flows leaving a bus plus its own shunt, ``E_i^2 (G_i - j B_i)``.
"""
import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import (BadShape, MissingSection, MultipleSlack, ParseError,
                     ZeroImpedanceBranch)

KINDS = ("P_inj", "Q_inj", "P_flow", "Q_flow")


# ---------------------------------------------------------------- network

@dataclass(frozen=True)
class Bus:
    number: int
    name: str
    kind: int  # 3 slack, 2 PV, 1/0 PQ
    voltage: float
    angle: float  # radians
    p_load: float  # per unit on the system base
    q_load: float
    p_gen: float
    q_gen: float
    base_kv: float
    g_shunt: float
    b_shunt: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float
    tap: float = 1.0
    shift: float = 0.0  # radians


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple
    branches: tuple
    base_mva: float = 100.0
    slack_index: int = field(init=False)
    index: dict = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        idx = {}
        for pos, bus in enumerate(self.buses):
            if bus.number in idx:
                raise ValueError(f"duplicate bus number {bus.number}")
            idx[bus.number] = pos
        slack = [p for p, b in enumerate(self.buses) if b.kind == 3]
        if len(slack) > 1:
            raise MultipleSlack(f"{len(slack)} slack buses: "
                                f"{[self.buses[p].number for p in slack]}")
        if not slack:
            raise ParseError("no slack (type 3) bus")
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in idx:
                    raise ValueError(f"branch {br.from_bus}-{br.to_bus} references unknown bus {end}")
        object.__setattr__(self, "slack_index", slack[0])
        object.__setattr__(self, "index", idx)
        if not self.is_connected():
            raise ValueError("network graph is not connected")

    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def n_states(self):
        return 2 * len(self.buses) - 1

    def is_connected(self):
        k = len(self.buses)
        adj = [[] for _ in range(k)]
        for br in self.branches:
            a, b = self.index[br.from_bus], self.index[br.to_bus]
            adj[a].append(b)
            adj[b].append(a)
        seen = {0}
        todo = deque([0])
        while todo:
            for nb in adj[todo.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    todo.append(nb)
        return len(seen) == k

    def solved_state(self):
        """State vector from the solved voltages stored in the file."""
        E = np.array([b.voltage for b in self.buses])
        d = np.array([b.angle for b in self.buses])
        return pack_state(self, E, d - d[self.slack_index])

    def flat_state(self):
        return pack_state(self, np.ones(self.n_buses), np.zeros(self.n_buses))


def pack_state(net, E, delta):
    """Build ``x`` from magnitudes and full (per-bus) angles; slack angle dropped."""
    E = np.asarray(E, dtype=float)
    delta = np.asarray(delta, dtype=float)
    k = net.n_buses
    if E.shape != (k,) or delta.shape != (k,):
        raise BadShape(f"expected ({k},) magnitudes and angles, got {E.shape} and {delta.shape}")
    return np.concatenate([E, np.delete(delta, net.slack_index)])


def unpack_state(net, x):
    """Split ``x`` into magnitudes and full angles (slack angle = 0)."""
    x = np.asarray(x, dtype=float)
    k = net.n_buses
    if x.shape != (2 * k - 1,):
        raise BadShape(f"state must have shape ({2 * k - 1},), got {x.shape}")
    return x[:k].copy(), np.insert(x[k:], net.slack_index, 0.0)


# ---------------------------------------------------------------- CDF parsing

def _field(line, lineno, cols, conv=float, default=None):
    a, b = cols
    raw = line[a - 1:b].strip()
    if not raw:
        if default is not None:
            return default
        raise ParseError("missing field", lineno, cols)
    try:
        return conv(raw)
    except ValueError:
        raise ParseError(f"malformed field {raw!r}", lineno, cols) from None


def _int(s):
    return int(float(s)) if "." in s else int(s)


def _section(lines, header, start):
    for pos in range(start, len(lines)):
        if lines[pos].upper().startswith(header):
            records = []
            for end in range(pos + 1, len(lines)):
                if lines[end].lstrip().startswith("-999"):
                    return records, end + 1
                if lines[end].strip():
                    records.append((end + 1, lines[end]))
            raise MissingSection(f"section '{header}' has no -999 terminator", pos + 1)
    raise MissingSection(f"section '{header}' not found")


def parse_cdf(text):
    """Parse IEEE Common Data Format text into a ``PowerNetwork``.

    Loads and generation are converted to per unit with the file's MVA base;
    impedances and shunts are already per unit in the format.
    """
    lines = text.splitlines()
    if not lines:
        raise MissingSection("empty input")
    base = _field(lines[0], 1, (32, 37))
    if base <= 0:
        raise ParseError("MVA base must be positive", 1, (32, 37))
    bus_recs, after = _section(lines, "BUS DATA FOLLOWS", 1)
    br_recs, _ = _section(lines, "BRANCH DATA FOLLOWS", after)
    buses = []
    for lineno, ln in bus_recs:
        buses.append(Bus(
            number=_field(ln, lineno, (1, 4), _int),
            name=ln[5:17].strip(),
            kind=_field(ln, lineno, (25, 26), _int),
            voltage=_field(ln, lineno, (28, 33)),
            angle=math.radians(_field(ln, lineno, (34, 40))),
            p_load=_field(ln, lineno, (41, 49)) / base,
            q_load=_field(ln, lineno, (50, 59)) / base,
            p_gen=_field(ln, lineno, (60, 67)) / base,
            q_gen=_field(ln, lineno, (68, 75)) / base,
            base_kv=_field(ln, lineno, (77, 83), default=0.0),
            g_shunt=_field(ln, lineno, (107, 114), default=0.0),
            b_shunt=_field(ln, lineno, (115, 122), default=0.0),
        ))
        if buses[-1].voltage <= 0:
            raise ParseError("voltage magnitude must be positive", lineno, (28, 33))
    numbers = {b.number for b in buses}
    slack_lines = [ln for (ln, _), b in zip(bus_recs, buses) if b.kind == 3]
    if len(slack_lines) > 1:
        raise MultipleSlack("more than one slack bus", slack_lines[1], (25, 26))
    branches = []
    for lineno, ln in br_recs:
        fb = _field(ln, lineno, (1, 4), _int)
        tb = _field(ln, lineno, (6, 9), _int)
        for v, cols in ((fb, (1, 4)), (tb, (6, 9))):
            if v not in numbers:
                raise ParseError(f"unknown bus {v}", lineno, cols)
        tap = _field(ln, lineno, (77, 82), default=0.0)
        branches.append(Branch(
            from_bus=fb, to_bus=tb,
            r=_field(ln, lineno, (20, 29)),
            x=_field(ln, lineno, (30, 40)),
            b=_field(ln, lineno, (41, 50), default=0.0),
            tap=tap if tap != 0.0 else 1.0,
            shift=math.radians(_field(ln, lineno, (84, 90), default=0.0)),
        ))
    return PowerNetwork(tuple(buses), tuple(branches), base)


def load_cdf(path):
    with open(path, encoding="ascii") as fh:
        return parse_cdf(fh.read())


def load_builtin(name="ieee30"):
    """Bundled fixtures: ``ieee30`` and ``case2``."""
    text = resources.files("robustse").joinpath("data", f"{name}.cdf").read_text("ascii")
    return parse_cdf(text)


# ---------------------------------------------------------------- admittances

@dataclass(frozen=True)
class AdmittanceTables:
    """Series and shunt admittance data.

    ``Y``/``theta`` are magnitude and angle of each branch's series admittance
    ``1 / (r + jx)``; ``Ys``/``theta_s`` those of each bus's aggregate shunt
    (line-charging halves, off-nominal tap terms and the bus's own G + jB).
    The ``end_*`` arrays hold the per-branch-end coefficients used by the flow
    formulas (index ``2 l`` is branch l seen from its from-bus, ``2 l + 1``
    from its to-bus).
    """
    Y: np.ndarray
    theta: np.ndarray
    Ys: np.ndarray
    theta_s: np.ndarray
    end_bus: np.ndarray  # bus position at the sending end
    end_far: np.ndarray  # bus position at the receiving end
    end_Y: np.ndarray
    end_theta: np.ndarray
    end_Ys: np.ndarray
    end_theta_s: np.ndarray
    bus_g: np.ndarray
    bus_b: np.ndarray
    adjacency: tuple  # per bus: tuple of incident end indices

    def magnitude(self, i, j, net):
        """Series admittance magnitude between bus numbers i and j (0 if none)."""
        total = 0.0
        for l, br in enumerate(net.branches):
            if {br.from_bus, br.to_bus} == {i, j}:
                total += self.Y[l]
        return total


def build_admittance(net):
    nb = len(net.branches)
    k = net.n_buses
    Y = np.zeros(nb)
    theta = np.zeros(nb)
    ends = np.zeros(2 * nb, dtype=int)
    far = np.zeros(2 * nb, dtype=int)
    y_ser = np.zeros(2 * nb, dtype=complex)
    y_sh = np.zeros(2 * nb, dtype=complex)
    bus_sh = np.array([complex(b.g_shunt, b.b_shunt) for b in net.buses])
    for l, br in enumerate(net.branches):
        z = complex(br.r, br.x)
        if z == 0:
            raise ZeroImpedanceBranch(f"branch {br.from_bus}-{br.to_bus} has zero impedance")
        if br.shift != 0.0:
            raise ValueError(f"branch {br.from_bus}-{br.to_bus}: phase shifters are not supported")
        y = 1.0 / z
        Y[l], theta[l] = abs(y), math.atan2(y.imag, y.real)
        a = br.tap
        half = 0.5j * br.b
        i, j = net.index[br.from_bus], net.index[br.to_bus]
        ends[2 * l], far[2 * l] = i, j
        ends[2 * l + 1], far[2 * l + 1] = j, i
        y_ser[2 * l] = y_ser[2 * l + 1] = y / a
        y_sh[2 * l] = y * (1.0 - a) / (a * a) + half
        y_sh[2 * l + 1] = y * (a - 1.0) / a + half
    agg = bus_sh.copy()
    np.add.at(agg, ends, y_sh)
    meas = -np.conj(y_ser)
    sh = np.conj(y_sh)
    adjacency = tuple(tuple(int(e) for e in np.nonzero(ends == b)[0]) for b in range(k))
    return AdmittanceTables(
        Y=Y, theta=theta, Ys=np.abs(agg), theta_s=np.angle(agg),
        end_bus=ends, end_far=far,
        end_Y=np.abs(meas), end_theta=np.angle(meas),
        end_Ys=np.abs(sh), end_theta_s=np.angle(sh),
        bus_g=bus_sh.real.copy(), bus_b=bus_sh.imag.copy(), adjacency=adjacency)


def ybus(net):
    """Complex bus admittance matrix (used as an independent cross-check)."""
    k = net.n_buses
    Yb = np.zeros((k, k), dtype=complex)
    for br in net.branches:
        y = 1.0 / complex(br.r, br.x)
        a = br.tap
        i, j = net.index[br.from_bus], net.index[br.to_bus]
        Yb[i, i] += y / (a * a) + 0.5j * br.b
        Yb[j, j] += y + 0.5j * br.b
        Yb[i, j] -= y / a
        Yb[j, i] -= y / a
    for p, bus in enumerate(net.buses):
        Yb[p, p] += complex(bus.g_shunt, bus.b_shunt)
    return Yb


# ---------------------------------------------------------------- measurement plan

@dataclass(frozen=True)
class Measurement:
    kind: str
    bus: int  # bus number (sending end for flows)
    to: int = None  # receiving bus number for flows
    branch: int = None  # branch position for flows

    def __str__(self):
        if self.kind.endswith("inj"):
            return f"{self.kind}({self.bus})"
        return f"{self.kind}({self.bus},{self.to})"


class MeasurementPlan:
    """Ordered, duplicate-free list of measurements valid for ``net``."""

    def __init__(self, net, measurements):
        self.measurements = tuple(measurements)
        if len(set(self.measurements)) != len(self.measurements):
            raise ValueError("measurement plan contains duplicates")
        rows = []
        for m in self.measurements:
            if m.kind not in KINDS:
                raise ValueError(f"unknown measurement kind {m.kind!r}")
            if m.bus not in net.index:
                raise ValueError(f"{m}: unknown bus")
            q = 0 if m.kind.startswith("P") else 1
            if m.kind.endswith("inj"):
                rows.append((0, q, net.index[m.bus]))
            else:
                if m.branch is None or not 0 <= m.branch < len(net.branches):
                    raise ValueError(f"{m}: no such branch")
                br = net.branches[m.branch]
                if (m.bus, m.to) == (br.from_bus, br.to_bus):
                    end = 2 * m.branch
                elif (m.bus, m.to) == (br.to_bus, br.from_bus):
                    end = 2 * m.branch + 1
                else:
                    raise ValueError(f"{m}: branch {m.branch} does not join these buses")
                rows.append((1, q, end))
        self._rows = np.array(rows, dtype=int).reshape(-1, 3)

    def __len__(self):
        return len(self.measurements)

    def __iter__(self):
        return iter(self.measurements)

    def __eq__(self, other):
        return isinstance(other, MeasurementPlan) and self.measurements == other.measurements

    def __hash__(self):
        return hash(self.measurements)


def flow(net, branch, kind="P_flow", reverse=False):
    br = net.branches[branch]
    a, b = (br.to_bus, br.from_bus) if reverse else (br.from_bus, br.to_bus)
    return Measurement(kind, a, b, branch)


def default_plan(net, n_target):
    """All P and Q injections, then P/Q flow pairs on the lowest-index branches.

    Flows are taken from each branch's from-bus end. The list is truncated
    to ``n_target`` entries.
    """
    k, nb = net.n_buses, len(net.branches)
    if not 1 <= n_target <= 2 * k + 2 * nb:
        raise ValueError(f"n_target must lie in [1, {2 * k + 2 * nb}], got {n_target}")
    ms = [Measurement("P_inj", b.number) for b in net.buses]
    ms += [Measurement("Q_inj", b.number) for b in net.buses]
    for l in range(nb):
        ms += [flow(net, l, "P_flow"), flow(net, l, "Q_flow")]
    return MeasurementPlan(net, ms[:n_target])


# ---------------------------------------------------------------- evaluation

def _end_flows(tables, E, d):
    i, j = tables.end_bus, tables.end_far
    Y, th = tables.end_Y, tables.end_theta
    Ys, ths = tables.end_Ys, tables.end_theta_s
    ang = th + d[i] - d[j]
    EiEj = E[i] * E[j]
    Ei2 = E[i] * E[i]
    P = EiEj * Y * np.cos(ang) - Ei2 * Y * np.cos(th) + Ei2 * Ys * np.cos(ths)
    Q = EiEj * Y * np.sin(ang) - Ei2 * Y * np.sin(th) + Ei2 * Ys * np.sin(ths)
    return P, Q


def measure_full(net, tables, E, delta, plan):
    """Evaluate the plan at magnitudes ``E`` and full per-bus angles ``delta``."""
    E = np.asarray(E, dtype=float)
    delta = np.asarray(delta, dtype=float)
    k = net.n_buses
    if E.shape != (k,) or delta.shape != (k,):
        raise BadShape(f"expected ({k},) magnitudes and angles, got {E.shape} and {delta.shape}")
    Pf, Qf = _end_flows(tables, E, delta)
    Pi = E * E * tables.bus_g
    Qi = -E * E * tables.bus_b
    Pi = Pi + np.bincount(tables.end_bus, Pf, minlength=k)
    Qi = Qi + np.bincount(tables.end_bus, Qf, minlength=k)
    out = np.empty(len(plan))
    r = plan._rows
    inj = r[:, 0] == 0
    out[inj] = np.where(r[inj, 1] == 0, Pi[r[inj, 2]], Qi[r[inj, 2]])
    fl = ~inj
    out[fl] = np.where(r[fl, 1] == 0, Pf[r[fl, 2]], Qf[r[fl, 2]])
    return out


def measure(net, tables, x, plan):
    E, d = unpack_state(net, x)
    return measure_full(net, tables, E, d, plan)


def _full_jacobian(net, tables, E, d):
    """Derivatives of all end flows and injections w.r.t. (E, full delta)."""
    k = net.n_buses
    i, j = tables.end_bus, tables.end_far
    Y, th = tables.end_Y, tables.end_theta
    Ys, ths = tables.end_Ys, tables.end_theta_s
    ang = th + d[i] - d[j]
    c, s = np.cos(ang), np.sin(ang)
    ne = len(i)
    rows = np.arange(ne)
    JP = np.zeros((ne, 2 * k))
    JQ = np.zeros((ne, 2 * k))
    # d/dE_i, d/dE_j, d/d delta_i, d/d delta_j ; i != j for every branch end
    JP[rows, i] = E[j] * Y * c - 2 * E[i] * Y * np.cos(th) + 2 * E[i] * Ys * np.cos(ths)
    JP[rows, j] = E[i] * Y * c
    JP[rows, k + i] = -E[i] * E[j] * Y * s
    JP[rows, k + j] = E[i] * E[j] * Y * s
    JQ[rows, i] = E[j] * Y * s - 2 * E[i] * Y * np.sin(th) + 2 * E[i] * Ys * np.sin(ths)
    JQ[rows, j] = E[i] * Y * s
    JQ[rows, k + i] = E[i] * E[j] * Y * c
    JQ[rows, k + j] = -E[i] * E[j] * Y * c
    inc = np.zeros((k, ne))
    inc[i, rows] = 1.0
    JPi = inc @ JP
    JQi = inc @ JQ
    JPi[np.arange(k), np.arange(k)] += 2 * E * tables.bus_g
    JQi[np.arange(k), np.arange(k)] -= 2 * E * tables.bus_b
    return JP, JQ, JPi, JQi


def jacobian(net, tables, x, plan):
    """Analytic Jacobian of ``measure`` with respect to ``x``."""
    E, d = unpack_state(net, x)
    k = net.n_buses
    JP, JQ, JPi, JQi = _full_jacobian(net, tables, E, d)
    r = plan._rows
    out = np.empty((len(plan), 2 * k))
    for row, (is_flow, q, idx) in enumerate(r):
        src = (JQ if q else JP) if is_flow else (JQi if q else JPi)
        out[row] = src[idx]
    return np.delete(out, k + net.slack_index, axis=1)


def finite_difference_jacobian(f, x, step=1e-6):
    """Central-difference Jacobian of ``f`` at ``x``."""
    if not 1e-8 <= step <= 1e-4:
        raise ValueError(f"step must lie in [1e-8, 1e-4], got {step}")
    x = np.asarray(x, dtype=float)
    cols = []
    for c in range(len(x)):
        e = np.zeros_like(x)
        e[c] = step
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * step))
    return np.column_stack(cols)


def jacobian_fd(net, tables, x, plan, step=1e-6):
    return finite_difference_jacobian(lambda z: measure(net, tables, z, plan), x, step)


# ---------------------------------------------------------------- model wrapper

class NonlinearModel:
    """Measurement map ``h`` of a network and plan, with its Jacobian."""

    def __init__(self, net, tables=None, plan=None):
        self.net = net
        self.tables = tables if tables is not None else build_admittance(net)
        self.plan = plan if plan is not None else default_plan(net, 2 * net.n_buses)

    @property
    def n_measurements(self):
        return len(self.plan)

    @property
    def n_states(self):
        return self.net.n_states

    def measure(self, x):
        return measure(self.net, self.tables, x, self.plan)

    def jacobian(self, x):
        return jacobian(self.net, self.tables, x, self.plan)

    def restrict(self, rows):
        """Model measuring only the given plan rows."""
        ms = [self.plan.measurements[r] for r in rows]
        return NonlinearModel(self.net, self.tables, MeasurementPlan(self.net, ms))


def ieee30_model(n_target=100):
    net = load_builtin("ieee30")
    return NonlinearModel(net, build_admittance(net), default_plan(net, n_target))
