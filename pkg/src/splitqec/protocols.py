"""Circuit builders for the memory, split, injection and distance-one protocols.

Every stabilizer measurement is the eight-step sub-circuit

    1  sqrt(Y) on the auxiliary (and on the data for X-type)
    2  CZ            3  CZ
    4  X echo on the data
    5  CZ            6  CZ
    7  sqrt(Y)^dag on the auxiliary (and on the data for X-type)
    8  auxiliary readout

Auxiliary qubits are never reset, so the raw outcome accumulates the stabilizer
value: ``s_N = m_N xor m_(N-1)``.  X- and Z-type cycles are pipelined: steps 1-3
of one type run inside the readout window of the other type.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .circuit import Circuit
from .layout import DEFAULT_LAYOUT, QubitLayout

T_SINGLE = 48e-9
T_CZ = 101.5e-9 + 2 * 20e-9
T_READOUT = 340e-9
CYCLE_PERIOD = 1.66e-6

KINDS = ("surface_memory", "repetition_memory", "split", "split_arbitrary", "distance_one")
BASES = ("X", "Y", "Z")

# Single-qubit preparations from |0> (gate applied after reset) and readout
# rotations applied before a Z measurement.
PREP_GATE = {"0": None, "1": "X", "+": "SQRT_Y", "-": "SQRT_Y_DAG", "+i": "SQRT_X_DAG", "-i": "SQRT_X"}
READOUT_GATE = {"Z": None, "X": "SQRT_Y_DAG", "Y": "SQRT_X"}
CARDINALS = {"0": (0.0, 0.0), "1": (math.pi, 0.0), "+": (math.pi / 2, 0.0), "+i": (math.pi / 2, math.pi / 2),
             "-": (math.pi / 2, math.pi), "-i": (math.pi / 2, 3 * math.pi / 2)}
CARDINAL_AXIS = {"0": ("Z", 1), "1": ("Z", -1), "+": ("X", 1), "-": ("X", -1), "+i": ("Y", 1), "-i": ("Y", -1)}

REP_CODES = {1: ("D1", "D4", "D7"), 2: ("D3", "D6", "D9")}
REP_MIDDLE = {1: "D4", 2: "D6"}
REP_ACTIVE = REP_CODES[1] + REP_CODES[2]


@dataclass(frozen=True)
class ProtocolSpec:
    kind: str
    m: int = 3
    n: int = 2
    initial: Optional[str] = "0"
    theta: Optional[float] = None
    phi: Optional[float] = None
    bases: tuple = ("Z", "Z")

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        object.__setattr__(self, "bases", tuple(self.bases))
        for b in self.bases:
            if b not in BASES:
                raise ValueError(f"unknown basis {b!r}")
        if self.m < 0 or self.n < 0:
            raise ValueError("cycle counts must be nonnegative")
        if self.theta is not None or self.phi is not None:
            check_angles(self.theta, self.phi)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "m": self.m, "n": self.n, "initial": self.initial,
                           "theta": self.theta, "phi": self.phi, "bases": list(self.bases)}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProtocolSpec":
        d = json.loads(text)
        return cls(d["kind"], d["m"], d["n"], d.get("initial"), d.get("theta"), d.get("phi"), tuple(d["bases"]))


def check_angles(theta, phi) -> None:
    if theta is None or phi is None:
        raise ValueError("both theta and phi are required")
    if not (0.0 <= theta <= math.pi):
        raise ValueError(f"theta={theta} outside [0, pi]")
    if not (0.0 <= phi < 2 * math.pi):
        raise ValueError(f"phi={phi} outside [0, 2pi)")


def cardinal_label(theta: float, phi: float, tol: float = 1e-9) -> Optional[str]:
    """Name of the cardinal state at (theta, phi), or None."""
    check_angles(theta, phi)
    if theta < tol:
        return "0"
    if abs(theta - math.pi) < tol:
        return "1"
    if abs(theta - math.pi / 2) < tol:
        for lab in ("+", "+i", "-", "-i"):
            if abs(phi - CARDINALS[lab][1]) < tol:
                return lab
    return None


def bloch_vector(theta: float, phi: float) -> np.ndarray:
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])


@dataclass(frozen=True)
class LogicalOperator:
    """A base logical: ``kind`` on every qubit of ``support`` at the checkpoint,
    times the parity of the ``frame`` records."""

    name: str
    kind: str
    support: tuple
    frame: tuple = ()


@dataclass(frozen=True)
class DetectorCandidate:
    stab: str
    index: int
    records: tuple
    role: str  # first | bulk | split | final


@dataclass
class ScheduledCircuit:
    spec: ProtocolSpec
    circuit: Circuit
    layout: QubitLayout
    stab_records: dict  # (stab, cycle) -> label
    data_records: dict  # (qubit, stage) -> label
    data_bases: dict  # qubit -> basis of its last readout
    logicals: dict  # name -> LogicalOperator
    readouts: dict  # measured observable name -> tuple of final-readout labels
    detectors: list  # DetectorCandidate
    cycles: list  # (type, index, stabs)
    flags: list = field(default_factory=list)
    period: float = CYCLE_PERIOD

    @property
    def codes(self) -> tuple:
        return tuple(sorted({int(name[-1]) for name in self.logicals if name[-1].isdigit()})) or (0,)

    @property
    def is_injection(self) -> bool:
        return any("injection" in f for f in self.flags)

    def label_of(self, qubit: str, stage: str = "final") -> str:
        return self.data_records[(qubit, stage)]


# -- timeline ---------------------------------------------------------------

@dataclass
class _Cycle:
    type: str
    index: int
    stabs: tuple
    data: tuple
    readouts: list = field(default_factory=list)  # (qubit, label, basis)


class _Builder:
    def __init__(self, layout: QubitLayout):
        self.layout = layout
        self.c = Circuit(layout.n_qubits, qubit_names=layout.names)
        self.t = 0.0
        self.stab_records: dict = {}
        self.data_records: dict = {}

    def q(self, name: str) -> int:
        return self.layout.index(name)

    def step(self, duration: float, gates=(), measures=(), busy=(), name: str = "") -> None:
        for kind, names, tag in gates:
            self.c.gate(kind, *[self.q(n) for n in names], tag=tag)
        for qname, label in measures:
            self.c.measure(self.q(qname), label)
        self.c.tick(duration, busy=[self.q(b) for b in busy], name=name)
        self.t += duration

    def sub_steps(self, cyc: _Cycle, steps: Sequence[int]) -> list:
        """Gate lists and durations for the requested sub-circuit steps."""
        out = []
        rot_data = cyc.type == "X"
        for s in steps:
            tag = f"{cyc.type}{cyc.index}:s{s}"
            if s in (1, 7):
                kind = "SQRT_Y" if s == 1 else "SQRT_Y_DAG"
                gates = [(kind, (a,), tag) for a in cyc.stabs]
                if rot_data:
                    gates += [(kind, (d,), tag) for d in cyc.data]
                out.append((T_SINGLE, gates, tag))
            elif s == 4:
                out.append((T_SINGLE, [("X", (d,), "echo") for d in cyc.data], tag))
            else:
                gates = []
                for a in cyc.stabs:
                    d = self.layout.cz_order[a].get(s)
                    if d is not None and d in cyc.data:
                        gates.append(("CZ", (a, d), tag))
                out.append((T_CZ, gates, tag))
        return out


def _run_cycles(b: _Builder, cycles: list, final_cycle_rotations: bool) -> None:
    """Emit pipelined cycles; the last cycle's window carries the final readout."""
    last_start: dict = {}
    started = False
    for i, cyc in enumerate(cycles):
        if not started:
            prev = last_start.get(cyc.type)
            if prev is not None and b.t < prev + CYCLE_PERIOD - 1e-15:
                b.step(prev + CYCLE_PERIOD - b.t, name="pad")
            last_start[cyc.type] = b.t
            used = 0.0
            for dur, gates, tag in b.sub_steps(cyc, (1, 2, 3)):
                b.step(dur, gates, name=tag)
                used += dur
            if i + 1 < len(cycles) and cycles[i + 1].type != cyc.type:
                # Same slot length as steps 1-3 hidden in a readout window.
                b.step(T_READOUT - used, name="slot")
        rotations = [(READOUT_GATE[basis], (qn,), "readout") for qn, _, basis in cyc.readouts
                     if READOUT_GATE[basis] is not None]
        is_final = i == len(cycles) - 1 and final_cycle_rotations
        for dur, gates, tag in b.sub_steps(cyc, (4, 5, 6, 7)):
            if is_final and tag.endswith("s7"):
                if cyc.type == "Z":
                    b.c.checkpoint()
                    b.step(dur, gates + rotations, name=tag)
                else:
                    b.step(dur, gates, name=tag)
                    b.c.checkpoint()
                    if rotations:
                        b.step(T_SINGLE, rotations, name="readout-rotation")
                continue
            b.step(dur, gates, name=tag)
        if not is_final and rotations:
            b.step(T_SINGLE, rotations, name="readout-rotation")
        nxt = cycles[i + 1] if i + 1 < len(cycles) else None
        overlap = nxt is not None and nxt.type != cyc.type
        if overlap:
            prev = last_start.get(nxt.type)
            if prev is not None and b.t < prev + CYCLE_PERIOD - 1e-15:
                b.step(prev + CYCLE_PERIOD - b.t, name="pad")
        measures = [(a, f"{a}_{cyc.index}") for a in cyc.stabs]
        for a in cyc.stabs:
            b.stab_records[(a, cyc.index)] = f"{a}_{cyc.index}"
        for qn, label, _ in cyc.readouts:
            measures.append((qn, label))
        busy = [qn for qn, _ in measures]
        if overlap:
            last_start[nxt.type] = b.t
            used = 0.0
            for k, (dur, gates, tag) in enumerate(b.sub_steps(nxt, (1, 2, 3))):
                b.step(dur, gates, measures if k == 0 else (), busy, name=f"readout+{tag}")
                used += dur
            b.step(T_READOUT - used, busy=busy, name="readout")
            started = True
        else:
            b.step(T_READOUT, measures=measures, busy=busy, name="readout")
            started = False


def _prepare(b: _Builder, states: Mapping[str, str], extra: Sequence[str]) -> None:
    for qn in list(states) + list(extra):
        b.c.reset(b.q(qn))
    gates = [(PREP_GATE[s], (qn,), "prep") for qn, s in states.items() if PREP_GATE[s] is not None]
    if gates:
        b.step(T_SINGLE, gates, name="prep")


# -- detector bookkeeping ---------------------------------------------------

def _detectors(layout: QubitLayout, cycles: list, support_at: dict, removed_records: dict,
               final_records: dict, data_bases: dict) -> list:
    """Candidates: sigma_N = m_N xor m_(N-2) (plus removed-data readouts) and a
    final one from data parity xor s_K when every support qubit is read in the
    stabilizer's basis."""
    out = []
    per_stab: dict = {}
    for cyc in cycles:
        for a in cyc.stabs:
            per_stab.setdefault(a, []).append(cyc.index)
    for a, idxs in per_stab.items():
        for k, N in enumerate(idxs):
            recs = [f"{a}_{N}"]
            if k >= 2:
                recs.append(f"{a}_{idxs[k - 2]}")
            role = "first" if k == 0 else "bulk"
            extra = removed_records.get((a, N), ())
            if extra:
                recs += list(extra)
                role = "split"
            out.append(DetectorCandidate(a, k + 1, tuple(recs), role))
        K = idxs[-1]
        sup = support_at[(a, K)]
        if sup and all(data_bases.get(d) == a[0] and (d, "final") in final_records for d in sup):
            recs = [final_records[(d, "final")] for d in sup] + [f"{a}_{K}"]
            if len(idxs) >= 2:
                recs.append(f"{a}_{idxs[-2]}")
            out.append(DetectorCandidate(a, len(idxs) + 1, tuple(recs), "final"))
    return out


def _support_bookkeeping(layout: QubitLayout, cycles: list, split_records: dict):
    support_at = {}
    removed = {}
    prev: dict = {}
    for cyc in cycles:
        for a in cyc.stabs:
            sup = tuple(d for d in layout.supports[a] if d in cyc.data)
            support_at[(a, cyc.index)] = sup
            if a in prev:
                gone = [d for d in prev[a] if d not in sup]
                if gone:
                    missing = [d for d in gone if d not in split_records]
                    if missing:
                        raise ValueError(f"{a} loses {missing} without a readout")
                    removed[(a, cyc.index)] = tuple(split_records[d] for d in gone)
            prev[a] = sup
    return support_at, removed


def _rep_readout_plan(code: int, basis: str) -> tuple[dict, tuple]:
    """Per-qubit bases and the qubits whose outcomes form the measured logical."""
    qs = REP_CODES[code]
    mid = REP_MIDDLE[code]
    if basis == "Z":
        return {q: "Z" for q in qs}, (mid,)
    if basis == "X":
        return {q: "X" for q in qs}, qs
    return {q: ("Y" if q == mid else "X") for q in qs}, qs


SURFACE_LOGICAL_QUBITS = {"Z": ("D4", "D5", "D6"), "X": ("D2", "D5", "D8"), "Y": ("D2", "D4", "D5", "D6", "D8")}


def _surface_readout_plan(basis: str) -> dict:
    if basis == "Z":
        return {d: "Z" for d in DEFAULT_LAYOUT.names[:9]}
    if basis == "X":
        return {d: "X" for d in DEFAULT_LAYOUT.names[:9]}
    # Weight-two stabilizer bases everywhere except D5, which is read in Y.
    plan = {d: "Z" for d in ("D1", "D4", "D6", "D9")}
    plan.update({d: "X" for d in ("D2", "D3", "D7", "D8")})
    plan["D5"] = "Y"
    return plan


# -- builders ---------------------------------------------------------------

def surface_prep_states(init: str) -> dict:
    data = DEFAULT_LAYOUT.names[:9]
    if init in ("0", "1"):
        s = {d: "0" for d in data}
        if init == "1":
            for d in ("D2", "D5", "D8"):
                s[d] = "1"
        return s
    if init in ("+", "-"):
        s = {d: "+" for d in data}
        if init == "-":
            for d in ("D4", "D5", "D6"):
                s[d] = "-"
        return s
    raise ValueError(f"no fault-tolerant surface preparation for {init!r}")


def build_arbitrary_prep(theta: float, phi: float) -> "PrepFragment":
    """Injection into D5 with the weight-two stabilizers predefined.

    Cardinal angles give a single Clifford preparation.  Other angles are
    expressed as an affine combination of the six cardinal preparations,
    exact for any linear map of the input state.
    """
    check_angles(theta, phi)
    base = {d: "0" for d in ("D1", "D4", "D6", "D9")}
    base.update({d: "+" for d in ("D2", "D3", "D7", "D8")})
    r = bloch_vector(theta, phi)
    lab = cardinal_label(theta, phi)
    if lab is not None:
        mixture = ((1.0, lab),)
    else:
        comp = dict(zip("XYZ", r))
        mixture = tuple((1 / 6 + sgn * comp[ax] / 2, cl) for cl, (ax, sgn) in CARDINAL_AXIS.items())
    states = {}
    for _, cl in mixture:
        s = dict(base)
        s["D5"] = cl
        states[cl] = s
    return PrepFragment(theta, phi, r, mixture, states, ("Z1", "Z4", "X1", "X4"))


@dataclass(frozen=True)
class PrepFragment:
    theta: float
    phi: float
    bloch: np.ndarray
    mixture: tuple  # (weight, cardinal label)
    states: dict  # cardinal label -> data-qubit state labels
    predefined: tuple  # stabilizers whose first outcome is fixed by the preparation

    @property
    def is_cardinal(self) -> bool:
        return len(self.mixture) == 1


def build_memory(kind: str, m: int, basis: str, init=None, layout: QubitLayout = DEFAULT_LAYOUT) -> ScheduledCircuit:
    if m < 1:
        raise ValueError("memory needs m >= 1")
    if kind == "surface":
        return _build_surface_memory(m, basis, init, layout)
    if kind == "repetition":
        return _build_repetition_memory(m, basis, init, layout)
    raise ValueError(f"unknown memory kind {kind!r}")


def _build_surface_memory(m, basis, init, layout):
    flags = []
    if basis == "Y":
        init = init or "+i"
        if init not in ("+i", "-i"):
            raise ValueError("Y-basis memory needs a +i/-i injection")
        states = build_arbitrary_prep(*CARDINALS[init]).states[init]
        flags.append("non-fault-tolerant preparation (injection)")
    else:
        init = init or ("0" if basis == "Z" else "+")
        if (basis == "Z") != (init in ("0", "1")):
            raise ValueError(f"init {init!r} is not an eigenstate of the {basis} logical")
        states = surface_prep_states(init)
    spec = ProtocolSpec("surface_memory", m=m, n=0, initial=init, bases=(basis,))
    b = _Builder(layout)
    data = layout.names[:9]
    _prepare(b, states, layout.stabilizers("X") + layout.stabilizers("Z"))
    plan = _surface_readout_plan(basis)
    cycles = []
    for N in range(1, m + 1):
        cycles.append(_Cycle("X", N, layout.stabilizers("X"), data))
        cycles.append(_Cycle("Z", N, layout.stabilizers("Z"), data))
    for d in data:
        b.data_records[(d, "final")] = f"{d}_final"
        cycles[-1].readouts.append((d, f"{d}_final", plan[d]))
    _run_cycles(b, cycles, True)
    support_at, removed = _support_bookkeeping(layout, cycles, {})
    dets = _detectors(layout, cycles, support_at, removed, b.data_records, plan)
    logicals = {
        "Z_L": LogicalOperator("Z_L", "Z", ("D4", "D5", "D6")),
        "X_L": LogicalOperator("X_L", "X", ("D2", "D5", "D8")),
    }
    readouts = {f"{basis}_L": tuple(b.data_records[(d, "final")] for d in SURFACE_LOGICAL_QUBITS[basis])}
    return ScheduledCircuit(spec, b.c, layout, b.stab_records, b.data_records, plan, logicals, readouts,
                            dets, [(c.type, c.index, c.stabs) for c in cycles], flags)


def _rep_prep_states(labels) -> dict:
    states = {}
    for code, lab in zip((1, 2), labels):
        qs = REP_CODES[code]
        mid = REP_MIDDLE[code]
        if lab in ("0", "1"):
            for q in qs:
                states[q] = lab
        elif lab in ("+", "-", "+i", "-i"):
            for q in qs:
                states[q] = "+"
            states[mid] = lab
        else:
            raise ValueError(f"unknown repetition-code state {lab!r}")
    return states


def _rep_logicals(frame_x1=(), frame_x2=(), frame_z2=()) -> dict:
    return {
        "Z_L1": LogicalOperator("Z_L1", "Z", ("D4",)),
        "Z_L2": LogicalOperator("Z_L2", "Z", ("D6",), tuple(frame_z2)),
        "X_L1": LogicalOperator("X_L1", "X", REP_CODES[1], tuple(frame_x1)),
        "X_L2": LogicalOperator("X_L2", "X", REP_CODES[2], tuple(frame_x2)),
    }


def _final_readout_plan(bases) -> tuple[dict, dict]:
    plan, obs_qubits = {}, {}
    for code, basis in zip((1, 2), bases):
        p, qs = _rep_readout_plan(code, basis)
        plan.update(p)
        obs_qubits[f"{basis}_L{code}"] = qs
    return plan, obs_qubits


def _build_repetition_memory(m, basis, init, layout):
    labels = init or {"Z": ("0", "0"), "X": ("+", "+"), "Y": ("+i", "+i")}[basis]
    if isinstance(labels, str):
        labels = (labels, labels)
    labels = tuple(labels)
    bases = tuple({"0": "Z", "1": "Z", "+": "X", "-": "X", "+i": "Y", "-i": "Y"}[lab] for lab in labels)
    if any(bb != basis for bb in bases):
        raise ValueError(f"init {labels} does not match basis {basis}")
    flags = [] if basis == "Z" else [f"non-fault-tolerant {basis}-basis preparation and readout"]
    spec = ProtocolSpec("repetition_memory", m=m, n=0, initial=",".join(labels), bases=(basis, basis))
    b = _Builder(layout)
    _prepare(b, _rep_prep_states(labels), layout.stabilizers("Z"))
    plan, obs_qubits = _final_readout_plan((basis, basis))
    cycles = [_Cycle("Z", N, layout.stabilizers("Z"), REP_ACTIVE) for N in range(1, m + 1)]
    for d in REP_ACTIVE:
        b.data_records[(d, "final")] = f"{d}_final"
        cycles[-1].readouts.append((d, f"{d}_final", plan[d]))
    _run_cycles(b, cycles, True)
    support_at, removed = _support_bookkeeping(layout, cycles, {})
    dets = _detectors(layout, cycles, support_at, removed, b.data_records, plan)
    readouts = {k: tuple(b.data_records[(d, "final")] for d in qs) for k, qs in obs_qubits.items()}
    return ScheduledCircuit(spec, b.c, layout, b.stab_records, b.data_records, plan, _rep_logicals(), readouts,
                            dets, [(c.type, c.index, c.stabs) for c in cycles], flags)


def build_split(spec: ProtocolSpec, layout: QubitLayout = DEFAULT_LAYOUT) -> ScheduledCircuit:
    """Surface-code preparation, m+1 X / m Z cycles, middle-column readout,
    n Z-only cycles on both repetition codes, final readout in ``spec.bases``."""
    if spec.kind not in ("split", "split_arbitrary"):
        raise ValueError(f"build_split cannot build {spec.kind!r}")
    if len(spec.bases) != 2:
        raise ValueError("split needs one basis per logical qubit")
    if spec.n < 1:
        raise ValueError("split needs n >= 1 post-split cycles")
    flags = []
    predefined = ()
    if spec.kind == "split_arbitrary":
        frag = build_arbitrary_prep(spec.theta, spec.phi)
        if not frag.is_cardinal:
            raise ValueError("non-cardinal inputs are built per cardinal component; see build_arbitrary_prep")
        states = frag.states[frag.mixture[0][1]]
        predefined = frag.predefined
        flags.append("non-fault-tolerant preparation (injection)")
    else:
        states = surface_prep_states(spec.initial or "0")
    b = _Builder(layout)
    data = layout.names[:9]
    _prepare(b, states, layout.stabilizers("X") + layout.stabilizers("Z"))
    K = spec.m + 1
    cycles = []
    for N in range(1, K + 1):
        cycles.append(_Cycle("X", N, layout.stabilizers("X"), data))
        if N <= spec.m:
            cycles.append(_Cycle("Z", N, layout.stabilizers("Z"), data))
    middle = ("D2", "D5", "D8")
    split_records = {}
    for d in middle:
        lab = f"{d}_split"
        b.data_records[(d, "split")] = lab
        split_records[d] = lab
        cycles[-1].readouts.append((d, lab, "Z"))
    for N in range(spec.m + 1, spec.m + 1 + spec.n):
        cycles.append(_Cycle("Z", N, layout.stabilizers("Z"), REP_ACTIVE))
    plan, obs_qubits = _final_readout_plan(spec.bases)
    for d in REP_ACTIVE:
        b.data_records[(d, "final")] = f"{d}_final"
        cycles[-1].readouts.append((d, f"{d}_final", plan[d]))
    _run_cycles(b, cycles, True)
    support_at, removed = _support_bookkeeping(layout, cycles, split_records)
    dets = _detectors(layout, cycles, support_at, removed, b.data_records, plan)
    xs = lambda a: (f"{a}_{K}",) + ((f"{a}_{K - 1}",) if K > 1 else ())  # s_K = m_K xor m_(K-1)
    logicals = _rep_logicals(xs("X2") + xs("X4"), xs("X1") + xs("X3"), (split_records["D5"],))
    readouts = {k: tuple(b.data_records[(d, "final")] for d in qs) for k, qs in obs_qubits.items()}
    bases = {**plan, **{d: "Z" for d in middle if d not in plan}}
    sc = ScheduledCircuit(spec, b.c, layout, b.stab_records, b.data_records, bases, logicals, readouts,
                          dets, [(c.type, c.index, c.stabs) for c in cycles], flags)
    sc.predefined = predefined
    return sc


def build_distance_one(m: int, bases=("Z", "Z"), layout: QubitLayout = DEFAULT_LAYOUT) -> ScheduledCircuit:
    """Bell pair between D7 and D9 via m+1 rounds of the X3/X4 checks and a Z readout of D8."""
    if not 1 <= m + 1 <= 6:
        raise ValueError("distance-one protocol needs 1 <= m+1 <= 6")
    spec = ProtocolSpec("distance_one", m=m, n=0, initial="0", bases=tuple(bases))
    b = _Builder(layout)
    data = ("D7", "D8", "D9")
    _prepare(b, {d: "0" for d in data}, ("X3", "X4"))
    K = m + 1
    cycles = [_Cycle("X", N, ("X3", "X4"), data) for N in range(1, K + 1)]
    b.data_records[("D8", "split")] = "D8_split"
    cycles[-1].readouts.append(("D8", "D8_split", "Z"))
    plan = {"D8": "Z"}
    readouts = {}
    for code, (d, basis) in enumerate(zip(("D7", "D9"), bases), start=1):
        plan[d] = basis
        b.data_records[(d, "final")] = f"{d}_final"
        cycles[-1].readouts.append((d, f"{d}_final", basis))
        readouts[f"{basis}_L{code}"] = (f"{d}_final",)
    _run_cycles(b, cycles, True)
    support_at, removed = _support_bookkeeping(layout, cycles, {})
    dets = _detectors(layout, cycles, support_at, removed, b.data_records, plan)
    xs = lambda a: (f"{a}_{K}",) + ((f"{a}_{K - 1}",) if K > 1 else ())
    logicals = {
        "Z_L1": LogicalOperator("Z_L1", "Z", ("D7",)),
        "Z_L2": LogicalOperator("Z_L2", "Z", ("D9",), ("D8_split",)),
        "X_L1": LogicalOperator("X_L1", "X", ("D7",), xs("X4")),
        "X_L2": LogicalOperator("X_L2", "X", ("D9",), xs("X3")),
    }
    return ScheduledCircuit(spec, b.c, layout, b.stab_records, b.data_records, plan, logicals, readouts,
                            dets, [(c.type, c.index, c.stabs) for c in cycles], [])


def build(spec: ProtocolSpec, layout: QubitLayout = DEFAULT_LAYOUT) -> ScheduledCircuit:
    """Dispatch on ``spec.kind``."""
    if spec.kind in ("split", "split_arbitrary"):
        return build_split(spec, layout)
    if spec.kind == "distance_one":
        return build_distance_one(spec.m, spec.bases, layout)
    if spec.kind == "surface_memory":
        return build_memory("surface", spec.m, spec.bases[0], spec.initial, layout)
    init = tuple(spec.initial.split(",")) if spec.initial else None
    return build_memory("repetition", spec.m, spec.bases[0], init, layout)


# -- logical read-off -------------------------------------------------------

def _bits(record, labels, index):
    return [int(record[index[lab]]) for lab in labels]


def pauli_frame_update(record, sc: ScheduledCircuit, index=None) -> dict:
    """Frame bit of each base logical: parity of its frame records (1 means multiply by -1)."""
    index = index or sc.circuit.label_index()
    out = {}
    for name, op in sc.logicals.items():
        missing = [lab for lab in op.frame if lab not in index]
        if missing:
            raise KeyError(f"record lacks frame labels {missing}")
        out[name] = sum(_bits(record, op.frame, index)) % 2
    return out


def components_of(observable: str) -> list[str]:
    """Base logicals whose frames enter a measured single-code observable."""
    p, code = observable.split("_L")
    if p == "Y":
        return [f"X_L{code}", f"Z_L{code}"]
    return [f"{p}_L{code}"]


def logical_observable_values(record, sc: ScheduledCircuit, signs: Optional[dict] = None, index=None) -> dict:
    """+-1 value of every measured single-code observable after the frame update.

    ``signs`` holds the fixed sign bit per base logical (the echo parity, see
    :func:`splitqec.detectors.compile_detectors`); products of measured
    observables are formed by the caller.
    """
    index = index or sc.circuit.label_index()
    frame = pauli_frame_update(record, sc, index)
    signs = signs or {}
    out = {}
    for obs, labels in sc.readouts.items():
        missing = [lab for lab in labels if lab not in index]
        if missing:
            raise KeyError(f"basis mismatch: record lacks {missing}")
        bit = sum(_bits(record, labels, index)) % 2
        for comp in components_of(obs):
            bit ^= frame[comp] ^ signs.get(comp, 0)
        out[obs] = 1 - 2 * bit
    return out
