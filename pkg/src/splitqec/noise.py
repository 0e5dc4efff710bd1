"""Circuit-level Pauli noise from device parameters, scaled by an improvement factor."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .circuit import Circuit, Gate, Measure, Noise, Reset, Tick

DEFAULT_DEVICE = "device_default.json"


@dataclass(frozen=True)
class QubitParameters:
    t1: float  # seconds
    t2e: float  # seconds
    sq_error: float
    ro_error: float

    def __post_init__(self):
        if self.t1 <= 0 or self.t2e <= 0:
            raise ValueError("coherence times must be positive")
        if self.t2e > 2 * self.t1 * (1 + 1e-12):
            raise ValueError(f"T2E={self.t2e} exceeds 2*T1={2 * self.t1}")
        for p in (self.sq_error, self.ro_error):
            if not 0.0 <= p < 1.0:
                raise ValueError(f"error probability {p} outside [0, 1)")


@dataclass
class DeviceParameters:
    qubits: dict  # name -> QubitParameters
    cz_error: dict  # frozenset({a, b}) -> probability

    def __post_init__(self):
        for p in self.cz_error.values():
            if not 0.0 <= p < 1.0:
                raise ValueError(f"CZ error {p} outside [0, 1)")

    def pair_error(self, a: str, b: str) -> float:
        key = frozenset((a, b))
        if key not in self.cz_error:
            raise KeyError(f"no CZ error for pair {a}-{b}")
        return self.cz_error[key]

    def to_json(self) -> str:
        d = {}
        for name, q in self.qubits.items():
            d[name] = {"t1_us": q.t1 * 1e6, "t2e_us": q.t2e * 1e6, "sq_error": q.sq_error, "ro_error": q.ro_error}
        for pair, p in sorted(self.cz_error.items(), key=lambda kv: sorted(kv[0])):
            a, b = sorted(pair, key=lambda s: (s[0] == "D", s))
            d[f"{a}-{b}"] = {"cz_error": p}
        return json.dumps(d, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DeviceParameters":
        raw = json.loads(text)
        qubits, cz = {}, {}
        for key, v in raw.items():
            if "cz_error" in v:
                a, b = key.split("-")
                cz[frozenset((a, b))] = float(v["cz_error"])
            else:
                qubits[key] = QubitParameters(v["t1_us"] * 1e-6, v["t2e_us"] * 1e-6, float(v["sq_error"]),
                                              float(v["ro_error"]))
        return cls(qubits, cz)

    @classmethod
    def load(cls, path=None) -> "DeviceParameters":
        if path is None:
            text = resources.files("splitqec.data").joinpath(DEFAULT_DEVICE).read_text()
        else:
            text = Path(path).read_text()
        return cls.from_json(text)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def pure_dephasing_time(t1: float, t2e: float) -> float:
    """1/Tphi = 1/T2E - 1/(2 T1); infinite when T2E = 2 T1."""
    if t1 <= 0 or t2e <= 0:
        raise ValueError("coherence times must be positive")
    rate = 1.0 / t2e - 1.0 / (2.0 * t1)
    if rate < -1e-12 / t2e:
        raise ValueError(f"T2E={t2e} exceeds 2*T1={2 * t1}")
    return math.inf if rate <= 0 else 1.0 / rate


def idle_pauli_probs(t: float, t1: float, tphi: float) -> tuple[float, float, float]:
    """(pX, pY, pZ) with p_i = 1 - exp(-t/T_i), T_X = T_Y = 4 T1, T_Z = Tphi."""
    if t < 0:
        raise ValueError("negative idle time")
    pxy = -math.expm1(-t / (4.0 * t1))
    pz = 0.0 if math.isinf(tphi) else -math.expm1(-t / tphi)
    return pxy, pxy, pz


def depolarizing_from_rb(r: float, n_qubits: int) -> float:
    """Average benchmarked error r -> total depolarizing probability r d/(d-1)."""
    d = 2 ** n_qubits
    return r * d / (d - 1)


@dataclass
class NoiseBinding:
    """A noisy circuit with the provenance of every inserted channel."""

    source: Circuit
    circuit: Circuit
    factor: float
    channels: list = field(default_factory=list)  # (source index, Noise)

    def strip(self) -> Circuit:
        return self.circuit.without_noise()


def _usage_window(circuit: Circuit) -> tuple[dict, dict]:
    first, last = {}, {}
    for pos, ins in enumerate(circuit):
        if isinstance(ins, Reset):
            first.setdefault(ins.qubit, pos)
            last[ins.qubit] = pos
        elif isinstance(ins, (Gate, Measure)):
            qs = ins.targets if isinstance(ins, Gate) else (ins.qubit,)
            for q in qs:
                first.setdefault(q, pos)
                last[q] = pos
    return first, last


def bind_noise(circuit: Circuit, params: DeviceParameters, x: float = 1.0) -> NoiseBinding:
    """Insert gate, readout, initialization and idle channels; divide all by ``x``.

    Depolarizing noise follows each gate, a flip precedes each measurement and
    follows each reset, and every live qubit without an operation in a tick
    idles for the tick's duration (noise placed just before the tick).
    """
    if x < 1:
        raise ValueError(f"improvement factor {x} < 1")
    if circuit.noisy or any(isinstance(ins, Noise) for ins in circuit):
        raise ValueError("circuit already carries noise")
    names = list(circuit.qubit_names or [str(q) for q in range(circuit.n_qubits)])
    first, last = _usage_window(circuit)
    for q in first:
        if names[q] not in params.qubits:
            raise KeyError(f"no parameters for qubit {names[q]}")
    tphi = {q: pure_dephasing_time(params.qubits[names[q]].t1, params.qubits[names[q]].t2e) for q in first}
    out = Circuit(circuit.n_qubits, qubit_names=circuit.qubit_names, noisy=True)
    binding = NoiseBinding(circuit, out, float(x))

    def add(kind, targets, probs, src):
        probs = tuple(p / x for p in probs)
        ch = Noise(kind, tuple(targets), probs, src)
        out.instructions.append(ch)
        binding.channels.append((src, ch))

    active: set = set()
    for pos, ins in enumerate(circuit):
        if isinstance(ins, Measure):
            add("X_ERROR", (ins.qubit,), (params.qubits[names[ins.qubit]].ro_error,), pos)
            out.instructions.append(ins)
            active.add(ins.qubit)
        elif isinstance(ins, Reset):
            out.instructions.append(ins)
            add("X_ERROR", (ins.qubit,), (params.qubits[names[ins.qubit]].ro_error,), pos)
            active.add(ins.qubit)
        elif isinstance(ins, Gate):
            out.instructions.append(ins)
            if ins.kind == "CZ":
                a, b = ins.targets
                add("DEPOLARIZE2", (a, b), (depolarizing_from_rb(params.pair_error(names[a], names[b]), 2),), pos)
            else:
                q, = ins.targets
                add("DEPOLARIZE1", (q,), (depolarizing_from_rb(params.qubits[names[q]].sq_error, 1),), pos)
            active.update(ins.targets)
        elif isinstance(ins, Tick):
            for q in sorted(first):
                if q in active or q in ins.busy or not (first[q] < pos < last[q]):
                    continue
                qp = params.qubits[names[q]]
                add("IDLE", (q,), idle_pauli_probs(ins.duration, qp.t1, tphi[q]), pos)
            out.instructions.append(ins)
            active = set()
        else:
            out.instructions.append(ins)
    return binding


def attach_noise(circuit, params: DeviceParameters | None = None, x: float = 1.0) -> Circuit:
    """Noisy copy of a circuit (or of a scheduled circuit's circuit)."""
    c = getattr(circuit, "circuit", circuit)
    return bind_noise(c, params or DeviceParameters.load(), x).circuit


def generate_device(seed: int, layout=None) -> DeviceParameters:
    """Draw a parameter set from the reported ranges and averages.

    T1 spans [24, 78] us and T2E [12.4, 138.9] us (both endpoints attained,
    T2E <= 2 T1); gate and readout errors are gamma-distributed and rescaled so
    their means are exactly 0.09 %, 2.2 % and 1.5 %.
    """
    from .layout import DEFAULT_LAYOUT

    layout = layout or DEFAULT_LAYOUT
    rng = np.random.default_rng(seed)
    names = list(layout.names)
    n = len(names)
    t1 = rng.uniform(24.0, 78.0, n)
    order = rng.permutation(n)
    t1[order[0]], t1[order[1]] = 24.0, 78.0
    t2e = np.array([rng.uniform(12.4, min(138.9, 2 * t)) for t in t1])
    t2e[order[1]] = 138.9
    t2e[order[2]] = 12.4

    def gamma(mean, sd, size, cap):
        k = (mean / sd) ** 2
        v = np.minimum(rng.gamma(k, mean / k, size), cap)
        return v * mean / v.mean()

    sq = gamma(0.0009, 0.0005, n, 0.004)
    ro = gamma(0.015, 0.007, n, 0.05)
    pairs = sorted(tuple(sorted(p, key=lambda s: (s[0] == "D", s))) for p in layout.coupling)
    cz = gamma(0.022, 0.017, len(pairs), 0.1)
    qubits = {nm: QubitParameters(float(t1[i]) * 1e-6, float(t2e[i]) * 1e-6, float(sq[i]), float(ro[i]))
              for i, nm in enumerate(names)}
    return DeviceParameters(qubits, {frozenset(p): float(c) for p, c in zip(pairs, cz)})
