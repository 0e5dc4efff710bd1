"""Detector compilation, observable signs and packed shot evaluation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .channels import n_words, unpack_words
from .circuit import Checkpoint, Gate
from .frames import checkpoint_operator, propagate_columns, sample_flips
from .protocols import ScheduledCircuit, components_of
from .tableau import run_exact_shot

DETERMINISM_SHOTS = 256


@dataclass(frozen=True)
class Detector:
    stab: str
    index: int
    records: tuple  # record indices
    role: str
    reference: int

    @property
    def type(self) -> str:
        return self.stab[0]


@dataclass
class CompiledProtocol:
    """A scheduled circuit with its detectors and observable definitions.

    ``observables`` maps a Pauli label (``"ZZ"``, ``"IX"``, or ``"Z"`` for a
    single code) to ``(record indices, sign bit)``; the observable value is
    ``(-1) ** (parity(records) ^ sign)``.  ``base_logicals`` maps base logical
    names to the packed column convention used by the error model.
    """

    sc: ScheduledCircuit
    detectors: list
    omitted: list
    reference: np.ndarray
    echo_signs: dict
    observables: dict = field(default_factory=dict)

    @property
    def circuit(self):
        return self.sc.circuit

    def detector_records(self) -> list:
        return [d.records for d in self.detectors]

    def detectors_of_type(self, kind: str) -> list[int]:
        return [i for i, d in enumerate(self.detectors) if d.type == kind]


def _index(sc):
    return sc.circuit.label_index()


def base_operators(sc: ScheduledCircuit) -> dict:
    n = sc.circuit.n_qubits
    return {name: checkpoint_operator(n, op.kind, [sc.layout.index(q) for q in op.support])
            for name, op in sc.logicals.items()}


def logical_flips(sc: ScheduledCircuit, result, index=None) -> dict:
    """Packed flip bits of each base logical for propagated columns.

    Columns injected before the checkpoint flip a logical by anticommuting
    with its checkpoint operator; later columns act through the final readout
    records of the measured observable containing that logical.  Frame
    records count for every column.
    """
    index = index or _index(sc)
    w = result.records.shape[1]
    out = {}
    after = result.after_checkpoint
    for name, op in sc.logicals.items():
        acc = result.checkpoint.get(name, np.zeros(w, dtype=np.uint64)) & ~after
        for lab in op.frame:
            acc = acc ^ result.records[index[lab]]
        post = np.zeros(w, dtype=np.uint64)
        for obs, labels in sc.readouts.items():
            comps = components_of(obs)
            # A Y readout flip is attributed to the Z component.
            target = comps[-1] if len(comps) == 2 else comps[0]
            if target != name:
                continue
            for lab in labels:
                post ^= result.records[index[lab]]
        out[name] = acc ^ (post & after)
    return out


def echo_injections(circuit) -> list:
    """One column per echo gate: its Pauli placed right after the gate."""
    cols = []
    seen_checkpoint = False
    for pos, ins in enumerate(circuit):
        if isinstance(ins, Checkpoint):
            seen_checkpoint = True
        if isinstance(ins, Gate) and ins.tag == "echo":
            if seen_checkpoint:
                raise ValueError("echo after the checkpoint")
            x, z = {"X": (1, 0), "Z": (0, 1), "Y": (1, 1)}[ins.kind]
            cols.append((pos, ((ins.targets[0], x, z),)))
    return cols


def _parity_of_columns(words: np.ndarray, n_cols: int) -> int:
    return int(unpack_words(words[None], n_cols)[0].sum() % 2)


def compile_detectors(sc: ScheduledCircuit, seed: int = 0) -> CompiledProtocol:
    """Resolve detector records, drop non-deterministic candidates and fix signs.

    Determinism is tested by noiseless frame sampling with randomized Z
    frames: a deterministic parity never flips.  Reference values come from
    one exact noiseless shot.
    """
    circuit = sc.circuit.without_noise()
    index = _index(sc)
    flips = sample_flips(circuit, DETERMINISM_SHOTS, seed=seed ^ 0x5EED)
    ref = run_exact_shot(circuit, seed)
    detectors, omitted = [], []
    for cand in sc.detectors:
        idx = tuple(index[lab] for lab in cand.records)
        par = np.zeros(flips.shape[1], dtype=np.uint64)
        for i in idx:
            par ^= flips[i]
        if par.any():
            omitted.append(cand)
            continue
        detectors.append(Detector(cand.stab, cand.index, idx, cand.role, int(sum(ref[i] for i in idx) % 2)))
    cols = echo_injections(circuit)
    signs = {name: 0 for name in sc.logicals}
    if cols:
        res = propagate_columns(circuit, cols, base_operators(sc))
        lf = logical_flips(sc, res, index)
        signs = {name: _parity_of_columns(words, len(cols)) for name, words in lf.items()}
    comp = CompiledProtocol(sc, detectors, omitted, ref, signs)
    comp.observables = _observables(sc, signs, index)
    return comp


def _observables(sc: ScheduledCircuit, signs: dict, index: dict) -> dict:
    """All products of the measured single-code observables."""
    singles = {}
    for obs, labels in sc.readouts.items():
        p, code = obs.split("_L")
        recs = [index[lab] for lab in labels]
        sign = 0
        for comp in components_of(obs):
            recs += [index[lab] for lab in sc.logicals[comp].frame]
            sign ^= signs[comp]
        singles[code] = (p, recs, sign)
    codes = sorted(singles)
    out = {}
    for choice in itertools.product((0, 1), repeat=len(codes)):
        if not any(choice):
            continue
        label, recs, sign = "", [], 0
        for code, use in zip(codes, choice):
            p, r, s = singles[code]
            if use:
                label += p
                recs += r
                sign ^= s
            else:
                label += "I"
        # Records appearing twice cancel.
        counts: dict = {}
        for r in recs:
            counts[r] = counts.get(r, 0) ^ 1
        out[label] = (tuple(sorted(r for r, c in counts.items() if c)), sign)
    return out


@dataclass
class ShotData:
    """Packed detector and observable bits for a batch of shots."""

    n_shots: int
    detectors: np.ndarray  # (n_det, n_words)
    observables: dict  # label -> packed words of the observable bit
    records: np.ndarray  # packed absolute records (n_meas, n_words)

    def detector_bits(self) -> np.ndarray:
        return unpack_words(self.detectors, self.n_shots).T

    def observable_bits(self, label: str) -> np.ndarray:
        return unpack_words(self.observables[label][None], self.n_shots)[0]

    def record_bits(self) -> np.ndarray:
        return unpack_words(self.records, self.n_shots).T


def evaluate_flips(comp: CompiledProtocol, flips: np.ndarray, n_shots: int) -> ShotData:
    """Turn packed flips into absolute records, detector events and observable bits."""
    w = flips.shape[1]
    full = np.uint64(0xFFFFFFFFFFFFFFFF)
    tail = np.uint64((1 << (n_shots % 64)) - 1) if n_shots % 64 else full
    ones = np.full(w, full, dtype=np.uint64)
    ones[-1] = tail
    records = flips.copy()
    for i, bit in enumerate(comp.reference):
        if bit:
            records[i] ^= ones
    dets = np.zeros((len(comp.detectors), w), dtype=np.uint64)
    for k, d in enumerate(comp.detectors):
        for i in d.records:
            dets[k] ^= flips[i]
    obs = {}
    for label, (recs, sign) in comp.observables.items():
        acc = np.zeros(w, dtype=np.uint64)
        for i in recs:
            acc ^= records[i]
        if sign:
            acc ^= ones
        obs[label] = acc
    return ShotData(n_shots, dets, obs, records)


def sample_shots(comp: CompiledProtocol, shots: int, seed: int, chunk: int | None = None,
                 circuit=None) -> ShotData:
    """Sample ``circuit`` (default: the protocol's own, noiseless) and evaluate it."""
    kwargs = {"chunk": chunk} if chunk else {}
    flips = sample_flips(comp.circuit if circuit is None else circuit, shots, seed, **kwargs)
    return evaluate_flips(comp, flips, shots)


def expectation(data: ShotData, label: str, mask: np.ndarray | None = None) -> float:
    bits = data.observable_bits(label)
    if mask is not None:
        bits = bits[mask]
    if bits.size == 0:
        return float("nan")
    return float(1 - 2 * bits.mean())


def records_to_detectors(comp: CompiledProtocol, records: np.ndarray) -> np.ndarray:
    """Detector events from absolute uint8 records ``(shots, n_meas)``."""
    out = np.zeros((records.shape[0], len(comp.detectors)), dtype=np.uint8)
    for k, d in enumerate(comp.detectors):
        out[:, k] = (records[:, list(d.records)].sum(axis=1) + d.reference) % 2
    return out


def records_to_observable(comp: CompiledProtocol, records: np.ndarray, label: str) -> np.ndarray:
    recs, sign = comp.observables[label]
    return ((records[:, list(recs)].sum(axis=1) + sign) % 2).astype(np.uint8)


__all__ = [
    "Detector", "CompiledProtocol", "ShotData", "compile_detectors", "sample_shots", "evaluate_flips",
    "expectation", "records_to_detectors", "records_to_observable", "logical_flips", "base_operators",
    "n_words",
]
