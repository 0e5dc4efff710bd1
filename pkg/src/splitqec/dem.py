"""Detector error model: independent mechanisms from forward Pauli propagation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .channels import PAULI_BITS, PAULI_CHARS, n_words, positions_to_words, unpack_words, bernoulli_positions
from .circuit import Circuit, Noise
from .detectors import CompiledProtocol, base_operators, logical_flips
from .frames import propagate_columns


def xor_prob(p1: float, p2: float) -> float:
    return p1 * (1 - p2) + p2 * (1 - p1)


def independent_components(ch: Noise) -> list[tuple[float, tuple]]:
    """Independent Pauli components reproducing the channel exactly.

    Exclusive depolarizing draws are rewritten as independent flips of every
    non-identity Pauli with a common probability r: 1 - 2r = (1 - 4p/3)^(1/2)
    for one qubit and (1 - 16p/15)^(1/8) for two.
    """
    if ch.kind == "DEPOLARIZE1":
        p = ch.probs[0]
        if p <= 0:
            return []
        r = (1 - math.sqrt(max(0.0, 1 - 4 * p / 3))) / 2
        q, = ch.targets
        return [(r, ((q, *PAULI_BITS[c]),)) for c in (1, 2, 3)]
    if ch.kind == "DEPOLARIZE2":
        p = ch.probs[0]
        if p <= 0:
            return []
        r = (1 - max(0.0, 1 - 16 * p / 15) ** 0.125) / 2
        a, b = ch.targets
        out = []
        for k in range(1, 16):
            ca, cb = divmod(k, 4)
            out.append((r, tuple((q, *PAULI_BITS[c]) for q, c in ((a, ca), (b, cb)) if c)))
        return out
    if ch.kind == "IDLE":
        q, = ch.targets
        return [(p, ((q, *PAULI_BITS[c]),)) for c, p in zip((1, 2, 3), ch.probs) if p > 0]
    c = {"X_ERROR": 1, "Y_ERROR": 2, "Z_ERROR": 3}[ch.kind]
    return [(ch.probs[0], ((q, *PAULI_BITS[c]),)) for q in ch.targets if ch.probs[0] > 0]


def _pauli_label(terms) -> str:
    return " ".join(f"{PAULI_CHARS[(x and not z) + 2 * (x and z) + 3 * (z and not x)]}{q}" for q, x, z in terms)


@dataclass(frozen=True)
class ErrorMechanism:
    probability: float
    detectors: tuple  # detector ids
    observables: tuple  # base logical names
    provenance: tuple = ()  # (instruction index, Pauli label)

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability {self.probability} outside [0, 1]")


@dataclass
class DetectorErrorModel:
    mechanisms: list  # merged, undecomposed
    parts: dict  # "Z"/"X" -> merged graphlike mechanisms of that type
    detector_types: list  # per detector id: "Z" or "X"
    observables: tuple
    nongraphlike: list = field(default_factory=list)
    undetectable: list = field(default_factory=list)
    excluded: tuple = ()

    def detectors_of_type(self, kind: str) -> list[int]:
        return [i for i, t in enumerate(self.detector_types) if t == kind]


def _merge(items) -> list:
    acc: dict = {}
    prov: dict = {}
    for p, dets, obs, src in items:
        key = (tuple(sorted(dets)), tuple(sorted(obs)))
        acc[key] = xor_prob(acc.get(key, 0.0), p)
        prov.setdefault(key, []).extend(src)
    return [ErrorMechanism(acc[k], k[0], k[1], tuple(prov[k])) for k in sorted(acc) if acc[k] > 0]


def derive_dem(comp: CompiledProtocol, noisy: Circuit, exclude=()) -> DetectorErrorModel:
    """Propagate every independent noise component and collect its footprint.

    ``exclude`` lists detector ids that are not treated as detectors (their
    mechanisms simply lose those flips).
    """
    sc = comp.sc
    if noisy.n_measurements != sc.circuit.n_measurements or noisy.measurement_labels != sc.circuit.measurement_labels:
        raise ValueError("noisy circuit does not match the compiled protocol")
    injections, probs = [], []
    for pos, ins in enumerate(noisy):
        if isinstance(ins, Noise):
            for p, terms in independent_components(ins):
                injections.append((pos, terms))
                probs.append(p)
    res = propagate_columns(noisy, injections, base_operators(sc))
    n_cols = len(injections)
    det_words = np.zeros((len(comp.detectors), res.records.shape[1]), dtype=np.uint64)
    for k, d in enumerate(comp.detectors):
        for i in d.records:
            det_words[k] ^= res.records[i]
    det_bits = unpack_words(det_words, n_cols) if len(comp.detectors) else np.zeros((0, n_cols), np.uint8)
    lf = logical_flips(sc, res)
    obs_names = tuple(sc.logicals)
    obs_bits = np.array([unpack_words(lf[name][None], n_cols)[0] for name in obs_names])
    excluded = set(exclude)
    types = [d.type for d in comp.detectors]
    full, zparts, xparts, undetectable = [], [], [], []
    for col in range(n_cols):
        dets = [int(i) for i in np.flatnonzero(det_bits[:, col]) if int(i) not in excluded]
        obs = [obs_names[i] for i in np.flatnonzero(obs_bits[:, col])]
        if not dets and not obs:
            continue
        src = ((injections[col][0], _pauli_label(injections[col][1])),)
        full.append((probs[col], dets, obs, src))
        for kind, bucket in (("Z", zparts), ("X", xparts)):
            pd = [d for d in dets if types[d] == kind]
            po = [o for o in obs if o.startswith(kind)]
            if pd or po:
                bucket.append((probs[col], pd, po, src))
    mechanisms = _merge(full)
    parts, nongraphlike = {}, []
    for kind, bucket in (("Z", zparts), ("X", xparts)):
        merged = _merge(bucket)
        edges = [m for m in merged if 1 <= len(m.detectors) <= 2]
        known = {m.detectors: m.observables for m in edges}
        out = list(edges)
        for m in merged:
            if not m.detectors:
                undetectable.append(m)
            elif len(m.detectors) > 2:
                pieces = _split_into_edges(m, known)
                if pieces is None:
                    nongraphlike.append(m)
                else:
                    out += [ErrorMechanism(m.probability, dd, oo, m.provenance) for dd, oo in pieces]
        parts[kind] = _merge([(m.probability, m.detectors, m.observables, m.provenance) for m in out])
    return DetectorErrorModel(mechanisms, parts, types, obs_names, nongraphlike, undetectable, tuple(sorted(excluded)))


def _split_into_edges(m: ErrorMechanism, known: dict):
    """Partition a hyperedge into known edges whose logical flips XOR to its own."""
    dets = list(m.detectors)
    target = set(m.observables)

    def rec(rest):
        if not rest:
            yield []
            return
        a = rest[0]
        for b in [None] + rest[1:]:
            key = (a,) if b is None else tuple(sorted((a, b)))
            if key not in known:
                continue
            remain = [d for d in rest[1:] if d != b]
            for tail in rec(remain):
                yield [(key, known[key])] + tail

    for pieces in rec(dets):
        acc: set = set()
        for _, obs in pieces:
            acc ^= set(obs)
        if acc == target:
            return pieces
    return None


def sample_dem(dem: DetectorErrorModel, shots: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Fire every (undecomposed) mechanism independently.

    Returns uint8 detector bits ``(shots, n_det)`` and observable flips
    ``(shots, n_obs)``.
    """
    rng = np.random.default_rng([seed, 0xDE3])
    w = n_words(shots)
    dets = np.zeros((len(dem.detector_types), w), dtype=np.uint64)
    obs = np.zeros((len(dem.observables), w), dtype=np.uint64)
    oi = {o: i for i, o in enumerate(dem.observables)}
    for m in dem.mechanisms:
        hits = bernoulli_positions(rng, shots, m.probability)
        if not hits.size:
            continue
        words = positions_to_words(hits, shots)
        for d in m.detectors:
            dets[d] ^= words
        for o in m.observables:
            obs[oi[o]] ^= words
    return unpack_words(dets, shots).T, unpack_words(obs, shots).T


def dem_to_text(dem: DetectorErrorModel) -> str:
    lines = []
    for m in dem.mechanisms:
        lines.append(f"error({m.probability:.6g}) " + " ".join(f"D{d}" for d in m.detectors)
                     + "".join(f" {o}" for o in m.observables))
    return "\n".join(lines)
