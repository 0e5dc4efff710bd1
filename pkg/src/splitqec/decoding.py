"""Syndrome graphs, matching decoders and raw/decoded/postselected evaluation."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import pymatching
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .dem import DetectorErrorModel, xor_prob

BOUNDARY = -1
CLAMP_EPS = 1e-6
EXHAUSTIVE_CAP = 14
LABELS = ("none", "L1", "L2", "both", "ambiguous")


def edge_weight(p: float) -> float:
    """w = -log(p / (1 - p)) for 0 < p <= 0.5."""
    if not 0.0 < p <= 0.5:
        raise ValueError(f"edge probability {p} outside (0, 0.5]")
    return -math.log(p / (1.0 - p))


def clamp_probability(p: float) -> float:
    if p > 0.5:
        warnings.warn(f"edge probability {p:.4g} above 0.5 clamped", RuntimeWarning, stacklevel=2)
        return 0.5 - CLAMP_EPS
    return p


@dataclass(frozen=True)
class Edge:
    u: int
    v: int  # BOUNDARY for boundary edges
    p: float
    logicals: frozenset
    label: str

    @property
    def weight(self) -> float:
        return edge_weight(self.p)

    @property
    def is_boundary(self) -> bool:
        return self.v == BOUNDARY


def classify(logicals, ambiguous: bool = False) -> str:
    if ambiguous:
        return "ambiguous"
    codes = {name[-1] for name in logicals}
    if not codes:
        return "none"
    if codes == {"1"} or codes == {"L"}:
        return "L1"
    if codes == {"2"}:
        return "L2"
    return "both"


@dataclass
class SyndromeGraph:
    kind: str  # "Z" or "X"
    nodes: list  # detector ids
    edges: dict  # (u, v) -> Edge
    logicals: tuple  # base logicals this graph can flip
    conflicts: list = field(default_factory=list)
    alternatives: dict = field(default_factory=dict)  # ambiguous edge -> candidate logical sets

    def __post_init__(self):
        for (u, v), e in self.edges.items():
            if u == v:
                raise ValueError("self-loop")
            if u == BOUNDARY:
                raise ValueError("boundary must be the second endpoint")

    def edge_list(self) -> list:
        return [self.edges[k] for k in sorted(self.edges)]

    def correctable(self, logical: str) -> bool:
        """True when some non-ambiguous edge carries ``logical``."""
        return any(logical in e.logicals and e.label != "ambiguous" for e in self.edges.values())

    def parity_correctable(self, components) -> bool:
        """Whether matched corrections fix the parity of ``components`` unambiguously.

        Some edge must flip that parity, and every ambiguous edge's candidate
        logical sets must agree on it.
        """
        comps = set(components)
        if not comps or not any(len(e.logicals & comps) % 2 for e in self.edges.values()):
            return False
        for alts in self.alternatives.values():
            if len({len(set(a) & comps) % 2 for a in alts}) > 1:
                return False
        return True

    def to_json(self) -> str:
        return json.dumps({
            "kind": self.kind,
            "nodes": [BOUNDARY] + list(self.nodes),
            "edges": [{"u": e.u, "v": e.v, "p": e.p, "w": e.weight, "logicals": sorted(e.logicals),
                       "label": e.label,
                       **({"alternatives": [sorted(a) for a in self.alternatives[(e.u, e.v)]]}
                          if (e.u, e.v) in self.alternatives else {})} for e in self.edge_list()],
            "logicals": list(self.logicals),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SyndromeGraph":
        d = json.loads(text)
        edges, logicals, alts = {}, set(), {}
        for e in d["edges"]:
            edges[(e["u"], e["v"])] = Edge(e["u"], e["v"], e["p"], frozenset(e["logicals"]), e["label"])
            logicals |= set(e["logicals"])
            if "alternatives" in e:
                alts[(e["u"], e["v"])] = tuple(tuple(a) for a in e["alternatives"])
        logicals = tuple(d.get("logicals", sorted(logicals)))
        return cls(d["kind"], [n for n in d["nodes"] if n != BOUNDARY], edges, logicals, alternatives=alts)


def graph_from_edges(kind: str, nodes, raw_edges, logicals=()) -> SyndromeGraph:
    """Build a graph from ``(u, v, p, logicals)`` contributions, XOR-merging parallel ones.

    Parallel contributions with different logical sets keep the most likely
    set; on X-graph boundary edges they are marked ambiguous instead.
    """
    acc: dict = {}
    for u, v, p, obs in raw_edges:
        if p <= 0:
            continue
        if u == BOUNDARY or (v != BOUNDARY and v < u):
            u, v = v, u
        acc.setdefault((u, v), {})
        bucket = acc[(u, v)]
        key = frozenset(obs)
        bucket[key] = xor_prob(bucket.get(key, 0.0), p)
    edges, conflicts, alternatives = {}, [], {}
    for (u, v), bucket in acc.items():
        total = 0.0
        for p in bucket.values():
            total = xor_prob(total, p)
        ambiguous = False
        best = max(bucket, key=lambda k: (bucket[k], sorted(k)))
        if len(bucket) > 1:
            if kind == "X" and v == BOUNDARY:
                ambiguous = True
                alternatives[(u, v)] = tuple(sorted(tuple(sorted(k)) for k in bucket))
            else:
                conflicts.append(((u, v), {tuple(sorted(k)): p for k, p in bucket.items()}))
        p = clamp_probability(total)
        edges[(u, v)] = Edge(u, v, p, frozenset() if ambiguous else best, classify(best, ambiguous))
    return SyndromeGraph(kind, sorted(nodes), edges, tuple(logicals), conflicts, alternatives)


def graph_from_dem(dem: DetectorErrorModel, kind: str) -> SyndromeGraph:
    nodes = [d for d in dem.detectors_of_type(kind) if d not in dem.excluded]
    raw = []
    for m in dem.parts[kind]:
        if len(m.detectors) == 1:
            raw.append((m.detectors[0], BOUNDARY, m.probability, m.observables))
        elif len(m.detectors) == 2:
            raw.append((m.detectors[0], m.detectors[1], m.probability, m.observables))
        elif len(m.detectors) > 2:
            raise ValueError(f"non-graphlike mechanism {m}")
    logicals = tuple(o for o in dem.observables if o.startswith(kind))
    return graph_from_edges(kind, nodes, raw, logicals)


@dataclass
class MatchingResult:
    pairs: list  # (u, v) with v possibly BOUNDARY
    weight: float
    flips: dict  # logical -> parity
    edges: list = field(default_factory=list)  # graph edge keys used


def _check_fired(g: SyndromeGraph, fired) -> list:
    fired = sorted(set(int(f) for f in fired))
    known = set(g.nodes)
    for f in fired:
        if f not in known:
            raise ValueError(f"detector {f} is not a node of the {g.kind}-graph")
    return fired


class _Paths:
    """All-pairs shortest paths among graph nodes plus the boundary."""

    def __init__(self, g: SyndromeGraph):
        self.g = g
        self.index = {n: i for i, n in enumerate(g.nodes)}
        self.index[BOUNDARY] = len(g.nodes)
        n = len(self.index)
        rows, cols, vals = [], [], []
        self.edge_of = {}
        for (u, v), e in g.edges.items():
            a, b = self.index[u], self.index[v]
            w = max(e.weight, 1e-300)  # csgraph drops explicit zeros
            rows += [a, b]
            cols += [b, a]
            vals += [w, w]
            self.edge_of[(a, b)] = self.edge_of[(b, a)] = (u, v)
        self.matrix = csr_matrix((vals, (rows, cols)), shape=(n, n))
        self._cache: dict = {}

    def from_node(self, node: int):
        i = self.index[node]
        if i not in self._cache:
            d, pred = dijkstra(self.matrix, directed=False, indices=i, return_predecessors=True)
            self._cache[i] = (d, pred)
        return self._cache[i]

    def distance(self, a: int, b: int) -> float:
        d, _ = self.from_node(a)
        return float(d[self.index[b]])

    def path_edges(self, a: int, b: int) -> list:
        _, pred = self.from_node(a)
        src, cur = self.index[a], self.index[b]
        out = []
        while cur != src:
            prv = pred[cur]
            if prv < 0:
                raise ValueError("no path")
            out.append(self.edge_of[(prv, cur)])
            cur = prv
        return out


def _result(g: SyndromeGraph, paths: _Paths, pairs) -> MatchingResult:
    flips = {name: 0 for name in g.logicals}
    used, total = [], 0.0
    for a, b in pairs:
        total += paths.distance(a, b)
        for key in paths.path_edges(a, b):
            used.append(key)
            for name in g.edges[key].logicals:
                flips[name] = flips.get(name, 0) ^ 1
    return MatchingResult(sorted(pairs, key=lambda t: (t[0], t[1])), total, flips, used)


def decode_mwpm(g: SyndromeGraph, fired, paths: _Paths | None = None) -> MatchingResult:
    """Blossom matching on the complete graph of fired detectors and boundary copies."""
    fired = _check_fired(g, fired)
    paths = paths or _Paths(g)
    if not fired:
        return MatchingResult([], 0.0, {name: 0 for name in g.logicals})
    k = len(fired)
    dist = np.full((k, k), np.inf)
    bdist = np.empty(k)
    for i, a in enumerate(fired):
        d, _ = paths.from_node(a)
        for j, b in enumerate(fired):
            dist[i, j] = d[paths.index[b]]
        bdist[i] = d[paths.index[BOUNDARY]]
    finite = np.concatenate([dist[np.isfinite(dist)], bdist[np.isfinite(bdist)]])
    big = 1.0 + 2.0 * (finite.sum() if finite.size else 0.0)
    G = nx.Graph()
    for i in range(k):
        if np.isfinite(bdist[i]):
            G.add_edge(("f", i), ("b", i), weight=big - bdist[i])
        for j in range(i + 1, k):
            if np.isfinite(dist[i, j]):
                G.add_edge(("f", i), ("f", j), weight=big - dist[i, j])
                G.add_edge(("b", i), ("b", j), weight=big)
    matching = nx.max_weight_matching(G, maxcardinality=True)
    pairs = []
    for x, y in matching:
        if x[0] == "b" and y[0] == "b":
            continue
        if x[0] == "b":
            x, y = y, x
        if y[0] == "b":
            pairs.append((fired[x[1]], BOUNDARY))
        else:
            a, b = sorted((fired[x[1]], fired[y[1]]))
            pairs.append((a, b))
    matched = {a for a, b in pairs} | {b for a, b in pairs if b != BOUNDARY}
    if matched != set(fired):
        raise ValueError("infeasible matching: some fired detectors cannot be paired")
    return _result(g, paths, pairs)


def decode_exhaustive(g: SyndromeGraph, fired, paths: _Paths | None = None) -> MatchingResult:
    """Exact optimum by dynamic programming over subsets; ties broken lexicographically."""
    fired = _check_fired(g, fired)
    if len(fired) > EXHAUSTIVE_CAP:
        raise ValueError(f"exhaustive decoding is capped at {EXHAUSTIVE_CAP} fired detectors")
    paths = paths or _Paths(g)
    k = len(fired)
    d = [[paths.distance(a, b) for b in fired] for a in fired]
    bd = [paths.distance(a, BOUNDARY) for a in fired]
    memo: dict = {}

    def best(mask: int):
        if mask == 0:
            return (0.0, ())
        if mask in memo:
            return memo[mask]
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        cands = []
        if math.isfinite(bd[i]):
            w, pr = best(rest)
            cands.append((w + bd[i], tuple(sorted(pr + ((fired[i], BOUNDARY),)))))
        j = i + 1
        while j < k:
            if rest >> j & 1 and math.isfinite(d[i][j]):
                w, pr = best(rest & ~(1 << j))
                cands.append((w + d[i][j], tuple(sorted(pr + ((fired[i], fired[j]),)))))
            j += 1
        if not cands:
            out = (math.inf, ())
        else:
            wmin = min(c[0] for c in cands)
            tied = [c for c in cands if c[0] <= wmin + 1e-9 * max(1.0, abs(wmin))]
            out = min(tied, key=lambda c: c[1])
        memo[mask] = out
        return out

    w, pairs = best((1 << k) - 1)
    if not math.isfinite(w):
        raise ValueError("infeasible matching: some fired detectors cannot be paired")
    return _result(g, paths, list(pairs))


class BatchDecoder:
    """Vectorized matching of many shots on one graph (pymatching backend)."""

    def __init__(self, g: SyndromeGraph):
        self.g = g
        self.local = {n: i for i, n in enumerate(g.nodes)}
        self.fault_ids = {name: i for i, name in enumerate(g.logicals)}
        m = pymatching.Matching()
        if not g.edges:
            self.matching = m
            return
        for e in g.edge_list():
            fids = {self.fault_ids[o] for o in e.logicals if o in self.fault_ids}
            w = e.weight
            if e.is_boundary:
                m.add_boundary_edge(self.local[e.u], fault_ids=fids, weight=w, error_probability=e.p,
                                    merge_strategy="disallow")
            else:
                m.add_edge(self.local[e.u], self.local[e.v], fault_ids=fids, weight=w, error_probability=e.p,
                           merge_strategy="disallow")
        isolated = [n for n in g.nodes if not any(n in (e.u, e.v) for e in g.edges.values())] if g.edges else []
        if isolated:
            warnings.warn(f"{len(isolated)} {g.kind}-graph nodes have no edges", RuntimeWarning, stacklevel=2)
        self.matching = m

    def predict(self, det_bits: np.ndarray) -> dict:
        """``det_bits``: uint8 ``(shots, n_detectors_total)`` indexed by detector id."""
        if not self.g.nodes or not self.g.logicals or not self.g.edges:
            return {name: np.zeros(det_bits.shape[0], dtype=np.uint8) for name in self.g.logicals}
        sub = np.ascontiguousarray(det_bits[:, self.g.nodes], dtype=np.uint8)
        if self.matching.num_detectors > sub.shape[1]:
            sub = np.pad(sub, ((0, 0), (0, self.matching.num_detectors - sub.shape[1])))
        pred = self.matching.decode_batch(sub)
        if pred.ndim == 1:
            pred = pred[:, None]
        out = {}
        for name, i in self.fault_ids.items():
            out[name] = pred[:, i].astype(np.uint8) if i < pred.shape[1] else np.zeros(sub.shape[0], np.uint8)
        return out


MODES = ("raw", "decoded", "postselected")


@dataclass
class Decoder:
    """Z- and X-graph decoders for one compiled protocol and noise binding."""

    graphs: dict
    batch: dict
    dem: DetectorErrorModel
    discard: tuple  # detector ids whose firing discards a shot before decoding

    @classmethod
    def from_dem(cls, dem: DetectorErrorModel, discard=()) -> "Decoder":
        graphs = {k: graph_from_dem(dem, k) for k in ("Z", "X")}
        return cls(graphs, {k: BatchDecoder(g) for k, g in graphs.items()}, dem, tuple(discard))

    def predict(self, det_bits: np.ndarray) -> dict:
        out = {}
        for kind in ("Z", "X"):
            out.update(self.batch[kind].predict(det_bits))
        return out


def first_cycle_detectors(comp) -> list[int]:
    return [i for i, d in enumerate(comp.detectors) if d.role == "first"]


def injection_discard_detectors(comp) -> list[int]:
    """Cycle-1 detectors of the weight-two stabilizers."""
    return [i for i in first_cycle_detectors(comp) if len(comp.sc.layout.supports[comp.detectors[i].stab]) == 2]


def build_decoder(comp, noisy) -> Decoder:
    """DEM-derived decoder.

    For injected preparations the first cycle is not decoded: its detectors
    are left out of the error model, and shots where a weight-two stabilizer
    fires in that cycle are discarded.
    """
    from .dem import derive_dem

    exclude = first_cycle_detectors(comp) if comp.sc.is_injection else []
    discard = injection_discard_detectors(comp) if comp.sc.is_injection else []
    dem = derive_dem(comp, noisy, exclude=exclude)
    return Decoder.from_dem(dem, discard)


def observable_components(label: str) -> list[str]:
    """Base logicals whose flips change a Pauli-product observable label."""
    out = []
    single = len(label) == 1
    for code, p in enumerate(label, start=1):
        suffix = "" if single else str(code)
        if p in ("Z", "Y"):
            out.append(f"Z_L{suffix}")
        if p in ("X", "Y"):
            out.append(f"X_L{suffix}")
    return out


@dataclass
class Outcome:
    values: np.ndarray  # +-1 per retained shot
    mask: np.ndarray  # retained shots
    flags: list

    @property
    def retention(self) -> float:
        return float(self.mask.mean()) if self.mask.size else float("nan")

    @property
    def mean(self) -> float:
        return float(self.values.mean()) if self.values.size else float("nan")


def evaluate_outcomes(data, comp, label: str, mode: str, decoder: Decoder | None = None,
                      predictions: dict | None = None) -> Outcome:
    """Raw, decoded or postselected values of one observable.

    Decoded values XOR the matched logical flips of each graph whose
    corrections fix the observable's parity unambiguously; otherwise that
    graph's part stays raw and is flagged.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    bits = data.observable_bits(label)
    n = bits.size
    flags = []
    if mode == "raw":
        return Outcome(1 - 2 * bits.astype(np.int8), np.ones(n, bool), flags)
    det = data.detector_bits()
    if mode == "postselected":
        mask = ~det.any(axis=1) if det.shape[1] else np.ones(n, bool)
        return Outcome(1 - 2 * bits[mask].astype(np.int8), mask, flags)
    if decoder is None:
        raise ValueError("decoded mode needs a decoder")
    mask = ~det[:, list(decoder.discard)].any(axis=1) if decoder.discard else np.ones(n, bool)
    pred = predictions if predictions is not None else decoder.predict(det)
    corr = np.zeros(n, dtype=np.uint8)
    comps = observable_components(label)
    for kind in ("Z", "X"):
        mine = [c for c in comps if c[0] == kind]
        if not mine:
            continue
        g = decoder.graphs[kind]
        if not all(c in g.logicals for c in mine) or not g.parity_correctable(mine):
            flags.append(f"raw fallback for {'*'.join(mine)}")
            continue
        for c in mine:
            corr ^= pred[c]
    out = bits ^ corr
    return Outcome(1 - 2 * out[mask].astype(np.int8), mask, flags)
