"""Edge probabilities estimated from detector correlations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_SHOTS = 10_000
SIGNIFICANCE = 5.0
JACKKNIFE_BLOCKS = 100


def _pair_formula(m: np.ndarray, mm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise p_ij from first and second moments; NaN where the radicand is negative."""
    num = mm - np.outer(m, m)
    den = 1 - 2 * m[:, None] - 2 * m[None, :] + 4 * mm
    with np.errstate(divide="ignore", invalid="ignore"):
        rad = 1 - 4 * num / den
        p = 0.5 - 0.5 * np.sqrt(np.where(rad >= 0, rad, np.nan))
    np.fill_diagonal(p, 0.0)
    return p, rad


def _boundary(m: np.ndarray, pair: np.ndarray) -> np.ndarray:
    """Solve <x_i> = p_i xor P_i where P_i composes all pairwise edges at i."""
    keep = np.nan_to_num(pair)
    one_minus = np.prod(1 - 2 * keep, axis=1)
    big_p = (1 - one_minus) / 2
    return (m - big_p) / (1 - 2 * big_p)


@dataclass
class EdgeEstimates:
    detectors: tuple  # detector ids, matrix order
    pair: np.ndarray  # thresholded p_ij
    pair_raw: np.ndarray
    pair_se: np.ndarray
    boundary: np.ndarray
    boundary_raw: np.ndarray
    boundary_se: np.ndarray
    threshold: float
    n_shots: int
    unstable: list = field(default_factory=list)  # (i, j) detector id pairs

    def pair_estimate(self, a: int, b: int) -> tuple[float, float]:
        i, j = self.detectors.index(a), self.detectors.index(b)
        return float(self.pair_raw[i, j]), float(self.pair_se[i, j])

    def boundary_estimate(self, a: int) -> tuple[float, float]:
        i = self.detectors.index(a)
        return float(self.boundary_raw[i]), float(self.boundary_se[i])

    def edges(self) -> list[tuple[int, int, float]]:
        """Significant edges as ``(u, v, p)``; ``v = -1`` for boundary edges."""
        out = []
        n = len(self.detectors)
        for i in range(n):
            if self.boundary[i] > 0:
                out.append((self.detectors[i], -1, float(self.boundary[i])))
            for j in range(i + 1, n):
                if self.pair[i, j] > 0:
                    out.append((self.detectors[i], self.detectors[j], float(self.pair[i, j])))
        return out

    def significant_pairs(self) -> list[tuple[int, int]]:
        n = len(self.detectors)
        return [(self.detectors[i], self.detectors[j]) for i in range(n) for j in range(i + 1, n)
                if self.pair[i, j] > 0]


def estimate_edge_probabilities(det: np.ndarray, detectors=None, threshold: float = SIGNIFICANCE,
                                blocks: int = JACKKNIFE_BLOCKS) -> EdgeEstimates:
    """Pairwise and boundary edge probabilities from a ``(shots, n_det)`` bit matrix.

    Standard errors come from a blocked jackknife over contiguous shot blocks.
    Estimates with ``|p| <= threshold * SE`` are zeroed; the boundary solve
    uses only the surviving pairwise edges.
    """
    det = np.asarray(det)
    shots = det.shape[0]
    if shots < MIN_SHOTS:
        raise ValueError(f"need at least {MIN_SHOTS} shots, got {shots}")
    ids = tuple(range(det.shape[1])) if detectors is None else tuple(int(d) for d in detectors)
    n = len(ids)
    bounds = np.linspace(0, shots, blocks + 1).astype(int)
    sums = np.zeros((blocks, n))
    cross = np.zeros((blocks, n, n))
    counts = np.diff(bounds).astype(float)
    for b in range(blocks):
        x = det[bounds[b]:bounds[b + 1]][:, list(ids)].astype(np.float32)
        sums[b] = x.sum(axis=0)
        cross[b] = x.T @ x
    tot_s, tot_c, tot_n = sums.sum(0), cross.sum(0), counts.sum()
    m, mm = tot_s / tot_n, tot_c / tot_n
    pair_raw, rad = _pair_formula(m, mm)

    jk_pair = np.empty((blocks, n, n))
    jk_m = np.empty((blocks, n))
    for b in range(blocks):
        nb = tot_n - counts[b]
        jk_m[b] = (tot_s - sums[b]) / nb
        jk_pair[b] = _pair_formula(jk_m[b], (tot_c - cross[b]) / nb)[0]
    scale = (blocks - 1) / blocks
    with np.errstate(invalid="ignore"):
        pair_se = np.sqrt(scale * ((jk_pair - jk_pair.mean(0)) ** 2).sum(0))
    keep = np.abs(np.nan_to_num(pair_raw)) > threshold * np.nan_to_num(pair_se, nan=np.inf)
    pair = np.where(keep, pair_raw, 0.0)
    boundary_raw = _boundary(m, pair)
    jk_b = np.array([_boundary(jk_m[b], np.where(keep, jk_pair[b], 0.0)) for b in range(blocks)])
    boundary_se = np.sqrt(scale * ((jk_b - jk_b.mean(0)) ** 2).sum(0))
    boundary = np.where(np.abs(boundary_raw) > threshold * boundary_se, boundary_raw, 0.0)
    unstable = [(ids[i], ids[j]) for i in range(n) for j in range(i + 1, n) if rad[i, j] < 0]
    return EdgeEstimates(ids, pair, pair_raw, pair_se, boundary, boundary_raw, boundary_se, threshold, shots,
                         unstable)


def dem_pair_reference(dem, detectors) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise and boundary probabilities a DEM implies on a detector subset.

    A mechanism's projection onto the subset contributes to the pair (i, j)
    when it contains both, and to the boundary of i when it contains only i.
    """
    ids = list(detectors)
    pos = {d: k for k, d in enumerate(ids)}
    n = len(ids)
    pair = np.zeros((n, n))
    bnd = np.zeros(n)
    for mech in dem.mechanisms:
        hit = [pos[d] for d in mech.detectors if d in pos]
        p = mech.probability
        if len(hit) == 1:
            i = hit[0]
            bnd[i] = bnd[i] * (1 - p) + p * (1 - bnd[i])
        else:
            for a in range(len(hit)):
                for b in range(a + 1, len(hit)):
                    i, j = hit[a], hit[b]
                    pair[i, j] = pair[j, i] = pair[i, j] * (1 - p) + p * (1 - pair[i, j])
    return pair, bnd


def graph_from_estimates(est: EdgeEstimates, kind: str, reference=None):
    """Syndrome graph from significant estimated edges.

    Correlations carry no logical information, so each edge borrows its
    logical flip set from the same edge of ``reference`` (a DEM-derived
    graph) when present.
    """
    from .decoding import clamp_probability, graph_from_edges

    raw = []
    for u, v, p in est.edges():
        if p <= 0:
            continue
        logicals = ()
        if reference is not None:
            key = (u, v) if v == -1 or u < v else (v, u)
            e = reference.edges.get(key)
            if e is not None:
                logicals = tuple(sorted(e.logicals))
        raw.append((u, v, clamp_probability(p), logicals))
    return graph_from_edges(kind, list(est.detectors), raw, reference.logicals if reference is not None else ())
