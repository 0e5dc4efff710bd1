"""Exact stabilizer simulation in the Aaronson-Gottesman tableau form.

The tableau is batched over shots: for a Clifford circuit with Pauli noise the
X/Z part of every generator evolves identically in all shots, only the signs
differ.  ``x`` and ``z`` are therefore shared ``(2n, n)`` arrays and the signs
are a ``(2n, n_words)`` array of packed uint64 shot masks.  Rows ``0..n-1`` are
destabilizers, rows ``n..2n-1`` stabilizers.
"""

from __future__ import annotations

import numpy as np

from .channels import n_words, random_words, sample_channel, positions_to_words, unpack_words
from .circuit import Checkpoint, Circuit, Gate, Measure, Noise, Reset, Tick
from .pauli import SINGLE_QUBIT_TABLE, CliffordGate, PauliString

_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


def _phase_sum(x1, z1, x2, z2) -> int:
    """Exponent of i (mod 4) picked up by the product row1 * row2 in CHP's convention."""
    x1 = x1.astype(np.int64)
    z1 = z1.astype(np.int64)
    x2 = x2.astype(np.int64)
    z2 = z2.astype(np.int64)
    g = np.where(
        (x1 == 1) & (z1 == 1), z2 - x2,
        np.where((x1 == 1) & (z1 == 0), z2 * (2 * x2 - 1),
                 np.where((x1 == 0) & (z1 == 1), x2 * (1 - 2 * z2), 0)))
    return int(g.sum()) % 4


class StabilizerTableau:
    def __init__(self, n_qubits: int, batch: int = 1):
        if n_qubits < 1:
            raise ValueError("need at least one qubit")
        n = n_qubits
        self.n = n
        self.batch = batch
        self.x = np.zeros((2 * n, n), dtype=bool)
        self.z = np.zeros((2 * n, n), dtype=bool)
        self.x[np.arange(n), np.arange(n)] = True
        self.z[n + np.arange(n), np.arange(n)] = True
        self.r = np.zeros((2 * n, n_words(batch)), dtype=np.uint64)

    def copy(self) -> "StabilizerTableau":
        t = StabilizerTableau.__new__(StabilizerTableau)
        t.n, t.batch = self.n, self.batch
        t.x, t.z, t.r = self.x.copy(), self.z.copy(), self.r.copy()
        return t

    def row(self, i: int, shot: int = 0) -> PauliString:
        xm = sum(1 << q for q in range(self.n) if self.x[i, q])
        zm = sum(1 << q for q in range(self.n) if self.z[i, q])
        sign = int((self.r[i, shot >> 6] >> np.uint64(shot & 63)) & np.uint64(1))
        # Rows store Hermitian operators; the sign bit is the only phase.
        return PauliString(self.n, xm, zm, 2 * sign)

    def stabilizers(self, shot: int = 0) -> list[PauliString]:
        return [self.row(self.n + i, shot) for i in range(self.n)]

    def destabilizers(self, shot: int = 0) -> list[PauliString]:
        return [self.row(i, shot) for i in range(self.n)]

    # -- gates -----------------------------------------------------------
    def apply(self, gate: CliffordGate) -> None:
        for t in gate.targets:
            if not 0 <= t < self.n:
                raise ValueError(f"target {t} out of range")
        if gate.kind == "CZ":
            a, b = gate.targets
            xa, xb, za, zb = self.x[:, a], self.x[:, b], self.z[:, a], self.z[:, b]
            flip = xa & xb & (za ^ zb)
            self.r[flip] ^= _ONES
            self.z[:, a] = za ^ xb
            self.z[:, b] = zb ^ xa
            return
        q, = gate.targets
        xq, zq = self.x[:, q].copy(), self.z[:, q].copy()
        for (xi, zi), (xo, zo, s) in SINGLE_QUBIT_TABLE[gate.kind].items():
            rows = (xq == bool(xi)) & (zq == bool(zi))
            self.x[rows, q] = bool(xo)
            self.z[rows, q] = bool(zo)
            if s:
                self.r[rows] ^= _ONES

    def apply_pauli(self, q: int, ex: np.ndarray, ez: np.ndarray) -> None:
        """Apply X^ex Z^ez on qubit ``q``; ``ex``/``ez`` are packed shot masks."""
        self.r[self.z[:, q]] ^= ex
        self.r[self.x[:, q]] ^= ez

    # -- measurement -------------------------------------------------------
    def _rowsum_into(self, h: int, i: int) -> None:
        c = _phase_sum(self.x[i], self.z[i], self.x[h], self.z[h])
        self.r[h] ^= self.r[i]
        if c == 2:
            self.r[h] ^= _ONES
        self.x[h] ^= self.x[i]
        self.z[h] ^= self.z[i]

    def measure_z(self, q: int, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
        """Measure Z on ``q`` in every shot.

        Returns packed outcome bits (bit 1 means eigenvalue -1) and whether
        the outcome was forced by the stabilizer group.
        """
        n = self.n
        hits = np.flatnonzero(self.x[n:, q])
        if hits.size:
            p = n + int(hits[0])
            for i in np.flatnonzero(self.x[:, q]):
                if i != p:
                    self._rowsum_into(int(i), p)
            self.x[p - n], self.z[p - n], self.r[p - n] = self.x[p], self.z[p], self.r[p]
            self.x[p] = False
            self.z[p] = False
            self.z[p, q] = True
            out = random_words(rng, self.r.shape[1])
            self.r[p] = out
            return out.copy(), False
        sx = np.zeros(n, dtype=bool)
        sz = np.zeros(n, dtype=bool)
        sr = np.zeros(self.r.shape[1], dtype=np.uint64)
        for i in np.flatnonzero(self.x[:n, q]):
            row = n + int(i)
            c = _phase_sum(self.x[row], self.z[row], sx, sz)
            sr ^= self.r[row]
            if c == 2:
                sr ^= _ONES
            sx ^= self.x[row]
            sz ^= self.z[row]
        return sr, True

    def reset_z(self, q: int, rng: np.random.Generator) -> None:
        out, _ = self.measure_z(q, rng)
        self.apply_pauli(q, out, np.zeros_like(out))

    def expectation(self, p: PauliString) -> np.ndarray:
        """Per-shot expectation value of a Hermitian Pauli: +1, -1 or 0."""
        t = self.copy()
        n = self.n
        px = np.array([(p.x >> q) & 1 for q in range(n)], dtype=bool)
        pz = np.array([(p.z >> q) & 1 for q in range(n)], dtype=bool)
        anti = ((t.x & pz) ^ (t.z & px)).sum(axis=1) % 2 == 1
        if anti[n:].any():
            return np.zeros(self.batch)
        # p is in the stabilizer group: the product of stabilizers flagged by
        # anticommuting destabilizers reproduces it up to sign.
        sx = np.zeros(n, dtype=bool)
        sz = np.zeros(n, dtype=bool)
        sr = np.zeros(t.r.shape[1], dtype=np.uint64)
        for i in np.flatnonzero(anti[:n]):
            row = n + int(i)
            c = _phase_sum(t.x[row], t.z[row], sx, sz)
            sr ^= t.r[row]
            if c == 2:
                sr ^= _ONES
            sx ^= t.x[row]
            sz ^= t.z[row]
        bits = unpack_words(sr[None, :], self.batch)[0].astype(float)
        sign = 1.0 - 2.0 * bits
        return sign * p.sign


def tableau_apply(t: StabilizerTableau, g: CliffordGate) -> StabilizerTableau:
    out = t.copy()
    out.apply(g)
    return out


def tableau_measure_z(t: StabilizerTableau, q: int, rng: np.random.Generator):
    """Single-shot measurement on a copy: returns ``(outcome ±1, deterministic, tableau)``."""
    out = t.copy()
    bits, det = out.measure_z(q, rng)
    bit = int(bits[0] & np.uint64(1))
    return (-1 if bit else 1), det, out


def run_exact_shots(circuit: Circuit, n_shots: int, seed: int) -> np.ndarray:
    """Simulate ``n_shots`` independent shots exactly; returns a uint8 record matrix."""
    circuit.validate()
    rng = np.random.default_rng([seed, 0x7AB1E])
    t = StabilizerTableau(circuit.n_qubits, n_shots)
    records = []
    zeros = np.zeros(n_words(n_shots), dtype=np.uint64)
    for ins in circuit:
        if isinstance(ins, Gate):
            t.apply(ins.gate)
        elif isinstance(ins, Measure):
            out, _ = t.measure_z(ins.qubit, rng)
            records.append(out)
        elif isinstance(ins, Reset):
            t.reset_z(ins.qubit, rng)
        elif isinstance(ins, Noise):
            for q, px, pz in sample_channel(ins, n_shots, rng):
                if px.size or pz.size:
                    t.apply_pauli(q, positions_to_words(px, n_shots) if px.size else zeros,
                                  positions_to_words(pz, n_shots) if pz.size else zeros)
        elif isinstance(ins, (Tick, Checkpoint)):
            continue
        else:
            raise ValueError(f"malformed instruction {ins!r}")
    if not records:
        return np.zeros((n_shots, 0), dtype=np.uint8)
    return unpack_words(np.array(records), n_shots).T.copy()


def run_exact_shot(circuit: Circuit, seed: int) -> np.ndarray:
    return run_exact_shots(circuit, 1, seed)[0]
