"""Bit-packed Pauli-frame propagation.

Two uses share one gate kernel:

* shot sampling, where each bit of a frame word is one shot, and
* column propagation, where each bit is one injected Pauli (an error
  mechanism or an echo gate), used for detector error models and signs.

Shot frames follow the gauge trick: the Z part of every frame is randomized
at the start, after each reset and after each measurement, so frame records
XOR a single noiseless reference sample reproduce the full outcome
distribution, including random outcomes.
"""

from __future__ import annotations

import numpy as np

from .channels import n_words, positions_to_words, random_words, sample_channel
from .circuit import Checkpoint, Circuit, Gate, Measure, Noise, Reset, Tick
from .pauli import SINGLE_QUBIT_TABLE, PauliString

DEFAULT_CHUNK = 1 << 16


def _linear_maps() -> dict:
    """(x, z) -> (x', z') as four bits (ax, bx, az, bz): x' = ax.x ^ bx.z, z' = az.x ^ bz.z."""
    maps = {}
    for kind, table in SINGLE_QUBIT_TABLE.items():
        xi, zi, _ = table[(1, 0)]
        xj, zj, _ = table[(0, 1)]
        maps[kind] = (xi, xj, zi, zj)
    return maps


LINEAR_MAPS = _linear_maps()


def apply_gate(fx: np.ndarray, fz: np.ndarray, kind: str, targets) -> None:
    """Conjugate packed frames in place (signs are irrelevant for frames)."""
    if kind == "CZ":
        a, b = targets
        fz[a] ^= fx[b]
        fz[b] ^= fx[a]
        return
    q, = targets
    ax, bx, az, bz = LINEAR_MAPS[kind]
    if (ax, bx, az, bz) == (1, 0, 0, 1):
        return
    x, z = fx[q].copy(), fz[q].copy()
    fx[q] = (x if ax else 0) ^ (z if bx else 0)
    fz[q] = (x if az else 0) ^ (z if bz else 0)


def _rng(seed: int, chunk: int, position: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, chunk, position]))


def sample_flips(circuit: Circuit, shots: int, seed: int, chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """Packed measurement flips relative to the reference, shape ``(n_meas, n_words(shots))``.

    Chunks are independent and seeded by ``(seed, chunk index, instruction)``,
    so results do not depend on how many chunks run in one call.
    """
    out = np.zeros((circuit.n_measurements, n_words(shots)), dtype=np.uint64)
    for start, rec in iter_flip_chunks(circuit, shots, seed, chunk):
        w0 = start // 64
        out[:, w0:w0 + rec.shape[1]] = rec
    return out


def iter_flip_chunks(circuit: Circuit, shots: int, seed: int, chunk: int = DEFAULT_CHUNK):
    """Yield ``(first shot, packed flips)`` chunk by chunk (bounded memory)."""
    if chunk % 64:
        raise ValueError("chunk size must be a multiple of 64")
    circuit.validate()
    for ci, start in enumerate(range(0, shots, chunk)):
        yield start, _sample_chunk(circuit, min(chunk, shots - start), seed, ci)


def _sample_chunk(circuit: Circuit, n: int, seed: int, ci: int) -> np.ndarray:
    w = n_words(n)
    nq = circuit.n_qubits
    fx = np.zeros((nq, w), dtype=np.uint64)
    fz = random_words(_rng(seed, ci, -1 & 0xFFFFFFFF), (nq, w))
    tail = np.uint64((1 << (n % 64)) - 1) if n % 64 else np.uint64(0xFFFFFFFFFFFFFFFF)
    records = np.zeros((circuit.n_measurements, w), dtype=np.uint64)
    k = 0
    for pos, ins in enumerate(circuit):
        if isinstance(ins, Gate):
            apply_gate(fx, fz, ins.kind, ins.targets)
        elif isinstance(ins, Measure):
            records[k] = fx[ins.qubit]
            k += 1
            fz[ins.qubit] = random_words(_rng(seed, ci, pos), w)
        elif isinstance(ins, Reset):
            fx[ins.qubit] = 0
            fz[ins.qubit] = random_words(_rng(seed, ci, pos), w)
        elif isinstance(ins, Noise):
            for q, px, pz in sample_channel(ins, n, _rng(seed, ci, pos)):
                if px.size:
                    fx[q] ^= positions_to_words(px, n)
                if pz.size:
                    fz[q] ^= positions_to_words(pz, n)
    records[:, -1] &= tail
    return records


class ColumnResult:
    """Flips caused by each injected column.

    ``records`` has shape ``(n_meas, n_words(n_cols))``; ``checkpoint`` maps an
    operator name to the packed anticommutation bits at the checkpoint.
    ``after_checkpoint`` is a packed mask of columns injected after it.
    """

    def __init__(self, records, checkpoint, after_checkpoint, n_cols):
        self.records = records
        self.checkpoint = checkpoint
        self.after_checkpoint = after_checkpoint
        self.n_cols = n_cols


def propagate_columns(circuit: Circuit, injections, operators: dict | None = None) -> ColumnResult:
    """Forward-propagate Pauli columns through the noiseless part of ``circuit``.

    ``injections`` is a sequence of ``(position, terms)`` where ``terms`` is a
    tuple of ``(qubit, x, z)``; the Pauli is applied just after the instruction
    at ``position``.  ``operators`` maps names to :class:`PauliString` checked
    for anticommutation at the :class:`Checkpoint`.
    """
    operators = operators or {}
    n_cols = len(injections)
    w = max(1, n_words(n_cols))
    nq = circuit.n_qubits
    fx = np.zeros((nq, w), dtype=np.uint64)
    fz = np.zeros((nq, w), dtype=np.uint64)
    by_pos: dict = {}
    for col, (pos, terms) in enumerate(injections):
        by_pos.setdefault(pos, []).append((col, terms))
    records = np.zeros((circuit.n_measurements, w), dtype=np.uint64)
    checkpoint = {name: np.zeros(w, dtype=np.uint64) for name in operators}
    after = np.zeros(w, dtype=np.uint64)
    seen_checkpoint = False
    k = 0
    one = np.uint64(1)
    for pos, ins in enumerate(circuit):
        if isinstance(ins, Gate):
            apply_gate(fx, fz, ins.kind, ins.targets)
        elif isinstance(ins, Measure):
            records[k] = fx[ins.qubit]
            k += 1
            fz[ins.qubit] = 0
        elif isinstance(ins, Reset):
            fx[ins.qubit] = 0
            fz[ins.qubit] = 0
        elif isinstance(ins, Checkpoint):
            if seen_checkpoint:
                raise ValueError("circuit has more than one checkpoint")
            seen_checkpoint = True
            for name, op in operators.items():
                acc = np.zeros(w, dtype=np.uint64)
                for q in range(nq):
                    px, pz = (op.x >> q) & 1, (op.z >> q) & 1
                    if px:
                        acc ^= fz[q]
                    if pz:
                        acc ^= fx[q]
                checkpoint[name] = acc
        for col, terms in by_pos.get(pos, ()):
            bit = one << np.uint64(col & 63)
            for q, x, z in terms:
                if x:
                    fx[q, col >> 6] ^= bit
                if z:
                    fz[q, col >> 6] ^= bit
            if seen_checkpoint:
                after[col >> 6] ^= bit
    return ColumnResult(records, checkpoint, after, n_cols)


def checkpoint_operator(n_qubits: int, kind: str, qubits) -> PauliString:
    """``kind`` (X or Z) on every listed qubit index."""
    return PauliString.from_sparse(n_qubits, {q: kind for q in qubits})
