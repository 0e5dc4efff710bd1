"""Pauli components of noise channels and their Monte Carlo sampling."""

from __future__ import annotations

import numpy as np

from .circuit import Noise

# Pauli code -> (x bit, z bit); codes follow I, X, Y, Z.
PAULI_BITS = ((0, 0), (1, 0), (1, 1), (0, 1))
PAULI_CHARS = "IXYZ"


def components(ch: Noise) -> list[tuple[float, tuple[tuple[int, int, int], ...]]]:
    """Enumerate ``(probability, ((qubit, x, z), ...))`` for every non-identity outcome.

    IDLE channels fire X, Y and Z independently, so each axis is its own
    component; depolarizing channels are a single exclusive draw.
    """
    out = []
    if ch.kind == "DEPOLARIZE1":
        q, = ch.targets
        for c in (1, 2, 3):
            out.append((ch.probs[0] / 3, ((q, *PAULI_BITS[c]),)))
    elif ch.kind == "DEPOLARIZE2":
        a, b = ch.targets
        for k in range(1, 16):
            ca, cb = divmod(k, 4)
            term = tuple((q, *PAULI_BITS[c]) for q, c in ((a, ca), (b, cb)) if c)
            out.append((ch.probs[0] / 15, term))
    elif ch.kind == "IDLE":
        q, = ch.targets
        for c, p in zip((1, 2, 3), ch.probs):
            out.append((p, ((q, *PAULI_BITS[c]),)))
    else:
        c = {"X_ERROR": 1, "Y_ERROR": 2, "Z_ERROR": 3}[ch.kind]
        for q in ch.targets:
            out.append((ch.probs[0], ((q, *PAULI_BITS[c]),)))
    return [(p, t) for p, t in out if p > 0]


def bernoulli_positions(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Sorted indices in ``range(n)`` hit by independent Bernoulli(p) trials."""
    if p <= 0 or n == 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n, dtype=np.int64)
    if p > 0.05:
        return np.flatnonzero(rng.random(n) < p)
    # Geometric gaps between successes reproduce the Bernoulli process exactly.
    expect = n * p
    size = int(expect + 6 * np.sqrt(expect) + 16)
    # Gaps past n are equivalent to n + 1; clipping keeps the cumsum from overflowing.
    pos = np.cumsum(np.minimum(rng.geometric(p, size=size), n + 1)) - 1
    while pos[-1] < n:
        more = np.cumsum(np.minimum(rng.geometric(p, size=size), n + 1)) + pos[-1]
        pos = np.concatenate([pos, more])
    return pos[pos < n]


def sample_channel(ch: Noise, n: int, rng: np.random.Generator):
    """Sample one channel for ``n`` shots.

    Returns a list of ``(qubit, positions_x, positions_z)`` where the position
    arrays index the shots whose Pauli on ``qubit`` has an X (resp. Z) part.
    """
    if ch.kind == "IDLE":
        q, = ch.targets
        px, py, pz = ch.probs
        hx = bernoulli_positions(rng, n, px)
        hy = bernoulli_positions(rng, n, py)
        hz = bernoulli_positions(rng, n, pz)
        return [(q, np.concatenate([hx, hy]), np.concatenate([hz, hy]))]
    if ch.kind in ("X_ERROR", "Y_ERROR", "Z_ERROR"):
        out = []
        for q in ch.targets:
            hits = bernoulli_positions(rng, n, ch.probs[0])
            empty = hits[:0]
            if ch.kind == "X_ERROR":
                out.append((q, hits, empty))
            elif ch.kind == "Z_ERROR":
                out.append((q, empty, hits))
            else:
                out.append((q, hits, hits))
        return out
    hits = bernoulli_positions(rng, n, ch.probs[0])
    if ch.kind == "DEPOLARIZE1":
        q, = ch.targets
        c = rng.integers(1, 4, size=hits.size)
        return [(q, hits[c != 3], hits[c != 1])]
    a, b = ch.targets
    k = rng.integers(1, 16, size=hits.size)
    ca, cb = k // 4, k % 4
    return [
        (a, hits[(ca == 1) | (ca == 2)], hits[(ca == 2) | (ca == 3)]),
        (b, hits[(cb == 1) | (cb == 2)], hits[(cb == 2) | (cb == 3)]),
    ]


def n_words(n_shots: int) -> int:
    return (n_shots + 63) // 64


def positions_to_words(pos: np.ndarray, n_shots: int) -> np.ndarray:
    """Pack shot indices into a uint64 bit mask (duplicates cancel, as XOR)."""
    words = np.zeros(n_words(n_shots), dtype=np.uint64)
    if pos.size:
        np.bitwise_xor.at(words, pos >> 6, np.left_shift(np.uint64(1), (pos & 63).astype(np.uint64)))
    return words


def unpack_words(words: np.ndarray, n_shots: int) -> np.ndarray:
    """Unpack ``(..., n_words)`` uint64 masks into ``(..., n_shots)`` uint8 bits."""
    w = np.ascontiguousarray(words, dtype="<u8")
    bits = np.unpackbits(w.view(np.uint8), axis=-1, bitorder="little")
    return bits[..., :n_shots]


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Inverse of :func:`unpack_words` along the last axis."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.shape[-1]
    pad = n_words(n) * 64 - n
    if pad:
        bits = np.concatenate([bits, np.zeros(bits.shape[:-1] + (pad,), dtype=np.uint8)], axis=-1)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64)


def random_words(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, np.iinfo(np.uint64).max, size=shape, dtype=np.uint64, endpoint=True)
