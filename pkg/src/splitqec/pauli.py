"""Pauli algebra over bit masks and conjugation through Clifford gates.

A Pauli operator on ``n`` qubits is stored as two integer bit masks and a
phase exponent ``k`` so that the operator equals ``i**k`` times the tensor
product of Hermitian single-qubit Paulis (``Y`` where both bits are set).
Products of anticommuting operators carry an odd exponent; such values only
appear transiently, every operator housed by the protocols is Hermitian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

SINGLE_QUBIT_GATES = (
    "H", "S", "S_DAG", "X", "Y", "Z",
    "SQRT_X", "SQRT_X_DAG", "SQRT_Y", "SQRT_Y_DAG",
)
TWO_QUBIT_GATES = ("CZ",)
GATE_KINDS = SINGLE_QUBIT_GATES + TWO_QUBIT_GATES

INVERSE_GATE = {
    "H": "H", "S": "S_DAG", "S_DAG": "S", "X": "X", "Y": "Y", "Z": "Z",
    "SQRT_X": "SQRT_X_DAG", "SQRT_X_DAG": "SQRT_X",
    "SQRT_Y": "SQRT_Y_DAG", "SQRT_Y_DAG": "SQRT_Y", "CZ": "CZ",
}


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True)
class PauliString:
    n_qubits: int
    x: int = 0
    z: int = 0
    phase: int = 0

    def __post_init__(self):
        limit = 1 << self.n_qubits
        if self.x < 0 or self.z < 0 or self.x >= limit or self.z >= limit:
            raise ValueError("Pauli masks exceed the qubit count")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """Parse labels such as ``"+XIZ"``, ``"-YY"`` or ``"iZ"``; qubit 0 is leftmost."""
        phase = 0
        body = label
        for prefix, k in (("+i", 1), ("-i", 3), ("i", 1), ("+", 0), ("-", 2)):
            if body.startswith(prefix):
                phase = k
                body = body[len(prefix):]
                break
        x = z = 0
        for q, ch in enumerate(body):
            if ch in "XY":
                x |= 1 << q
            if ch in "ZY":
                z |= 1 << q
            if ch not in "IXYZ_":
                raise ValueError(f"bad Pauli character {ch!r}")
        return cls(len(body), x, z, phase)

    @classmethod
    def from_sparse(cls, n_qubits: int, ops: Mapping[int, str], sign: int = 1) -> "PauliString":
        x = z = 0
        for q, ch in ops.items():
            if not 0 <= q < n_qubits:
                raise ValueError(f"qubit {q} out of range")
            if ch in "XY":
                x |= 1 << q
            if ch in "ZY":
                z |= 1 << q
        return cls(n_qubits, x, z, 0 if sign > 0 else 2)

    @property
    def is_hermitian(self) -> bool:
        return self.phase % 2 == 0

    @property
    def sign(self) -> int:
        if not self.is_hermitian:
            raise ValueError("operator carries an imaginary phase")
        return 1 if self.phase == 0 else -1

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def op(self, q: int) -> str:
        return "IXZY"[((self.x >> q) & 1) | (((self.z >> q) & 1) << 1)]

    def support(self) -> list[int]:
        m = self.x | self.z
        return [q for q in range(self.n_qubits) if (m >> q) & 1]

    def commutes(self, other: "PauliString") -> bool:
        _check_sizes(self, other)
        return (_popcount(self.x & other.z) + _popcount(self.z & other.x)) % 2 == 0

    def __mul__(self, other: "PauliString") -> "PauliString":
        return pauli_multiply(self, other)

    def __neg__(self) -> "PauliString":
        return PauliString(self.n_qubits, self.x, self.z, self.phase + 2)

    def __str__(self) -> str:
        prefix = ("+", "+i", "-", "-i")[self.phase]
        return prefix + "".join(self.op(q) for q in range(self.n_qubits))

    __repr__ = __str__


def _check_sizes(a: PauliString, b: PauliString) -> None:
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"size mismatch: {a.n_qubits} vs {b.n_qubits}")


def pauli_multiply(a: PauliString, b: PauliString) -> PauliString:
    """Return the operator product ``a * b`` with its exact phase."""
    _check_sizes(a, b)
    # i^k X^x Z^z form: the Hermitian Y carries an extra i relative to XZ.
    k = a.phase + _popcount(a.x & a.z) + b.phase + _popcount(b.x & b.z)
    k += 2 * _popcount(a.z & b.x)
    x, z = a.x ^ b.x, a.z ^ b.z
    return PauliString(a.n_qubits, x, z, k - _popcount(x & z))


@dataclass(frozen=True)
class CliffordGate:
    kind: str
    targets: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        need = 2 if self.kind in TWO_QUBIT_GATES else 1
        if len(self.targets) != need:
            raise ValueError(f"{self.kind} takes {need} target(s), got {self.targets}")
        if need == 2 and self.targets[0] == self.targets[1]:
            raise ValueError("CZ targets must be distinct")

    def inverse(self) -> "CliffordGate":
        return CliffordGate(INVERSE_GATE[self.kind], self.targets)


# Images of X and Z under U P U^dagger, as (label, sign).
_GENERATOR_IMAGES: dict[str, tuple[tuple[str, int], tuple[str, int]]] = {
    "H": (("Z", 1), ("X", 1)),
    "S": (("Y", 1), ("Z", 1)),
    "S_DAG": (("Y", -1), ("Z", 1)),
    "X": (("X", 1), ("Z", -1)),
    "Y": (("X", -1), ("Z", -1)),
    "Z": (("X", -1), ("Z", 1)),
    "SQRT_X": (("X", 1), ("Y", -1)),
    "SQRT_X_DAG": (("X", 1), ("Y", 1)),
    "SQRT_Y": (("Z", -1), ("X", 1)),
    "SQRT_Y_DAG": (("Z", 1), ("X", -1)),
}


def _generator_image(n: int, gate: CliffordGate, q: int, which: str) -> PauliString:
    if gate.kind == "CZ":
        a, b = gate.targets
        if which == "Z":
            return PauliString.from_sparse(n, {q: "Z"})
        other = b if q == a else a
        return PauliString.from_sparse(n, {q: "X", other: "Z"})
    label, sign = _GENERATOR_IMAGES[gate.kind][0 if which == "X" else 1]
    return PauliString.from_sparse(n, {q: label}, sign)


def conjugate_by_gate(p: PauliString, gate: CliffordGate) -> PauliString:
    """Return ``g p g^dagger``."""
    for t in gate.targets:
        if not 0 <= t < p.n_qubits:
            raise ValueError(f"gate target {t} out of range for {p.n_qubits} qubits")
    n = p.n_qubits
    touched = 0
    for t in gate.targets:
        touched |= 1 << t
    # Untouched qubits pass through; rebuild the touched part from generator images.
    rest = PauliString(n, p.x & ~touched, p.z & ~touched)
    k = p.phase + _popcount(p.x & p.z & touched)
    out = PauliString(n, 0, 0, k)
    for t in gate.targets:
        if (p.x >> t) & 1:
            out = out * _generator_image(n, gate, t, "X")
    for t in gate.targets:
        if (p.z >> t) & 1:
            out = out * _generator_image(n, gate, t, "Z")
    return pauli_multiply(rest, out)


def conjugate_by_circuit(p: PauliString, gates: Iterable[CliffordGate]) -> PauliString:
    for g in gates:
        p = conjugate_by_gate(p, g)
    return p


def _single_qubit_table() -> dict[str, dict[tuple[int, int], tuple[int, int, int]]]:
    table = {}
    for kind in SINGLE_QUBIT_GATES:
        g = CliffordGate(kind, (0,))
        entry = {}
        for x, z in ((1, 0), (0, 1), (1, 1)):
            img = conjugate_by_gate(PauliString(1, x, z), g)
            entry[(x, z)] = (img.x, img.z, 1 if img.sign < 0 else 0)
        table[kind] = entry
    return table


# kind -> {(x, z): (x', z', sign_flip)}; shared by the tableau and frame simulators.
SINGLE_QUBIT_TABLE = _single_qubit_table()


def pauli_matrix(p: PauliString):
    """Dense matrix of ``p`` with qubit 0 as the most significant tensor factor."""
    import numpy as np

    mats = {
        "I": np.eye(2, dtype=complex),
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    out = np.array([[1.0 + 0j]])
    for q in range(p.n_qubits):
        out = np.kron(out, mats[p.op(q)])
    return (1j ** p.phase) * out


def paulis_from_labels(labels: Sequence[str]) -> list[PauliString]:
    return [PauliString.from_label(s) for s in labels]
