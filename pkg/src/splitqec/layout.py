"""Seventeen-qubit distance-three patch: names, supports, coupling and CZ order.

Data qubits sit on a 3x3 grid::

    D1 D2 D3
    D4 D5 D6
    D7 D8 D9

Z-type plaquettes Z1..Z4 and X-type plaquettes X1..X4 each own one auxiliary
qubit of the same name.
"""

from __future__ import annotations

from dataclasses import dataclass, field

DATA = tuple(f"D{i}" for i in range(1, 10))
X_AUX = tuple(f"X{i}" for i in range(1, 5))
Z_AUX = tuple(f"Z{i}" for i in range(1, 5))
QUBITS = DATA + X_AUX + Z_AUX

SUPPORTS = {
    "Z1": ("D1", "D4"),
    "Z2": ("D4", "D5", "D7", "D8"),
    "Z3": ("D2", "D3", "D5", "D6"),
    "Z4": ("D6", "D9"),
    "X1": ("D2", "D3"),
    "X2": ("D1", "D2", "D4", "D5"),
    "X3": ("D5", "D6", "D8", "D9"),
    "X4": ("D7", "D8"),
}

# CZ partner per stabilizer and sub-circuit step (steps 2, 3, 5, 6).  X-type
# plaquettes run NW, NE, SW, SE; Z-type run NW, SW, NE, SE, so the weight-two
# error left by a fault on the auxiliary halfway through is perpendicular to
# the logical it could otherwise shorten.
CZ_ORDER = {
    "X1": {5: "D2", 6: "D3"},
    "X2": {2: "D1", 3: "D2", 5: "D4", 6: "D5"},
    "X3": {2: "D5", 3: "D6", 5: "D8", 6: "D9"},
    "X4": {2: "D7", 3: "D8"},
    "Z1": {5: "D1", 6: "D4"},
    "Z2": {2: "D4", 3: "D7", 5: "D5", 6: "D8"},
    "Z3": {2: "D2", 3: "D5", 5: "D3", 6: "D6"},
    "Z4": {2: "D6", 3: "D9"},
}

CZ_STEPS = (2, 3, 5, 6)


@dataclass(frozen=True)
class QubitLayout:
    names: tuple[str, ...] = QUBITS
    supports: dict = field(default_factory=lambda: dict(SUPPORTS))
    cz_order: dict = field(default_factory=lambda: {k: dict(v) for k, v in CZ_ORDER.items()})

    def __post_init__(self):
        for stab, sup in self.supports.items():
            if len(sup) not in (2, 4):
                raise ValueError(f"{stab} has weight {len(sup)}")
            if sorted(self.cz_order[stab].values()) != sorted(sup):
                raise ValueError(f"CZ order of {stab} does not cover its support")
        for step in CZ_STEPS:
            for kind in "XZ":
                used = [d for s, o in self.cz_order.items() if s[0] == kind for st, d in o.items() if st == step]
                if len(used) != len(set(used)):
                    raise ValueError(f"data qubit used twice in {kind} step {step}")

    @property
    def n_qubits(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def coupling(self) -> frozenset:
        return frozenset(frozenset((s, d)) for s, sup in self.supports.items() for d in sup)

    def is_coupled(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.coupling

    def stabilizers(self, kind: str) -> tuple[str, ...]:
        return tuple(s for s in self.supports if s[0] == kind)

    def weight(self, stab: str) -> int:
        return len(self.supports[stab])


DEFAULT_LAYOUT = QubitLayout()
