"""Circuit container: Clifford gates, Z measurements, resets, Pauli noise and ticks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union

from .pauli import CliffordGate

NOISE_KINDS = ("DEPOLARIZE1", "DEPOLARIZE2", "X_ERROR", "Y_ERROR", "Z_ERROR", "IDLE")


@dataclass(frozen=True)
class Gate:
    gate: CliffordGate
    tag: str = ""

    @property
    def kind(self) -> str:
        return self.gate.kind

    @property
    def targets(self) -> tuple[int, ...]:
        return self.gate.targets


@dataclass(frozen=True)
class Measure:
    qubit: int
    label: str


@dataclass(frozen=True)
class Reset:
    qubit: int


@dataclass(frozen=True)
class Noise:
    """Pauli channel.

    ``DEPOLARIZE1``/``DEPOLARIZE2`` take one total probability spread evenly over
    the 3/15 non-identity Paulis. ``IDLE`` takes ``(px, py, pz)`` applied as three
    independent flips. ``source`` is the index of the instruction the channel
    was bound to in the noiseless circuit.
    """

    kind: str
    targets: tuple[int, ...]
    probs: tuple[float, ...]
    source: int = -1

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        want = 3 if self.kind == "IDLE" else 1
        if len(self.probs) != want:
            raise ValueError(f"{self.kind} takes {want} probabilities")
        for p in self.probs:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        if (self.kind == "DEPOLARIZE2") != (len(self.targets) == 2):
            raise ValueError(f"{self.kind} target count mismatch")


@dataclass(frozen=True)
class Tick:
    """End of a time step lasting ``duration`` seconds.

    ``busy`` lists qubits occupied by an operation that started in an earlier
    step (a readout window spanning several steps); they accrue no idle noise.
    """

    duration: float
    busy: frozenset = frozenset()
    name: str = ""


@dataclass(frozen=True)
class Checkpoint:
    """Marks the point where base logical operators are read off the Pauli frame."""

    name: str = "logical"


Instruction = Union[Gate, Measure, Reset, Noise, Tick, Checkpoint]


@dataclass
class Circuit:
    n_qubits: int
    instructions: list = field(default_factory=list)
    qubit_names: Optional[Sequence[str]] = None
    noisy: bool = False

    def __iter__(self) -> Iterator[Instruction]:
        return iter(self.instructions)

    def __len__(self) -> int:
        return len(self.instructions)

    def _check_qubit(self, q: int) -> None:
        if not 0 <= q < self.n_qubits:
            raise ValueError(f"qubit {q} out of range")

    def gate(self, kind: str, *targets: int, tag: str = "") -> None:
        g = CliffordGate(kind, targets)
        for t in g.targets:
            self._check_qubit(t)
        self.instructions.append(Gate(g, tag))

    def measure(self, qubit: int, label: str) -> None:
        self._check_qubit(qubit)
        self.instructions.append(Measure(qubit, label))

    def reset(self, qubit: int) -> None:
        self._check_qubit(qubit)
        self.instructions.append(Reset(qubit))

    def noise(self, kind: str, targets: Sequence[int], probs: Sequence[float], source: int = -1) -> None:
        for t in targets:
            self._check_qubit(t)
        self.instructions.append(Noise(kind, tuple(targets), tuple(float(p) for p in probs), source))

    def tick(self, duration: float, busy=(), name: str = "") -> None:
        self.instructions.append(Tick(float(duration), frozenset(busy), name))

    def checkpoint(self, name: str = "logical") -> None:
        self.instructions.append(Checkpoint(name))

    @property
    def measurement_labels(self) -> list[str]:
        return [ins.label for ins in self.instructions if isinstance(ins, Measure)]

    @property
    def n_measurements(self) -> int:
        return sum(isinstance(ins, Measure) for ins in self.instructions)

    def label_index(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.measurement_labels)}

    def validate(self) -> None:
        labels = self.measurement_labels
        if len(set(labels)) != len(labels):
            raise ValueError("measurement labels are not unique")
        for ins in self.instructions:
            if isinstance(ins, Gate):
                qs = ins.targets
            elif isinstance(ins, (Measure, Reset)):
                qs = (ins.qubit,)
            elif isinstance(ins, Noise):
                qs = ins.targets
            else:
                continue
            for q in qs:
                self._check_qubit(q)

    def without_noise(self) -> "Circuit":
        return Circuit(
            self.n_qubits,
            [ins for ins in self.instructions if not isinstance(ins, Noise)],
            self.qubit_names,
        )

    def ticks(self) -> list[list[Instruction]]:
        """Group instructions into time steps (the trailing group may lack a Tick)."""
        steps, cur = [], []
        for ins in self.instructions:
            cur.append(ins)
            if isinstance(ins, Tick):
                steps.append(cur)
                cur = []
        if cur:
            steps.append(cur)
        return steps

    def duration(self) -> float:
        return sum(ins.duration for ins in self.instructions if isinstance(ins, Tick))

    def count(self, cls) -> int:
        return sum(isinstance(ins, cls) for ins in self.instructions)

    def to_text(self) -> str:
        """One instruction per line, qubits by name."""
        names = list(self.qubit_names or [f"q{q}" for q in range(self.n_qubits)])
        lines = []
        for ins in self.instructions:
            if isinstance(ins, Gate):
                tag = f"  # {ins.tag}" if ins.tag else ""
                lines.append(f"{ins.kind} " + " ".join(names[q] for q in ins.targets) + tag)
            elif isinstance(ins, Measure):
                lines.append(f"M {names[ins.qubit]} {ins.label}")
            elif isinstance(ins, Reset):
                lines.append(f"R {names[ins.qubit]}")
            elif isinstance(ins, Noise):
                probs = ",".join(f"{p:.6g}" for p in ins.probs)
                lines.append(f"{ins.kind}({probs}) " + " ".join(names[q] for q in ins.targets))
            elif isinstance(ins, Tick):
                busy = " busy=" + ",".join(sorted(names[q] for q in ins.busy)) if ins.busy else ""
                lines.append(f"TICK {ins.duration * 1e9:.1f}ns {ins.name}{busy}".rstrip())
            else:
                lines.append(f"CHECKPOINT {ins.name}")
        return "\n".join(lines) + "\n"
