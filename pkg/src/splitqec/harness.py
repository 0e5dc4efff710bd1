"""Experiment orchestration: configs, sampling runs, archives, sweeps and exports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
import zlib
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .decoding import MODES, Decoder, build_decoder, evaluate_outcomes
from .detectors import CompiledProtocol, ShotData, compile_detectors, evaluate_flips, records_to_detectors, \
    records_to_observable, sample_shots
from .frames import iter_flip_chunks
from .noise import DeviceParameters, attach_noise
from .protocols import CARDINALS, ProtocolSpec, bloch_vector, build, build_arbitrary_prep, cardinal_label
from .tomography import BASES2, DecayFit, Setting, TomographyDataset, bootstrap_decay, fit_exponential_decay, \
    input_bloch, mixture_setting

SCHEMA = 1
CHUNK = 1 << 16
BOOTSTRAP = 200


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def subseed(seed: int, *keys) -> int:
    """Deterministic child seed from a parent seed and integer or string keys."""
    ints = [k if isinstance(k, int) and k >= 0 else zlib.crc32(repr(k).encode()) for k in keys]
    return int(np.random.SeedSequence([seed, *ints]).generate_state(1, np.uint32)[0])


def _clean(obj):
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n"


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    protocol: ProtocolSpec
    device: str | None = None  # parameter file; None selects the bundled one
    factors: tuple = (1.0,)
    shots: int = 100_000
    seed: int = 0
    modes: tuple = MODES
    out: str = "runs"
    noiseless: bool = False

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(float(f) for f in self.factors))
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.shots < 1:
            raise ConfigError("shots must be >= 1")
        if not self.factors or any(not f >= 1 for f in self.factors):
            raise ConfigError("improvement factors must be >= 1")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ConfigError(f"unknown modes {bad}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["protocol"] = json.loads(self.protocol.to_json())
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            spec = ProtocolSpec.from_json(json.dumps(d["protocol"]))
            rest = {k: v for k, v in d.items() if k != "protocol"}
            return cls(spec, **rest)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config JSON: {exc}") from exc

    def content(self) -> dict:
        """Everything that determines the outputs (the output directory excluded)."""
        d = self.to_dict()
        d.pop("out")
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.content(), sort_keys=True).encode()).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    version: str = __version__
    timings: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)  # name -> sha256

    def record(self, path: Path, root: Path) -> None:
        self.files[str(path.relative_to(root))] = file_digest(path)

    def to_json(self) -> str:
        return dumps(asdict(self))

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# -- runs ---------------------------------------------------------------------

@lru_cache(maxsize=256)
def compile_protocol(spec: ProtocolSpec) -> CompiledProtocol:
    return compile_detectors(build(spec))


@lru_cache(maxsize=8)
def load_device(path: str | None = None) -> DeviceParameters:
    return DeviceParameters.load(path)


@dataclass
class Run:
    """One protocol bound to one noise setting."""

    comp: CompiledProtocol
    circuit: object
    factor: float
    noiseless: bool
    _decoder: Decoder | None = None

    @property
    def decoder(self) -> Decoder:
        if self._decoder is None:
            self._decoder = build_decoder(self.comp, self.circuit)
        return self._decoder

    def chunks(self, shots: int, seed: int, chunk: int = CHUNK):
        """Yield evaluated :class:`ShotData` chunk by chunk."""
        for start, flips in iter_flip_chunks(self.circuit, shots, seed, chunk):
            yield evaluate_flips(self.comp, flips, min(chunk, shots - start))

    def sample(self, shots: int, seed: int) -> ShotData:
        return sample_shots(self.comp, shots, seed, circuit=self.circuit)


@lru_cache(maxsize=64)
def prepare_run(spec: ProtocolSpec, device: str | None = None, factor: float = 1.0,
                noiseless: bool = False) -> Run:
    comp = compile_protocol(spec)
    circuit = comp.circuit if noiseless else attach_noise(comp.circuit, load_device(device), factor)
    return Run(comp, circuit, float(factor), noiseless)


@dataclass
class Tally:
    """Running counts of one observable in one mode."""

    total: int = 0
    retained: int = 0
    minus: int = 0  # shots with value -1
    flags: set = field(default_factory=set)

    def add(self, outcome) -> None:
        self.total += outcome.mask.size
        self.retained += int(outcome.values.size)
        self.minus += int((outcome.values < 0).sum())
        self.flags.update(outcome.flags)

    @property
    def mean(self) -> float:
        return 1 - 2 * self.minus / self.retained if self.retained else float("nan")

    @property
    def se(self) -> float:
        if not self.retained:
            return float("nan")
        p = self.minus / self.retained
        return 2 * math.sqrt(p * (1 - p) / self.retained)

    @property
    def retention(self) -> float:
        return self.retained / self.total if self.total else float("nan")


def tally_chunk(run: Run, data, labels, modes, tallies: dict) -> None:
    pred = run.decoder.predict(data.detector_bits()) if "decoded" in modes else None
    for label in labels:
        for mode in modes:
            out = evaluate_outcomes(data, run.comp, label, mode, run.decoder if mode == "decoded" else None, pred)
            tallies.setdefault((label, mode), Tally()).add(out)


def summarize(tallies: dict) -> dict:
    out: dict = {}
    for (label, mode), t in sorted(tallies.items()):
        entry = out.setdefault(label, {"se": {}, "retention": {}, "flags": []})
        entry[mode] = t.mean
        entry["se"][mode] = t.se
        entry["retention"][mode] = t.retention
        entry["flags"] = sorted(set(entry["flags"]) | t.flags)
    return out


def evaluate_run(run: Run, shots: int, seed: int, labels=None, modes=MODES) -> dict:
    """Sample and tally; returns ``{(label, mode): Tally}``."""
    labels = list(labels or run.comp.observables)
    tallies: dict = {}
    for data in run.chunks(shots, seed):
        tally_chunk(run, data, labels, modes, tallies)
    return tallies


# -- archives -----------------------------------------------------------------

def _write_header(fh, header: dict) -> None:
    fh.write((json.dumps(header, sort_keys=True) + "\n").encode())


def write_archive_rows(fh, bits: np.ndarray) -> None:
    """Rows of uint8 bits, each packed to bytes with little-endian bit order."""
    fh.write(np.packbits(bits.astype(np.uint8), axis=1, bitorder="little").tobytes())


def read_archive(path, chunk: int = CHUNK):
    """Return ``(header, iterator of uint8 bit blocks (shots, n_bits))``."""
    fh = open(path, "rb")
    header = json.loads(fh.readline())
    n_bits = header.get("n_measurements", header.get("n_detectors"))
    row = (n_bits + 7) // 8

    def blocks():
        try:
            left = header["n_shots"]
            while left > 0:
                n = min(chunk, left)
                buf = fh.read(n * row)
                if len(buf) != n * row:
                    raise OSError(f"truncated archive {path}")
                arr = np.frombuffer(buf, dtype=np.uint8).reshape(n, row)
                yield np.unpackbits(arr, axis=1, bitorder="little")[:, :n_bits]
                left -= n
        finally:
            fh.close()

    return header, blocks()


def load_archive(path) -> tuple[dict, np.ndarray]:
    header, blocks = read_archive(path)
    parts = list(blocks)
    n_bits = header.get("n_measurements", header.get("n_detectors"))
    return header, np.concatenate(parts) if parts else np.zeros((0, n_bits), np.uint8)


def detector_names(comp: CompiledProtocol) -> list[str]:
    return [f"{d.stab}_{d.index}" for d in comp.detectors]


def sample_to_archive(run: Run, shots: int, seed: int, shots_path, det_path=None, labels=None, modes=MODES) -> dict:
    """Stream shots to disk (and tally outcomes on the way); returns the tallies."""
    labels = list(labels or run.comp.observables)
    tallies: dict = {}
    det_fh = open(det_path, "wb") if det_path else None
    with open(shots_path, "wb") as fh:
        _write_header(fh, {"n_shots": shots, "n_measurements": run.comp.circuit.n_measurements,
                           "labels": run.comp.circuit.measurement_labels})
        if det_fh:
            _write_header(det_fh, {"n_shots": shots, "n_detectors": len(run.comp.detectors),
                                   "labels": detector_names(run.comp)})
        try:
            for data in run.chunks(shots, seed):
                write_archive_rows(fh, data.record_bits())
                if det_fh:
                    write_archive_rows(det_fh, data.detector_bits())
                tally_chunk(run, data, labels, modes, tallies)
        finally:
            if det_fh:
                det_fh.close()
    return tallies


@dataclass
class BitData:
    """Unpacked detector and observable bits, the interface evaluate_outcomes reads."""

    det: np.ndarray
    obs: dict

    def detector_bits(self) -> np.ndarray:
        return self.det

    def observable_bits(self, label: str) -> np.ndarray:
        return self.obs[label]


def decode_archive(run: Run, shots_path, labels=None, modes=MODES) -> dict:
    """Tally outcomes from a stored shot archive."""
    labels = list(labels or run.comp.observables)
    header, blocks = read_archive(shots_path)
    if header["labels"] != run.comp.circuit.measurement_labels:
        raise ValueError("archive does not match the protocol's measurement record")
    tallies: dict = {}
    for rec in blocks:
        obs = {lab: records_to_observable(run.comp, rec, lab) for lab in labels}
        tally_chunk(run, BitData(records_to_detectors(run.comp, rec), obs), labels, modes, tallies)
    return tallies


# -- run_protocol ---------------------------------------------------------------

@dataclass
class RunArtifacts:
    out: Path
    summary: dict
    files: list


def _factor_dir(factor: float) -> str:
    return f"x{factor:g}"


def run_protocol(config: ExperimentConfig, resume: bool = True) -> RunArtifacts:
    """Build, bind noise, sample, decode and write archives plus a JSON summary per factor."""
    root = Path(config.out)
    root.mkdir(parents=True, exist_ok=True)
    manifest_path = root / "manifest.json"
    summary_path = root / "summary.json"
    digest = config.digest()
    if resume and manifest_path.exists() and summary_path.exists():
        old = RunManifest.load(manifest_path)
        if old.config_hash == digest and all(
                (root / f).exists() and file_digest(root / f) == h for f, h in old.files.items()):
            return RunArtifacts(root, json.loads(summary_path.read_text()), sorted(old.files))
    manifest = RunManifest(digest)
    (root / "config.json").write_text(dumps(config.to_dict()))
    manifest.record(root / "config.json", root)
    runs = {}
    for factor in config.factors:
        t0 = time.perf_counter()
        run = prepare_run(config.protocol, config.device, factor, config.noiseless)
        sub = root / _factor_dir(factor)
        sub.mkdir(exist_ok=True)
        tallies = sample_to_archive(run, config.shots, subseed(config.seed, "shots"), sub / "shots.bin",
                                    sub / "detectors.bin", modes=config.modes)
        summary = summarize(tallies)
        runs[f"{factor:g}"] = {"observables": summary, "flags": list(run.comp.sc.flags),
                               "omitted_detectors": [f"{c.stab}_{c.index}" for c in run.comp.omitted]}
        write_outcomes_csv(summary, sub / "outcomes.csv")
        for name in ("shots.bin", "detectors.bin", "outcomes.csv"):
            manifest.record(sub / name, root)
        manifest.timings[_factor_dir(factor)] = time.perf_counter() - t0
    summary = {"schema": SCHEMA, "config": config.content(), "runs": runs}
    summary_path.write_text(dumps(summary))
    manifest.record(summary_path, root)
    manifest_path.write_text(manifest.to_json())
    return RunArtifacts(root, json.loads(summary_path.read_text()), sorted(manifest.files))


OUTCOME_COLUMNS = ("observable", "mode", "value", "se", "retention")


def write_outcomes_csv(summary: dict, path) -> None:
    rows = []
    for label in sorted(summary):
        for mode in MODES:
            if mode in summary[label]:
                rows.append({"observable": label, "mode": mode, "value": summary[label][mode],
                             "se": summary[label]["se"][mode], "retention": summary[label]["retention"][mode]})
    write_csv(rows, path, OUTCOME_COLUMNS)


# -- csv ------------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(rows, path, columns) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    """Re-import a table written by :func:`write_csv` (numbers parsed back to float)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except ValueError:
                    parsed[k] = v
            out.append(parsed)
    return out


# -- improvement sweep ------------------------------------------------------------

@dataclass(frozen=True)
class SweepCell:
    observable: str
    mode: str
    factor: float
    total: int
    retained: int
    errors: int
    ideal: int  # +1 or -1

    @property
    def error_fraction(self) -> float:
        return self.errors / self.retained if self.retained else float("nan")


def linearized_error(e) -> np.ndarray:
    """-1/2 ln(1 - 2e): additive in independent flip mechanisms, unlike e itself."""
    e = np.asarray(e, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(e < 0.5, -0.5 * np.log1p(-2 * e), np.nan)


METRICS = {"linearized": linearized_error, "fraction": lambda e: np.asarray(e, float)}


@dataclass
class ScalingFit:
    observable: str
    mode: str
    metric: str
    exponent: float  # k in error ~ x^(-k)
    se: float
    factors: tuple
    excluded: tuple
    flags: list = field(default_factory=list)


def _ols_exponent(x, y) -> float:
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(-np.polyfit(lx, ly, 1)[0])


def fit_scaling(cells, metric: str = "linearized", n_boot: int = BOOTSTRAP, seed: int = 0) -> ScalingFit:
    """OLS slope of log error vs log x; zero-error cells are excluded and flagged."""
    cells = sorted(cells, key=lambda c: c.factor)
    f = METRICS[metric]
    errs = np.array([c.error_fraction for c in cells])
    vals = f(errs)
    ok = np.isfinite(vals) & (vals > 0)
    flags = []
    excluded = tuple(c.factor for c, k in zip(cells, ok) if not k)
    if excluded:
        flags.append(f"zero-error or saturated cells excluded at x={list(excluded)}")
    xs = np.array([c.factor for c in cells])
    if ok.sum() < 2:
        return ScalingFit(cells[0].observable, cells[0].mode, metric, float("nan"), float("nan"),
                          tuple(xs[ok]), excluded, flags + ["fewer than two usable cells"])
    if ok.sum() < 3:
        flags.append("fewer than three usable cells")
    k = _ols_exponent(xs[ok], vals[ok])
    rng = np.random.default_rng([seed, 0x5C])
    boots = []
    for _ in range(n_boot):
        ret = np.array([rng.binomial(c.total, c.retained / c.total) if c.total else 0 for c in cells])
        err = np.array([rng.binomial(r, c.error_fraction) if r else 0 for r, c in zip(ret, cells)])
        with np.errstate(divide="ignore", invalid="ignore"):
            v = f(err / np.maximum(ret, 1))
        good = np.isfinite(v) & (v > 0) & ok
        if good.sum() >= 2:
            boots.append(_ols_exponent(xs[good], v[good]))
    se = float(np.std(boots, ddof=1)) if len(boots) > 1 else float("nan")
    return ScalingFit(cells[0].observable, cells[0].mode, metric, k, se, tuple(xs[ok]), excluded, flags)


@dataclass
class SweepResult:
    cells: list
    fits: list

    def fit(self, observable: str, mode: str, metric: str = "linearized") -> ScalingFit:
        for f in self.fits:
            if (f.observable, f.mode, f.metric) == (observable, mode, metric):
                return f
        raise KeyError((observable, mode, metric))

    def rows(self) -> list[dict]:
        out = []
        for c in self.cells:
            e = c.error_fraction
            out.append({"observable": c.observable, "mode": c.mode, "factor": c.factor, "total": c.total,
                        "retained": c.retained, "errors": c.errors, "error": e,
                        "linearized_error": float(linearized_error(e))})
        return out

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "cells": self.rows(), "fits": [asdict(f) for f in self.fits]}


SWEEP_COLUMNS = ("observable", "mode", "factor", "total", "retained", "errors", "error", "linearized_error")


def ideal_sign(spec: ProtocolSpec, label: str, shots: int = 256) -> int:
    """Noiseless value of a deterministic observable."""
    run = prepare_run(spec, None, 1.0, True)
    bits = run.sample(shots, 0).observable_bits(label)
    if bits.min() != bits.max():
        raise ValueError(f"{label} is not deterministic for {spec}")
    return 1 - 2 * int(bits[0])


def sweep_improvement(spec: ProtocolSpec | None = None, device: str | None = None, factors=(1, 2, 4, 8, 16),
                      shots: int = 10 ** 6, seed: int = 0, observables=("ZZ", "XX", "YY"), modes=MODES,
                      metrics=("linearized", "fraction"), n_boot: int = BOOTSTRAP) -> SweepResult:
    """Error of each observable and mode against the improvement factor, with fitted exponents."""
    if len(factors) < 3:
        raise ConfigError("a sweep needs at least three factors")
    base = spec or ProtocolSpec("split")
    cells = []
    for label in observables:
        s = ProtocolSpec(base.kind, base.m, base.n, base.initial, base.theta, base.phi, tuple(label))
        ideal = ideal_sign(s, label)
        for factor in factors:
            run = prepare_run(s, device, float(factor), False)
            tallies = evaluate_run(run, shots, subseed(seed, "sweep", label, f"{factor:g}"), [label], modes)
            for mode in modes:
                t = tallies[(label, mode)]
                wrong = t.minus if ideal > 0 else t.retained - t.minus
                cells.append(SweepCell(label, mode, float(factor), t.total, t.retained, wrong, ideal))
    fits = []
    for label in observables:
        for mode in modes:
            group = [c for c in cells if c.observable == label and c.mode == mode]
            for metric in metrics:
                fits.append(fit_scaling(group, metric, n_boot, subseed(seed, "boot", label, mode, metric)))
    return SweepResult(cells, fits)


# -- tomography data --------------------------------------------------------------

def sample_setting(spec: ProtocolSpec, device, factor, noiseless, shots: int, seed: int, modes=MODES) -> dict:
    """``{mode: Setting}`` for the two single-code observables of ``spec.bases``."""
    run = prepare_run(spec, device, factor, noiseless)
    b1, b2 = spec.bases
    l1, l2 = b1 + "I", "I" + b2
    bits = {mode: ([], []) for mode in modes}
    for data in run.chunks(shots, seed):
        pred = run.decoder.predict(data.detector_bits()) if "decoded" in modes else None
        for mode in modes:
            dec = run.decoder if mode == "decoded" else None
            o1 = evaluate_outcomes(data, run.comp, l1, mode, dec, pred)
            o2 = evaluate_outcomes(data, run.comp, l2, mode, dec, pred)
            bits[mode][0].append((1 - o1.values) // 2)
            bits[mode][1].append((1 - o2.values) // 2)
    out = {}
    for mode, (a, b) in bits.items():
        a, b = np.concatenate(a), np.concatenate(b)
        if a.size:
            out[mode] = Setting.from_bits(a, b)
    return out


def input_components(inp) -> tuple[list, np.ndarray, object]:
    """Cardinal components ``[(weight, (kind, theta, phi, label))]``, Bloch vector and dataset key.

    ``inp`` is a cardinal label for the fault-tolerant preparation (``"0"``,
    ``"1"``, ``"+"``, ``"-"``), or ``(theta, phi)`` for injection.
    """
    if isinstance(inp, str):
        return [(1.0, ("split", None, None, inp))], input_bloch(inp), inp
    theta, phi = inp
    frag = build_arbitrary_prep(theta, phi)
    comps = [(w, ("split_arbitrary",) + CARDINALS[c] + (c,)) for w, c in frag.mixture]
    lab = cardinal_label(theta, phi)
    return comps, bloch_vector(theta, phi), lab if lab is not None else (float(theta), float(phi))


def _component_spec(comp, bases, m=3, n=2) -> ProtocolSpec:
    kind, theta, phi, lab = comp
    if kind == "split":
        return ProtocolSpec("split", m, n, lab, bases=tuple(bases))
    return ProtocolSpec("split_arbitrary", m, n, None, theta, phi, tuple(bases))


def tomography_data(inputs, device=None, factor: float = 1.0, shots: int = 100_000, seed: int = 0,
                    modes=MODES, noiseless: bool = False, bases=BASES2) -> dict:
    """``{mode: TomographyDataset}`` over the given inputs and basis pairs.

    Non-cardinal injected inputs are an affine combination of cardinal
    runs; the shot budget is split in proportion to the weights' magnitudes.
    """
    data = {mode: TomographyDataset(mode) for mode in modes}
    for k, inp in enumerate(inputs):
        comps, bloch, key = input_components(inp)
        norm = sum(abs(w) for w, _ in comps)
        for bases_pair in bases:
            parts = {mode: [] for mode in modes}
            for j, (w, comp) in enumerate(comps):
                n = max(1, round(shots * abs(w) / norm))
                st = sample_setting(_component_spec(comp, bases_pair), device, factor, noiseless, n,
                                    subseed(seed, "tomo", k, bases_pair, j), modes)
                for mode, s in st.items():
                    parts[mode].append((w, s))
            for mode in modes:
                if len(parts[mode]) != len(comps):
                    continue
                if len(comps) == 1:
                    setting = parts[mode][0][1]
                else:
                    setting = mixture_setting(parts[mode])
                    n_eff = 1 / sum(w * w / s.shots for w, s in parts[mode])
                    setting = Setting(setting.probs, max(1, int(round(n_eff))))
                data[mode].add(key, bases_pair, setting, bloch)
    return data


PROCESS_INPUTS = tuple((CARDINALS[c][0], CARDINALS[c][1]) for c in ("0", "1", "+", "-", "+i", "-i"))


# -- theta sweep and exports ------------------------------------------------------

def fit_sinusoid(theta, values) -> dict:
    """Least-squares A cos(theta) + B sin(theta) + C; contrast sqrt(A^2 + B^2)."""
    t = np.asarray(theta, float)
    design = np.column_stack([np.cos(t), np.sin(t), np.ones_like(t)])
    (a, b, c), *_ = np.linalg.lstsq(design, np.asarray(values, float), rcond=None)
    return {"A": float(a), "B": float(b), "C": float(c), "contrast": float(math.hypot(a, b))}


THETA_COLUMNS = ("theta", "phi", "mode", "observable", "value", "se", "shots")


def theta_sweep(thetas, phi: float = 0.0, device=None, factor: float = 1.0, shots: int = 100_000, seed: int = 0,
                modes=MODES, noiseless: bool = False, observables=("ZZ", "XX", "YY")) -> tuple[list, dict]:
    """Rows of observable values over injected polar angles, plus sinusoid fits per (mode, observable)."""
    rows = []
    for k, theta in enumerate(thetas):
        data = tomography_data([(float(theta), phi)], device, factor, shots, subseed(seed, "theta", k), modes,
                               noiseless, bases=tuple(observables))
        for mode in modes:
            ds = data[mode]
            for (key, bases_pair), s in ds.settings.items():
                v = s.values["both"]
                se = math.sqrt(max(0.0, 1 - v * v) / s.shots)
                rows.append({"theta": float(theta), "phi": float(phi), "mode": mode, "observable": bases_pair,
                             "value": v, "se": se, "shots": s.shots})
    fits = {}
    for mode in modes:
        for obs in observables:
            sel = [r for r in rows if r["mode"] == mode and r["observable"] == obs]
            if len(sel) >= 3:
                fits[f"{mode}:{obs}"] = fit_sinusoid([r["theta"] for r in sel], [r["value"] for r in sel])
    return rows, fits


PTM_COLUMNS = ("mode", "output", "I", "X", "Y", "Z")


def ptm_rows(maps: dict) -> list[dict]:
    from .tomography import PAULI2

    rows = []
    for mode in sorted(maps):
        for i, p in enumerate(PAULI2):
            rows.append({"mode": mode, "output": p, **{c: float(maps[mode].ptm[i, j]) for j, c in enumerate("IXYZ")}})
    return rows


DECAY_COLUMNS = ("kind", "basis", "mode", "m", "error", "shots")


def memory_decay(kind: str = "surface", basis: str = "Z", ms=(1, 2, 3, 4, 5, 6), device=None, factor: float = 1.0,
                 shots: int = 100_000, seed: int = 0, mode: str = "decoded") -> tuple[list, DecayFit, float]:
    """Logical error against cycle count for a memory protocol, with the saturating exponential fit."""
    rows, errs, ns = [], [], []
    for m in ms:
        if kind == "surface":
            spec = ProtocolSpec("surface_memory", m, 0, None, bases=(basis,))
            label = basis
        else:
            spec = ProtocolSpec("repetition_memory", m, 0, None, bases=(basis, basis))
            label = basis + "I"
        ideal = ideal_sign(spec, label)
        run = prepare_run(spec, device, factor, False)
        t = evaluate_run(run, shots, subseed(seed, "memory", kind, basis, m), [label], (mode,))[(label, mode)]
        wrong = t.minus if ideal > 0 else t.retained - t.minus
        e = wrong / t.retained
        rows.append({"kind": kind, "basis": basis, "mode": mode, "m": m, "error": e, "shots": t.retained})
        errs.append(e)
        ns.append(t.retained)
    fit = fit_exponential_decay(ms, errs)
    return rows, fit, bootstrap_decay(ms, errs, ns, seed=seed)


def export_results(rows, path, columns, fmt: str = "csv", extra: dict | None = None) -> Path:
    """Write a table as CSV or JSON (deterministic column order)."""
    path = Path(path)
    if fmt == "csv":
        write_csv(rows, path, columns)
    elif fmt == "json":
        path.write_text(dumps({"schema": SCHEMA, "columns": list(columns),
                               "rows": [[r[c] for c in columns] for r in rows], **(extra or {})}))
    else:
        raise ConfigError(f"unknown format {fmt!r}")
    return path
