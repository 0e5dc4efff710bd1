"""Command-line interface.

Exit codes: 0 success, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, harness
from .dem import dem_to_text
from .protocols import KINDS, ProtocolSpec
from .tomography import process_report, reconstruct_process, state_report

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
GLOBAL_DEFAULTS = {"seed": 0, "shots": 100_000, "device": None, "out": "runs", "factor": 1.0}


def _angle(text: str) -> float:
    """Angle in radians; a trailing ``pi`` multiplies by pi (``0.5pi``)."""
    t = text.strip().lower()
    if t.endswith("pi"):
        head = t[:-2].rstrip("*")
        return (float(head) if head else 1.0) * math.pi
    return float(t)


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d if suppress else GLOBAL_DEFAULTS["seed"])
    p.add_argument("--shots", type=int, default=d if suppress else GLOBAL_DEFAULTS["shots"])
    p.add_argument("--device", default=d if suppress else GLOBAL_DEFAULTS["device"], help="device parameter JSON")
    p.add_argument("--out", default=d if suppress else GLOBAL_DEFAULTS["out"], help="output directory")
    p.add_argument("--factor", type=float, default=d if suppress else GLOBAL_DEFAULTS["factor"],
                   help="noise improvement factor x")


def _add_protocol(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=KINDS, default="split")
    p.add_argument("-m", type=int, default=3, help="cycles before the split")
    p.add_argument("-n", type=int, default=2, help="cycles after the split")
    p.add_argument("--initial", default="0")
    p.add_argument("--theta", type=_angle)
    p.add_argument("--phi", type=_angle)
    p.add_argument("--bases", default="ZZ", help="readout basis per code, e.g. XX")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="splitqec", description="Lattice-split simulation, decoding and tomography.")
    ap.add_argument("--version", action="version", version=__version__)
    _add_globals(ap, False)
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _add_globals(p, True)
        return p

    p = cmd("build", "print a protocol's circuit, detectors or error model")
    _add_protocol(p)
    p.add_argument("--what", choices=("circuit", "detectors", "dem"), default="circuit")

    p = cmd("sample", "sample a protocol and write archives and a summary")
    _add_protocol(p)
    p.add_argument("--factors", type=float, nargs="+", help="several improvement factors")
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--config", help="experiment config JSON (overrides protocol flags)")

    p = cmd("decode", "decode a stored shot archive")
    _add_protocol(p)
    p.add_argument("archive")

    p = cmd("tomo", "state or process tomography")
    p.add_argument("target", choices=("state", "process"))
    p.add_argument("--input", default="0", help="cardinal label or theta,phi for state tomography")
    p.add_argument("--noiseless", action="store_true")

    p = cmd("sweep", "parameter sweeps")
    p.add_argument("target", choices=("improvement", "theta", "memory"))
    p.add_argument("--factors", type=float, nargs="+", default=[1, 2, 4, 8, 16])
    p.add_argument("--observables", nargs="+", default=["ZZ", "XX", "YY"])
    p.add_argument("--thetas", type=_angle, nargs="+")
    p.add_argument("--phi", type=_angle, default=0.0)
    p.add_argument("--memory", choices=("surface", "repetition"), default="surface")
    p.add_argument("--basis", choices=("X", "Y", "Z"), default="Z")
    p.add_argument("--cycles", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6])
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = cmd("report", "print a stored summary")
    p.add_argument("path", help="summary.json or a run directory")
    return ap


def _spec(a) -> ProtocolSpec:
    if a.kind == "split_arbitrary":
        return ProtocolSpec(a.kind, a.m, a.n, None, a.theta, a.phi, tuple(a.bases))
    if a.kind in ("surface_memory",):
        return ProtocolSpec(a.kind, a.m, 0, a.initial if a.initial != "0" else None, bases=tuple(a.bases[:1]))
    return ProtocolSpec(a.kind, a.m, a.n, a.initial, bases=tuple(a.bases))


def _parse_input(text: str):
    if "," in text:
        t, p = text.split(",")
        return (_angle(t), _angle(p))
    return text


def _emit(obj) -> None:
    sys.stdout.write(harness.dumps(obj))


def run_build(a) -> None:
    comp = harness.compile_protocol(_spec(a))
    if a.what == "circuit":
        sys.stdout.write(comp.circuit.to_text())
    elif a.what == "detectors":
        for k, d in enumerate(comp.detectors):
            print(f"{k}\t{d.stab}_{d.index}\t{d.role}\t{' '.join(map(str, d.records))}")
    else:
        run = harness.prepare_run(comp.sc.spec, a.device, a.factor)
        sys.stdout.write(dem_to_text(run.decoder.dem))


def run_sample(a) -> None:
    if a.config:
        cfg = harness.ExperimentConfig.from_json(Path(a.config).read_text())
    else:
        cfg = harness.ExperimentConfig(_spec(a), a.device, tuple(a.factors or [a.factor]), a.shots, a.seed,
                                       out=a.out, noiseless=a.noiseless)
    art = harness.run_protocol(cfg)
    _emit(art.summary)


def run_decode(a) -> None:
    run = harness.prepare_run(_spec(a), a.device, a.factor)
    _emit({"schema": harness.SCHEMA, "observables": harness.summarize(harness.decode_archive(run, a.archive))})


def run_tomo(a) -> None:
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    if a.target == "state":
        inp = _parse_input(a.input)
        data = harness.tomography_data([inp], a.device, a.factor, a.shots, a.seed, noiseless=a.noiseless)
        key = next(iter(data.values())).labels()[0]
        report = {mode: state_report(ds, key) for mode, ds in data.items()}
    else:
        data = harness.tomography_data(harness.PROCESS_INPUTS, a.device, a.factor, a.shots, a.seed,
                                       noiseless=a.noiseless)
        maps = {mode: reconstruct_process(ds) for mode, ds in data.items()}
        report = {mode: process_report(pm, mode) for mode, pm in maps.items()}
        harness.export_results(harness.ptm_rows(maps), out / "ptm.csv", harness.PTM_COLUMNS)
    for mode, ds in data.items():
        (out / f"tomography_{a.target}_{mode}.json").write_text(ds.to_json())
    (out / f"tomography_{a.target}.json").write_text(harness.dumps({"schema": harness.SCHEMA, "modes": report}))
    _emit(report)


def run_sweep(a) -> None:
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    if a.target == "improvement":
        res = harness.sweep_improvement(None, a.device, tuple(a.factors), a.shots, a.seed, tuple(a.observables))
        harness.export_results(res.rows(), out / f"improvement.{a.format}", harness.SWEEP_COLUMNS, a.format)
        (out / "improvement_fits.json").write_text(harness.dumps([vars(f) for f in res.fits]))
        _emit([vars(f) for f in res.fits])
    elif a.target == "theta":
        thetas = a.thetas or list(np.linspace(0, math.pi, 9))
        rows, fits = harness.theta_sweep(thetas, a.phi, a.device, a.factor, a.shots, a.seed)
        harness.export_results(rows, out / f"theta.{a.format}", harness.THETA_COLUMNS, a.format, {"fits": fits})
        _emit(fits)
    else:
        rows, fit, se = harness.memory_decay(a.memory, a.basis, tuple(a.cycles), a.device, a.factor, a.shots, a.seed)
        res = {"epsilon": fit.epsilon, "e0": fit.e0, "epsilon_se": fit.epsilon_se, "bootstrap_se": se,
               "identifiable": bool(fit.identifiable)}
        harness.export_results(rows, out / f"memory.{a.format}", harness.DECAY_COLUMNS, a.format, {"fit": res})
        _emit(res)


def run_report(a) -> None:
    path = Path(a.path)
    if path.is_dir():
        path = path / "summary.json"
    summary = json.loads(path.read_text())
    for factor, run in sorted(summary.get("runs", {}).items(), key=lambda kv: float(kv[0])):
        print(f"x={factor}")
        for label, entry in sorted(run["observables"].items()):
            vals = "  ".join(f"{mode}={entry[mode]:+.4f}" if entry.get(mode) is not None else f"{mode}=nan"
                             for mode in ("raw", "decoded", "postselected") if mode in entry)
            ret = entry["retention"].get("postselected")
            tail = f"  kept={ret:.4f}" if ret is not None else ""
            print(f"  {label:<3} {vals}{tail}")


COMMANDS = {"build": run_build, "sample": run_sample, "decode": run_decode, "tomo": run_tomo, "sweep": run_sweep,
            "report": run_report}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if a.shots < 1:
        print("error: --shots must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        COMMANDS[a.command](a)
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
