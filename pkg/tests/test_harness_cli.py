import json
import math

import numpy as np
import pytest

from splitqec import cli, harness
from splitqec.protocols import ProtocolSpec

SPLIT = ProtocolSpec("split")


def small_config(tmp_path, **kw):
    args = dict(protocol=SPLIT, factors=(4.0,), shots=3000, seed=5, out=str(tmp_path))
    args.update(kw)
    return harness.ExperimentConfig(**args)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"shots": 0}, {"factors": (0.5,)}, {"seed": -1}, {"modes": ("fancy",)},
                                    {"factors": ()}])
    def test_validation(self, tmp_path, kw):
        with pytest.raises(harness.ConfigError):
            small_config(tmp_path, **kw)

    def test_json_round_trip(self, tmp_path):
        cfg = small_config(tmp_path, factors=(1.0, 2.0))
        back = harness.ExperimentConfig.from_json(cfg.to_json())
        assert back == cfg and back.digest() == cfg.digest()

    def test_digest_ignores_output_dir(self, tmp_path):
        assert small_config(tmp_path / "a").digest() == small_config(tmp_path / "b").digest()
        assert small_config(tmp_path).digest() != small_config(tmp_path, seed=6).digest()

    def test_subseed_distinct(self):
        assert harness.subseed(1, "a") != harness.subseed(1, "b")
        assert harness.subseed(1, "a", 2) == harness.subseed(1, "a", 2)


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    return harness.run_protocol(small_config(tmp_path_factory.mktemp("run")))


class TestRunProtocol:
    def test_summary_schema(self, artifacts):
        s = artifacts.summary
        assert s["schema"] == 1
        entry = s["runs"]["4"]["observables"]["ZZ"]
        assert set(entry) >= {"raw", "decoded", "postselected", "retention"}
        assert entry["retention"]["raw"] == 1.0 and 0 < entry["retention"]["postselected"] < 1

    def test_manifest_lists_every_file(self, artifacts):
        m = harness.RunManifest.load(artifacts.out / "manifest.json")
        emitted = {p.relative_to(artifacts.out).as_posix() for p in artifacts.out.rglob("*") if p.is_file()}
        assert emitted - {"manifest.json"} == set(m.files)
        for name, digest in m.files.items():
            assert harness.file_digest(artifacts.out / name) == digest

    def test_deterministic(self, artifacts, tmp_path):
        again = harness.run_protocol(small_config(tmp_path))
        for name in ("summary.json", "x4/shots.bin", "x4/detectors.bin", "x4/outcomes.csv"):
            assert (again.out / name).read_bytes() == (artifacts.out / name).read_bytes()

    def test_resume_skips_work(self, artifacts):
        before = (artifacts.out / "manifest.json").read_bytes()
        again = harness.run_protocol(small_config(artifacts.out))
        assert again.summary == artifacts.summary
        assert (artifacts.out / "manifest.json").read_bytes() == before

    def test_archive_decodes_to_summary(self, artifacts):
        run = harness.prepare_run(SPLIT, None, 4.0)
        tallies = harness.decode_archive(run, artifacts.out / "x4" / "shots.bin")
        assert harness.summarize(tallies) == artifacts.summary["runs"]["4"]["observables"]

    def test_archive_shape(self, artifacts):
        header, bits = harness.load_archive(artifacts.out / "x4" / "detectors.bin")
        run = harness.prepare_run(SPLIT, None, 4.0)
        assert bits.shape == (3000, len(run.comp.detectors))
        assert header["labels"] == harness.detector_names(run.comp)

    def test_outcomes_csv_round_trip(self, artifacts):
        rows = harness.read_csv(artifacts.out / "x4" / "outcomes.csv")
        obs = artifacts.summary["runs"]["4"]["observables"]
        for r in rows:
            assert r["value"] == obs[r["observable"]][r["mode"]]

    def test_zero_noise(self, tmp_path):
        art = harness.run_protocol(small_config(tmp_path, noiseless=True, shots=500))
        obs = art.summary["runs"]["4"]["observables"]
        assert (obs["ZZ"]["raw"], obs["ZZ"]["decoded"], obs["ZZ"]["postselected"]) == (1.0, 1.0, 1.0)
        assert obs["ZZ"]["retention"]["postselected"] == 1.0

    def test_decoding_improves_zz(self):
        run = harness.prepare_run(SPLIT, None, 1.0)
        s = harness.summarize(harness.evaluate_run(run, 20_000, 3, ["ZZ"]))["ZZ"]
        assert s["decoded"] > s["raw"] + 5 * (s["se"]["decoded"] + s["se"]["raw"])

    def test_mismatched_archive(self, artifacts):
        other = harness.prepare_run(ProtocolSpec("split", 2, 2), None, 4.0)
        with pytest.raises(ValueError):
            list(harness.decode_archive(other, artifacts.out / "x4" / "shots.bin"))


class TestScaling:
    def _cells(self, k, factors=(1, 2, 4, 8, 16), e1=0.1, n=10 ** 6):
        return [harness.SweepCell("ZZ", "raw", float(x), n, n, int(round(n * e1 * x ** -k)), 1) for x in factors]

    @pytest.mark.parametrize("k", [1.0, 2.0, 3.0])
    def test_recovers_synthetic_exponent(self, k):
        fit = harness.fit_scaling(self._cells(k, e1=0.05, n=10 ** 7), "fraction", n_boot=100)
        assert fit.exponent == pytest.approx(k, abs=0.05)
        assert fit.se < 0.1

    def test_zero_cells_flagged(self):
        fit = harness.fit_scaling(self._cells(3.0, e1=1e-4), "fraction", n_boot=20)
        assert fit.excluded and fit.flags

    def test_linearized_additive(self):
        # Composition of independent flips adds in the linearized metric.
        a, b = 0.1, 0.2
        both = a * (1 - b) + b * (1 - a)
        assert harness.linearized_error(both) == pytest.approx(harness.linearized_error(a) + harness.linearized_error(b))

    def test_sweep_needs_three_factors(self):
        with pytest.raises(harness.ConfigError):
            harness.sweep_improvement(factors=(1, 2), shots=10)


class TestExports:
    def test_sinusoid_exact(self):
        t = np.linspace(0, math.pi, 7)
        fit = harness.fit_sinusoid(t, 0.3 * np.cos(t) - 0.2 * np.sin(t) + 0.1)
        assert (fit["A"], fit["B"], fit["C"]) == pytest.approx((0.3, -0.2, 0.1))

    def test_noiseless_theta_sweep(self, tmp_path):
        thetas = list(np.linspace(0, math.pi, 5))
        rows, fits = harness.theta_sweep(thetas, 0.0, shots=20_000, seed=1, modes=("raw",), noiseless=True)
        sel = [r for r in rows if r["observable"] == "ZZ"]
        design = np.column_stack([np.cos(thetas), np.sin(thetas), np.ones(len(thetas))])
        sigma_a = math.sqrt(sum((w * r["se"]) ** 2 for w, r in zip(np.linalg.pinv(design)[0], sel)))
        assert fits["raw:ZZ"]["A"] == pytest.approx(1.0, abs=3 * sigma_a + 1e-9)
        assert all(r["value"] == pytest.approx(1.0, abs=1e-12) for r in rows if r["observable"] == "XX")
        path = harness.export_results(rows, tmp_path / "theta.csv", harness.THETA_COLUMNS)
        back = harness.read_csv(path)
        assert [[r[c] for c in harness.THETA_COLUMNS] for r in back] == \
               [[r[c] for c in harness.THETA_COLUMNS] for r in rows]

    def test_contrast_ordering(self):
        rows, fits = harness.theta_sweep(list(np.linspace(0, math.pi, 7)), 0.0, shots=20_000, seed=1,
                                         modes=("decoded",))
        assert fits["decoded:ZZ"]["contrast"] > fits["decoded:YY"]["contrast"]

    def test_json_export(self, tmp_path):
        rows = [{"a": 1.5, "b": "x"}, {"a": float("nan"), "b": "y"}]
        path = harness.export_results(rows, tmp_path / "t.json", ("a", "b"), "json")
        assert json.loads(path.read_text())["rows"] == [[1.5, "x"], [None, "y"]]

    def test_unknown_format(self, tmp_path):
        with pytest.raises(harness.ConfigError):
            harness.export_results([], tmp_path / "t", ("a",), "xml")

    def test_ptm_rows_order(self):
        from splitqec.tomography import ideal_ptm, ProcessMap

        pm = ProcessMap(ideal_ptm(), np.eye(8) / 8, ideal_ptm(), 0, [])
        rows = harness.ptm_rows({"raw": pm})
        assert [r["output"] for r in rows][:3] == ["II", "IX", "IY"] and rows[0]["I"] == pytest.approx(0.5)


class TestCli:
    def test_version(self, capsys):
        assert cli.main(["--version"]) == 0

    def test_bad_flag(self):
        assert cli.main(["sample", "--bogus"]) == 2

    def test_invalid_shots(self):
        assert cli.main(["--shots", "0", "sample"]) == 2

    def test_invalid_factor(self, tmp_path):
        assert cli.main(["sample", "--factor", "0.5", "--out", str(tmp_path)]) == 2

    def test_build_circuit(self, capsys):
        assert cli.main(["build", "--kind", "repetition_memory", "-m", "1", "--bases", "ZZ"]) == 0
        assert "M" in capsys.readouterr().out

    def test_build_dem(self, capsys):
        assert cli.main(["build", "--what", "dem", "--factor", "4"]) == 0
        assert "error(" in capsys.readouterr().out

    def test_sample_report_decode(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert cli.main(["--seed", "3", "sample", "--shots", "2000", "--factor", "4", "--out", str(out)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["schema"] == 1
        assert cli.main(["report", str(out)]) == 0
        assert "ZZ" in capsys.readouterr().out
        assert cli.main(["decode", str(out / "x4" / "shots.bin"), "--factor", "4"]) == 0
        decoded = json.loads(capsys.readouterr().out)
        assert decoded["observables"] == summary["runs"]["4"]["observables"]

    def test_missing_archive(self, tmp_path):
        assert cli.main(["decode", str(tmp_path / "nope.bin")]) == 2

    def test_tomo_state(self, tmp_path, capsys):
        assert cli.main(["tomo", "state", "--noiseless", "--shots", "400", "--out", str(tmp_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["raw"]["bell_fidelity"] == pytest.approx(1.0)
        assert (tmp_path / "tomography_state.json").exists()

    def test_angle_parsing(self):
        assert cli._angle("0.5pi") == pytest.approx(math.pi / 2)
        assert cli._angle("pi") == pytest.approx(math.pi)
        assert cli._angle("0.25") == 0.25
