import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splitqec.channels import unpack_words
from splitqec.circuit import Circuit, Measure, Noise
from splitqec.dem import derive_dem, dem_to_text, sample_dem, xor_prob
from splitqec.detectors import compile_detectors, records_to_detectors, sample_shots
from splitqec.frames import iter_flip_chunks, sample_flips
from splitqec.noise import DeviceParameters, attach_noise
from splitqec.protocols import ProtocolSpec, build, build_memory
from splitqec.tableau import run_exact_shot, run_exact_shots

SPLIT = ProtocolSpec("split")


@pytest.fixture(scope="module")
def split_comp():
    return compile_detectors(build(SPLIT))


@pytest.fixture(scope="module")
def split_noisy(split_comp):
    return attach_noise(split_comp.circuit, DeviceParameters.load(), 4.0)


def det_id(comp, stab, index):
    for k, d in enumerate(comp.detectors):
        if (d.stab, d.index) == (stab, index):
            return k
    raise KeyError((stab, index))


def with_channel(circuit, position, channel):
    """Copy of a noiseless circuit with one channel inserted before ``position``."""
    out = Circuit(circuit.n_qubits, qubit_names=circuit.qubit_names, noisy=True)
    for pos, ins in enumerate(circuit):
        if pos == position:
            out.instructions.append(channel)
        out.instructions.append(ins)
    return out


def measure_position(circuit, label):
    for pos, ins in enumerate(circuit):
        if isinstance(ins, Measure) and ins.label == label:
            return pos
    raise KeyError(label)


class TestReference:
    def test_memory_reference_aux_zero(self):
        comp = compile_detectors(build_memory("repetition", 3, "Z"))
        labels = comp.circuit.measurement_labels
        aux = [b for lab, b in zip(labels, comp.reference) if not lab.startswith("D")]
        data = [b for lab, b in zip(labels, comp.reference) if lab.startswith("D")]
        assert not any(aux)
        # echo pulses leave every data qubit in the same computational state
        assert len(set(data)) == 1

    def test_split_reference_detectors_zero(self, split_comp):
        assert not records_to_detectors(split_comp, split_comp.reference[None]).any()

    def test_reproducible(self, split_comp):
        again = compile_detectors(build(SPLIT))
        np.testing.assert_array_equal(again.reference, split_comp.reference)
        np.testing.assert_array_equal(run_exact_shot(split_comp.circuit, 0), split_comp.reference)


class TestSampling:
    def test_zero_noise_detectors(self, split_comp):
        noiseless = attach_noise(split_comp.circuit, DeviceParameters.load(), 1e12)
        data = sample_shots(split_comp, 3000, 5, circuit=noiseless)
        assert not data.detectors.any()

    def test_zero_noise_deterministic_records_equal_reference(self):
        comp = compile_detectors(build_memory("repetition", 3, "Z"))
        rec = sample_shots(comp, 500, 1).record_bits()
        assert (rec == comp.reference[None]).all()

    def _one_qubit(self, kind):
        c = Circuit(1, qubit_names=("q",), noisy=True)
        c.reset(0)
        c.tick(1e-7)
        c.instructions.append(Noise(kind, (0,), (1.0,)))
        c.measure(0, "m")
        return c

    def test_z_flip_invisible(self):
        flips = sample_flips(self._one_qubit("Z_ERROR"), 256, 0)
        assert not flips.any()

    def test_x_flip_always(self):
        flips = unpack_words(sample_flips(self._one_qubit("X_ERROR"), 200, 0), 200)
        assert flips.all()

    def test_bad_probability(self):
        with pytest.raises(ValueError):
            Noise("X_ERROR", (0,), (1.5,))

    def test_seed_determinism(self, split_comp, split_noisy):
        a = sample_flips(split_noisy, 1000, 9)
        b = sample_flips(split_noisy, 1000, 9)
        c = sample_flips(split_noisy, 1000, 10)
        np.testing.assert_array_equal(a, b)
        assert (a != c).any()

    def test_chunks_concatenate(self, split_noisy):
        whole = unpack_words(sample_flips(split_noisy, 300, 4, chunk=128), 300)
        parts = [unpack_words(f, min(128, 300 - s)) for s, f in iter_flip_chunks(split_noisy, 300, 4, 128)]
        np.testing.assert_array_equal(whole, np.concatenate(parts, axis=1))

    def test_chunk_multiple_of_64(self, split_noisy):
        with pytest.raises(ValueError):
            list(iter_flip_chunks(split_noisy, 100, 0, 100))

    def test_marginals_match_exact(self, split_comp, split_noisy):
        n = 20_000
        frame = sample_shots(split_comp, n, 3, circuit=split_noisy).detector_bits().mean(0)
        exact = records_to_detectors(split_comp, run_exact_shots(split_noisy, n, 3)).mean(0)
        sigma = np.sqrt((frame * (1 - frame) + exact * (1 - exact)) / n) + 1e-9
        assert np.all(np.abs(frame - exact) < 4 * sigma)


class TestDem:
    def test_xor_prob(self):
        assert xor_prob(0.1, 0.2) == pytest.approx(0.1 * 0.8 + 0.2 * 0.9)
        assert xor_prob(0.0, 0.3) == 0.3

    def test_d5_flip_before_split(self, split_comp):
        sc = split_comp.sc
        c = split_comp.circuit
        d5 = c.qubit_names.index("D5")
        pos = measure_position(c, sc.label_of("D5", "split"))
        dem = derive_dem(split_comp, with_channel(c, pos, Noise("X_ERROR", (d5,), (0.01,))))
        (mech,) = dem.mechanisms
        want = {det_id(split_comp, "Z2", 4), det_id(split_comp, "Z3", 4)}
        assert set(mech.detectors) == want
        assert mech.observables == ("Z_L2",)

    def test_readout_flip_timelike(self, split_comp):
        c = split_comp.circuit
        z1 = c.qubit_names.index("Z1")
        pos = measure_position(c, "Z1_2")
        dem = derive_dem(split_comp, with_channel(c, pos, Noise("X_ERROR", (z1,), (0.02,))))
        (mech,) = dem.mechanisms
        got = sorted((split_comp.detectors[d].stab, split_comp.detectors[d].index) for d in mech.detectors)
        assert got == [("Z1", 2), ("Z1", 3)]
        assert mech.observables == ()

    def test_idle_depolarizing_memory(self):
        sc = build_memory("surface", 4, "Z")
        comp = compile_detectors(sc)
        c = sc.circuit
        d5 = c.qubit_names.index("D5")
        pos = measure_position(c, "Z1_2")
        dem = derive_dem(comp, with_channel(c, pos, Noise("DEPOLARIZE1", (d5,), (0.03,))))
        touching = {s for s, sup in sc.layout.supports.items() if "D5" in sup}
        for m in dem.parts["Z"]:
            stabs = {comp.detectors[d].stab for d in m.detectors}
            assert stabs <= touching and stabs
            assert 1 <= len(m.detectors) <= 2

    def test_graphlike(self, split_comp, split_noisy):
        dem = derive_dem(split_comp, split_noisy)
        assert not dem.nongraphlike
        for kind in "XZ":
            for m in dem.parts[kind]:
                assert 1 <= len(m.detectors) <= 2
                assert all(dem.detector_types[d] == kind for d in m.detectors)
                assert all(o.startswith(kind) for o in m.observables)

    def test_timelike_edge_from_readout(self, split_comp):
        # Without readout/initialization flips the bulk time-like edge keeps only
        # auxiliary-qubit faults; adding them back composes exactly the readout flip.
        params = DeviceParameters.load()
        noisy = attach_noise(split_comp.circuit, params)
        quiet = Circuit(noisy.n_qubits, qubit_names=noisy.qubit_names, noisy=True)
        quiet.instructions = [ins for ins in noisy if not (isinstance(ins, Noise) and ins.kind == "X_ERROR")]
        key = (det_id(split_comp, "Z1", 2), det_id(split_comp, "Z1", 3))

        def edge(circuit):
            return {m.detectors: m.probability for m in derive_dem(split_comp, circuit).parts["Z"]}.get(key, 0.0)

        assert edge(noisy) == pytest.approx(xor_prob(edge(quiet), params.qubits["Z1"].ro_error), rel=1e-9)
        assert edge(quiet) < edge(noisy)

    def test_merge_order_independent(self, split_comp, split_noisy):
        shuffled = Circuit(split_noisy.n_qubits, qubit_names=split_noisy.qubit_names, noisy=True)
        block = []
        for ins in split_noisy:
            if isinstance(ins, Noise):
                block.append(ins)
                continue
            shuffled.instructions += block[::-1]
            block = []
            shuffled.instructions.append(ins)
        shuffled.instructions += block[::-1]
        a, b = derive_dem(split_comp, split_noisy), derive_dem(split_comp, shuffled)
        assert [(m.detectors, m.observables) for m in a.mechanisms] == \
               [(m.detectors, m.observables) for m in b.mechanisms]
        np.testing.assert_allclose([m.probability for m in a.mechanisms], [m.probability for m in b.mechanisms],
                                   rtol=1e-12)

    def test_mismatched_circuit(self, split_comp):
        other = build(ProtocolSpec("split", 2, 2)).circuit
        with pytest.raises(ValueError):
            derive_dem(split_comp, attach_noise(other))

    def test_completeness(self, split_comp):
        noisy = attach_noise(split_comp.circuit, DeviceParameters.load(), 16.0)
        dem = derive_dem(split_comp, noisy)
        n = 200_000
        circ = sample_shots(split_comp, n, 21, circuit=noisy).detector_bits().mean(0)
        model = sample_dem(dem, n, 22)[0].mean(0)
        assert circ.max() <= 0.03
        sigma = np.sqrt((circ * (1 - circ) + model * (1 - model)) / n) + 1e-9
        assert np.all(np.abs(circ - model) < 3 * sigma), np.max(np.abs(circ - model) / sigma)

    def test_text_lists_every_mechanism(self, split_comp, split_noisy):
        dem = derive_dem(split_comp, split_noisy)
        assert dem_to_text(dem).count("error(") == len(dem.mechanisms)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.001, 0.4), st.floats(0.001, 0.4))
def test_identical_footprints_merge_by_xor(p1, p2):
    comp = compile_detectors(build(SPLIT))
    c = comp.circuit
    d5 = c.qubit_names.index("D5")
    pos = measure_position(c, comp.sc.label_of("D5", "split"))
    noisy = with_channel(with_channel(c, pos, Noise("X_ERROR", (d5,), (p1,))), pos + 1,
                         Noise("X_ERROR", (d5,), (p2,)))
    (mech,) = derive_dem(comp, noisy).mechanisms
    assert mech.probability == pytest.approx(p1 + p2 - 2 * p1 * p2, rel=1e-12)
