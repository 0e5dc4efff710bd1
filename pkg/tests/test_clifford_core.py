import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from splitqec.circuit import Circuit
from splitqec.pauli import (
    GATE_KINDS, SINGLE_QUBIT_GATES, CliffordGate, PauliString, conjugate_by_gate,
    pauli_matrix, pauli_multiply,
)
from splitqec.tableau import (
    StabilizerTableau, run_exact_shot, run_exact_shots, tableau_apply, tableau_measure_z,
)

import dense

P = PauliString.from_label


class TestPauliMultiply:
    def test_involution(self):
        out = P("X") * P("X")
        assert out.is_identity() and out.sign == 1

    def test_anticommutation(self):
        xz, zx = P("X") * P("Z"), P("Z") * P("X")
        assert not xz.is_hermitian
        assert xz.phase != zx.phase
        sq = xz * xz
        assert sq.is_identity() and sq.sign == -1

    def test_tensor_factorization(self):
        out = P("XI") * P("XZ")
        assert str(out) == "+IZ"

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            pauli_multiply(P("X"), P("XX"))

    @given(st.lists(st.sampled_from("IXYZ"), min_size=3, max_size=3).map("".join),
           st.lists(st.sampled_from("IXYZ"), min_size=3, max_size=3).map("".join))
    def test_matches_matrix_product(self, a, b):
        pa, pb = P(a), P(b)
        np.testing.assert_allclose(pauli_matrix(pa * pb), pauli_matrix(pa) @ pauli_matrix(pb), atol=1e-12)

    @given(st.lists(st.sampled_from("IXYZ"), min_size=2, max_size=2).map("".join),
           st.lists(st.sampled_from("IXYZ"), min_size=2, max_size=2).map("".join),
           st.lists(st.sampled_from("IXYZ"), min_size=2, max_size=2).map("".join))
    def test_associative(self, a, b, c):
        assert (P(a) * P(b)) * P(c) == P(a) * (P(b) * P(c))


class TestConjugation:
    def test_hadamard_exchange(self):
        assert str(conjugate_by_gate(P("X"), CliffordGate("H", (0,)))) == "+Z"

    def test_cz_rule(self):
        assert str(conjugate_by_gate(P("XI"), CliffordGate("CZ", (0, 1)))) == "+XZ"

    def test_s_on_y(self):
        out = conjugate_by_gate(P("Y"), CliffordGate("S", (0,)))
        u = dense.GATES["S"]
        np.testing.assert_allclose(u @ dense.PY @ u.conj().T, pauli_matrix(out), atol=1e-12)
        assert str(out) == "-X"

    @pytest.mark.parametrize("kind", SINGLE_QUBIT_GATES)
    @pytest.mark.parametrize("label", ["X", "Y", "Z", "-Y"])
    def test_single_qubit_against_matrices(self, kind, label):
        u = dense.GATES[kind]
        out = conjugate_by_gate(P(label), CliffordGate(kind, (0,)))
        np.testing.assert_allclose(u @ pauli_matrix(P(label)) @ u.conj().T, pauli_matrix(out), atol=1e-12)

    @pytest.mark.parametrize("label", ["".join(t) for t in itertools.product("IXYZ", repeat=2)])
    def test_cz_against_matrices(self, label):
        u = dense.cz(2, 0, 1)
        out = conjugate_by_gate(P(label), CliffordGate("CZ", (0, 1)))
        np.testing.assert_allclose(u @ pauli_matrix(P(label)) @ u.conj().T, pauli_matrix(out), atol=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            conjugate_by_gate(P("X"), CliffordGate("H", (3,)))

    @given(st.sampled_from(GATE_KINDS),
           st.lists(st.sampled_from("IXYZ"), min_size=3, max_size=3).map("".join),
           st.lists(st.sampled_from("IXYZ"), min_size=3, max_size=3).map("".join))
    def test_commutation_preserved(self, kind, a, b):
        g = CliffordGate(kind, (0, 2) if kind == "CZ" else (1,))
        pa, pb = P(a), P(b)
        ca, cb = conjugate_by_gate(pa, g), conjugate_by_gate(pb, g)
        assert pa.commutes(pb) == ca.commutes(cb)

    def test_gate_validation(self):
        with pytest.raises(ValueError):
            CliffordGate("CZ", (1, 1))
        with pytest.raises(ValueError):
            CliffordGate("H", (0, 1))


def _random_clifford(rng, n, depth):
    gates = []
    for _ in range(depth):
        if n > 1 and rng.random() < 0.35:
            a, b = rng.choice(n, 2, replace=False)
            gates.append(CliffordGate("CZ", (int(a), int(b))))
        else:
            gates.append(CliffordGate(str(rng.choice(SINGLE_QUBIT_GATES)), (int(rng.integers(n)),)))
    return gates


class TestTableau:
    def test_hadamard(self):
        t = tableau_apply(StabilizerTableau(1), CliffordGate("H", (0,)))
        assert str(t.stabilizers()[0]) == "+X"

    def test_inverse_restores(self):
        rng = np.random.default_rng(3)
        t0 = StabilizerTableau(4)
        for g in _random_clifford(rng, 4, 30):
            t0.apply(g)
        for g in _random_clifford(rng, 4, 40):
            t1 = tableau_apply(tableau_apply(t0, g), g.inverse())
            assert np.array_equal(t1.x, t0.x) and np.array_equal(t1.z, t0.z) and np.array_equal(t1.r, t0.r)

    def test_matches_dense_expectations(self):
        rng = np.random.default_rng(11)
        n = 5
        for trial in range(4):
            gates = _random_clifford(rng, n, 60)
            t = StabilizerTableau(n)
            psi = dense.zero_state(n)
            for g in gates:
                t.apply(g)
                psi = dense.gate_matrix(n, g.kind, g.targets) @ psi
            for label in itertools.product("IXYZ", repeat=n):
                label = "".join(label)
                if label == "I" * n:
                    continue
                want = np.real(psi.conj() @ dense.pauli_string_matrix(label) @ psi)
                got = t.expectation(P(label))[0]
                assert abs(want - got) < 1e-9, (label, want, got)

    def test_symplectic_invariant(self):
        rng = np.random.default_rng(5)
        t = StabilizerTableau(4)
        for g in _random_clifford(rng, 4, 50):
            t.apply(g)
        rows = [t.row(i) for i in range(8)]
        for i in range(8):
            for j in range(8):
                anti = not rows[i].commutes(rows[j])
                assert anti == (abs(i - j) == 4)

    def test_measure_zero_state(self):
        out, det, _ = tableau_measure_z(StabilizerTableau(1), 0, np.random.default_rng(0))
        assert out == 1 and det

    def test_measure_plus_state_frequency(self):
        t = StabilizerTableau(1, batch=10_000)
        t.apply(CliffordGate("H", (0,)))
        bits, det = t.measure_z(0, np.random.default_rng(1))
        assert not det
        from splitqec.channels import unpack_words
        frac = unpack_words(bits[None], 10_000)[0].mean()
        assert abs(frac - 0.5) < 0.01 + 3 * 0.005

    def test_bell_correlation(self):
        c = Circuit(2)
        c.gate("H", 0)
        c.gate("H", 1)
        c.gate("CZ", 0, 1)
        c.gate("H", 1)
        c.measure(0, "a")
        c.measure(1, "b")
        rec = run_exact_shots(c, 2000, seed=4)
        assert np.array_equal(rec[:, 0], rec[:, 1])
        assert 0.4 < rec[:, 0].mean() < 0.6

    def test_repeat_stabilizer_measurement(self):
        rng = np.random.default_rng(9)
        t = StabilizerTableau(3, batch=256)
        for g in _random_clifford(rng, 3, 20):
            t.apply(g)
        first, _ = t.measure_z(1, rng)
        second, det = t.measure_z(1, rng)
        assert det and np.array_equal(first, second)

    def test_resets_and_measurements_only(self):
        c = Circuit(3)
        for q in range(3):
            c.reset(q)
        for q in range(3):
            c.measure(q, f"m{q}")
        assert not run_exact_shot(c, seed=1).any()

    def test_deterministic_given_seed(self):
        c = Circuit(2)
        c.gate("H", 0)
        c.measure(0, "a")
        c.gate("H", 1)
        c.measure(1, "b")
        assert np.array_equal(run_exact_shots(c, 100, 7), run_exact_shots(c, 100, 7))


def _dense_record_distribution(n, ops):
    """Exact distribution over measurement records by branching on every measurement."""
    dist = {}

    def walk(state, k, record, prob):
        if prob < 1e-15:
            return
        if k == len(ops):
            dist[record] = dist.get(record, 0.0) + prob
            return
        op = ops[k]
        if op[0] == "M":
            q = op[1]
            p1 = dense.z_prob_one(state, n, q)
            for bit, pb in ((0, 1 - p1), (1, p1)):
                if pb > 1e-12:
                    walk(dense.project(state, n, q, bit), k + 1, record + (bit,), prob * pb)
        else:
            walk(dense.gate_matrix(n, op[0], op[1:]) @ state, k + 1, record, prob)

    walk(dense.zero_state(n), 0, (), 1.0)
    return dist


@pytest.mark.parametrize("seed", range(4))
def test_measurement_distribution_matches_dense(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(3, 7))
    c = Circuit(n)
    ops = []
    for _ in range(5):
        for g in _random_clifford(rng, n, 8):
            c.gate(g.kind, *g.targets)
            ops.append((g.kind, *g.targets))
        q = int(rng.integers(n))
        c.measure(q, f"m{len(ops)}")
        ops.append(("M", q))
    dist = _dense_record_distribution(n, ops)
    shots = 10_000
    rec = run_exact_shots(c, shots, seed=seed)
    keys = sorted(dist)
    counts = {k: 0 for k in keys}
    for row in rec:
        key = tuple(int(b) for b in row)
        assert key in counts, "record outside the support of the dense distribution"
        counts[key] += 1
    if len(keys) == 1:
        return
    obs = np.array([counts[k] for k in keys])
    exp = np.array([dist[k] for k in keys]) * shots
    _, pval = stats.chisquare(obs, exp)
    assert pval > 0.01
