import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import CODE_LETTER, PAULI, dense_pauli, two_qubit_label
from kmarkov.clifford import (CNOT, IDENTITY, IX, IZ, SWAP, XI, ZI, LetterMode, LetterSpec,
                              PauliString, apply_letter, bonds, conjugate,
                              enumerate_clifford_2q, gate_set, local_weight,
                              mean_scrambling_time, rules_at_frequency, scan_min_scrambling,
                              scrambling_time)
from kmarkov.markov import Letter, make_rule, stationary_letter_frequency

LABELS = [two_qubit_label(c) for c in range(16)]
DENSE = [dense_pauli(lab) for lab in LABELS]


def dense_table(U):
    """Phase-free conjugation table U P U^dagger on the 16 two-qubit Paulis."""
    table = []
    for P in DENSE:
        Q = U @ P @ U.conj().T
        overlaps = [abs(np.trace(D.conj().T @ Q)) / 4 for D in DENSE]
        best = int(np.argmax(overlaps))
        assert overlaps[best] == pytest.approx(1.0)
        table.append(best)
    return tuple(table)


@pytest.fixture(scope="module")
def dense_group():
    """BFS closure of H, S and CNOT, keyed by conjugation table."""
    H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    S = np.diag([1, 1j])
    I2 = np.eye(2)
    cx = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    gens = [np.kron(H, I2), np.kron(I2, H), np.kron(S, I2), np.kron(I2, S), cx]
    group = {dense_table(np.eye(4)): np.eye(4)}
    frontier = list(group.values())
    while frontier:
        nxt = []
        for U in frontier:
            for g in gens:
                V = g @ U
                key = dense_table(V)
                if key not in group:
                    group[key] = V
                    nxt.append(V)
        frontier = nxt
    return group


class TestGateSet:
    def test_counts(self):
        gs = gate_set()
        assert len(gs.all_gates) == 720 and len(gs.wc_subset) == 648
        assert gs.wc_tables.shape == (648, 16) and gs.wc_tables.dtype == np.uint8

    def test_named_gates(self):
        tables = {g.table for g in gate_set().all_gates}
        wc = {g.table for g in gate_set().wc_subset}
        assert IDENTITY.table in tables and SWAP.table in tables
        assert SWAP.table not in wc and IDENTITY.table not in wc
        assert CNOT.table in wc

    def test_complement_is_local_times_swap(self):
        rest = [g for g in gate_set().all_gates if not g.is_weight_changing]
        assert len(rest) == 72  # 6 x 6 single-qubit classes, with or without SWAP
        for g in rest:
            assert all(local_weight(g(c)) == local_weight(c) for c in range(16))

    def test_bijection_and_inverse(self):
        for g in enumerate_clifford_2q():
            assert sorted(g.table) == list(range(16)) and g(0) == 0
            inv = g.inverse()
            assert all(inv(g(c)) == c for c in range(16))

    def test_bad_images(self):
        with pytest.raises(ValueError):
            type(IDENTITY)((XI, XI, IX, IZ))
        with pytest.raises(ValueError, match="commutation"):
            type(IDENTITY)((XI, IX, ZI, IZ))

    def test_matches_dense_closure(self, dense_group):
        assert len(dense_group) == 720
        assert set(dense_group) == {g.table for g in gate_set().all_gates}

    def test_random_gates_conjugate_like_dense(self, dense_group):
        rng = np.random.default_rng(0)
        keys = list(dense_group)
        for idx in rng.choice(len(keys), 20, replace=False):
            U = dense_group[keys[idx]]
            for c in range(16):
                Q = U @ DENSE[c] @ U.conj().T
                img = DENSE[keys[idx][c]]
                assert min(np.abs(Q - img).max(), np.abs(Q + img).max()) < 1e-12

    def test_code_layout(self):
        assert two_qubit_label(XI) == "XI" and two_qubit_label(IZ) == "IZ"
        assert two_qubit_label(ZI | IX) == "ZX" and CODE_LETTER[3] == "Y"
        assert np.allclose(DENSE[XI | ZI], np.kron(PAULI["Y"], PAULI["I"]))


class TestPauliString:
    def test_label_roundtrip(self):
        p = PauliString.from_label("IXZYI")
        assert p.label == "IXZYI" and p.weight == 3
        assert PauliString.from_arrays(*p.to_arrays()) == p

    def test_bad_label(self):
        with pytest.raises(ValueError):
            PauliString.from_label("IXQ")

    def test_conjugate_examples(self):
        op = PauliString.from_label("ZIII")
        assert conjugate(SWAP, op, (0, 1)).label == "IZII"
        assert conjugate(SWAP, op, (3, 0)).label == "IIIZ"
        assert conjugate(CNOT, PauliString.from_label("XIII"), (0, 1)).label == "XXII"
        assert conjugate(CNOT, PauliString.from_label("IZII"), (0, 1)).label == "ZZII"

    @pytest.mark.parametrize("sites", [(1, 1), (0, 4), (-1, 2)])
    def test_conjugate_errors(self, sites):
        with pytest.raises(ValueError):
            conjugate(SWAP, PauliString.from_label("ZIII"), sites)

    @settings(max_examples=50)
    @given(label=st.text("IXYZ", min_size=4, max_size=12), data=st.data())
    def test_weight_changes_by_at_most_one(self, label, data):
        g = gate_set().all_gates[data.draw(st.integers(0, 719))]
        op = PauliString.from_label(label)
        i = data.draw(st.integers(0, len(label) - 1))
        out = conjugate(g, op, (i, (i + 1) % len(label)))
        assert abs(out.weight - op.weight) <= 1


class TestLetters:
    def test_bonds(self):
        assert [tuple(a) for a in bonds(6, 0)] == [(0, 2, 4), (1, 3, 5)]
        assert [tuple(a) for a in bonds(6, 1)] == [(1, 3, 5), (2, 4, 0)]

    def test_double_layer_swap_moves_two(self):
        rng = np.random.default_rng(0)
        out = apply_letter(PauliString.single(4, 0), Letter.A, LetterSpec(), 0, rng)
        assert out.label == "IIZI"

    def test_single_layer_parities(self):
        spec = LetterSpec(LetterMode.SINGLE_LAYER_A_EVEN)
        assert spec.parities(Letter.A, 1) == (0,)
        assert spec.parities(Letter.B, 1) == (1,) and spec.parities(Letter.B, 2) == (0,)
        pinned = LetterSpec(LetterMode.SINGLE_LAYER_A_ODD, pin_b=True)
        assert pinned.parities(Letter.A, 0) == (1,) and pinned.parities(Letter.B, 1) == (0,)
        assert LetterSpec().layers_per_letter == 2 and spec.layers_per_letter == 1

    def test_identity_is_fixed(self):
        rng = np.random.default_rng(1)
        out = apply_letter(PauliString(8), Letter.B, LetterSpec(), 0, rng)
        assert out.weight == 0

    def test_swap_letter_choice(self):
        rng = np.random.default_rng(2)
        spec = LetterSpec(swap_letter=Letter.B)
        out = apply_letter(PauliString.single(6, 1, "X"), Letter.B, spec, 0, rng)
        assert out.label == "IIIIIX"

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32), n=st.sampled_from([4, 8, 16]))
    def test_layer_weight_change_bounded(self, seed, n):
        rng = np.random.default_rng(seed)
        op = PauliString.single(n, 0)
        spec = LetterSpec(LetterMode.SINGLE_LAYER_A_EVEN)
        for cursor in range(20):
            new = apply_letter(op, Letter.B, spec, cursor, rng)
            assert abs(new.weight - op.weight) <= n // 2 and new.weight >= 1
            op = new


class TestScrambling:
    def test_all_swap_never_scrambles(self):
        tr = scrambling_time(make_rule(0, [1.0]), LetterSpec(), 16, seed=0)
        assert tr.timed_out and set(tr.weights) == {1}
        assert tr.occupation.n_layers == 801

    def test_all_random_scrambles(self):
        tr = scrambling_time(make_rule(0, [0.0]), LetterSpec(), 16, seed=3)
        assert tr.scrambling_time is not None
        assert tr.weights[tr.scrambling_time] >= 8 and (tr.weights[:tr.scrambling_time] < 8).all()
        assert tr.weights[0] == 1 and tr.occupation.values[0, 0] == 1
        # operator spreads at most one site per side per layer
        assert tr.scrambling_time >= 4

    def test_run_to_end(self):
        tr = scrambling_time(make_rule(0, [0.5]), LetterSpec(), 8, seed=1, max_layers=40,
                             run_to_end=True)
        assert tr.occupation.values.shape == (41, 8)
        assert (np.abs(np.diff(tr.weights.astype(int))) <= 4).all()

    def test_reproducible(self):
        a = scrambling_time(make_rule(1, [0.3, 0.6]), LetterSpec(), 12, seed=7)
        b = scrambling_time(make_rule(1, [0.3, 0.6]), LetterSpec(), 12, seed=7)
        assert a.scrambling_time == b.scrambling_time
        assert np.array_equal(a.occupation.values, b.occupation.values)

    def test_translation_covariance(self):
        # shifting the initial site by one brick leaves the statistics unchanged
        rule, spec = make_rule(0, [0.4]), LetterSpec()
        t0 = [scrambling_time(rule, spec, 16, s).scrambling_time for s in range(300)]
        t2 = [scrambling_time(rule, spec, 16, s + 10**6,
                              initial=PauliString.single(16, 2)).scrambling_time
              for s in range(300)]
        se = np.hypot(np.std(t0), np.std(t2)) / np.sqrt(300)
        assert abs(np.mean(t0) - np.mean(t2)) < 4 * se

    def test_exact_shift_by_two(self):
        # with only SWAP layers the shifted start reproduces the shifted field
        rule = make_rule(0, [1.0])
        a = scrambling_time(rule, LetterSpec(), 8, 0, max_layers=10)
        b = scrambling_time(rule, LetterSpec(), 8, 0, max_layers=10,
                            initial=PauliString.single(8, 2))
        assert np.array_equal(np.roll(a.occupation.values, 2, axis=1), b.occupation.values)

    def test_ensemble_threads(self):
        rule = make_rule(0, [0.3])
        a = mean_scrambling_time(rule, LetterSpec(), 8, 20, master_seed=4, threads=1)
        b = mean_scrambling_time(rule, LetterSpec(), 8, 20, master_seed=4, threads=2)
        assert a.times == b.times and a.timeout_fraction == 0.0


class TestScan:
    @pytest.mark.parametrize("k, f_a", [(1, 0.6), (1, 0.3), (2, 0.6)])
    def test_rules_hit_frequency(self, k, f_a):
        rules = rules_at_frequency(k, f_a, 4)
        assert rules and all(r.k == k for r in rules)
        for r in rules:
            assert stationary_letter_frequency(r) == pytest.approx(f_a, abs=1e-9)

    def test_resolution_one_is_midpoint(self):
        (r,) = rules_at_frequency(1, 0.6, 1)
        assert r.table == pytest.approx((1 - 0.4 * 0.5 / 0.6, 0.5))
        with pytest.raises(ValueError, match="no order-1"):
            rules_at_frequency(1, 0.5, 1)  # the only grid point is i.i.d.

    def test_bad_resolution(self):
        with pytest.raises(ValueError):
            rules_at_frequency(1, 0.5, 0)

    def test_scan_picks_minimum(self):
        res = scan_min_scrambling(1, 0.4, LetterSpec(), 8, grid_resolution=3, trials=20,
                                  master_seed=1)
        means = [e.mean for _, e in res.entries if e.timeout_fraction <= 0.1]
        assert res.best_mean == min(means)
