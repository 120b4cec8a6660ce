import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lossydetect.prob import Dist, Joint, entropy
from lossydetect.typicality import (
    EmpiricalType,
    SymbolSeq,
    batch_pair_counts,
    empirical_conditional_entropy,
    empirical_joint_type,
    is_conditionally_typical,
    is_delta_typical,
    is_jointly_typical,
    pair_counts,
)

seqs = st.lists(st.integers(0, 2), min_size=1, max_size=40)


def tally(*s):
    counts = {}
    for tup in zip(*s):
        counts[tup] = counts.get(tup, 0) + 1
    return counts


def direct_joint_typical(x, y, joint, delta, conditional):
    """Per-cell check written from the definition: cells with p(b|a) Q_x(a) != 0."""
    n = len(x)
    m = np.asarray(joint)
    px = m.sum(axis=1)
    qx = np.bincount(x, minlength=m.shape[0]) / n
    qxy = np.zeros_like(m)
    for a, b in zip(x, y):
        qxy[a, b] += 1.0 / n
    for a, b in itertools.product(range(m.shape[0]), range(m.shape[1])):
        cond = m[a, b] / px[a] if px[a] > 0 else 0.0
        if cond * qx[a] == 0:
            continue
        ref = cond * qx[a] if conditional else m[a, b]
        if abs(qxy[a, b] - ref) > delta + 1e-12:
            return False
    return True


class TestTypes:
    def test_symbols_in_alphabet(self):
        with pytest.raises(ValueError):
            SymbolSeq.of([0, 2], 2)

    def test_counts_sum(self):
        with pytest.raises(ValueError):
            EmpiricalType(np.array([1, 2]), 4)

    def test_all_zeros(self):
        t = empirical_joint_type(SymbolSeq.of([0] * 8))
        assert t.as_dict() == {0: 8}

    def test_diagonal(self):
        s = SymbolSeq.of([0, 1, 0, 1])
        t = empirical_joint_type(s, s)
        assert t.as_dict() == {(0, 0): 2, (1, 1): 2}

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            empirical_joint_type(SymbolSeq.of([0, 1]), SymbolSeq.of([0]))
        with pytest.raises(ValueError):
            empirical_conditional_entropy(SymbolSeq.of([0, 1]), SymbolSeq.of([0]))

    @given(st.data())
    def test_matches_tally(self, data):
        n = data.draw(st.integers(1, 30))
        a = data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
        b = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
        c = data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
        t = empirical_joint_type(SymbolSeq.of(a, 3), SymbolSeq.of(b, 2), SymbolSeq.of(c, 4))
        assert t.as_dict() == tally(a, b, c)
        assert isinstance(t.dist(("A", "B", "C")), Joint)

    @given(seqs)
    def test_single_type_is_dist(self, s):
        t = empirical_joint_type(SymbolSeq.of(s, 3))
        assert isinstance(t.dist(), Dist)


class TestTypicality:
    def test_exact_type_delta_zero(self):
        assert is_delta_typical(SymbolSeq.of([0, 1, 1, 0]), Dist.from_array([0.5, 0.5]), 0.0)

    def test_all_zeros_not_typical(self):
        assert not is_delta_typical(SymbolSeq.of([0] * 10), Dist.from_array([0.5, 0.5]), 0.1)

    def test_zero_probability_cells_unconstrained(self):
        assert is_delta_typical(SymbolSeq.of([0, 0, 2, 2], 3), Dist.from_array([1.0, 0.0, 0.0]), 0.5)
        assert not is_delta_typical(SymbolSeq.of([0, 0, 2, 2], 3), Dist.from_array([1.0, 0.0, 0.0]), 0.4)

    def test_alphabet_mismatch(self):
        with pytest.raises(ValueError):
            is_delta_typical(SymbolSeq.of([0, 1]), Dist.from_array([1 / 3] * 3), 0.1)

    def test_randomized_against_definition(self, rng):
        joints = [np.array([[0.3, 0.1], [0.0, 0.6]]), np.array([[0.2, 0.2, 0.1], [0.05, 0.05, 0.4]])]
        for m in joints:
            jt = Joint.from_array(m, ("X", "Y"))
            for _ in range(200):
                n = int(rng.integers(4, 30))
                flat = rng.choice(m.size, size=n, p=(0.7 * m + 0.3 / m.size).ravel())
                x, y = np.unravel_index(flat, m.shape)
                delta = float(rng.choice([0.05, 0.1, 0.2]))
                sx, sy = SymbolSeq.of(x, m.shape[0]), SymbolSeq.of(y, m.shape[1])
                assert is_jointly_typical(sx, sy, jt, delta) == direct_joint_typical(x, y, m, delta, False)
                assert is_conditionally_typical(sy, sx, jt, delta) == direct_joint_typical(x, y, m, delta, True)
                px = m.sum(axis=1)
                qx = np.bincount(x, minlength=m.shape[0]) / n
                direct = all(abs(qx[a] - px[a]) <= delta + 1e-12 for a in range(m.shape[0]) if px[a] > 0)
                assert is_delta_typical(sx, Dist.from_array(px), delta) == direct

    def test_typical_fraction_grows(self, rng):
        p = np.array([0.3, 0.7])
        fr = []
        for n in (8, 16, 32, 64):
            draws = rng.choice(2, size=(4000, n), p=p)
            fr.append(np.mean([is_delta_typical(SymbolSeq.of(s), Dist.from_array(p), 0.1) for s in draws]))
        assert all(b >= a for a, b in zip(fr, fr[1:]))
        assert fr[-1] > 0.9


class TestConditionalEntropy:
    def test_equal_sequences(self):
        s = SymbolSeq.of([0, 1, 1, 0, 1])
        assert empirical_conditional_entropy(s, s) == pytest.approx(0.0, abs=1e-15)

    def test_uniform_cells(self):
        u = SymbolSeq.of([0, 0, 1, 1])
        y = SymbolSeq.of([0, 1, 0, 1])
        assert empirical_conditional_entropy(u, y) == pytest.approx(1.0, abs=1e-12)

    @given(st.data())
    def test_chain_rule(self, data):
        n = data.draw(st.integers(1, 40))
        u = data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
        y = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
        joint = np.zeros((3, 2))
        for a, b in zip(u, y):
            joint[a, b] += 1 / n
        expect = entropy(joint) - entropy(joint.sum(axis=0))
        assert empirical_conditional_entropy(SymbolSeq.of(u, 3), SymbolSeq.of(y, 2)) == pytest.approx(expect, abs=1e-12)


class TestBatchCounts:
    def test_pair_counts(self, rng):
        a = rng.integers(0, 3, size=(5, 20))
        b = rng.integers(0, 2, size=(5, 20))
        c = pair_counts(a, b, 3, 2)
        for k in range(5):
            assert np.array_equal(c[k], empirical_joint_type(SymbolSeq.of(a[k], 3), SymbolSeq.of(b[k], 2)).counts)

    def test_batch_pair_counts(self, rng):
        cb = rng.integers(0, 2, size=(7, 16))
        sq = rng.integers(0, 3, size=(4, 16))
        c = batch_pair_counts(cb, sq, 2, 3)
        for m, t in itertools.product(range(7), range(4)):
            assert np.array_equal(c[m, t], pair_counts(cb[m], sq[t], 2, 3))
