import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import channels, half, pmfs, random_pmf
from lossydetect.prob import (
    Alphabet,
    Channel,
    Dist,
    Joint,
    binary_convolve,
    binary_entropy,
    binary_entropy_inv,
    binary_kl,
    bsc,
    cascade,
    compose,
    condition,
    conditional_mutual_information,
    entropy,
    identity_channel,
    kl_divergence,
    marginalize,
    merge_axes,
    mutual_information,
    product_joint,
)


def h_direct(p):
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


class TestConstruction:
    def test_sum_tolerance(self):
        Dist.from_array([0.5, 0.5 + 5e-13])
        with pytest.raises(ValueError):
            Dist.from_array([0.5, 0.5 + 1e-9])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            Dist.from_array([1.5, -0.5])

    def test_no_silent_renormalization(self):
        with pytest.raises(ValueError):
            Joint.from_array([[0.2, 0.2], [0.2, 0.2]], ("X", "Y"))
        j = Joint.from_array(np.full((2, 2), 0.2) / 0.8, ("X", "Y"))
        assert j.mass.sum() == pytest.approx(1.0, abs=1e-15)

    def test_channel_rows(self):
        with pytest.raises(ValueError):
            Channel.from_array([[0.5, 0.4], [0.5, 0.5]])

    def test_duplicate_roles(self):
        with pytest.raises(ValueError):
            Joint.from_array(np.full((2, 2), 0.25), ("X", "X"))

    def test_alphabet(self):
        assert Alphabet(3).labels == (0, 1, 2)
        with pytest.raises(ValueError):
            Alphabet(0)

    def test_arrays_read_only(self):
        d = Dist.from_array([0.5, 0.5])
        with pytest.raises(ValueError):
            d.mass[0] = 1.0


class TestBinary:
    @pytest.mark.parametrize("x,h", [(0.5, 1.0), (0.0, 0.0), (1.0, 0.0)])
    def test_entropy_anchors(self, x, h):
        assert binary_entropy(x) == pytest.approx(h, abs=1e-15)

    def test_entropy_quarter(self):
        oracle = -(0.25 * math.log2(0.25) + 0.75 * math.log2(0.75))
        assert binary_entropy(0.25) == pytest.approx(oracle, abs=1e-15)
        assert binary_entropy(0.25) == pytest.approx(0.811278, abs=1e-6)

    @pytest.mark.parametrize("h,x", [(1.0, 0.5), (0.0, 0.0)])
    def test_inverse_anchors(self, h, x):
        assert binary_entropy_inv(h) == pytest.approx(x, abs=1e-12)

    def test_inverse_quarter(self):
        assert binary_entropy_inv(0.811278) == pytest.approx(0.25, abs=1e-6)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            binary_entropy(1.2)
        with pytest.raises(ValueError):
            binary_entropy_inv(1.5)

    @given(half)
    def test_inverse_round_trip(self, x):
        assert binary_entropy_inv(binary_entropy(x)) == pytest.approx(x, abs=1e-9)

    @pytest.mark.parametrize("a,b,c", [(0.0, 0.3, 0.3), (0.5, 0.17, 0.5), (0.1, 0.2, 0.26)])
    def test_convolve(self, a, b, c):
        assert binary_convolve(a, b) == pytest.approx(c, abs=1e-15)

    @given(half, half, half)
    def test_convolve_monotone(self, a, b1, b2):
        lo, hi = sorted((b1, b2))
        assert binary_convolve(a, lo) <= binary_convolve(a, hi) + 1e-15

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_binary_kl_matches_general(self, a, b):
        assert binary_kl(a, b) == pytest.approx(kl_divergence([1 - a, a], [1 - b, b]), abs=1e-12)


class TestDivergences:
    def test_kl_anchor(self):
        oracle = 0.1 * math.log2(0.5) + 0.9 * math.log2(1.125)
        v = kl_divergence(Dist.bernoulli(0.1), Dist.bernoulli(0.2))
        assert v == pytest.approx(oracle, abs=1e-15)
        assert v == pytest.approx(0.052939, abs=1e-5)

    def test_kl_self(self):
        p = Dist.bernoulli(0.3)
        assert kl_divergence(p, p) == 0.0

    def test_kl_support_violation(self):
        assert kl_divergence(Dist.bernoulli(0.5), Dist.bernoulli(0.0)) == math.inf

    def test_kl_zero_cells(self):
        assert kl_divergence([0.0, 1.0], [0.5, 0.5]) == pytest.approx(1.0)

    def test_kl_role_mismatch(self):
        a = Joint.from_array(np.full((2, 2), 0.25), ("X", "Y"))
        b = Joint.from_array(np.full((2, 2), 0.25), ("U", "Y"))
        with pytest.raises(ValueError):
            kl_divergence(a, b)

    @given(pmfs((4,)), pmfs((4,), min_mass=1e-3))
    def test_kl_nonnegative(self, p, q):
        v = kl_divergence(p, q)
        assert v >= 0
        if np.allclose(p, q, atol=0):
            assert v == 0

    @given(pmfs((3,), min_mass=1e-3), pmfs((3,), min_mass=1e-3))
    def test_kl_zero_iff_equal(self, p, q):
        if np.max(np.abs(p - q)) > 1e-3:
            assert kl_divergence(p, q) > 0

    def test_entropy_matches_direct(self, rng):
        for _ in range(20):
            p = random_pmf(rng, (3, 4), zero_frac=0.3)
            assert entropy(p) == pytest.approx(h_direct(p), abs=1e-12)


class TestMutualInformation:
    def test_product_zero(self):
        j = product_joint(Dist.bernoulli(0.3), Dist.from_array([0.2, 0.5, 0.3]), roles=("X", "Y"))
        assert mutual_information(j) == pytest.approx(0.0, abs=1e-15)

    def test_bsc_anchor(self):
        j = compose(Dist.from_array([0.5, 0.5]), bsc(0.25))
        assert mutual_information(j) == pytest.approx(1 - binary_entropy(0.25), abs=1e-15)
        assert mutual_information(j) == pytest.approx(0.188722, abs=1e-5)

    def test_identity_one_bit(self):
        j = compose(Dist.from_array([0.5, 0.5]), identity_channel(2))
        assert mutual_information(j) == pytest.approx(1.0, abs=1e-15)

    def test_needs_two_axes(self):
        with pytest.raises(ValueError):
            mutual_information(Joint.from_array(np.full((2, 2, 2), 0.125), ("U", "X", "Y")))

    @given(pmfs((3, 4)))
    def test_entropy_identity(self, m):
        oracle = h_direct(m.sum(axis=1)) + h_direct(m.sum(axis=0)) - h_direct(m)
        assert mutual_information(m) == pytest.approx(oracle, abs=1e-10)

    def test_cmi_brute_force(self, rng):
        for _ in range(25):
            m = random_pmf(rng, (2, 2, 2), zero_frac=0.2)
            j = Joint.from_array(m, ("U", "X", "Y"))
            oracle = 0.0
            pz = m.sum(axis=(0, 1))
            pxz = m.sum(axis=1)
            pyz = m.sum(axis=0)
            for a, b, c in np.ndindex(m.shape):
                if m[a, b, c] > 0:
                    oracle += m[a, b, c] * math.log2(m[a, b, c] * pz[c] / (pxz[a, c] * pyz[b, c]))
            assert conditional_mutual_information(j, ("U", "X"), ("Y",)) == pytest.approx(oracle, abs=1e-12)

    def test_cmi_conditionally_independent(self):
        pz = np.array([0.4, 0.6])
        a = np.array([[0.3, 0.7], [0.8, 0.2]])
        b = np.array([[0.5, 0.5], [0.1, 0.9]])
        m = np.einsum("z,zx,zy->xyz", pz, a, b)
        j = Joint.from_array(m, ("X", "Y", "Z"))
        assert conditional_mutual_information(j, ("X", "Y"), ("Z",)) == pytest.approx(0.0, abs=1e-14)

    def test_cmi_trivial_conditioner(self, rng):
        m = random_pmf(rng, (3, 2))
        j = Joint.from_array(m[:, :, None], ("X", "Y", "Z"))
        assert conditional_mutual_information(j, ("X", "Y"), ("Z",)) == pytest.approx(mutual_information(m), abs=1e-14)

    def test_cmi_composite_groups(self, rng):
        m = random_pmf(rng, (2, 2, 2, 2))
        j = Joint.from_array(m, ("U", "V", "X", "Y"))
        merged = merge_axes(j, ("U", "Y"))
        direct = conditional_mutual_information(j, ("V", "X"), ("U", "Y"))
        via_merge = conditional_mutual_information(merged, ("V", "X"), ("U+Y",))
        assert direct == pytest.approx(via_merge, abs=1e-12)
        grouped = conditional_mutual_information(j, (("U", "V"), "X"))
        assert grouped == pytest.approx(mutual_information(m.sum(axis=3).reshape(4, 2)), abs=1e-12)

    def test_cmi_overlap_rejected(self):
        j = Joint.from_array(np.full((2, 2, 2), 0.125), ("U", "X", "Y"))
        with pytest.raises(ValueError):
            conditional_mutual_information(j, ("U", "X"), ("X",))


class TestComposition:
    def test_uniform_identity_diagonal(self):
        j = compose(Dist.from_array([1 / 3] * 3), identity_channel(3))
        assert np.allclose(j.mass, np.eye(3) / 3)

    def test_push_forward(self, rng):
        d = Dist.from_array(random_pmf(rng, (3,)))
        c = Channel.from_array(np.array([random_pmf(rng, (4,)) for _ in range(3)]))
        out = marginalize(compose(d, c), "Y")
        assert np.allclose(out.mass, d.mass @ c.rows, atol=1e-15)

    def test_condition_round_trip(self, rng):
        m = random_pmf(rng, (3, 4))
        j = Joint.from_array(m, ("X", "Y"))
        back = compose(marginalize(j, "X"), condition(j, "X"))
        assert np.max(np.abs(back.mass - m)) < 1e-12

    def test_condition_zero_row_uniform(self):
        j = Joint.from_array([[0.5, 0.5], [0.0, 0.0]], ("X", "Y"))
        assert np.allclose(condition(j, "X").rows[1], [0.5, 0.5])

    def test_cascade(self):
        assert np.allclose(cascade(bsc(0.1), bsc(0.2)).rows, bsc(binary_convolve(0.1, 0.2)).rows)

    def test_alphabet_mismatch(self):
        with pytest.raises(ValueError):
            compose(Dist.from_array([0.5, 0.5]), identity_channel(3))


def _chain(w_vx, q_uv, p, px=(0.5, 0.5)):
    m = np.einsum("x,xv,vu,xy->uvxy", np.asarray(px), w_vx, q_uv, bsc(p).rows)
    return Joint.from_array(m, ("U", "V", "X", "Y"))


@given(channels(2, 2), channels(2, 2), half, pmfs((2,)))
def test_rate_identity(w, q, p, px):
    j = _chain(w, q, p, px)
    cmi = conditional_mutual_information
    lhs = cmi(j, ("U", "X")) + cmi(j, ("V", "X"), ("U", "Y"))
    rhs = cmi(j, ("U", "Y")) + cmi(j, ("V", "X")) - cmi(j, ("V", "Y"))
    assert lhs == pytest.approx(rhs, abs=1e-9)


@given(channels(2, 3), half)
def test_mrs_gerber(q_ux, p):
    m = np.einsum("x,xu,xy->uy", np.array([0.5, 0.5]), q_ux, bsc(p).rows)
    mux = 0.5 * q_ux.T
    h_x_u = h_direct(mux) - h_direct(mux.sum(axis=1))
    h_y_u = h_direct(m) - h_direct(m.sum(axis=1))
    bound = binary_entropy(binary_convolve(binary_entropy_inv(min(max(h_x_u, 0.0), 1.0)), p))
    assert h_y_u >= bound - 1e-9
