import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twentyq.channel import (
    INF_NATS,
    BinarySymmetricChannel,
    ChannelError,
    HFunction,
    MatrixChannel,
    b_constant,
    capacity,
    channel_constants,
    channel_from_spec,
    info_density,
    info_density_table,
    kl_divergence,
    max_pair_kl,
    mutual_information,
    sample_response,
    transition_prob,
)

from conftest import bsc


def bsc_capacity(q):
    h = (q * math.log(q) if q > 0 else 0.0) + (1 - q) * math.log(1 - q)
    return math.log(2) + h


def grid_capacity(c0, c1, n=2_000_001):
    """Independent oracle: dense-grid maximum of the mutual information."""
    p = np.linspace(0.0, 1.0, n)
    q = c0 + c1 * p
    py1 = p * (1 - q) + (1 - p) * q

    def hb(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return -np.nan_to_num(x * np.log(x)) - np.nan_to_num((1 - x) * np.log(1 - x))

    mi = hb(py1) - hb(q)
    i = int(np.argmax(mi))
    return float(mi[i]), float(p[i])


class TestHFunction:
    def test_rejects_crossover_above_half(self):
        with pytest.raises(ChannelError):
            HFunction.affine(0.3, 0.3)
        with pytest.raises(ChannelError):
            HFunction.constant(0.6)

    def test_rejects_negative(self):
        with pytest.raises(ChannelError):
            HFunction.affine(0.1, -0.2)

    def test_lipschitz(self):
        h = HFunction.affine(0.1, 0.3)
        assert h.lipschitz == pytest.approx(0.3)
        for a, b in [(0.0, 1.0), (0.2, 0.7)]:
            assert abs(h(a) - h(b)) <= h.lipschitz * abs(a - b) + 1e-15


class TestTransition:
    def test_bsc_entries(self, affine_channel):
        # h(0.3) = 0.19
        assert transition_prob(affine_channel, 0, 1, 0.3) == pytest.approx(0.19)
        assert transition_prob(affine_channel, 1, 1, 0.3) == pytest.approx(0.81)

    @given(st.floats(0, 1), st.floats(0, 0.25), st.floats(0, 0.25))
    def test_rows_sum_to_one(self, a, c0, c1):
        ch = BinarySymmetricChannel(HFunction.affine(c0, c1))
        w = ch.matrix(a)
        assert np.all(np.abs(w.sum(axis=1) - 1) <= 1e-12)
        assert np.all((w >= 0) & (w <= 1))

    def test_domain_errors(self, affine_channel):
        with pytest.raises(ChannelError):
            transition_prob(affine_channel, 2, 0, 0.5)
        with pytest.raises(ChannelError):
            transition_prob(affine_channel, 0, 0, 1.5)
        with pytest.raises(ChannelError):
            transition_prob(affine_channel, 0, 2, 0.5)

    def test_matrix_channel_validation(self):
        with pytest.raises(ChannelError):
            MatrixChannel(lambda a: np.array([[0.5, 0.6], [0.5, 0.5]]), 2)
        ch = MatrixChannel(lambda a: np.array([[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]]), 3)
        assert transition_prob(ch, 1, 2, 0.4) == pytest.approx(0.7)


def test_sample_response_frequency():
    rng = np.random.default_rng(1)
    ch = bsc(0.1)
    flips = sum(sample_response(ch, 0, 0.5, rng) for _ in range(20000))
    assert abs(flips / 20000 - 0.1) < 4 * math.sqrt(0.09 / 20000)


def test_sample_response_noiseless_is_identity():
    rng = np.random.default_rng(0)
    ch = bsc(0.0)
    assert all(sample_response(ch, x, 0.3, rng) == x for x in (0, 1) * 50)


class TestInfoDensity:
    def test_closed_form_bsc(self):
        # at p = 1/2: log(2(1-q)) on agreement, log(2q) on a flip
        ch = bsc(0.1)
        assert info_density(ch, 0.5, 0, 0) == pytest.approx(math.log(1.8))
        assert info_density(ch, 0.5, 0, 1) == pytest.approx(math.log(0.2))

    @given(st.floats(0.01, 0.99), st.floats(0, 0.2), st.floats(0, 0.3))
    def test_mean_is_mutual_information(self, p, c0, c1):
        ch = BinarySymmetricChannel(HFunction.affine(c0, c1))
        w = ch.matrix(p)
        joint = np.array([1 - p, p])[:, None] * w
        t = info_density_table(ch, p)
        mi = float((joint * t).sum())
        assert mi == pytest.approx(mutual_information(ch, p), abs=1e-12)
        assert mi >= -1e-15

    def test_noiseless_saturates(self):
        ch = bsc(0.0)
        assert info_density(ch, 0.5, 0, 1) == -INF_NATS
        assert info_density(ch, 0.5, 1, 1) == pytest.approx(math.log(2))


class TestKL:
    def test_known_value(self):
        assert kl_divergence([0.9, 0.1], [0.1, 0.9]) == pytest.approx(0.8 * math.log(9))

    def test_zero_and_infinite(self):
        assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
        assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == INF_NATS
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))

    def test_alphabet_mismatch(self):
        with pytest.raises(ChannelError):
            kl_divergence([1.0], [0.5, 0.5])

    @given(st.lists(st.floats(0.01, 1), min_size=2, max_size=6), st.lists(st.floats(0.01, 1), min_size=6, max_size=6))
    def test_nonnegative(self, a, b):
        P = np.array(a) / sum(a)
        Q = np.array(b[: len(a)]) / sum(b[: len(a)])
        assert kl_divergence(P, Q) >= 0.0


class TestCapacity:
    @pytest.mark.parametrize("q", [0.0, 0.05, 0.1, 0.25])
    def test_bsc_closed_form(self, q):
        C, p = capacity(bsc(q))
        assert abs(C - bsc_capacity(q)) < 1e-9
        assert p == pytest.approx(0.5, abs=1e-4)

    def test_query_dependent_against_grid_oracle(self, affine_channel):
        C_ref, p_ref = grid_capacity(0.1, 0.3)
        C, p = capacity(affine_channel)
        assert C == pytest.approx(C_ref, abs=1e-11)
        assert p == pytest.approx(p_ref, abs=1e-5)
        # frozen from the grid oracle
        assert C == pytest.approx(0.176584, abs=1e-6)
        assert p == pytest.approx(0.27605, abs=1e-5)

    def test_pure_noise_has_zero_capacity(self):
        C, _ = capacity(bsc(0.5))
        assert C == pytest.approx(0.0, abs=1e-15)


class TestMaxPairKL:
    def test_bsc(self):
        Ct, xa, xr = max_pair_kl(bsc(0.1), 0.5)
        assert Ct == pytest.approx(0.8 * math.log(9))
        assert (xa, xr) == (0, 1)

    def test_identical_rows(self):
        assert max_pair_kl(bsc(0.5), 0.3) == (0.0, 0, 1)

    def test_asymmetric_channel_picks_larger(self):
        ch = MatrixChannel(lambda a: np.array([[0.99, 0.01], [0.5, 0.5]]), 2)
        Ct, xa, xr = max_pair_kl(ch, 0.5)
        d01 = kl_divergence([0.99, 0.01], [0.5, 0.5])
        d10 = kl_divergence([0.5, 0.5], [0.99, 0.01])
        assert Ct == pytest.approx(max(d01, d10))
        assert (xa, xr) == ((1, 0) if d10 > d01 else (0, 1))


class TestBConstant:
    def test_formula(self):
        # X = 2 w.p. 0.75, -1 w.p. 0.25: E[X+^2] = 3, E[X] = 1.25 -> min(2.4, 2) = 2
        assert b_constant([2.0, -1.0], [0.75, 0.25]) == pytest.approx(2.0)
        # X = 1 w.p. 0.5, 3 w.p. 0.5: E[X+^2]/E[X] = 5/2 < 3
        assert b_constant([1.0, 3.0], [0.5, 0.5]) == pytest.approx(2.5)

    def test_zero_mass_atoms_ignored(self):
        assert b_constant([1.0, 100.0], [1.0, 0.0]) == pytest.approx(1.0)

    def test_nonpositive_mean_rejected(self):
        with pytest.raises(ChannelError):
            b_constant([1.0, -1.0], [0.5, 0.5])


def test_channel_constants_bsc01_closed_form():
    q = 0.1
    k = channel_constants(bsc(q))
    l = math.log((1 - q) / q)
    C = bsc_capacity(q)
    assert k.C == pytest.approx(C, abs=1e-12)
    second = (1 - q) * math.log(2 * (1 - q)) ** 2
    assert k.b == pytest.approx(min(second / C, math.log(2 * (1 - q))))
    assert k.b_A == pytest.approx(l) and k.b_R == pytest.approx(l)
    assert k.D_AR == pytest.approx((1 - 2 * q) * l) and k.D_RA == pytest.approx((1 - 2 * q) * l)
    assert not k.saturated


def test_channel_constants_noiseless_saturated():
    k = channel_constants(bsc(0.0))
    assert k.saturated and k.C == pytest.approx(math.log(2))


def test_channel_from_spec():
    ch = channel_from_spec({"kind": "bsc", "h": {"type": "affine", "c0": 0.1, "c1": 0.3}})
    assert ch == BinarySymmetricChannel(HFunction.affine(0.1, 0.3))
    with pytest.raises(ChannelError):
        channel_from_spec({"kind": "z", "h": {"type": "constant", "q": 0.1}})
