import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from twentyq.adaptive import LocalQuery, clone_query, posterior_update, run_stage2, sortpm_build_query
from twentyq.transcript import STAGE2, Transcript

from conftest import bsc


def brute_best_distance(rho):
    order = sorted(range(len(rho)), key=lambda j: (-rho[j], j))
    return min(abs(sum(rho[j] for j in order[:k]) - 0.5) for k in range(1, len(rho) + 1))


@settings(max_examples=300, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(0.0, 1.0)).filter(lambda a: a.sum() > 0))
def test_sortpm_matches_brute_force(raw):
    rho = raw / raw.sum()
    q = sortpm_build_query(rho)
    mass = float(rho[list(q.bins)].sum())
    assert abs(abs(mass - 0.5) - brute_best_distance(list(rho))) <= 1e-12
    # chosen set is a prefix of the sorted order
    order = sorted(range(len(rho)), key=lambda j: (-rho[j], j))
    assert set(q.bins) == set(order[: len(q.bins)])


def test_sortpm_tie_rules():
    # uniform over 4: the two-bin prefix has mass exactly 1/2, smallest indices
    assert sortpm_build_query(np.full(4, 0.25)).bins == (0, 1)
    assert sortpm_build_query(np.array([0.25, 0.5, 0.25])).bins == (1,)
    # equal sorted masses keep index order
    assert sortpm_build_query(np.array([0.125, 0.375, 0.375, 0.125])).bins == (1,)
    # prefixes 0.375 and 0.625 are equally far from 1/2 (exact in binary): longer prefix wins
    assert sortpm_build_query(np.array([0.375, 0.25, 0.25, 0.125])).bins == (0, 1)


def test_clone_query_repeats_pattern():
    local = LocalQuery((0, 2), 4)
    q = clone_query(local, 3)
    assert q.n_cells == 12 and q.cells == (0, 2, 4, 6, 8, 10)
    assert q.measure == pytest.approx(local.local_measure)


@settings(max_examples=300, deadline=None)
@given(
    st.integers(2, 40).flatmap(lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(1e-6, 1.0)),
        st.sets(st.integers(0, n - 1), min_size=1, max_size=n - 1),
    )),
    st.integers(0, 1),
    st.floats(0.0, 0.45),
)
def test_posterior_update_normalized(data, y, q):
    raw, bins = data
    rho = raw / raw.sum()
    local = LocalQuery(tuple(sorted(bins)), len(rho))
    post = posterior_update(rho, local, y, bsc(q), local.local_measure)
    assert abs(post.sum() - 1.0) <= 1e-12
    assert (post >= 0).all()


def test_posterior_update_bayes_by_hand():
    rho = np.array([0.5, 0.25, 0.25])
    post = posterior_update(rho, LocalQuery((0,), 3), 1, bsc(0.1), 1 / 3)
    # cells inside the query see W(1|1) = 0.9, the rest W(1|0) = 0.1
    expect = np.array([0.45, 0.025, 0.025]) / 0.5
    assert np.allclose(post, expect)


def test_posterior_update_impossible_response():
    with pytest.raises(FloatingPointError):
        posterior_update(np.array([1.0, 0.0]), LocalQuery((1,), 2), 1, bsc(0.0), 0.5)


def test_noiseless_stage2_bisects():
    width, L = 16, 4
    rng = np.random.default_rng(0)
    for s in np.linspace(0.001, 0.999, 57):
        t = Transcript()
        out = run_stage2(np.full(width, 1 / width), bsc(0.0), float(s), L, 0.0, 100, rng, t)
        assert out.tau_s == 4
        assert out.W2 == int(s * L * width) % width
        assert [q.measure for q in t.eavesdropper_view().of_kind(STAGE2)] == [0.5, 0.25, 0.125, 0.0625]


def test_stage2_cap():
    out = run_stage2(np.full(8, 1 / 8), bsc(0.3), 0.4, 2, 1e-9, 5, np.random.default_rng(0))
    assert out.cap_hit and out.tau_s == 5


def test_stage2_error_below_eps_prime():
    width, L, eps_p, n = 16, 2, 0.05, 2000
    rng = np.random.default_rng(8)
    wrong = 0
    for _ in range(n):
        s = float(rng.random())
        out = run_stage2(np.full(width, 1 / width), bsc(0.1), s, L, eps_p, 10_000, rng)
        wrong += out.W2 != int(s * L * width) % width
    assert wrong / n <= eps_p + 3 * math.sqrt(eps_p * (1 - eps_p) / n)
