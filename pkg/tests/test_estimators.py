import itertools
from collections import Counter

import numpy as np
import pytest

from biso.core import Permutation, is_biso, permute_matrix
from biso.estimators import (
    Blocking,
    ComparisonGraph,
    Provenance,
    SortMode,
    blocking_subroutine,
    borda_graph,
    borda_sort,
    compute_thresholds,
    meta_estimate,
    partial_sum_graph,
    reference_blocking,
    resolve_graph,
    sort_partial_sums,
    topological_sort,
    two_dimensional_sort,
)
from biso.evaluation import frobenius_error, generate_ground_truth
from biso.core import NoiseModel
from biso.sampling import build_observation_matrix, sample_observations

TH100 = compute_thresholds(100, 100, 1e4, 1.0)


def ranks(p):
    return p.ranks.tolist()


# thresholds ----------------------------------------------------------------


def test_threshold_values():
    assert TH100.eta_full == pytest.approx(1265.9, abs=0.05)
    assert TH100.tau == pytest.approx(1265.9, abs=0.05)
    assert TH100.beta == pytest.approx(30.35, abs=0.005)


def test_zeta_enters_as_max_with_one():
    assert compute_thresholds(10, 10, 50, 0.0).eta_full == compute_thresholds(10, 10, 50, 1.0).eta_full
    assert compute_thresholds(10, 10, 50, 3.0).prefactor == pytest.approx(16 * 4)


def test_eta_block_monotone_and_nonnegative():
    th = compute_thresholds(30, 50, 700, 2.0)
    sizes = np.arange(1, 51)
    eta = th.eta_block(sizes)
    assert np.all(np.diff(eta) >= 0) and np.all(eta >= 0)
    assert th.eta_block(50) == pytest.approx(th.eta_full)
    assert th.tau >= 0 and th.beta >= 0


@pytest.mark.parametrize("args", [(0, 3, 1), (3, 3, 0), (3, 3, -1)])
def test_threshold_argument_checks(args):
    with pytest.raises(ValueError):
        compute_thresholds(*args)


# blockings -----------------------------------------------------------------


def test_reference_blocking_example():
    bl = reference_blocking(100, 100, 1e4)
    assert bl.sizes == [25, 25, 25, 25]
    assert bl.order.is_identity() and bl.provenance is Provenance.REFERENCE
    assert [b.tolist() for b in bl.blocks][1] == list(range(25, 50))


def test_reference_blocking_degenerate():
    assert reference_blocking(10, 10, 1).sizes == [10]
    assert reference_blocking(5, 1, 100).sizes == [1]


def test_reference_blocking_size_band():
    for n1, n2, N in [(50, 80, 3000), (20, 200, 5e4), (64, 64, 4096)]:
        u = n2 * np.sqrt(n1 * np.log(n1 * n2) / N)
        sizes = reference_blocking(n1, n2, N).sizes
        assert max(sizes) - min(sizes) <= 1
        if 1 <= u <= n2:
            assert all(u / 2 <= s <= u for s in sizes)


def test_blocking_type_validates():
    with pytest.raises(ValueError):
        Blocking((np.array([0, 1]), np.array([1, 2])), Permutation.identity(3), Provenance.DATA)
    with pytest.raises(ValueError):
        Blocking((np.array([0, 2]), np.array([1])), Permutation.identity(3), Provenance.DATA)


def test_blocking_subroutine_single_bin_example():
    Y1 = np.random.default_rng(0).random((100, 100))
    bl = blocking_subroutine(Y1, TH100)
    assert bl.sizes == [100] and bl.provenance is Provenance.DATA


def test_blocking_subroutine_equal_sums():
    th = compute_thresholds(20, 20, 200, 1.0, constant=0.01)
    bl = blocking_subroutine(np.ones((20, 20)), th)
    assert bl.sizes == [20]


def test_blocking_subroutine_merges_singletons():
    th = compute_thresholds(20, 20, 200, 1.0, constant=0.01)
    assert th.beta > 2 and np.ceil(20 / th.tau) >= 20
    sums = (np.arange(20) + 0.5) * th.tau
    order = np.random.default_rng(1).permutation(20)
    Y1 = np.zeros((20, 20))
    Y1[0, order] = sums
    bl = blocking_subroutine(Y1, th)
    assert bl.sizes == [8, 12]
    assert all(th.beta / 2 <= s <= 2 * th.beta for s in bl.sizes)
    assert bl.order == Permutation.from_order(order)


@pytest.mark.parametrize("seed", range(25))
def test_blocking_validity(seed):
    rng = np.random.default_rng(seed)
    n1, n2 = rng.integers(2, 40, size=2)
    th = compute_thresholds(n1, n2, rng.uniform(n1 * n2 / 4, 4 * n1 * n2), 1.0, constant=rng.uniform(0.01, 0.3))
    Y1 = rng.normal(size=(n1, n2)) * rng.uniform(0.1, 20, size=n2)
    bl = blocking_subroutine(Y1, th)
    pos = bl.order.ranks
    assert sorted(np.concatenate(bl.blocks).tolist()) == list(range(n2))
    for b in bl.blocks:
        p = np.sort(pos[b])
        assert p[-1] - p[0] == len(b) - 1
    small = [s for s in bl.sizes if s < th.beta / 2]
    if small:
        assert len(small) == 1 and all(s >= th.beta for s in bl.sizes if s not in small)


# topological sort ----------------------------------------------------------


def test_topological_sort_min_index():
    G = ComparisonGraph.from_edges(3, [(0, 1), (0, 2)])
    assert ranks(topological_sort(G)) == [0, 1, 2]


def test_topological_sort_respects_edges():
    G = ComparisonGraph.from_edges(4, [(3, 0), (2, 1), (3, 2)])
    pi = topological_sort(G)
    assert all(pi(u) < pi(v) for u, v in G.edges)
    assert ranks(pi) == [1, 3, 2, 0]


def test_topological_sort_cycle():
    assert topological_sort(ComparisonGraph.from_edges(2, [(0, 1), (1, 0)])) is None


def test_graph_rejects_self_loop():
    with pytest.raises(ValueError):
        ComparisonGraph.from_edges(2, [(1, 1)])


def test_topological_sort_uniform_on_empty_graph():
    G = ComparisonGraph.from_edges(3, [])
    counts = Counter(tuple(ranks(topological_sort(G, SortMode.RANDOM, seed=k))) for k in range(6000))
    assert len(counts) == 6
    for c in counts.values():
        assert abs(c / 6000 - 1 / 6) < 0.03


# borda ---------------------------------------------------------------------


def test_borda_examples():
    Y = np.array([[3.0], [1.0], [2.0]])
    assert Permutation.from_ranks_1based([3, 1, 2]) == borda_sort(Y)
    assert borda_sort(np.ones((4, 3))).is_identity()


def test_borda_random_ties_uniform():
    counts = Counter(tuple(ranks(borda_sort(np.ones((3, 2)), "random", seed=k))) for k in range(6000))
    assert len(counts) == 6
    assert all(abs(c / 6000 - 1 / 6) < 0.03 for c in counts.values())


def test_borda_random_mode_keeps_strict_order():
    Y = np.array([[1.0, 1.0], [5.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
    for k in range(20):
        r = borda_sort(Y, "random", seed=k).ranks
        assert r[3] == 0 and r[1] == 3


def test_borda_equivariance():
    rng = np.random.default_rng(2)
    for _ in range(20):
        Y = rng.random((7, 5))
        rho = Permutation.random(7, rng)
        permuted = permute_matrix(Y, rho, Permutation.identity(5))
        assert borda_sort(permuted) == borda_sort(Y).compose(rho)


def test_borda_graph_sorts_consistently():
    Y = np.random.default_rng(3).random((6, 4))
    assert topological_sort(borda_graph(Y)) == borda_sort(Y)


# thresholded sorting -------------------------------------------------------


def _separated(n, gap):
    return np.repeat(np.arange(n, dtype=float)[:, None] * gap, 3, axis=1)


def test_sort_partial_sums_noiseless_identity():
    th = compute_thresholds(6, 3, 1e12)
    Y = _separated(6, 1.0)
    assert 3 > th.eta_full
    assert sort_partial_sums(Y, reference_blocking(6, 3, 1e12), th).is_identity()


def test_sort_partial_sums_no_edges_identity():
    th = compute_thresholds(5, 4, 100)
    bl = reference_blocking(5, 4, 100)
    assert sort_partial_sums(np.full((5, 4), 0.3), bl, th).is_identity()


def test_sort_partial_sums_two_edges():
    th = compute_thresholds(3, 2, 1e8)
    big = 10 * th.eta_full
    Y = np.array([[big, 0.0], [2 * big, 0.0], [0.0, 0.0]])
    bl = Blocking((np.arange(2),), Permutation.identity(2), Provenance.REFERENCE)
    G = partial_sum_graph(Y, bl, th)
    assert G.edges == {(0, 1), (2, 0), (2, 1)}
    assert sort_partial_sums(Y, bl, th) == Permutation.from_ranks_1based([2, 3, 1])


def test_sort_partial_sums_block_edge_only():
    th = compute_thresholds(2, 4, 1e10)
    Y = np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
    bl = Blocking((np.array([0, 1]), np.array([2, 3])), Permutation.identity(4), Provenance.REFERENCE)
    G = partial_sum_graph(Y, bl, th)
    assert G.edges == {(0, 1), (1, 0)}
    pi, fell_back = resolve_graph(G, "random", seed=4)
    assert fell_back and len(pi) == 2


def test_fallbacks_are_seeded():
    G = ComparisonGraph.from_edges(8, [(0, 1), (1, 2), (2, 0)])
    a, fa = resolve_graph(G, "random", seed=11)
    b, fb = resolve_graph(G, "random", seed=11)
    assert fa and fb and a == b
    ident, fi = resolve_graph(G, "identity")
    assert fi and ident.is_identity()
    with pytest.raises(ValueError):
        resolve_graph(G, "other")


def test_edge_soundness_under_clean_signal():
    rng = np.random.default_rng(5)
    for _ in range(10):
        M = np.sort(np.sort(rng.random((12, 10)), axis=1), axis=0)
        th = compute_thresholds(12, 10, rng.uniform(1e3, 1e6), constant=0.05)
        bl = reference_blocking(12, 10, th.N)
        G = partial_sum_graph(M, bl, th)
        S, P = M.sum(axis=1), M @ bl.indicator()
        for u, v in G.edges:
            assert S[v] > S[u] or np.any(P[v] > P[u])
        assert topological_sort(G) is not None


@pytest.mark.parametrize("seed", range(50))
def test_shift_invariance_of_graphs(seed):
    rng = np.random.default_rng(seed)
    n1, n2 = rng.integers(3, 15, size=2)
    Y = rng.normal(size=(n1, n2)) * 3
    th = compute_thresholds(n1, n2, n1 * n2, constant=rng.uniform(0.01, 0.2))
    bl = reference_blocking(n1, n2, n1 * n2)
    shifted = Y + rng.normal() * 5
    assert borda_graph(shifted) == borda_graph(Y)
    assert partial_sum_graph(shifted, bl, th) == partial_sum_graph(Y, bl, th)


# two-dimensional sorting ---------------------------------------------------


def test_tds_noiseless_recovers_identity():
    M = (np.arange(8)[:, None] + 2 * np.arange(6)[None, :]) / 20
    th = compute_thresholds(8, 6, 1e14)
    est = two_dimensional_sort(M, M, th)
    assert est.pi_hat.is_identity() and est.sigma_hat.is_identity()
    assert not est.diagnostics["rows"]["fallback"]


def test_tds_constant_matrix_identity():
    M = np.full((5, 7), 0.4)
    est = two_dimensional_sort(M, M, compute_thresholds(5, 7, 1e9))
    assert est.pi_hat.is_identity() and est.sigma_hat.is_identity()
    assert est.diagnostics["rows"]["edges"] == 0 and est.diagnostics["cols"]["edges"] == 0


def test_tds_cycle_falls_back_to_identity():
    th = compute_thresholds(2, 4, 1e10, constant=1.0)
    Y2 = np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
    Y1 = np.array([[0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 1.0, 1.0]])
    est = two_dimensional_sort(Y1, Y2, th)
    assert est.diagnostics["rows"]["block_sizes"] == [2, 2]
    assert est.diagnostics["rows"]["fallback"]
    assert est.pi_hat.is_identity()


def test_tds_dimension_checks():
    th = compute_thresholds(3, 3, 10)
    with pytest.raises(ValueError):
        two_dimensional_sort(np.zeros((3, 3)), np.zeros((3, 2)), th)
    with pytest.raises(ValueError):
        two_dimensional_sort(np.zeros((3, 2)), np.zeros((3, 2)), th)


def test_tds_deterministic_given_seed():
    rng = np.random.default_rng(7)
    Y1, Y2 = rng.normal(size=(2, 20, 20))
    th = compute_thresholds(20, 20, 400, constant=0.05)
    a = two_dimensional_sort(Y1, Y2, th, seed=3, mode="random")
    b = two_dimensional_sort(Y1, Y2, th, seed=3, mode="random")
    assert a.pi_hat == b.pi_hat and a.sigma_hat == b.sigma_hat


# meta estimator -------------------------------------------------------------


def test_meta_fixed_point():
    B = np.array([[0.0, 0.25], [0.5, 1.0]])
    ident = Permutation.identity(2)
    np.testing.assert_allclose(meta_estimate(B, ident, ident), B)


def test_meta_projection_reduces_error():
    noise = NoiseModel.gaussian()
    for k in range(20):
        truth = generate_ground_truth("additive", 32, 32, seed=k)
        M = truth.M_star
        Y = build_observation_matrix(sample_observations(M, noise, 32 * 32, seed=100 + k))
        ident = Permutation.identity(32)
        assert frobenius_error(M, meta_estimate(Y, ident, ident, tol=1e-6)) < frobenius_error(M, Y)


def test_meta_with_borda_is_biso_along_estimate():
    truth = generate_ground_truth("additive", 64, 64, seed=1)
    Y = build_observation_matrix(sample_observations(truth.observed, NoiseModel.bernoulli(), 64 * 64, seed=2))
    pi, sigma = borda_sort(Y), borda_sort(Y.T)
    M_hat = meta_estimate(Y, pi, sigma, tol=1e-6)
    assert is_biso(permute_matrix(M_hat, pi.inverse(), sigma.inverse()), 1e-6)
