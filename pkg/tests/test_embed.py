import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import curve_fit

from imgcomplexity.embed import (EmbedConfig, FuzzyGraph, embed_dataset, fit_ab,
                                 fuzzy_cross_entropy, fuzzy_graph, fuzzy_union, init_embedding,
                                 load_embedding_points, membership_weights, optimize_embedding,
                                 phi, random_init, save_embedding, smooth_knn_dists,
                                 smooth_knn_row, spectral_init)
from imgcomplexity.intdim import knn_table


def two_clusters(seed=0, n=50, dim=10, gap=8.0):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(0, 1, (n, dim)), rng.normal(gap, 1, (n, dim))])
    return x, np.repeat([0, 1], n)


def curve_fit_oracle(min_dist, spread):
    d = np.linspace(0, 3 * spread, 300)
    target = np.where(d <= min_dist, 1.0, np.exp(-(d - min_dist) / spread))
    params, _ = curve_fit(lambda x, a, b: 1.0 / (1.0 + a * x ** (2 * b)), d, target)
    return params


def test_smooth_knn_hits_target_example():
    row = [1.0, 2.0, 3.0, 4.0]
    rho, sigma = smooth_knn_row(row, 4)
    assert rho == 1.0
    total = np.exp(-np.maximum(np.array(row) - rho, 0) / sigma).sum()
    assert total == pytest.approx(2.0, abs=1e-5)


def test_smooth_knn_equal_distances_terminates():
    rho, sigma = smooth_knn_row([3.0] * 5, 5)
    assert rho == 3.0
    w = membership_weights(np.array([[3.0] * 5]), np.array([rho]), np.array([sigma]))
    assert np.all(w == 1.0)


def test_smooth_knn_zero_row():
    rho, sigma = smooth_knn_row([0.0, 0.0, 0.0], 3)
    assert rho == 0.0 and np.isfinite(sigma)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=3, max_size=30), st.floats(0.01, 100.0))
def test_smooth_knn_target_and_scaling(values, scale):
    row = np.sort(np.array(values))
    k = len(row)
    rho, sigma = smooth_knn_row(row, k)
    w = np.exp(-np.maximum(row - rho, 0) / sigma)
    n_at_rho = np.sum(row <= rho)
    if n_at_rho < math.log2(k):
        assert abs(w.sum() - math.log2(k)) <= 1e-4
    rho_s, sigma_s = smooth_knn_row(row * scale, k)
    assert rho_s == pytest.approx(rho * scale, rel=1e-12)
    w_s = np.exp(-np.maximum(row * scale - rho_s, 0) / sigma_s)
    assert np.allclose(w_s, w, atol=1e-6)


def test_fuzzy_union_examples():
    g = fuzzy_union(2, [0, 1], [1, 0], [1.0, 1.0])
    assert g.weights.tolist() == [1.0]
    g = fuzzy_union(3, [0], [2], [0.3])
    assert (g.rows.tolist(), g.cols.tolist(), g.weights.tolist()) == ([0], [2], [0.3])
    g = fuzzy_union(2, [1, 0], [0, 1], [0.5, 0.4])
    assert g.weights[0] == pytest.approx(0.5 + 0.4 - 0.2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_fuzzy_graph_invariants(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(40, 3))
    table = knn_table(x, 6)
    g = fuzzy_graph(table, 6)
    assert np.all((g.weights > 0) & (g.weights <= 1))
    assert np.all(g.rows < g.cols)
    pairs = set(zip(g.rows.tolist(), g.cols.tolist()))
    assert len(pairs) == len(g.weights)
    full = g.to_sparse().toarray()
    assert np.array_equal(full, full.T)
    # union bounds against the directed weights
    rho, sigma = smooth_knn_dists(table.dists, 6)
    w = membership_weights(table.dists, rho, sigma)
    directed = np.zeros((40, 40))
    for i in range(40):
        directed[i, table.indices[i]] = w[i]
    upper = np.maximum(directed, directed.T)
    mask = full > 0
    assert np.all(full[mask] >= upper[mask] - 1e-15)
    assert np.all(full[mask] <= (directed + directed.T)[mask] + 1e-15)
    # re-applying the union to the i<j edge list changes nothing
    again = fuzzy_union(g.n, g.rows, g.cols, g.weights)
    assert np.array_equal(again.weights, g.weights) and np.array_equal(again.rows, g.rows)


def test_fit_ab_reference_and_oracle():
    a, b = fit_ab(0.1, 1.0)
    assert a == pytest.approx(1.577, abs=1e-3) and b == pytest.approx(0.895, abs=1e-3)
    oa, ob = curve_fit_oracle(0.1, 1.0)
    assert a == pytest.approx(oa, rel=1e-4) and b == pytest.approx(ob, rel=1e-4)


@pytest.mark.parametrize("min_dist,spread", [(0.001, 1.0), (0.25, 1.0), (0.5, 2.0), (0.1, 0.5)])
def test_fit_ab_matches_oracle_across_params(min_dist, spread):
    a, b = fit_ab(min_dist, spread)
    oa, ob = curve_fit_oracle(min_dist, spread)
    assert a == pytest.approx(oa, rel=1e-3) and b == pytest.approx(ob, rel=1e-3)


def test_fit_ab_monotone_in_min_dist():
    grid = [0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9]
    a_values = [fit_ab(m, 1.0)[0] for m in grid]
    assert all(x > y for x, y in zip(a_values, a_values[1:]))


def test_phi_shape():
    a, b = fit_ab(0.1, 1.0)
    d = np.linspace(0, 10, 500)
    values = phi(d, a, b)
    assert values[0] == 1.0
    assert np.all(np.diff(values) < 0)


def test_config_validation():
    for bad in (dict(n_neighbors=1), dict(min_dist=0.0), dict(min_dist=2.0, spread=1.0),
                dict(n_epochs=0), dict(init="pca")):
        with pytest.raises(ValueError):
            EmbedConfig(**bad)
    assert EmbedConfig().epochs_for(100) == 200
    assert EmbedConfig().epochs_for(20_000) == 500
    assert EmbedConfig(n_epochs=7).epochs_for(5) == 7


def test_random_init_deterministic_and_bounded():
    a, b = random_init(30, 4), random_init(30, 4)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) <= 10)


def clique_pair(size=6):
    rows, cols = [], []
    for base in (0, size):
        for i in range(size):
            for j in range(i + 1, size):
                rows.append(base + i)
                cols.append(base + j)
    return FuzzyGraph(2 * size, np.array(rows), np.array(cols), np.ones(len(rows)))


def test_spectral_init_separates_disconnected_cliques():
    g = clique_pair()
    pts = spectral_init(g, seed=1)
    assert pts is not None
    assert np.all(np.abs(pts) <= 10 + 1e-12)
    # oracle: dense eigendecomposition of the normalized Laplacian
    w = g.to_sparse().toarray()
    deg = w.sum(1)
    lap = np.eye(12) - w / np.sqrt(np.outer(deg, deg))
    evals, _ = np.linalg.eigh(lap)
    assert evals[1] == pytest.approx(0.0, abs=1e-12)
    first = pts[:, 0]
    assert len(set(np.sign(first[:6]))) == 1 and len(set(np.sign(first[6:]))) == 1
    assert np.sign(first[0]) != np.sign(first[6])


def test_spectral_init_matches_dense_eigenvectors():
    x, _ = two_clusters(seed=3, n=30, gap=1.0)
    g = fuzzy_graph(knn_table(x, 8), 8)
    pts = spectral_init(g, seed=0)
    w = g.to_sparse().toarray()
    deg = w.sum(1)
    lap = np.eye(g.n) - w / np.sqrt(np.outer(deg, deg))
    evals, evecs = np.linalg.eigh(lap)
    # connected, with separated eigenvalues 2, 3 and 4
    assert evals[1] > 1e-3
    assert evals[1] < evals[2] - 1e-3 and evals[2] < evals[3] - 1e-3
    for col, ref in zip(pts.T, evecs[:, 1:3].T):
        cos = abs(col @ ref) / np.linalg.norm(col)
        assert cos == pytest.approx(1.0, abs=1e-4)


def test_init_falls_back_to_random_when_tiny(caplog):
    g = FuzzyGraph(3, np.array([0]), np.array([1]), np.array([1.0]))
    pts, method = init_embedding(g, EmbedConfig(seed=2))
    assert method == "random" and np.array_equal(pts, random_init(3, 2))


def test_single_edge_attracts():
    g = FuzzyGraph(2, np.array([0]), np.array([1]), np.array([1.0]))
    start = np.array([[-5.0, 0.0], [5.0, 0.0]])
    cfg = EmbedConfig(n_neighbors=2, n_epochs=50, negative_samples=1, init="random")
    out = optimize_embedding(g, start, cfg)
    d0 = np.linalg.norm(start[0] - start[1])
    assert np.linalg.norm(out.points[0] - out.points[1]) < d0


def test_two_clusters_separate_and_loss_drops():
    x, labels = two_clusters()
    emb = embed_dataset(x, EmbedConfig(n_neighbors=10, seed=0))
    pts = emb.points
    assert np.all(np.isfinite(pts))
    assert emb.final_loss <= emb.initial_loss
    centroids = np.array([pts[labels == c].mean(0) for c in (0, 1)])
    nearest = np.argmin(((pts[:, None, :] - centroids[None]) ** 2).sum(-1), axis=1)
    assert np.mean(nearest == labels) >= 0.95
    table = knn_table(pts, 10)
    assert np.mean(labels[table.indices] == labels[:, None]) >= 0.9


def test_loss_matches_direct_sum():
    x, _ = two_clusters(n=8, dim=3)
    g = fuzzy_graph(knn_table(x, 4), 4)
    pts = random_init(g.n, 1)
    a, b = fit_ab(0.1, 1.0)
    w = g.to_sparse().toarray()
    total = 0.0
    for i in range(g.n):
        for j in range(i + 1, g.n):
            p = 1 / (1 + a * np.sum((pts[i] - pts[j]) ** 2) ** b)
            p = min(max(p, 1e-4), 1 - 1e-4)
            wij = w[i, j]
            if wij > 0:
                total += wij * math.log(wij / p)
            if wij < 1:
                total += (1 - wij) * math.log((1 - wij) / (1 - p))
    assert fuzzy_cross_entropy(g, pts, a, b) == pytest.approx(total, rel=1e-10)


def test_smallest_complete_graph():
    x = np.random.default_rng(0).normal(size=(5, 3))
    emb = embed_dataset(x, EmbedConfig(n_neighbors=4, n_epochs=30))
    assert emb.points.shape == (5, 2) and np.all(np.isfinite(emb.points))
    with pytest.raises(ValueError):
        embed_dataset(x, EmbedConfig(n_neighbors=5))


def test_fixed_seed_bit_reproducible():
    x, _ = two_clusters(seed=4)
    cfg = EmbedConfig(n_neighbors=12, seed=11)
    a = embed_dataset(x, cfg, threads=1)
    b = embed_dataset(x, cfg, threads=4)
    assert a.points.tobytes() == b.points.tobytes()
    c = embed_dataset(x, EmbedConfig(n_neighbors=12, seed=12))
    assert not np.array_equal(a.points, c.points)


def test_parallel_mode_runs():
    x, _ = two_clusters(seed=5, n=20)
    emb = embed_dataset(x, EmbedConfig(n_neighbors=5, n_epochs=40, deterministic=False))
    assert np.all(np.isfinite(emb.points))


def test_save_embedding_roundtrip(tmp_path):
    x, _ = two_clusters(n=10, dim=3)
    emb = embed_dataset(x, EmbedConfig(n_neighbors=4, n_epochs=20))
    sidecar = save_embedding(emb, tmp_path / "e" / "k4.csv")
    assert np.array_equal(load_embedding_points(tmp_path / "e" / "k4.csv"), emb.points)
    meta = json.loads(sidecar.read_text())
    assert meta["config"]["n_neighbors"] == 4 and meta["final_loss"] == emb.final_loss
    header = (tmp_path / "e" / "k4.csv").read_text().splitlines()[0]
    assert header == "sample_id,x,y"
