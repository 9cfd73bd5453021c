"""Two-dimensional UMAP-style embedding of a feature set.

The pipeline is: exact k-NN table -> locally normalized membership weights ->
fuzzy union into an undirected graph -> spectral (or random) initialization
-> cross-entropy SGD with negative sampling.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numba
import numpy as np
import scipy.sparse as sp

from .intdim import FeatureSet, KnnTable, knn_table

log = logging.getLogger(__name__)

SIGMA_BOUNDS = (1e-12, 1e12)
PHI_CLAMP = 1e-4


class EmbedError(Exception):
    pass


class AbFitError(EmbedError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class DivergedError(EmbedError):
    def __init__(self, epoch):
        super().__init__(f"non-finite coordinate at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class EmbedConfig:
    n_neighbors: int = 15
    min_dist: float = 0.1
    spread: float = 1.0
    n_epochs: int | None = None  # None: 200 up to 10k samples, 500 beyond
    negative_samples: int = 5
    learning_rate: float = 1.0
    init: str = "spectral"
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be >= 2")
        if not 0 < self.min_dist <= self.spread:
            raise ValueError("need 0 < min_dist <= spread")
        if self.n_epochs is not None and self.n_epochs < 1:
            raise ValueError("n_epochs must be >= 1")
        if self.init not in ("spectral", "random"):
            raise ValueError(f"unknown init {self.init!r}")

    def epochs_for(self, n: int) -> int:
        if self.n_epochs is not None:
            return self.n_epochs
        return 200 if n <= 10_000 else 500

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FuzzyGraph:
    """Undirected weighted graph stored once per pair with ``rows < cols``."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    def to_sparse(self) -> sp.csr_matrix:
        upper = sp.coo_matrix((self.weights, (self.rows, self.cols)), shape=(self.n, self.n))
        return (upper + upper.T).tocsr()


@dataclass
class Embedding2D:
    points: np.ndarray
    config: EmbedConfig
    final_loss: float
    initial_loss: float = float("nan")
    a: float = float("nan")
    b: float = float("nan")
    init_method: str = ""
    runtime: float = 0.0
    extra: dict = field(default_factory=dict)

    def sidecar(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n": int(self.points.shape[0]),
            "final_loss": self.final_loss,
            "initial_loss": self.initial_loss,
            "a": self.a,
            "b": self.b,
            "init_method": self.init_method,
            "runtime": self.runtime,
            **self.extra,
        }


# --- local metric and graph ------------------------------------------------

def smooth_knn_dists(dists: np.ndarray, n_neighbors: int, n_iter: int = 64
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Per-row ``rho`` and ``sigma`` so the membership weights sum to ``log2(k)``.

    Bisection runs on ``log(sigma)`` over ``SIGMA_BOUNDS`` for all rows at once.
    """
    d = np.asarray(dists, dtype=np.float64)[:, :n_neighbors]
    if d.shape[1] < n_neighbors:
        raise ValueError(f"rows have {d.shape[1]} entries, need {n_neighbors}")
    target = np.log2(n_neighbors)
    positive = np.where(d > 0, d, np.inf)
    rho = positive.min(axis=1)
    rho[~np.isfinite(rho)] = 0.0
    excess = np.maximum(d - rho[:, None], 0.0)

    def mass(sigma):
        return np.exp(-excess / sigma[:, None]).sum(axis=1)

    lo = np.full(d.shape[0], np.log(SIGMA_BOUNDS[0]))
    hi = np.full(d.shape[0], np.log(SIGMA_BOUNDS[1]))
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        over = mass(np.exp(mid)) > target
        hi = np.where(over, mid, hi)
        lo = np.where(over, lo, mid)
    s_lo, s_hi = np.exp(lo), np.exp(hi)
    pick_hi = np.abs(mass(s_hi) - target) < np.abs(mass(s_lo) - target)
    return rho, np.where(pick_hi, s_hi, s_lo)


def smooth_knn_row(row, n_neighbors: int) -> tuple[float, float]:
    rho, sigma = smooth_knn_dists(np.asarray(row, dtype=np.float64)[None, :], n_neighbors)
    return float(rho[0]), float(sigma[0])


def membership_weights(dists: np.ndarray, rho: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return np.exp(-np.maximum(dists - rho[:, None], 0.0) / sigma[:, None])


def fuzzy_union(n: int, rows, cols, weights) -> FuzzyGraph:
    """Symmetrize directed memberships with ``w = a + b - a*b``.

    Feeding the result back in returns it unchanged, since an ``i < j`` edge
    list has no reverse entries to combine with.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    keep = (rows != cols) & (weights > 0)
    a = sp.coo_matrix((weights[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    a.sum_duplicates()
    at = a.T.tocsr()
    union = sp.triu(a + at - a.multiply(at), k=1).tocoo()
    union.eliminate_zeros()
    order = np.lexsort((union.col, union.row))
    w = np.minimum(union.data[order], 1.0)
    return FuzzyGraph(n, union.row[order].astype(np.int64), union.col[order].astype(np.int64), w)


def fuzzy_graph(table: KnnTable, n_neighbors: int) -> FuzzyGraph:
    if n_neighbors > table.k_max:
        raise ValueError(f"n_neighbors={n_neighbors} exceeds table k_max={table.k_max}")
    d = table.dists[:, :n_neighbors]
    idx = table.indices[:, :n_neighbors]
    rho, sigma = smooth_knn_dists(d, n_neighbors)
    w = membership_weights(d, rho, sigma)
    rows = np.repeat(np.arange(table.n), n_neighbors)
    return fuzzy_union(table.n, rows, idx.ravel(), w.ravel())


# --- low-dimensional similarity curve -----------------------------------------

def phi(d, a: float, b: float):
    return 1.0 / (1.0 + a * np.power(d, 2.0 * b))


def fit_ab(min_dist: float = 0.1, spread: float = 1.0, max_iter: int = 500,
           tol: float = 1e-6) -> tuple[float, float]:
    """Levenberg-Marquardt fit of ``1/(1 + a d^(2b))`` to the offset-exponential target."""
    if not 0 < min_dist <= spread:
        raise ValueError("need 0 < min_dist <= spread")
    d = np.linspace(0.0, 3.0 * spread, 300)
    target = np.where(d <= min_dist, 1.0, np.exp(-(d - min_dist) / spread))
    logd = np.log(np.where(d > 0, d, 1.0))

    def residual(p):
        return phi(d, p[0], p[1]) - target

    p = np.array([1.0, 1.0])
    r = residual(p)
    cost = r @ r
    lam = 1e-3
    for _ in range(max_iter):
        u = np.power(d, 2.0 * p[1])
        denom = (1.0 + p[0] * u) ** 2
        jac = np.column_stack([-u / denom, -p[0] * u * 2.0 * logd / denom])
        jtj = jac.T @ jac
        grad = jac.T @ r
        step = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj)), -grad)
        trial = p + step
        if np.all(trial > 0):
            r_trial = residual(trial)
            cost_trial = r_trial @ r_trial
        else:
            cost_trial = np.inf
        if cost_trial < cost:
            p, r, cost = trial, r_trial, cost_trial
            lam = max(lam / 10.0, 1e-12)
            if np.all(np.abs(step) <= tol * (np.abs(p) + tol)):
                return float(p[0]), float(p[1])
        else:
            lam *= 10.0
            if lam > 1e12:
                # no descent direction left at machine precision
                return float(p[0]), float(p[1])
    raise AbFitError(f"a/b fit did not converge in {max_iter} iterations", best=tuple(p))


# --- initialization ----------------------------------------------------------

def random_init(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-10.0, 10.0, size=(n, 2))


def spectral_init(graph: FuzzyGraph, seed: int = 0, max_iter: int = 2000,
                  tol: float = 1e-6) -> np.ndarray | None:
    """Eigenvectors 2 and 3 of the normalized Laplacian via deflated block power iteration.

    Iterates on ``I + D^-1/2 W D^-1/2`` (spectrum in [0, 2]) after projecting out
    the trivial eigenvector ``sqrt(deg)``. Returns None if it does not converge.
    """
    n = graph.n
    if n < 4:
        return None
    w = graph.to_sparse()
    deg = np.asarray(w.sum(axis=1)).ravel()
    dinv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    norm_adj = sp.diags(dinv) @ w @ sp.diags(dinv)
    trivial = np.sqrt(deg)
    if trivial.any():
        trivial /= np.linalg.norm(trivial)

    def apply(v):
        return v + norm_adj @ v

    def deflate(v):
        return v - np.outer(trivial, trivial @ v)

    v, _ = np.linalg.qr(deflate(np.random.default_rng(seed).normal(size=(n, 2))))
    for it in range(max_iter):
        mv = deflate(apply(v))
        if it % 10 == 9:
            h = v.T @ mv
            if np.linalg.norm(mv - v @ h) < tol:
                break
        v, _ = np.linalg.qr(mv)
    else:
        return None
    h = v.T @ deflate(apply(v))
    evals, evecs = np.linalg.eigh(0.5 * (h + h.T))
    coords = v @ evecs[:, ::-1]
    scale = np.abs(coords).max()
    if not np.isfinite(scale) or scale == 0:
        return None
    return coords * (10.0 / scale)


def init_embedding(graph: FuzzyGraph, config: EmbedConfig) -> tuple[np.ndarray, str]:
    if config.init == "spectral":
        pts = spectral_init(graph, config.seed)
        if pts is not None:
            return pts, "spectral"
        log.warning("event=spectral_init_fallback n=%d reason=no_convergence", graph.n)
    return random_init(graph.n, config.seed), "random"


# --- optimization ----------------------------------------------------------

_U13 = np.uint64(13)
_U7 = np.uint64(7)
_U17 = np.uint64(17)


@numba.njit(cache=True)
def _xorshift(state):
    x = state[0]
    x ^= x << _U13
    x ^= x >> _U7
    x ^= x << _U17
    state[0] = x
    return x


@numba.njit(cache=True)
def _clip(v):
    if v > 4.0:
        return 4.0
    if v < -4.0:
        return -4.0
    return v


@numba.njit(cache=True)
def _attract(emb, j, k, a, b, alpha):
    dx = emb[j, 0] - emb[k, 0]
    dy = emb[j, 1] - emb[k, 1]
    dist2 = dx * dx + dy * dy
    coeff = 0.0
    if dist2 > 0.0:
        coeff = -2.0 * a * b * dist2 ** (b - 1.0) / (a * dist2**b + 1.0)
    gx = _clip(coeff * dx) * alpha
    gy = _clip(coeff * dy) * alpha
    emb[j, 0] += gx
    emb[j, 1] += gy
    emb[k, 0] -= gx
    emb[k, 1] -= gy


@numba.njit(cache=True)
def _repel(emb, j, k, a, b, alpha):
    dx = emb[j, 0] - emb[k, 0]
    dy = emb[j, 1] - emb[k, 1]
    dist2 = dx * dx + dy * dy
    if dist2 > 0.0:
        coeff = 2.0 * b / ((0.001 + dist2) * (a * dist2**b + 1.0))
        emb[j, 0] += _clip(coeff * dx) * alpha
        emb[j, 1] += _clip(coeff * dy) * alpha
    else:
        emb[j, 0] += 4.0 * alpha
        emb[j, 1] += 4.0 * alpha


@numba.njit(cache=True)
def _sgd_sequential(emb, head, tail, epochs_per_sample, a, b, n_epochs, negative_samples,
                    learning_rate, state):
    n_vertices = emb.shape[0]
    n_edges = head.shape[0]
    next_sample = epochs_per_sample.copy()
    per_negative = epochs_per_sample / negative_samples
    next_negative = per_negative.copy()
    for epoch in range(n_epochs):
        alpha = learning_rate * (1.0 - epoch / n_epochs)
        for e in range(n_edges):
            if next_sample[e] > epoch:
                continue
            j = head[e]
            _attract(emb, j, tail[e], a, b, alpha)
            next_sample[e] += epochs_per_sample[e]
            n_neg = int((epoch - next_negative[e]) / per_negative[e])
            for _ in range(n_neg):
                k = np.int64(_xorshift(state) % np.uint64(n_vertices))
                if k == j:
                    continue
                _repel(emb, j, k, a, b, alpha)
            next_negative[e] += n_neg * per_negative[e]
        for i in range(n_vertices):
            if not (np.isfinite(emb[i, 0]) and np.isfinite(emb[i, 1])):
                return epoch
    return -1


@numba.njit(parallel=True, cache=True)
def _sgd_parallel(emb, head, tail, epochs_per_sample, a, b, n_epochs, negative_samples,
                  learning_rate, seed):
    # Unsynchronized point updates; output varies run to run.
    n_vertices = emb.shape[0]
    n_edges = head.shape[0]
    next_sample = epochs_per_sample.copy()
    per_negative = epochs_per_sample / negative_samples
    next_negative = per_negative.copy()
    for epoch in range(n_epochs):
        alpha = learning_rate * (1.0 - epoch / n_epochs)
        for e in numba.prange(n_edges):
            if next_sample[e] > epoch:
                continue
            j = head[e]
            _attract(emb, j, tail[e], a, b, alpha)
            next_sample[e] += epochs_per_sample[e]
            n_neg = int((epoch - next_negative[e]) / per_negative[e])
            state = np.empty(1, dtype=np.uint64)
            state[0] = np.uint64(seed) ^ (np.uint64(e) * np.uint64(0x9E3779B97F4A7C15)) \
                ^ (np.uint64(epoch + 1) << np.uint64(32)) | np.uint64(1)
            for _ in range(n_neg):
                k = np.int64(_xorshift(state) % np.uint64(n_vertices))
                if k == j:
                    continue
                _repel(emb, j, k, a, b, alpha)
            next_negative[e] += n_neg * per_negative[e]
    for i in range(n_vertices):
        if not (np.isfinite(emb[i, 0]) and np.isfinite(emb[i, 1])):
            return n_epochs - 1
    return -1


@numba.njit(cache=True)
def _cross_entropy(emb, rows, cols, weights, a, b, clamp):
    n = emb.shape[0]
    total = 0.0
    # every pair first as a non-edge (w = 0) ...
    for i in range(n):
        for j in range(i + 1, n):
            dx = emb[i, 0] - emb[j, 0]
            dy = emb[i, 1] - emb[j, 1]
            p = 1.0 / (1.0 + a * (dx * dx + dy * dy) ** b)
            p = min(max(p, clamp), 1.0 - clamp)
            total -= np.log(1.0 - p)
    # ... then swap in the edge terms
    for e in range(rows.shape[0]):
        i = rows[e]
        j = cols[e]
        w = weights[e]
        dx = emb[i, 0] - emb[j, 0]
        dy = emb[i, 1] - emb[j, 1]
        p = 1.0 / (1.0 + a * (dx * dx + dy * dy) ** b)
        p = min(max(p, clamp), 1.0 - clamp)
        term = w * np.log(w / p)
        if w < 1.0:
            term += (1.0 - w) * np.log((1.0 - w) / (1.0 - p))
        total += term + np.log(1.0 - p)
    return total


def fuzzy_cross_entropy(graph: FuzzyGraph, points: np.ndarray, a: float, b: float) -> float:
    """Cross-entropy between graph memberships and ``phi`` over all unordered pairs."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    return float(_cross_entropy(pts, graph.rows, graph.cols, graph.weights,
                                float(a), float(b), PHI_CLAMP))


def _seed_state(seed: int) -> np.ndarray:
    # splitmix64 scramble so small seeds give well-mixed, nonzero xorshift states
    z = (int(seed) + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 31
    return np.array([z or 1], dtype=np.uint64)


def optimize_embedding(graph: FuzzyGraph, points: np.ndarray, config: EmbedConfig,
                       a: float | None = None, b: float | None = None) -> Embedding2D:
    points = np.asarray(points, dtype=np.float64)
    if points.shape != (graph.n, 2):
        raise ValueError(f"points shape {points.shape} does not match graph n={graph.n}")
    if a is None or b is None:
        a, b = fit_ab(config.min_dist, config.spread)
    n_epochs = config.epochs_for(graph.n)
    start = time.perf_counter()
    emb = np.ascontiguousarray(points.copy())
    initial_loss = fuzzy_cross_entropy(graph, emb, a, b)

    head = np.concatenate([graph.rows, graph.cols])
    tail = np.concatenate([graph.cols, graph.rows])
    w = np.concatenate([graph.weights, graph.weights])
    if w.size:
        # edges too weak to be sampled even once are dropped
        keep = w >= w.max() / n_epochs
        head, tail, w = head[keep], tail[keep], w[keep]
        epochs_per_sample = w.max() / w
    else:
        epochs_per_sample = w

    if config.deterministic:
        bad = _sgd_sequential(emb, head, tail, epochs_per_sample, float(a), float(b),
                              n_epochs, float(config.negative_samples),
                              float(config.learning_rate), _seed_state(config.seed))
    else:
        bad = _sgd_parallel(emb, head, tail, epochs_per_sample, float(a), float(b),
                            n_epochs, float(config.negative_samples),
                            float(config.learning_rate), int(_seed_state(config.seed)[0]))
    if bad >= 0:
        raise DivergedError(int(bad))
    final_loss = fuzzy_cross_entropy(graph, emb, a, b)
    return Embedding2D(emb, config, final_loss, initial_loss, float(a), float(b),
                       runtime=time.perf_counter() - start,
                       extra={"n_epochs": n_epochs})


def embed_dataset(features: FeatureSet | np.ndarray, config: EmbedConfig = EmbedConfig(),
                  threads: int = 1, table: KnnTable | None = None) -> Embedding2D:
    """k-NN table -> fuzzy graph -> a/b fit -> init -> SGD.

    A precomputed ``table`` with at least ``n_neighbors`` columns may be passed
    to share one k-NN pass across a neighbour-count sweep.
    """
    start = time.perf_counter()
    x = np.asarray(getattr(features, "values", features), dtype=np.float64)
    n = x.shape[0]
    if n <= config.n_neighbors:
        raise ValueError(f"need more than n_neighbors={config.n_neighbors} samples, got {n}")
    if table is None or table.k_max < config.n_neighbors:
        table = knn_table(x, config.n_neighbors, threads=threads)
    graph = fuzzy_graph(table, config.n_neighbors)
    a, b = fit_ab(config.min_dist, config.spread)
    points, method = init_embedding(graph, config)
    result = optimize_embedding(graph, points, config, a, b)
    result.init_method = method
    result.runtime = time.perf_counter() - start
    return result


def with_neighbors(config: EmbedConfig, n_neighbors: int) -> EmbedConfig:
    return replace(config, n_neighbors=n_neighbors)


def save_embedding(embedding: Embedding2D, csv_path: str | Path) -> Path:
    """Write ``sample_id,x,y`` rows and a ``.json`` sidecar next to it."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "x", "y"])
        for i, (x, y) in enumerate(embedding.points):
            writer.writerow([i, repr(float(x)), repr(float(y))])
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps(embedding.sidecar(), indent=2) + "\n")
    return sidecar


def load_embedding_points(csv_path: str | Path) -> np.ndarray:
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["x"]), float(r["y"])] for r in rows]).reshape(-1, 2)
