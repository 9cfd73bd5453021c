"""Maximum-likelihood intrinsic dimensionality from exact k-nearest-neighbour distances."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .entropy import compute_glcm
from .ingest import DatasetManifest, downsample, load_grayscale

FEATURE_MODES = ("flat_pixels", "glcm_flat")


class IdError(Exception):
    pass


class NoSamplesError(IdError):
    pass


class KTooLargeError(IdError):
    pass


class DegeneratePointError(IdError):
    pass


class AllDegenerateError(IdError):
    pass


@dataclass
class FeatureSet:
    values: np.ndarray
    mode: str = "flat_pixels"
    sample_ids: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class KnnTable:
    dists: np.ndarray
    indices: np.ndarray

    @property
    def n(self) -> int:
        return self.dists.shape[0]

    @property
    def k_max(self) -> int:
        return self.dists.shape[1]


@dataclass
class IdEstimate:
    per_k: dict[int, float]
    pooled: float
    k_range: tuple[int, int]
    n: int
    degenerate: int = 0

    def to_dict(self) -> dict:
        return {
            "k_range": list(self.k_range),
            "per_k": {str(k): v for k, v in self.per_k.items()},
            "pooled": self.pooled,
            "n": self.n,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IdEstimate":
        return cls(
            per_k={int(k): float(v) for k, v in d["per_k"].items()},
            pooled=float(d["pooled"]),
            k_range=tuple(d["k_range"]),
            n=int(d["n"]),
            degenerate=int(d.get("degenerate", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def image_features(image: np.ndarray, mode: str = "flat_pixels", side: int = 32,
                   glcm_levels: int = 32) -> np.ndarray:
    if mode == "flat_pixels":
        if side < 2:
            raise ValueError("side must be >= 2")
        return downsample(image, side, side).astype(np.float64).ravel() / 255.0
    if mode == "glcm_flat":
        if glcm_levels > 64:
            raise ValueError("glcm_levels must be <= 64 for feature vectors")
        return compute_glcm(image, glcm_levels, (1, 0), symmetric=True).probs.ravel()
    raise ValueError(f"unknown feature mode {mode!r}; expected one of {FEATURE_MODES}")


def features_from_images(images: Iterable[np.ndarray], mode: str = "flat_pixels",
                         side: int = 32, glcm_levels: int = 32) -> FeatureSet:
    rows = [image_features(img, mode, side, glcm_levels) for img in images]
    if not rows:
        raise NoSamplesError("no images to build features from")
    return FeatureSet(np.vstack(rows), mode, [str(i) for i in range(len(rows))])


def build_features(manifest: DatasetManifest, mode: str = "flat_pixels", side: int = 32,
                   glcm_levels: int = 32, loader: Callable = load_grayscale,
                   threads: int = 1) -> FeatureSet:
    """Load every manifest entry and map it to a feature vector, in manifest order."""
    if manifest.count == 0:
        raise NoSamplesError(f"dataset {manifest.dataset_id!r} has no images")

    def one(path):
        return image_features(loader(path), mode, side, glcm_levels)

    paths = manifest.paths()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, paths))
    else:
        rows = [one(p) for p in paths]
    return FeatureSet(np.vstack(rows), mode, [rel for rel, _ in manifest.entries])


def _knn_rows(x: np.ndarray, centered: np.ndarray, sq: np.ndarray, lo: int, hi: int,
              k_max: int) -> tuple[np.ndarray, np.ndarray]:
    # Screen candidates with the Gram expansion, then recompute their distances
    # from coordinate differences so the result does not depend on the chunking.
    d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (centered[lo:hi] @ centered.T)
    np.maximum(d2, 0.0, out=d2)
    rows = np.arange(lo, hi)
    d2[rows - lo, rows] = np.inf
    kth = np.partition(d2, k_max - 1, axis=1)[:, k_max - 1]
    tol = 1e-8 * (sq[lo:hi] + sq.max()) + 1e-300
    dists = np.empty((hi - lo, k_max))
    idx = np.empty((hi - lo, k_max), dtype=np.int64)
    for r, i in enumerate(rows):
        cand = np.flatnonzero(d2[r] <= kth[r] + tol[r])
        cand = cand[cand != i]
        diff = x[cand] - x[i]
        exact = np.sqrt(np.sum(diff * diff, axis=1))
        order = np.lexsort((cand, exact))[:k_max]
        dists[r] = exact[order]
        idx[r] = cand[order]
    return dists, idx


def knn_table(features: FeatureSet | np.ndarray, k_max: int, threads: int = 1,
              chunk: int = 256) -> KnnTable:
    """Exact Euclidean k-NN for every sample, self excluded, ties broken by index."""
    x = np.asarray(getattr(features, "values", features), dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise NoSamplesError("need at least two samples for nearest neighbours")
    if k_max >= n:
        raise KTooLargeError(f"k_max={k_max} must be smaller than the sample count {n}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("feature values must be finite")

    centered = x - x.mean(axis=0)
    sq = np.einsum("ij,ij->i", centered, centered)
    bounds = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]

    def work(b):
        return _knn_rows(x, centered, sq, b[0], b[1], k_max)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    return KnnTable(np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts]))


def mle_id_point(row: Sequence[float], k: int) -> float:
    """Levina-Bickel estimate at one sample from its sorted neighbour distances.

    Zero distances among the first k-1 neighbours are dropped from the sum
    (and from the normalizer).
    """
    row = np.asarray(row, dtype=np.float64)
    if not 2 <= k <= row.shape[0]:
        raise ValueError(f"k={k} must be in [2, {row.shape[0]}]")
    t_k = row[k - 1]
    if t_k <= 0:
        raise DegeneratePointError("all k neighbours coincide with the sample")
    t_j = row[: k - 1]
    t_j = t_j[t_j > 0]
    total = float(np.sum(np.log(t_k / t_j)))
    if t_j.size == 0 or total <= 0:
        raise DegeneratePointError("neighbour distances are all equal; estimator diverges")
    return t_j.size / total


def _mle_column(dists: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    t_k = dists[:, k - 1 : k]
    t_j = dists[:, : k - 1]
    valid = t_j > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(valid, np.log(t_k / np.where(valid, t_j, 1.0)), 0.0)
    total = logs.sum(axis=1)
    count = valid.sum(axis=1)
    ok = (t_k[:, 0] > 0) & (count > 0) & (total > 0)
    est = np.full(dists.shape[0], np.nan)
    est[ok] = count[ok] / total[ok]
    return est, ok


def mle_id_dataset(table: KnnTable, k1: int = 10, k2: int = 20) -> IdEstimate:
    """Average the per-sample estimates for each k in ``[k1, k2]``, then over k."""
    if not 2 <= k1 <= k2 <= table.k_max:
        raise ValueError(f"need 2 <= k1 <= k2 <= k_max={table.k_max}, got [{k1}, {k2}]")
    per_k = {}
    bad = np.zeros(table.n, dtype=bool)
    for k in range(k1, k2 + 1):
        est, ok = _mle_column(table.dists, k)
        if not ok.any():
            raise AllDegenerateError(f"every sample is degenerate at k={k}")
        bad |= ~ok
        per_k[k] = float(np.mean(est[ok]))
    pooled = float(np.mean(list(per_k.values())))
    return IdEstimate(per_k, pooled, (k1, k2), table.n, int(bad.sum()))


def estimate_id(features: FeatureSet | np.ndarray, k1: int = 10, k2: int = 20,
                threads: int = 1) -> IdEstimate:
    return mle_id_dataset(knn_table(features, k2, threads=threads), k1, k2)
