"""Per-image entropy measures: pixel Shannon entropy, GLCM entropy and delentropy.

All entropies are in bits (log base 2).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from .ingest import check_gray


class EntropyError(Exception):
    pass


class EmptyHistogramError(EntropyError):
    pass


class NoPairsError(EntropyError):
    pass


class BadBinsError(EntropyError):
    pass


@dataclass(frozen=True)
class EntropyConfig:
    levels: int = 256
    offset: tuple[int, int] = (1, 0)
    symmetric: bool = True
    bins: int = 255
    half_factor: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["offset"] = list(self.offset)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EntropyConfig":
        d = dict(d)
        if "offset" in d:
            d["offset"] = tuple(int(v) for v in d["offset"])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class GlcmMatrix:
    levels: int
    offset: tuple[int, int]
    probs: np.ndarray
    symmetric: bool = False


@dataclass
class GradientField:
    fx: np.ndarray
    fy: np.ndarray

    @property
    def height(self) -> int:
        return self.fx.shape[0]

    @property
    def width(self) -> int:
        return self.fx.shape[1]


@dataclass
class DelDensity:
    """Joint histogram over (fx, fy); ``bins[i, j]`` indexes fx along axis 0."""

    bins: np.ndarray
    limit: float = 127.5


@dataclass
class EntropyRecord:
    image_path: str
    width: int
    height: int
    shannon: float
    glcm_entropy: float
    delentropy: float

    CSV_HEADER = ("path", "width", "height", "shannon", "glcm_entropy", "delentropy")

    def csv_row(self) -> list[str]:
        return [self.image_path, str(self.width), str(self.height),
                repr(self.shannon), repr(self.glcm_entropy), repr(self.delentropy)]

    @classmethod
    def from_csv_row(cls, row: dict) -> "EntropyRecord":
        return cls(row["path"], int(row["width"]), int(row["height"]),
                   float(row["shannon"]), float(row["glcm_entropy"]), float(row["delentropy"]))


def _entropy_bits(probs: np.ndarray) -> float:
    p = probs[probs > 0]
    # max(0, .) only guards -0.0 from the single-cell case
    return max(0.0, float(-np.sum(p * np.log2(p))))


def pixel_histogram(image: np.ndarray) -> np.ndarray:
    image = check_gray(image)
    return np.bincount(image.ravel(), minlength=256).astype(np.int64)


def shannon_entropy(hist: np.ndarray) -> float:
    hist = np.asarray(hist)
    total = hist.sum()
    if total <= 0:
        raise EmptyHistogramError("histogram has no counts")
    return _entropy_bits(hist / total)


def quantize(image: np.ndarray, levels: int) -> np.ndarray:
    return (image.astype(np.int64) * levels) >> 8


def compute_glcm(image: np.ndarray, levels: int = 256, offset: tuple[int, int] = (1, 0),
                 symmetric: bool = True) -> GlcmMatrix:
    """Normalized co-occurrence matrix of quantized gray levels.

    Pairs are ``(q[y, x], q[y + dy, x + dx])`` over every position where
    both pixels are in bounds.
    """
    image = check_gray(image)
    if not 2 <= levels <= 256:
        raise ValueError(f"levels must be in [2, 256], got {levels}")
    dx, dy = (int(v) for v in offset)
    if dx == 0 and dy == 0:
        raise ValueError("offset must be nonzero")
    h, w = image.shape
    if abs(dx) >= w or abs(dy) >= h:
        raise NoPairsError(f"offset {(dx, dy)} leaves no pixel pairs in a {w}x{h} image")

    q = quantize(image, levels)
    ys, ye = max(0, -dy), h - max(0, dy)
    xs, xe = max(0, -dx), w - max(0, dx)
    first = q[ys:ye, xs:xe]
    second = q[ys + dy:ye + dy, xs + dx:xe + dx]
    counts = np.bincount((first * levels + second).ravel(),
                         minlength=levels * levels).reshape(levels, levels)
    if symmetric:
        counts = counts + counts.T
    probs = counts / counts.sum()
    return GlcmMatrix(levels, (dx, dy), probs, symmetric)


def glcm_entropy(glcm: GlcmMatrix) -> float:
    return _entropy_bits(glcm.probs)


def gradient_field(image: np.ndarray) -> GradientField:
    """Central differences with mirrored borders.

    At a border the mirrored neighbour equals the border pixel itself, so the
    derivative there is a one-sided difference at half weight.
    """
    image = check_gray(image)
    padded = np.pad(image.astype(np.float64), 1, mode="symmetric")
    fx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    fy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return GradientField(fx, fy)


def bin_index(values: np.ndarray, bins: int, limit: float) -> np.ndarray:
    """Map values in ``[-limit, limit]`` linearly onto ``bins`` cells, clamping."""
    idx = np.floor((np.asarray(values, dtype=np.float64) + limit) * bins / (2.0 * limit))
    return np.clip(idx, 0, bins - 1).astype(np.int64)


def deldensity(field: GradientField, bins: int = 255, limit: float = 127.5) -> DelDensity:
    if bins < 3 or bins % 2 == 0:
        raise BadBinsError(f"deldensity bins must be odd and >= 3, got {bins}")
    ix = bin_index(field.fx.ravel(), bins, limit)
    iy = bin_index(field.fy.ravel(), bins, limit)
    counts = np.bincount(ix * bins + iy, minlength=bins * bins).reshape(bins, bins)
    return DelDensity(counts / counts.sum(), limit)


def delentropy(density: DelDensity, half_factor: bool = True) -> float:
    h = _entropy_bits(density.bins)
    return h / 2.0 if half_factor else h


def analyze_image(image: np.ndarray, config: EntropyConfig = EntropyConfig(),
                  path: str = "") -> EntropyRecord:
    try:
        image = check_gray(image)
        shannon = shannon_entropy(pixel_histogram(image))
        glcm = compute_glcm(image, config.levels, config.offset, config.symmetric)
        dens = deldensity(gradient_field(image), config.bins)
    except EntropyError as exc:
        raise type(exc)(f"{path}: {exc}") from exc
    return EntropyRecord(
        image_path=path,
        width=image.shape[1],
        height=image.shape[0],
        shannon=shannon,
        glcm_entropy=glcm_entropy(glcm),
        delentropy=delentropy(dens, config.half_factor),
    )
