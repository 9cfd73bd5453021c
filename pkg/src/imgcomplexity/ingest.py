"""Dataset discovery and grayscale decoding.

Images are represented as 2-D ``numpy.uint8`` arrays of shape ``(height, width)``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

ACCEPTED_EXTENSIONS = frozenset({".png", ".jpg", ".jpeg", ".bmp"})


class IngestError(Exception):
    pass


class BadRootError(IngestError):
    pass


class DecodeError(IngestError):
    pass


class TooSmallError(IngestError):
    pass


class BadTargetError(IngestError):
    pass


@dataclass
class DatasetManifest:
    dataset_id: str
    root: str
    entries: list[tuple[str, int]] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.entries)

    def paths(self) -> list[Path]:
        return [Path(self.root) / rel for rel, _ in self.entries]

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "root": self.root,
            "skipped": list(self.skipped),
            "entries": [{"path": p, "bytes": b} for p, b in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            dataset_id=d["dataset_id"],
            root=d["root"],
            entries=[(e["path"], int(e["bytes"])) for e in d["entries"]],
            skipped=list(d.get("skipped", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def scan_dataset(root: str | os.PathLike, dataset_id: str) -> DatasetManifest:
    """List every accepted image under ``root``, sorted by relative POSIX path.

    Unreadable subdirectories are recorded in ``manifest.skipped`` rather
    than raising.
    """
    root_path = Path(root)
    if not root_path.is_dir():
        raise BadRootError(f"dataset root is not a readable directory: {root}")
    try:
        os.listdir(root_path)
    except OSError as exc:
        raise BadRootError(f"cannot read dataset root {root}: {exc}") from exc

    skipped: list[str] = []

    def onerror(exc: OSError) -> None:
        skipped.append(Path(exc.filename).relative_to(root_path).as_posix()
                       if exc.filename else str(exc))

    entries = []
    for dirpath, _dirnames, filenames in os.walk(root_path, onerror=onerror):
        for name in filenames:
            if Path(name).suffix.lower() not in ACCEPTED_EXTENSIONS:
                continue
            full = Path(dirpath) / name
            try:
                size = full.stat().st_size
            except OSError:
                skipped.append(full.relative_to(root_path).as_posix())
                continue
            entries.append((full.relative_to(root_path).as_posix(), size))

    entries.sort(key=lambda e: e[0])
    return DatasetManifest(dataset_id, str(root_path), entries, sorted(skipped))


def _luma(rgb: np.ndarray) -> np.ndarray:
    # BT.601 weights in exact integer arithmetic, round half up
    r, g, b = (rgb[..., c].astype(np.int64) for c in range(3))
    y = (299 * r + 587 * g + 114 * b + 500) // 1000
    return np.clip(y, 0, 255).astype(np.uint8)


def to_gray(img: Image.Image) -> np.ndarray:
    """Convert a decoded Pillow image to an 8-bit grayscale array."""
    mode = img.mode
    if mode == "L":
        out = np.asarray(img, dtype=np.uint8)
    elif mode in ("I;16", "I;16B", "I;16L", "I;16N", "I"):
        raw = np.asarray(img).astype(np.int64)
        out = np.clip(raw >> 8, 0, 255).astype(np.uint8)
    elif mode == "LA":
        out = np.asarray(img, dtype=np.uint8)[..., 0]
    elif mode == "1":
        out = np.asarray(img.convert("L"), dtype=np.uint8)
    else:
        out = _luma(np.asarray(img.convert("RGB"), dtype=np.uint8))
    return np.ascontiguousarray(out)


def load_grayscale(path: str | os.PathLike) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            gray = to_gray(img)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    if gray.ndim != 2 or gray.shape[0] < 2 or gray.shape[1] < 2:
        raise TooSmallError(f"{path}: image is {gray.shape[1]}x{gray.shape[0]}, need at least 2x2")
    return gray


def check_gray(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale array, got shape {image.shape}")
    if image.shape[0] < 2 or image.shape[1] < 2:
        raise TooSmallError(f"image is {image.shape[1]}x{image.shape[0]}, need at least 2x2")
    if image.dtype != np.uint8:
        if image.min() < 0 or image.max() > 255:
            raise ValueError("gray values must lie in [0, 255]")
        image = image.astype(np.uint8)
    return image


def _box_starts(src: int, dst: int) -> np.ndarray:
    return (np.arange(dst, dtype=np.int64) * src) // dst


def downsample(image: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Area-average ``image`` down to ``target_w`` x ``target_h``.

    Output pixel ``(i, j)`` is the half-up rounded mean of the source
    rectangle ``rows[i*H//th : (i+1)*H//th]`` by the analogous column span.
    """
    image = np.asarray(image)
    h, w = image.shape
    if not (1 <= target_w <= w and 1 <= target_h <= h):
        raise BadTargetError(f"cannot downsample {w}x{h} to {target_w}x{target_h}")
    if (target_w, target_h) == (w, h):
        return image.astype(np.uint8, copy=True)
    rows = _box_starts(h, target_h)
    cols = _box_starts(w, target_w)
    sums = np.add.reduceat(np.add.reduceat(image.astype(np.int64), rows, axis=0), cols, axis=1)
    heights = np.diff(np.append(rows, h))
    widths = np.diff(np.append(cols, w))
    counts = heights[:, None] * widths[None, :]
    return ((2 * sums + counts) // (2 * counts)).astype(np.uint8)
