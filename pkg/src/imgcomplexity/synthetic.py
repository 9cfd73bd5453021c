"""Synthetic image families of increasing complexity, for fixtures and demos."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

FAMILIES = ("smooth", "texture", "noise")


def smooth_gradient(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """Low-contrast linear ramp at a random angle."""
    y, x = np.mgrid[0:size, 0:size] / (size - 1) - 0.5
    theta = rng.uniform(0, 2 * np.pi)
    base = rng.uniform(70, 180)
    contrast = rng.uniform(20, 50)
    img = base + contrast * (np.cos(theta) * x + np.sin(theta) * y)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def mid_frequency_texture(rng: np.random.Generator, size: int = 64, waves: int = 3) -> np.ndarray:
    """Sum of a few oriented sinusoids (4-10 cycles per image) stretched to the full range."""
    y, x = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size))
    for _ in range(waves):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(4, 10)
        phase = rng.uniform(0, 2 * np.pi)
        img += np.sin(2 * np.pi * freq * (np.cos(theta) * x + np.sin(theta) * y) + phase)
    img = (img - img.min()) / (img.max() - img.min())
    return np.rint(img * 255).astype(np.uint8)


def uniform_noise(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    return rng.integers(0, 256, size=(size, size), dtype=np.uint8)


GENERATORS = {"smooth": smooth_gradient, "texture": mid_frequency_texture, "noise": uniform_noise}


def generate(family: str, count: int, seed: int = 0, size: int = 64) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    gen = GENERATORS[family]
    return [gen(rng, size) for _ in range(count)]


def write_dataset(root: str | Path, family: str, count: int, seed: int = 0,
                  size: int = 64) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(generate(family, count, seed, size)):
        Image.fromarray(img, mode="L").save(root / f"{family}_{i:04d}.png")
    return root
