"""Procedural toy images: geometric content shapes and parametric style textures.

All images are ``(3, size, size)`` float arrays in ``[-1, 1]``.  Condition ids:
0 is the null condition, 1 is the content class, 2.. are style classes.
"""

from __future__ import annotations

import numpy as np

CONTENT_ID = 1
STYLE_IDS = {"stripes": 2, "checker": 3, "blobs": 4}
STYLE_NAMES = {v: k for k, v in STYLE_IDS.items()}

# per-style palettes, RGB in [0, 1]
_PALETTES = {
    "stripes": np.array([[0.95, 0.35, 0.10], [1.00, 0.85, 0.20], [0.70, 0.05, 0.10]]),
    "checker": np.array([[0.05, 0.20, 0.60], [0.30, 0.80, 0.90], [0.05, 0.45, 0.30]]),
    "blobs": np.array([[0.45, 0.10, 0.55], [0.95, 0.55, 0.85], [0.15, 0.05, 0.25]]),
}


def _grid(size):
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    return y, x


def _to_signed(rgb):
    # (size, size, 3) in [0, 1] -> (3, size, size) in [-1, 1]
    return np.clip(rgb, 0.0, 1.0).transpose(2, 0, 1) * 2.0 - 1.0


def content_image(rng: np.random.Generator, size: int = 32) -> np.ndarray:
    """One to three filled circles or squares on a muted background."""
    y, x = _grid(size)
    img = np.empty((size, size, 3))
    img[:] = rng.uniform(0.3, 0.7) + rng.uniform(-0.1, 0.1, 3)
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.uniform(0.2, 0.8, 2) * size
        r = rng.uniform(0.12, 0.3) * size
        if rng.random() < 0.5:
            mask = (y - cy) ** 2 + (x - cx) ** 2 <= r**2
        else:
            mask = (np.abs(y - cy) <= r) & (np.abs(x - cx) <= r)
        img[mask] = rng.uniform(0.0, 1.0, 3)
    return _to_signed(img)


def style_image(name: str, rng: np.random.Generator, size: int = 32) -> np.ndarray:
    pal = _PALETTES[name]
    y, x = _grid(size)
    if name == "stripes":
        theta = rng.uniform(0, np.pi)
        period = rng.uniform(4, 9)
        phase = np.sin(2 * np.pi * (x * np.cos(theta) + y * np.sin(theta)) / period)
        idx = (phase > 0).astype(int)
    elif name == "checker":
        cell = int(rng.integers(3, 7))
        idx = ((y // cell + x // cell) % 2).astype(int)
        idx[rng.random((size, size)) < 0.05] = 2
    elif name == "blobs":
        coarse = rng.normal(size=(5, 5))
        fine = np.kron(coarse, np.ones((size // 4 + 1, size // 4 + 1)))[:size, :size]
        idx = np.digitize(fine, np.quantile(fine, [0.4, 0.8]))
    else:
        raise KeyError(f"unknown style {name!r}")
    jitter = rng.uniform(-0.05, 0.05, 3)
    return _to_signed(pal[idx] + jitter)


class ToyDataset:
    """Mixture of content and style images with their condition ids.

    ``content_fraction`` of samples come from the content class, the rest are
    split evenly across styles.
    """

    def __init__(self, size: int = 32, content_fraction: float = 0.5):
        self.size = size
        self.content_fraction = content_fraction

    def sample(self, rng: np.random.Generator, n: int):
        images = np.empty((n, 3, self.size, self.size))
        cond = np.empty(n, dtype=np.int64)
        for i in range(n):
            if rng.random() < self.content_fraction:
                images[i] = content_image(rng, self.size)
                cond[i] = CONTENT_ID
            else:
                name = list(STYLE_IDS)[rng.integers(len(STYLE_IDS))]
                images[i] = style_image(name, rng, self.size)
                cond[i] = STYLE_IDS[name]
        return images, cond


class ConstantDataset:
    def __init__(self, value: float = 0.0, size: int = 32, channels: int = 3):
        self.value, self.size, self.channels = value, size, channels

    def sample(self, rng, n):
        return np.full((n, self.channels, self.size, self.size), self.value), np.zeros(n, dtype=np.int64)


def fixture_pairs(n: int = 10, seed: int = 0, size: int = 32):
    """``n`` deterministic (content, style, style_name) triples cycling through the styles."""
    rng = np.random.default_rng(seed)
    names = list(STYLE_IDS)
    out = []
    for i in range(n):
        name = names[i % len(names)]
        out.append((content_image(rng, size), style_image(name, rng, size), name))
    return out
