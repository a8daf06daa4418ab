"""Procedural dynamic test scenes.

Small deterministic generators standing in for real footage: a square
translating across the field, a disk in free fall, and a glyph sliding
through the frame. All return n x n x K videos with intensities in [0, 1];
geometry is integer-aligned so scenes stay block-uniform after upsampling.
"""

from __future__ import annotations

import numpy as np

from .scene import Video

# 5x7 bitmap of a "T"-like glyph; coarse on purpose, it only needs to be
# recognizable at tiny scene sizes.
_GLYPH = np.array(
    [
        [1, 1, 1, 1, 1],
        [0, 0, 1, 0, 0],
        [0, 0, 1, 0, 0],
        [0, 0, 1, 0, 0],
        [0, 0, 1, 0, 0],
        [0, 0, 1, 0, 0],
        [0, 1, 1, 1, 0],
    ],
    dtype=np.float64,
)


def _travel(extent: int, size: int, K: int, progress) -> list[int]:
    """Integer positions moving an object of `size` across `extent` pixels."""
    span = max(extent - size, 0)
    if K == 1:
        return [span // 2]
    return [int(round(span * progress(k / (K - 1)))) for k in range(K)]


def moving_square(n: int, K: int, size: int | None = None,
                  intensity: float = 1.0, background: float = 0.1) -> Video:
    """A bright square translating along the diagonal, one step per frame."""
    if size is None:
        size = max(n // 4, 1)
    size = min(size, n)
    frames = np.full((K, n, n), background)
    for k, pos in enumerate(_travel(n, size, K, lambda t: t)):
        frames[k, pos : pos + size, pos : pos + size] = intensity
    return Video(frames)


def falling_disk(n: int, K: int, radius: int | None = None,
                 intensity: float = 1.0, background: float = 0.2,
                 column: float = 0.5) -> Video:
    """A disk accelerating downward (quadratic drop) over K frames."""
    if radius is None:
        radius = max(n // 8, 1)
    size = 2 * radius + 1
    cx = int(round(column * (n - 1)))
    yy, xx = np.ogrid[:n, :n]
    frames = np.full((K, n, n), background)
    for k, top in enumerate(_travel(n, size, K, lambda t: t * t)):
        cy = top + radius
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius * radius
        frames[k][mask] = intensity
    return Video(frames)


def text_glyph(n: int, K: int, scale: int | None = None,
               intensity: float = 1.0, background: float = 0.2,
               column: float = 0.5, motion: str = "fall") -> Video:
    """A block-scaled glyph translating vertically ("fall") or horizontally."""
    if motion not in ("fall", "slide"):
        raise ValueError(f"unknown motion {motion!r}")
    if scale is None:
        scale = max(n // (4 * _GLYPH.shape[0]), 1)
    stamp = np.kron(_GLYPH, np.ones((scale, scale)))
    gh, gw = stamp.shape
    if gh > n or gw > n:
        raise ValueError(f"glyph ({gh}x{gw}) does not fit an {n}x{n} scene")
    frames = np.full((K, n, n), background)
    fixed = int(round(column * (n - (gw if motion == "fall" else gh))))
    for k, pos in enumerate(_travel(n, gh if motion == "fall" else gw, K, lambda t: t)):
        if motion == "fall":
            region = frames[k, pos : pos + gh, fixed : fixed + gw]
        else:
            region = frames[k, fixed : fixed + gh, pos : pos + gw]
        np.maximum(region, intensity * stamp, out=region)
    return Video(frames)


def composite_drop(n: int, K: int, background: float = 0.2) -> Video:
    """Three objects falling side by side: disk, glyph, and a small square."""
    disk = falling_disk(n, K, background=background, column=0.18)
    glyph = text_glyph(n, K, background=background, column=0.5, motion="fall")
    size = max(n // 6, 1)
    square = np.full((K, n, n), background)
    right = int(round(0.82 * (n - size)))
    for k, top in enumerate(_travel(n, size, K, lambda t: t * t)):
        square[k, top : top + size, right : right + size] = 1.0
    frames = np.maximum(np.maximum(disk.frames, glyph.frames), square)
    return Video(frames)
