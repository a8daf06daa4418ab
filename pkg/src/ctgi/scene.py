"""Scene data types and the forward optical model.

A K-frame scene is spatially modulated at high speed and accumulated into a
single camera exposure: S(i,j) = sum_k X_k(i,j) * F_k(i,j). The sensor is
modeled as ideal and linear (no saturation or bit-depth clipping); optional
readout noise is applied to the accumulated exposure, never per frame.

All operations are pure and accumulate in ascending frame order with plain
summation, so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import ModulationBasis
from .geometry import SuperPixelGeometry

NOISE_NONE = "none"
NOISE_GAUSSIAN = "additive-gaussian"
NOISE_POISSON = "poisson"


@dataclass(frozen=True)
class NoiseModel:
    """Camera readout noise applied to the accumulated exposure.

    kind "none" is the identity; "additive-gaussian" adds N(0, sigma) and
    clamps at zero; "poisson" draws Poisson(value * scale) / scale, with
    ``scale`` the event count corresponding to unit intensity. A fixed seed
    reproduces the noise bit for bit (PCG64 stream).
    """

    kind: str = NOISE_NONE
    sigma: float = 0.0
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (NOISE_NONE, NOISE_GAUSSIAN, NOISE_POISSON):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")


class Video:
    """Ordered stack of K grayscale frames with intensities in [0, inf).

    Frames are stored as one (K, height, width) float64 array. 8-bit and
    16-bit integer input is normalized by its dtype maximum so means and
    small differences stay exact in double precision. Storage is 0-based:
    ``frames[0]`` is frame 1 of the sequence (file names count from
    frame_0001); the mapping is fixed everywhere.
    """

    def __init__(self, frames):
        arr = np.asarray(frames, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"expected a (K, H, W) stack, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("a video needs at least one frame")
        if not np.all(np.isfinite(arr)):
            raise ValueError("frame intensities must be finite")
        if arr.min() < 0:
            raise ValueError("frame intensities must be nonnegative")
        self.frames = arr

    @classmethod
    def from_uint(cls, frames) -> "Video":
        """Normalize integer frames (e.g. 8-bit PGM data) to [0, 1]."""
        arr = np.asarray(frames)
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"expected integer frames, got dtype {arr.dtype}")
        peak = float(np.iinfo(arr.dtype).max)
        return cls(arr.astype(np.float64) / peak)

    @property
    def K(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass
class ExposureImage:
    """The single m x m camera image: time integration of modulated frames."""

    values: np.ndarray
    geometry: SuperPixelGeometry
    noise_meta: NoiseModel | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        m = self.geometry.m
        if self.values.shape != (m, m):
            raise ValueError(
                f"exposure must be {m}x{m} for this geometry, got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("exposure values must be finite")
        if self.values.min() < 0:
            raise ValueError("exposure values must be nonnegative")


def upsample_scene(video: Video, geometry: SuperPixelGeometry) -> Video:
    """Replicate every scene pixel into its exclusive l x l modulator block."""
    n = geometry.n
    if (video.height, video.width) != (n, n):
        raise ValueError(
            f"scene must be {n}x{n} for this geometry, got "
            f"{video.height}x{video.width}"
        )
    l = geometry.l
    big = np.repeat(np.repeat(video.frames, l, axis=1), l, axis=2)
    return Video(big)


def _accumulate(frame_iter, basis: ModulationBasis) -> np.ndarray:
    """sum_k pattern_k * frame_k, ascending k, plain float64 summation."""
    geom = basis.geometry
    total = np.zeros((geom.m, geom.m), dtype=np.float64)
    n = geom.n
    for k, frame in enumerate(frame_iter):
        total += np.tile(basis.tiles[k], (n, n)) * frame
    return total


def modulate_accumulate(video: Video, basis: ModulationBasis) -> ExposureImage:
    """Modulate each m x m frame by its pattern and accumulate one exposure."""
    geom = basis.geometry
    if video.K != basis.K:
        raise ValueError(f"video has {video.K} frames but basis has {basis.K} patterns")
    if (video.height, video.width) != (geom.m, geom.m):
        raise ValueError(
            f"frames must match the modulator ({geom.m}x{geom.m}), got "
            f"{video.height}x{video.width}; upsample_scene first for n x n input"
        )
    return ExposureImage(_accumulate(video.frames, basis), geom)


def simulate_exposure(video: Video, basis: ModulationBasis) -> ExposureImage:
    """Forward-model a scene (n x n or already m x m) into one exposure.

    For n x n input each frame is upsampled on the fly, which is bit-identical
    to ``modulate_accumulate(upsample_scene(video), basis)`` without ever
    materializing the full K x m x m stack.
    """
    geom = basis.geometry
    if video.K != basis.K:
        raise ValueError(f"video has {video.K} frames but basis has {basis.K} patterns")
    if (video.height, video.width) == (geom.m, geom.m):
        return modulate_accumulate(video, basis)
    if (video.height, video.width) != (geom.n, geom.n):
        raise ValueError(
            f"frames must be {geom.n}x{geom.n} or {geom.m}x{geom.m}, got "
            f"{video.height}x{video.width}"
        )
    l = geom.l
    frames = (np.repeat(np.repeat(f, l, axis=0), l, axis=1) for f in video.frames)
    return ExposureImage(_accumulate(frames, basis), geom)


def direct_capture(video: Video) -> np.ndarray:
    """Pixelwise sum of all frames: the ordinary long-exposure (blur) image."""
    return video.frames.sum(axis=0)


def add_noise(exposure: ExposureImage, model: NoiseModel) -> ExposureImage:
    """Apply camera noise to an exposure; deterministic for a fixed seed."""
    if model.kind == NOISE_NONE:
        return exposure
    rng = np.random.Generator(np.random.PCG64(model.seed))
    values = exposure.values
    if model.kind == NOISE_GAUSSIAN:
        if model.sigma == 0.0:
            return exposure
        noisy = values + rng.normal(0.0, model.sigma, size=values.shape)
    else:
        noisy = rng.poisson(values * model.scale).astype(np.float64) / model.scale
    return ExposureImage(np.maximum(noisy, 0.0), exposure.geometry, noise_meta=model)
