"""Recover the K frames hidden in one exposure, one super-pixel at a time.

Block mode treats each l x l super-pixel independently and retrieves its
temporal trace by intensity correlation against the known tiles, or by an
exact least-squares solve. Sliding mode exploits the l-periodic tiling: every
l x l window of the exposure sees a complete (cyclically permuted) basis, so
the output grid has side m - l + 1 instead of n.

The spatially constant all-ones tile (the DC pattern) is invisible to
correlation; its frame is recovered from the window mean via
I_dc = <S> - 0.5 * sum of the other frames, which is exact for binarized
Hadamard tiles, or simply zeroed (dc_policy="zero").

All retrievals are pure einsum/LAPACK computations with a fixed reduction
order: results are bit-identical run to run, and block-aligned sliding
windows reproduce block-mode traces bit for bit because both share one code
path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .basis import KIND_HADAMARD, ModulationBasis
from .geometry import SuperPixelGeometry
from .scene import ExposureImage, Video

DC_FORMULA = "formula"
DC_ZERO = "zero"
DC_POLICIES = (DC_FORMULA, DC_ZERO)

MODE_CORRELATION = "correlation"
MODE_EXACT = "exact"
MODE_SLIDING = "sliding"
MODE_CS = "cs"


class DegeneratePatternError(ValueError):
    """A constant (zero-variance) tile that the dc policy cannot resolve."""


class RankDeficientBasisError(ValueError):
    """The tile matrix does not determine the trace; use the compressive mode."""


@dataclass
class ReconstructionResult:
    """A recovered frame stack plus how it was obtained.

    ``frames`` is the raw (K, side, side) float array; recovered intensities
    may undershoot below zero (correlation noise) and are only clamped when
    exporting via :meth:`to_video`. ``stats`` holds per-frame min/max/mean
    and mode-specific extras (exact-mode residuals, threshold peaks).
    """

    frames: np.ndarray
    mode: str
    geometry: SuperPixelGeometry
    dc_policy: str | None = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise ValueError(f"frames must be (K, H, W), got {self.frames.shape}")
        side = self.frames.shape[1]
        expected = {
            MODE_SLIDING: self.geometry.sliding_side,
        }.get(self.mode, self.geometry.n)
        if self.frames.shape[1:] != (expected, expected):
            raise ValueError(
                f"{self.mode} mode must produce {expected}x{expected} frames, "
                f"got {side}x{self.frames.shape[2]}"
            )
        if not self.stats:
            self.stats = frame_stats(self.frames)

    @property
    def K(self) -> int:
        return self.frames.shape[0]

    def to_video(self, clip: bool = True) -> Video:
        """Export as a Video, clamping negatives (and optionally > 1) to range."""
        frames = np.clip(self.frames, 0.0, 1.0) if clip else np.maximum(self.frames, 0.0)
        return Video(frames)


def frame_stats(frames: np.ndarray) -> dict:
    return {
        "min": frames.min(axis=(1, 2)),
        "max": frames.max(axis=(1, 2)),
        "mean": frames.mean(axis=(1, 2)),
    }


def block_windows(values: np.ndarray, geometry: SuperPixelGeometry) -> np.ndarray:
    """(n, n, l*l) array of super-pixel contents, each flattened row-major."""
    n, l = geometry.n, geometry.l
    windows = values.reshape(n, l, n, l).transpose(0, 2, 1, 3).reshape(n, n, l * l)
    return np.ascontiguousarray(windows)


def _check_constant_tiles(basis: ModulationBasis, dc_policy: str) -> int | None:
    """Validate the basis' constant tiles against the dc policy.

    Returns the single DC index the formula applies to, or None when there is
    nothing to resolve (no constant tile, or policy zero).
    """
    if dc_policy not in DC_POLICIES:
        raise ValueError(f"unknown dc policy {dc_policy!r}, expected one of {DC_POLICIES}")
    constants = basis.dc_indices
    if constants.size == 0:
        return None
    if dc_policy == DC_ZERO:
        return None
    if basis.kind != KIND_HADAMARD:
        raise DegeneratePatternError(
            f"constant tile(s) at k={constants.tolist()} in a {basis.kind} basis: "
            f"the mean-identity dc formula only holds for hadamard tiles "
            f"(use dc_policy='zero' or regenerate the basis)"
        )
    if constants.size > 1:
        raise DegeneratePatternError(
            f"more than one constant tile (k={constants.tolist()}); "
            f"the dc formula needs exactly one"
        )
    return int(constants[0])


def _correlate_windows(
    windows: np.ndarray,
    tile_matrix: np.ndarray,
    dc_index: int | None,
    constants: np.ndarray,
) -> np.ndarray:
    """Correlation retrieval over a stack of windows.

    windows: (..., l*l) contiguous; tile_matrix: (K, l*l) float64.
    Returns traces shaped (K, ...). Spatial means are taken over each window,
    matching the per-super-pixel multiplexing of the ensemble average.
    """
    K = tile_matrix.shape[0]
    centered = tile_matrix - tile_matrix.mean(axis=1)[:, None]
    denom = np.einsum("kp,kp->k", centered, centered)
    win_mean = windows.mean(axis=-1)
    win_centered = windows - win_mean[..., None]

    live = np.setdiff1d(np.arange(K), constants)
    traces = np.zeros((K,) + windows.shape[:-1], dtype=np.float64)
    numer = np.einsum("...p,kp->k...", win_centered, centered[live])
    traces[live] = numer / denom[live].reshape((-1,) + (1,) * win_mean.ndim)
    if dc_index is not None:
        traces[dc_index] = win_mean - 0.5 * traces[live].sum(axis=0)
    return traces


def reconstruct_correlation(
    exposure: ExposureImage,
    basis: ModulationBasis,
    dc_policy: str = DC_FORMULA,
) -> ReconstructionResult:
    """Per-super-pixel intensity-correlation retrieval of the K-frame video.

    For each super-pixel, frame k is
    sum_ij (S_ij - <S>) (X_k(i,j) - <X_k>) / sum_ij (X_k(i,j) - <X_k>)^2
    with <.> the spatial mean over the l x l window. With a full-sampling
    binarized Hadamard basis and a scene uniform within each super-pixel this
    recovers every frame exactly (orthogonality collapses the cross terms).
    Random-binary bases are accepted but their tiles are not orthogonal, so
    the retrieval carries inherent crosstalk noise; thresholding is the only
    cleanup offered here (use the compressive mode for a proper solve).
    """
    _check_geometry(exposure, basis)
    dc_index = _check_constant_tiles(basis, dc_policy)
    windows = block_windows(exposure.values, basis.geometry)
    traces = _correlate_windows(
        windows,
        basis.tile_matrix.astype(np.float64),
        dc_index,
        basis.dc_indices,
    )
    return ReconstructionResult(
        frames=traces,
        mode=MODE_CORRELATION,
        geometry=basis.geometry,
        dc_policy=dc_policy,
    )


def recover_dc_frame(window: np.ndarray, basis: ModulationBasis, trace: np.ndarray) -> float:
    """Recover the constant-pattern frame from one window's spatial mean.

    ``trace`` carries the already-recovered frames; its entry at the DC index
    is ignored. Exact for binarized Hadamard bases, where every non-DC tile
    has mean exactly 1/2.
    """
    constants = basis.dc_indices
    if constants.size != 1:
        raise DegeneratePatternError(
            f"dc recovery needs exactly one constant tile, found {constants.size}"
        )
    dc = int(constants[0])
    trace = np.asarray(trace, dtype=np.float64)
    if trace.shape != (basis.K,):
        raise ValueError(f"trace must have length K={basis.K}, got {trace.shape}")
    others = np.delete(trace, dc)
    if not np.all(np.isfinite(others)):
        raise ValueError("recovered non-dc trace entries must be finite")
    return float(np.mean(window) - 0.5 * others.sum())


def reconstruct_exact(exposure: ExposureImage, basis: ModulationBasis) -> ReconstructionResult:
    """Least-squares inversion of the per-super-pixel accumulation system.

    Requires l^2 >= K and a rank-K tile matrix; for full-sampling Hadamard
    bases the system is square and the solve is exact to solver tolerance.
    """
    _check_geometry(exposure, basis)
    geom = basis.geometry
    phi = basis.measurement_matrix()
    if phi.shape[0] < basis.K:
        raise RankDeficientBasisError(
            f"under-determined system (l^2={phi.shape[0]} < K={basis.K}); "
            f"use the compressive mode"
        )
    if np.linalg.matrix_rank(phi) < basis.K:
        raise RankDeficientBasisError(
            f"tile matrix has rank < K={basis.K}; use the compressive mode"
        )
    windows = block_windows(exposure.values, geom)
    rhs = windows.reshape(-1, geom.block_pixels).T
    solution, _, _, _ = np.linalg.lstsq(phi, rhs, rcond=None)
    residual = phi @ solution - rhs
    traces = solution.reshape(basis.K, geom.n, geom.n)
    result = ReconstructionResult(
        frames=traces,
        mode=MODE_EXACT,
        geometry=geom,
        dc_policy=None,
    )
    result.stats["residual_norm_max"] = float(
        np.sqrt((residual * residual).sum(axis=0)).max()
    )
    return result


def reconstruct_sliding(
    exposure: ExposureImage,
    basis: ModulationBasis,
    dc_policy: str = DC_FORMULA,
    retrieval: str = MODE_CORRELATION,
) -> ReconstructionResult:
    """Run the retrieval on every l x l window of the exposure.

    Because each pattern is an exact l-periodic tiling, the crop at any
    window origin is a fixed cyclic permutation of the canonical tile, and
    every window forms a complete basis. Output side is m - l + 1. Windows
    whose origin is block-aligned reproduce block-mode traces bit for bit.

    Scene content that varies inside a window leaks across frames (the
    trailing effect); apply_threshold prunes those ghosts. The dc formula
    sums every other frame's leakage into the constant-pattern frame, so for
    fine-structured scenes dc_policy="zero" gives a cleaner result.
    """
    _check_geometry(exposure, basis)
    geom = basis.geometry
    if basis.kind != KIND_HADAMARD or basis.K != geom.block_pixels:
        raise RankDeficientBasisError(
            "sliding reconstruction needs a full-sampling (K = l^2) hadamard "
            "basis: other bases do not form a complete basis in every window"
        )
    if retrieval not in (MODE_CORRELATION, MODE_EXACT):
        raise ValueError(f"unknown retrieval {retrieval!r}")
    dc_index = _check_constant_tiles(basis, dc_policy)

    l, side = geom.l, geom.sliding_side
    windows_all = sliding_window_view(exposure.values, (l, l))
    out = np.empty((basis.K, side, side), dtype=np.float64)
    for dr in range(l):
        for dc in range(l):
            if dr >= side or dc >= side:
                continue
            sub = windows_all[dr::l, dc::l]
            windows = np.ascontiguousarray(sub.reshape(sub.shape[0], sub.shape[1], l * l))
            tiles = np.stack(
                [basis.shifted_tile(k, dr, dc).ravel() for k in range(basis.K)]
            ).astype(np.float64)
            if retrieval == MODE_CORRELATION:
                traces = _correlate_windows(windows, tiles, dc_index, basis.dc_indices)
            else:
                rhs = windows.reshape(-1, l * l).T
                solution, _, _, _ = np.linalg.lstsq(tiles.T, rhs, rcond=None)
                traces = solution.reshape(basis.K, windows.shape[0], windows.shape[1])
            out[:, dr::l, dc::l] = traces
    return ReconstructionResult(
        frames=out,
        mode=MODE_SLIDING,
        geometry=geom,
        dc_policy=dc_policy if retrieval == MODE_CORRELATION else None,
    )


def apply_threshold(result: ReconstructionResult, tau: float) -> ReconstructionResult:
    """Zero every value below tau times its frame's max (trailing-ghost removal).

    tau = 0 is the identity; tau = 1 keeps only per-frame maxima. The
    per-frame peaks used for normalization are recorded in stats.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    frames = result.frames.copy()
    peaks = frames.max(axis=(1, 2))
    if tau > 0.0:
        frames[frames < tau * peaks[:, None, None]] = 0.0
    out = ReconstructionResult(
        frames=frames,
        mode=result.mode,
        geometry=result.geometry,
        dc_policy=result.dc_policy,
    )
    out.stats["threshold_tau"] = tau
    out.stats["threshold_peaks"] = peaks
    return out


def _check_geometry(exposure: ExposureImage, basis: ModulationBasis):
    if exposure.geometry != basis.geometry:
        raise ValueError(
            f"exposure geometry {exposure.geometry} does not match basis "
            f"geometry {basis.geometry}"
        )
