"""Reconstruction quality metrics: RMSE, PSNR, Pearson correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PSNR_PEAK = 1.0  # intensities are normalized to [0, 1]


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = PSNR_PEAK) -> float:
    """20 * log10(peak / RMSE); +inf for identical inputs."""
    err = rmse(a, b)
    if err == 0.0:
        return math.inf
    return 20.0 * math.log10(peak / err)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of the flattened arrays; nan if either is constant."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        return math.nan
    return float(np.corrcoef(a, b)[0, 1])


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return f"{value:.12g}"


@dataclass
class MetricsReport:
    """Per-frame and aggregate quality of a reconstruction vs ground truth.

    ``runtimes`` (stage name -> seconds) is kept in memory only; the
    machine-readable rendering omits it by default so identical inputs
    produce byte-identical report files.
    """

    frame_rmse: np.ndarray
    frame_psnr: np.ndarray
    frame_pearson: np.ndarray
    runtimes: dict = field(default_factory=dict)

    @classmethod
    def compare(cls, recon: np.ndarray, truth: np.ndarray) -> "MetricsReport":
        recon = np.asarray(recon, dtype=np.float64)
        truth = np.asarray(truth, dtype=np.float64)
        if recon.shape != truth.shape:
            raise ValueError(
                f"reconstruction {recon.shape} and truth {truth.shape} differ"
            )
        if recon.ndim != 3:
            raise ValueError(f"expected (K, H, W) stacks, got {recon.shape}")
        return cls(
            frame_rmse=np.array([rmse(r, t) for r, t in zip(recon, truth)]),
            frame_psnr=np.array([psnr(r, t) for r, t in zip(recon, truth)]),
            frame_pearson=np.array([pearson(r, t) for r, t in zip(recon, truth)]),
        )

    @property
    def mean_rmse(self) -> float:
        return float(np.mean(self.frame_rmse))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.frame_psnr))

    @property
    def mean_pearson(self) -> float:
        return float(np.mean(self.frame_pearson))

    def to_text(self, include_runtime: bool = False) -> str:
        """Flat key=value rendering, one metric per line, deterministic order."""
        lines = []
        for k in range(len(self.frame_rmse)):
            tag = f"frame_{k + 1:04d}"
            lines.append(f"{tag}.rmse={_fmt(self.frame_rmse[k])}")
            lines.append(f"{tag}.psnr_db={_fmt(self.frame_psnr[k])}")
            lines.append(f"{tag}.pearson={_fmt(self.frame_pearson[k])}")
        lines.append(f"mean.rmse={_fmt(self.mean_rmse)}")
        lines.append(f"mean.psnr_db={_fmt(self.mean_psnr)}")
        lines.append(f"mean.pearson={_fmt(self.mean_pearson)}")
        if include_runtime:
            for stage in sorted(self.runtimes):
                lines.append(f"runtime.{stage}_s={_fmt(self.runtimes[stage])}")
        return "\n".join(lines) + "\n"
