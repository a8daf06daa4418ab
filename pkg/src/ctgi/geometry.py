"""Super-pixel geometry: how modulator/camera pixels map onto scene pixels."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SuperPixelGeometry:
    """Ties the modulator/camera resolution to the scene resolution.

    Attributes
    ----------
    m : int
        Modulator (and camera) side length in pixels.
    l : int
        Super-pixel side length in pixels. Each scene pixel owns an
        exclusive l x l block of modulator pixels.
    n : int
        Scene side length in super-pixels.

    ``m == l * n`` must hold exactly; construction fails otherwise.
    """

    m: int
    l: int
    n: int

    def __post_init__(self):
        if self.l < 1 or self.n < 1:
            raise ValueError(f"l and n must be >= 1, got l={self.l}, n={self.n}")
        if self.m != self.l * self.n:
            raise ValueError(
                f"inconsistent geometry: m={self.m} but l*n={self.l * self.n}"
            )

    @classmethod
    def from_block(cls, l: int, n: int) -> "SuperPixelGeometry":
        """Build the geometry from the super-pixel side and scene side."""
        return cls(m=l * n, l=l, n=n)

    @property
    def block_pixels(self) -> int:
        """Number of pixels in one super-pixel (l squared)."""
        return self.l * self.l

    @property
    def sliding_side(self) -> int:
        """Output side length of a sliding-window reconstruction: m - l + 1."""
        return self.m - self.l + 1
