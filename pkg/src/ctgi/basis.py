"""Modulation bases: Walsh-Hadamard and random binary tile patterns.

A basis is K binary on/off patterns for the modulator. Every pattern is the
n x n tiling of one l x l tile, so each scene pixel sees the same l x l
measurement sequence. Hadamard tiles come from binarized rows of a Sylvester
or sequency-ordered Hadamard matrix; random tiles are i.i.d. Bernoulli draws
from numpy's PCG64 generator (the seeded generator is part of the file
contract and must never change).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .geometry import SuperPixelGeometry

ORDERING_NATURAL = "natural-sylvester"
ORDERING_SEQUENCY = "walsh-sequency"
ORDERINGS = (ORDERING_NATURAL, ORDERING_SEQUENCY)

KIND_HADAMARD = "walsh-hadamard"
KIND_RANDOM = "random-binary"

BASIS_MAGIC = b"CTGB"
BASIS_VERSION = 1

_KIND_CODES = {KIND_HADAMARD: 0, KIND_RANDOM: 1}
_ORDERING_CODES = {ORDERING_NATURAL: 0, ORDERING_SEQUENCY: 1}


class BasisFormatError(ValueError):
    """Raised when a serialized basis stream is malformed or corrupt."""


def _is_power_of_two(k: int) -> bool:
    return k >= 1 and (k & (k - 1)) == 0


@dataclass(frozen=True)
class HadamardMatrix:
    """K x K matrix with entries in {+1, -1} and orthogonal rows.

    ``entries`` is integer-valued so the orthogonality identity
    H^T H = K * I holds in exact arithmetic.
    """

    order: int
    entries: np.ndarray
    ordering: str

    def row(self, k: int) -> np.ndarray:
        return self.entries[k]


def sign_changes(row: np.ndarray) -> int:
    """Number of adjacent sign flips in a +/-1 row (the sequency)."""
    return int(np.count_nonzero(row[1:] != row[:-1]))


def walsh_hadamard(order: int, ordering: str = ORDERING_SEQUENCY) -> HadamardMatrix:
    """Build the Hadamard matrix of the given power-of-two order.

    Natural ordering is the Sylvester recursion
    H_{2K} = [[H_K, H_K], [H_K, -H_K]]; sequency ordering sorts the rows by
    ascending sign-change count (0, 1, ..., K-1).

    Parameters
    ----------
    order : int
        Matrix order K; must be a power of two.
    ordering : str
        "natural-sylvester" or "walsh-sequency".
    """
    if not _is_power_of_two(order):
        raise ValueError(f"Hadamard order must be a power of two, got {order}")
    if ordering not in ORDERINGS:
        raise ValueError(f"unknown ordering {ordering!r}, expected one of {ORDERINGS}")
    h = np.array([[1]], dtype=np.int64)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    if ordering == ORDERING_SEQUENCY:
        counts = np.array([sign_changes(r) for r in h])
        h = h[np.argsort(counts)]
    return HadamardMatrix(order=order, entries=h, ordering=ordering)


def binarize_row(row: np.ndarray) -> np.ndarray:
    """Map a +/-1 row to the {0,1} on/off values a binary modulator displays.

    The mapping is fixed as +1 -> 1, -1 -> 0 (golden files depend on it).
    """
    row = np.asarray(row)
    if not np.all(np.isin(row, (-1, 1))):
        raise ValueError("row entries must be +1 or -1")
    return ((1 + row) // 2).astype(np.uint8)


@dataclass(eq=False)
class ModulationBasis:
    """K binary modulator patterns, each the n x n tiling of an l x l tile.

    ``tiles`` has shape (K, l, l) with {0,1} entries; full m x m patterns are
    materialized on demand via :meth:`pattern` since they are pure tilings.
    ``ordering`` applies to the Hadamard kind only; ``seed`` to the random
    kind only (0 otherwise).
    """

    kind: str
    geometry: SuperPixelGeometry
    tiles: np.ndarray
    ordering: str | None = None
    seed: int = 0
    dc_indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in (KIND_HADAMARD, KIND_RANDOM):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        self.tiles = np.ascontiguousarray(self.tiles, dtype=np.uint8)
        l = self.geometry.l
        if self.tiles.ndim != 3 or self.tiles.shape[1:] != (l, l):
            raise ValueError(
                f"tiles must have shape (K, {l}, {l}), got {self.tiles.shape}"
            )
        if not np.all((self.tiles == 0) | (self.tiles == 1)):
            raise ValueError("tile entries must be 0 or 1")
        if self.kind == KIND_HADAMARD:
            if self.ordering not in ORDERINGS:
                raise ValueError(f"hadamard basis needs an ordering, got {self.ordering!r}")
            if self.K > l * l:
                raise ValueError(
                    f"hadamard basis cannot have more patterns ({self.K}) than "
                    f"super-pixel size l^2 ({l * l})"
                )
        flat = self.tile_matrix
        self.dc_indices = np.flatnonzero(np.ptp(flat, axis=1) == 0)

    @property
    def K(self) -> int:
        return self.tiles.shape[0]

    @property
    def tile_matrix(self) -> np.ndarray:
        """(K, l*l) uint8 view: tile k flattened row-major as row k."""
        return self.tiles.reshape(self.K, -1)

    def pattern(self, k: int) -> np.ndarray:
        """Full m x m pattern k: the n x n tiling of tile k."""
        n = self.geometry.n
        return np.tile(self.tiles[k], (n, n))

    def measurement_matrix(self) -> np.ndarray:
        """(l^2, K) float matrix: entry (p, k) is tile k at pixel p (row-major)."""
        return self.tile_matrix.T.astype(np.float64)

    def shifted_tile(self, k: int, dr: int, dc: int) -> np.ndarray:
        """Tile k as seen by a window whose origin is offset (dr, dc) mod l.

        The tiling is exactly l-periodic, so a crop of pattern k at any
        origin (r, c) equals the canonical tile cyclically rolled by
        (-(r mod l), -(c mod l)).
        """
        return np.roll(self.tiles[k], (-dr, -dc), axis=(0, 1))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModulationBasis):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.geometry == other.geometry
            and self.ordering == other.ordering
            and self.seed == other.seed
            and np.array_equal(self.tiles, other.tiles)
        )


def build_hadamard_basis(
    geometry: SuperPixelGeometry,
    ordering: str = ORDERING_SEQUENCY,
    K: int | None = None,
) -> ModulationBasis:
    """Binarize and tile the first K rows of the order-l^2 Hadamard matrix.

    Full sampling (the default) uses K = l^2, in which case l^2 must be a
    power of two. K < l^2 oversamples (more pixels than frames) and is
    allowed; K > l^2 is rejected.
    """
    block = geometry.block_pixels
    if K is None:
        K = block
    if K > block:
        raise ValueError(
            f"hadamard basis supports at most l^2={block} patterns, requested {K}"
        )
    if not _is_power_of_two(block):
        raise ValueError(
            f"l^2={block} is not a power of two; full-sampling hadamard tiles "
            f"need l in {{1, 2, 4, 8, ...}}"
        )
    matrix = walsh_hadamard(block, ordering)
    l = geometry.l
    tiles = np.stack(
        [binarize_row(matrix.row(k)).reshape(l, l) for k in range(K)]
    )
    return ModulationBasis(kind=KIND_HADAMARD, geometry=geometry, tiles=tiles, ordering=ordering)


def build_random_basis(
    geometry: SuperPixelGeometry,
    K: int,
    seed: int,
    density: float = 0.5,
) -> ModulationBasis:
    """Draw K i.i.d. Bernoulli(density) l x l tiles from a seeded PCG64 stream.

    The generator is numpy's PCG64 wrapped in ``np.random.Generator``; a tile
    entry is on iff the next uniform draw is < density. Identical seeds give
    byte-identical bases.
    """
    if not 0.0 < density < 1.0:
        raise ValueError(f"density must lie strictly between 0 and 1, got {density}")
    if K < 1:
        raise ValueError(f"need at least one pattern, got K={K}")
    rng = np.random.Generator(np.random.PCG64(seed))
    l = geometry.l
    tiles = (rng.random((K, l, l)) < density).astype(np.uint8)
    return ModulationBasis(kind=KIND_RANDOM, geometry=geometry, tiles=tiles, seed=seed)


def serialize_basis(basis: ModulationBasis) -> bytes:
    """Encode a basis in the CTGB byte format.

    Layout (little-endian): magic "CTGB", u16 version, u8 kind, u8 ordering,
    u32 K, u32 l, u32 n, u64 seed, then K tiles bit-packed row-major
    (ceil(l^2/8) bytes each, MSB first), then CRC32 of all preceding bytes.
    """
    geom = basis.geometry
    ordering_code = _ORDERING_CODES.get(basis.ordering, 0)
    header = BASIS_MAGIC + struct.pack(
        "<HBBIIIQ",
        BASIS_VERSION,
        _KIND_CODES[basis.kind],
        ordering_code,
        basis.K,
        geom.l,
        geom.n,
        basis.seed,
    )
    tile_bytes = np.packbits(basis.tile_matrix, axis=1).tobytes()
    payload = header + tile_bytes
    return payload + struct.pack("<I", zlib.crc32(payload))


def deserialize_basis(data: bytes) -> ModulationBasis:
    """Decode a CTGB byte stream; raises BasisFormatError on any corruption."""
    header_len = len(BASIS_MAGIC) + struct.calcsize("<HBBIIIQ")
    if len(data) < header_len + 4:
        raise BasisFormatError(f"truncated stream: {len(data)} bytes")
    if data[:4] != BASIS_MAGIC:
        raise BasisFormatError(f"bad magic {data[:4]!r}, expected {BASIS_MAGIC!r}")
    version, kind_code, ordering_code, K, l, n, seed = struct.unpack(
        "<HBBIIIQ", data[4:header_len]
    )
    if version != BASIS_VERSION:
        raise BasisFormatError(f"unsupported version {version}")
    tile_stride = (l * l + 7) // 8
    expected = header_len + K * tile_stride + 4
    if len(data) != expected:
        raise BasisFormatError(f"expected {expected} bytes, got {len(data)}")
    payload, (crc_stored,) = data[:-4], struct.unpack("<I", data[-4:])
    crc_actual = zlib.crc32(payload)
    if crc_stored != crc_actual:
        raise BasisFormatError(
            f"checksum mismatch: stored {crc_stored:#010x}, computed {crc_actual:#010x}"
        )
    kinds = {code: kind for kind, code in _KIND_CODES.items()}
    orderings = {code: o for o, code in _ORDERING_CODES.items()}
    if kind_code not in kinds:
        raise BasisFormatError(f"unknown kind code {kind_code}")
    if ordering_code not in orderings:
        raise BasisFormatError(f"unknown ordering code {ordering_code}")
    kind = kinds[kind_code]
    packed = np.frombuffer(payload[header_len:], dtype=np.uint8).reshape(K, tile_stride)
    flat = np.unpackbits(packed, axis=1)[:, : l * l]
    tiles = flat.reshape(K, l, l)
    return ModulationBasis(
        kind=kind,
        geometry=SuperPixelGeometry.from_block(l, n),
        tiles=tiles,
        ordering=orderings[ordering_code] if kind == KIND_HADAMARD else None,
        seed=seed,
    )
