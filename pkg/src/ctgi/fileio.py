"""File interchange: PGM frame sequences, raw float sidecars, CTGE exposures.

Scenes and reconstructions travel as binary PGM (P5) image sequences named
frame_0001.pgm, frame_0002.pgm, ... (1-based, zero-padded). Reconstructions
additionally get a .f32 sidecar per frame (raw little-endian float32,
row-major, no header) carrying full precision. Exposures use the CTGE
container because accumulated values exceed any integer image range.

All writes are atomic (temp file + rename in the target directory).
"""

from __future__ import annotations

import os
import re
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .basis import ModulationBasis, deserialize_basis, serialize_basis
from .geometry import SuperPixelGeometry
from .scene import ExposureImage

EXPOSURE_MAGIC = b"CTGE"
EXPOSURE_VERSION = 1

FRAME_PREFIX = "frame_"
_FRAME_RE = re.compile(r"^frame_(\d{4})\.pgm$")


class PgmFormatError(ValueError):
    """Malformed PGM header or truncated raster."""


class ExposureFormatError(ValueError):
    """Malformed or corrupt CTGE stream."""


def atomic_write_bytes(path, data: bytes):
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------- PGM (P5)

def encode_pgm(values: np.ndarray, maxval: int = 65535) -> bytes:
    """Encode normalized [0, 1] intensities as a binary P5 raster.

    Values are clamped to [0, 1] and scaled to maxval; 16-bit samples are
    written most significant byte first per the PNM convention.
    """
    if maxval not in (255, 65535):
        raise ValueError(f"maxval must be 255 or 65535, got {maxval}")
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-d image, got shape {values.shape}")
    quantized = np.rint(np.clip(values, 0.0, 1.0) * maxval)
    raster = quantized.astype(np.uint8 if maxval == 255 else ">u2")
    height, width = values.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    return header + raster.tobytes()


def decode_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode a binary P5 stream to (integer array, maxval)."""
    tokens = []
    pos = 0
    # Header: three whitespace-separated tokens after the magic, with
    # '#' comments allowed between them.
    if not data.startswith(b"P5"):
        raise PgmFormatError(f"not a binary PGM: starts with {data[:2]!r}")
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmFormatError("truncated header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte separates header from raster
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as err:
        raise PgmFormatError(f"bad header tokens {tokens}") from err
    if not 0 < maxval < 65536:
        raise PgmFormatError(f"maxval out of range: {maxval}")
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    count = width * height
    raster = data[pos : pos + count * dtype.itemsize]
    if len(raster) != count * dtype.itemsize:
        raise PgmFormatError(
            f"raster truncated: expected {count * dtype.itemsize} bytes, "
            f"got {len(raster)}"
        )
    image = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return image.astype(np.uint16 if maxval >= 256 else np.uint8), maxval


def write_pgm(path, values: np.ndarray, maxval: int = 65535):
    atomic_write_bytes(path, encode_pgm(values, maxval))


def read_pgm(path) -> tuple[np.ndarray, int]:
    return decode_pgm(Path(path).read_bytes())


def read_pgm_normalized(path) -> np.ndarray:
    """Read a PGM and normalize by its own maxval to [0, 1] float64."""
    image, maxval = read_pgm(path)
    return image.astype(np.float64) / maxval


# ------------------------------------------------------ float32 sidecars

def write_f32(path, values: np.ndarray):
    """Raw little-endian float32, row-major, no header."""
    atomic_write_bytes(path, np.asarray(values, dtype="<f4").tobytes())


def read_f32(path, shape) -> np.ndarray:
    data = Path(path).read_bytes()
    expected = int(np.prod(shape)) * 4
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {shape}, got {len(data)}")
    return np.frombuffer(data, dtype="<f4").reshape(shape).astype(np.float64)


# -------------------------------------------------------- frame sequences

def frame_name(k: int) -> str:
    """1-based, zero-padded sequence name for frame index k (0-based)."""
    return f"{FRAME_PREFIX}{k + 1:04d}.pgm"


def write_frame_sequence(directory, frames: np.ndarray, maxval: int = 65535,
                         sidecar: bool = False):
    """Write a (K, H, W) stack of [0, 1] intensities as PGMs, optionally
    with full-precision .f32 sidecars."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(frames):
        write_pgm(directory / frame_name(k), frame, maxval)
        if sidecar:
            write_f32(directory / (frame_name(k)[: -len(".pgm")] + ".f32"), frame)


def read_frame_sequence(directory) -> np.ndarray:
    """Read frame_####.pgm files into a (K, H, W) [0, 1] float stack."""
    directory = Path(directory)
    found = {}
    for entry in directory.iterdir():
        match = _FRAME_RE.match(entry.name)
        if match:
            found[int(match.group(1))] = entry
    if not found:
        raise FileNotFoundError(f"no {FRAME_PREFIX}####.pgm frames in {directory}")
    indices = sorted(found)
    if indices != list(range(1, len(indices) + 1)):
        raise ValueError(f"frame numbering has gaps in {directory}: {indices}")
    frames = [read_pgm_normalized(found[i]) for i in indices]
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise ValueError(f"frames disagree on dimensions: {sorted(shapes)}")
    return np.stack(frames)


# ------------------------------------------------------------- exposures

def encode_exposure(exposure: ExposureImage) -> bytes:
    """CTGE: magic, u16 version, u32 m, m*m little-endian float32 row-major,
    CRC32 of all preceding bytes. Accumulated sums exceed 16-bit range,
    hence the float container."""
    m = exposure.geometry.m
    payload = (
        EXPOSURE_MAGIC
        + struct.pack("<HI", EXPOSURE_VERSION, m)
        + exposure.values.astype("<f4").tobytes()
    )
    return payload + struct.pack("<I", zlib.crc32(payload))


def decode_exposure(data: bytes) -> np.ndarray:
    """Decode CTGE bytes to the (m, m) float64 exposure values."""
    header_len = len(EXPOSURE_MAGIC) + struct.calcsize("<HI")
    if len(data) < header_len + 4:
        raise ExposureFormatError(f"truncated stream: {len(data)} bytes")
    if data[:4] != EXPOSURE_MAGIC:
        raise ExposureFormatError(f"bad magic {data[:4]!r}, expected {EXPOSURE_MAGIC!r}")
    version, m = struct.unpack("<HI", data[4:header_len])
    if version != EXPOSURE_VERSION:
        raise ExposureFormatError(f"unsupported version {version}")
    expected = header_len + m * m * 4 + 4
    if len(data) != expected:
        raise ExposureFormatError(f"expected {expected} bytes, got {len(data)}")
    payload, (crc_stored,) = data[:-4], struct.unpack("<I", data[-4:])
    crc_actual = zlib.crc32(payload)
    if crc_stored != crc_actual:
        raise ExposureFormatError(
            f"checksum mismatch: stored {crc_stored:#010x}, computed {crc_actual:#010x}"
        )
    values = np.frombuffer(payload[header_len:], dtype="<f4")
    return values.reshape(m, m).astype(np.float64)


def save_exposure(path, exposure: ExposureImage):
    atomic_write_bytes(path, encode_exposure(exposure))


def load_exposure(path, geometry: SuperPixelGeometry) -> ExposureImage:
    """Load a CTGE file and bind it to the geometry of its basis."""
    values = decode_exposure(Path(path).read_bytes())
    if values.shape != (geometry.m, geometry.m):
        raise ExposureFormatError(
            f"exposure is {values.shape[0]}x{values.shape[1]} but geometry "
            f"expects {geometry.m}x{geometry.m}"
        )
    return ExposureImage(values, geometry)


def exposure_side(path) -> int:
    """Peek at a CTGE file's m without decoding the raster."""
    header_len = len(EXPOSURE_MAGIC) + struct.calcsize("<HI")
    data = Path(path).read_bytes()[:header_len]
    if len(data) < header_len or data[:4] != EXPOSURE_MAGIC:
        raise ExposureFormatError(f"{path} is not a CTGE file")
    _, m = struct.unpack("<HI", data[4:header_len])
    return m


# ----------------------------------------------------------- basis files

def save_basis(path, basis: ModulationBasis):
    atomic_write_bytes(path, serialize_basis(basis))


def load_basis(path) -> ModulationBasis:
    return deserialize_basis(Path(path).read_bytes())
