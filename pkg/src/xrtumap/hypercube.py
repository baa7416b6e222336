"""Hyperspectral cube data model, ``.hsc`` file I/O and cube preprocessing.

A cube is a dense ``[H, W, C]`` array: ``H`` is the belt/time axis, ``W``
the detector-pixel axis and ``C`` the energy-band axis. Values are photon
intensities or, after white normalization, transmittances in ``[0, 1]``.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CubeFormatError, DataError

log = logging.getLogger(__name__)

MAGIC = b"HSC1"
HEADER = struct.Struct("<4sIIIB")
TRANSMITTANCE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class HyperCube:
    """Non-negative ``[H, W, C]`` float32 cube.

    ``transmittance`` tags cubes that went through white normalization;
    those are bounded above by one.
    """

    data: np.ndarray
    transmittance: bool = False

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise DataError(f"cube must be 3-D [H, W, C], got shape {data.shape}")
        if min(data.shape) == 0:
            raise DataError(f"cube has a zero-sized dimension: {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("cube contains non-finite values")
        if np.any(data < 0):
            raise DataError("cube contains negative values")
        if self.transmittance and np.any(data > 1 + TRANSMITTANCE_TOL):
            raise DataError("transmittance cube has values above 1")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, HyperCube):
            return NotImplemented
        return (
            self.transmittance == other.transmittance
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class WhiteReference:
    """Open-beam intensity ``I0`` per (detector pixel, band), shape ``[W, C]``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise DataError(f"white reference must be 2-D [W, C], got {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data <= 0):
            raise DataError("white reference must be finite and strictly positive")
        object.__setattr__(self, "data", data)


def save_cube(cube: HyperCube, path) -> None:
    h, w, c = cube.shape
    header = HEADER.pack(MAGIC, h, w, c, 1 if cube.transmittance else 0)
    payload = cube.data.astype("<f4", copy=False).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_cube(path) -> HyperCube:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise CubeFormatError("truncated header", offset=len(raw))
    magic, h, w, c, flag = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CubeFormatError(f"bad magic {magic!r}", offset=0)
    if min(h, w, c) == 0:
        raise CubeFormatError(f"zero-sized dimension ({h}, {w}, {c})", offset=4)
    if flag not in (0, 1):
        raise CubeFormatError(f"unknown unit flag {flag}", offset=16)
    count = h * w * c
    expected = HEADER.size + 4 * count
    if len(raw) < expected:
        raise CubeFormatError(
            f"truncated payload: header declares {count} values, "
            f"file holds {(len(raw) - HEADER.size) // 4}",
            offset=len(raw),
        )
    if len(raw) > expected:
        raise CubeFormatError("trailing bytes after payload", offset=expected)
    values = np.frombuffer(raw, dtype="<f4", count=count, offset=HEADER.size)
    bad = np.flatnonzero(~np.isfinite(values) | (values < 0))
    if bad.size:
        idx = int(bad[0])
        raise CubeFormatError(
            f"invalid value {values[idx]!r} at element {idx}",
            offset=HEADER.size + 4 * idx,
        )
    data = values.reshape(h, w, c).astype(np.float32)
    if flag == 1:
        over = np.flatnonzero(values > 1 + TRANSMITTANCE_TOL)
        if over.size:
            idx = int(over[0])
            raise CubeFormatError(
                f"transmittance value {values[idx]!r} above 1",
                offset=HEADER.size + 4 * idx,
            )
    return HyperCube(data, transmittance=bool(flag))


def load_mask(path) -> np.ndarray:
    """Read a ``C == 1`` cube holding {0, 1} values as a boolean ``[H, W]`` mask."""
    cube = load_cube(path)
    if cube.bands != 1:
        raise DataError(f"{path}: mask must have exactly one band, got {cube.bands}")
    values = cube.data[..., 0]
    if not np.all((values == 0) | (values == 1)):
        raise DataError(f"{path}: mask values must be 0 or 1")
    return values.astype(bool)


def save_mask(mask, path) -> None:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DataError(f"mask must be 2-D, got shape {mask.shape}")
    save_cube(HyperCube(mask.astype(np.float32)[..., None]), path)


def white_normalize(cube: HyperCube, ref: WhiteReference) -> HyperCube:
    """Divide by the open-beam reference and clamp to ``[0, 1]``."""
    if cube.transmittance:
        raise DataError("cube is already in transmittance units")
    if ref.data.shape != (cube.width, cube.bands):
        raise DataError(
            f"reference shape {ref.data.shape} does not match cube (W, C) = "
            f"{(cube.width, cube.bands)}"
        )
    ratio = cube.data / ref.data[None, :, :]
    clamped = int(np.count_nonzero(ratio > 1))
    if clamped:
        log.info(
            "white normalization clamped %d of %d values above 1", clamped, ratio.size
        )
    return HyperCube(np.clip(ratio, 0.0, 1.0), transmittance=True)


def fuse_beer_lambert(a: HyperCube, b: HyperCube) -> HyperCube:
    """Stack two absorbers: transmittances multiply."""
    if not (a.transmittance and b.transmittance):
        raise DataError("Beer-Lambert fusion needs transmittance cubes")
    if a.shape != b.shape:
        raise DataError(f"shape mismatch: {a.shape} vs {b.shape}")
    return HyperCube(a.data * b.data, transmittance=True)


def pool_windows(size: int, out: int) -> list[tuple[int, int]]:
    """Adaptive pooling windows ``[floor(i*size/out), ceil((i+1)*size/out))``."""
    return [
        (math.floor(i * size / out), math.ceil((i + 1) * size / out))
        for i in range(out)
    ]


def avg_pool2d(cube: HyperCube, out_h: int, out_w: int) -> HyperCube:
    if out_h < 1 or out_w < 1:
        raise DataError(f"pooling target must be positive, got ({out_h}, {out_w})")
    if out_h > cube.height or out_w > cube.width:
        raise DataError(
            f"pooling target ({out_h}, {out_w}) exceeds cube ({cube.height}, {cube.width})"
        )
    src = cube.data.astype(np.float64)
    out = np.empty((out_h, out_w, cube.bands), dtype=np.float64)
    for i, (r0, r1) in enumerate(pool_windows(cube.height, out_h)):
        for j, (c0, c1) in enumerate(pool_windows(cube.width, out_w)):
            out[i, j] = src[r0:r1, c0:c1].reshape(-1, cube.bands).mean(axis=0)
    if cube.transmittance:
        np.minimum(out, 1.0, out=out)
    return HyperCube(out, transmittance=cube.transmittance)


def flatten_pixels(cube: HyperCube, mask=None) -> np.ndarray:
    """Pixels as rows (row-major scan order), bands as columns."""
    pixels = cube.data.reshape(-1, cube.bands).astype(np.float64)
    if mask is None:
        return pixels
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (cube.height, cube.width):
        raise DataError(f"mask shape {mask.shape} does not match cube spatial shape")
    if not mask.any():
        raise DataError("mask selects no pixels")
    return pixels[mask.ravel()]


def reshape_pixels(pixels, height: int, width: int, mask=None, fill=0.0) -> np.ndarray:
    """Inverse of :func:`flatten_pixels`: rows back to an ``[H, W, D]`` array.

    Projected features may be negative (PCA), so the result is a plain
    array rather than a :class:`HyperCube`. Unselected pixels get ``fill``.
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise DataError("pixel matrix must be 2-D")
    if mask is None:
        if pixels.shape[0] != height * width:
            raise DataError(
                f"{pixels.shape[0]} rows cannot fill a {height}x{width} image"
            )
        return pixels.reshape(height, width, pixels.shape[1])
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (height, width) or mask.sum() != pixels.shape[0]:
        raise DataError("mask does not match pixel count or image shape")
    out = np.full((height * width, pixels.shape[1]), fill, dtype=pixels.dtype)
    out[mask.ravel()] = pixels
    return out.reshape(height, width, pixels.shape[1])
