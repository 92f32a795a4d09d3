"""Flow-field data model, bit-exact ``.flo`` I/O, magnitudes, color coding.

File format
-----------
The interchange format is the Middlebury ``.flo`` layout:

* bytes 0-3: the float32 ``202021.25`` little-endian (the ASCII tag "PIEH"),
* bytes 4-7 / 8-11: width and height as little-endian int32,
* then ``width * height`` interleaved ``(u, v)`` float32 pairs, row-major.

``write_flow_file(read_flow_file(p), q)`` reproduces the input bytes exactly.

Color coding
------------
``colorize`` renders direction as hue and magnitude as color depth using a
55-entry hue wheel built from six interpolated segments (red-yellow 15,
yellow-green 6, green-cyan 4, cyan-blue 11, blue-magenta 13, magenta-red 6;
see ``make_colorwheel``). Per-pixel magnitude is scaled by the image maximum
to ``rad`` in [0, 1]; each channel is then ``1 - rad * (1 - wheel_color)``,
so zero motion renders white and larger motion renders a deeper hue. Every
wheel entry has at least one zero channel, hence the maximum channel
deviation from white equals ``rad`` for every direction; "distance from
white" throughout this package means that Chebyshev deviation.
"""

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels

FLO_MAGIC = 202021.25


class FlowFormatError(Exception):
    """Malformed ``.flo`` payload."""


class BadMagic(FlowFormatError):
    """The 4-byte magic tag does not decode to 202021.25."""


class Truncated(FlowFormatError):
    """Byte length differs from what the header promises."""


class NonFinite(FlowFormatError):
    """NaN or Inf flow values encountered with ``nonfinite='reject'``."""


@dataclass(frozen=True)
class FlowField:
    """Dense 2-channel motion field in pixels/frame.

    ``u`` and ``v`` are (height, width) float arrays (float32 as loaded from
    disk; operations may return float64-backed fields). All values finite.
    """

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u, v = np.asarray(self.u), np.asarray(self.v)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(f"u/v must be equal-shape 2-D arrays, got {u.shape} and {v.shape}")
        if u.shape[0] < 1 or u.shape[1] < 1:
            raise ValueError(f"flow field must be at least 1x1, got {u.shape}")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise ValueError("flow field contains non-finite values")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class MagnitudeMap:
    """Per-pixel nonnegative flow magnitude; values in [0, 1] when normalized."""

    mag: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        mag = np.asarray(self.mag, dtype=np.float64)
        if mag.ndim != 2:
            raise ValueError("magnitude map must be 2-D")
        if (mag < 0).any() or not np.isfinite(mag).all():
            raise ValueError("magnitudes must be finite and nonnegative")
        if self.normalized and (mag > 1.0).any():
            raise ValueError("normalized magnitudes must lie in [0, 1]")
        object.__setattr__(self, "mag", mag)

    @property
    def width(self) -> int:
        return self.mag.shape[1]

    @property
    def height(self) -> int:
        return self.mag.shape[0]


@dataclass(frozen=True)
class ColorImage:
    """8-bit RGB render of a flow field; dimensions match the source."""

    rgb: np.ndarray

    def __post_init__(self):
        rgb = np.asarray(self.rgb)
        if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
            raise ValueError("rgb must be a (H, W, 3) uint8 array")
        object.__setattr__(self, "rgb", rgb)

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]


def read_flow_file(path, nonfinite: str = "reject") -> FlowField:
    """Read a ``.flo`` file.

    ``nonfinite`` is ``"reject"`` (raise :class:`NonFinite`, the default) or
    ``"zero"`` (substitute zeros and emit a warning).
    """
    if nonfinite not in ("reject", "zero"):
        raise ValueError(f"nonfinite must be 'reject' or 'zero', got {nonfinite!r}")
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise Truncated(f"{path}: {len(data)} bytes, header needs 12")
    (magic,) = struct.unpack("<f", data[:4])
    if magic != FLO_MAGIC:
        raise BadMagic(f"{path}: magic decodes to {magic!r}, expected {FLO_MAGIC}")
    if len(data) < 12:
        raise Truncated(f"{path}: {len(data)} bytes, header needs 12")
    width, height = struct.unpack("<ii", data[4:12])
    if width < 1 or height < 1:
        raise FlowFormatError(f"{path}: invalid dimensions {width}x{height}")
    expected = 12 + 8 * width * height
    if len(data) != expected:
        raise Truncated(f"{path}: {len(data)} bytes, header promises {expected}")
    pairs = np.frombuffer(data[12:], dtype="<f4").reshape(height, width, 2)
    u = pairs[..., 0].copy()
    v = pairs[..., 1].copy()
    bad = ~(np.isfinite(u) & np.isfinite(v))
    if bad.any():
        if nonfinite == "reject":
            raise NonFinite(f"{path}: {int(bad.sum())} non-finite flow values")
        warnings.warn(f"{path}: zeroed {int(bad.sum())} non-finite flow values")
        u = np.where(np.isfinite(u), u, np.float32(0.0))
        v = np.where(np.isfinite(v), v, np.float32(0.0))
    return FlowField(u=u, v=v)


def write_flow_file(flow: FlowField, path) -> None:
    """Write ``flow`` in the exact byte layout read by :func:`read_flow_file`.

    Values are stored as float32 (lossless for float32-backed fields).
    """
    header = struct.pack("<fii", FLO_MAGIC, flow.width, flow.height)
    pairs = np.empty((flow.height, flow.width, 2), dtype="<f4")
    pairs[..., 0] = flow.u
    pairs[..., 1] = flow.v
    Path(path).write_bytes(header + pairs.tobytes())


def magnitude(flow: FlowField) -> MagnitudeMap:
    """Per-pixel ``sqrt(u^2 + v^2)``, unnormalized."""
    mag = np.hypot(flow.u.astype(np.float64), flow.v.astype(np.float64))
    return MagnitudeMap(mag=mag, normalized=False)


def normalize_magnitudes(mag: MagnitudeMap) -> MagnitudeMap:
    """Scale so the per-image maximum maps to 1; an all-zero map stays zero.

    Idempotent: a map already flagged normalized is returned unchanged.
    """
    if mag.normalized:
        return mag
    peak = mag.mag.max()
    out = mag.mag / peak if peak > 0.0 else np.zeros_like(mag.mag)
    return MagnitudeMap(mag=out, normalized=True)


def make_colorwheel() -> np.ndarray:
    """The 55x3 hue table (values 0..255) behind :func:`colorize`.

    Six interpolated segments: RY=15, YG=6, GC=4, CB=11, BM=13, MR=6.
    """
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    ncols = ry + yg + gc + cb + bm + mr
    wheel = np.zeros((ncols, 3))
    col = 0
    wheel[0:ry, 0] = 255
    wheel[0:ry, 1] = np.floor(255 * np.arange(ry) / ry)
    col += ry
    wheel[col:col + yg, 0] = 255 - np.floor(255 * np.arange(yg) / yg)
    wheel[col:col + yg, 1] = 255
    col += yg
    wheel[col:col + gc, 1] = 255
    wheel[col:col + gc, 2] = np.floor(255 * np.arange(gc) / gc)
    col += gc
    wheel[col:col + cb, 1] = 255 - np.floor(255 * np.arange(cb) / cb)
    wheel[col:col + cb, 2] = 255
    col += cb
    wheel[col:col + bm, 2] = 255
    wheel[col:col + bm, 0] = np.floor(255 * np.arange(bm) / bm)
    col += bm
    wheel[col:col + mr, 2] = 255 - np.floor(255 * np.arange(mr) / mr)
    wheel[col:col + mr, 0] = 255
    return wheel


_WHEEL01 = make_colorwheel() / 255.0


def colorize_float(flow: FlowField) -> np.ndarray:
    """Quantization-free colorize core: float (H, W, 3) in [0, 1].

    Hue is a function of ``atan2(v, u)`` only; per channel the value is
    ``1 - rad * (1 - wheel_color)`` with ``rad`` the magnitude scaled by the
    per-image maximum.
    """
    u = np.ascontiguousarray(flow.u, dtype=np.float64)
    v = np.ascontiguousarray(flow.v, dtype=np.float64)
    return kernels.colorize_core(u, v, _WHEEL01)


def colorize(flow: FlowField) -> ColorImage:
    """Render a flow field to 8-bit RGB (white at zero motion)."""
    rgb = np.floor(255.0 * colorize_float(flow)).astype(np.uint8)
    return ColorImage(rgb=rgb)


def distance_from_white(rgb01: np.ndarray) -> np.ndarray:
    """Chebyshev deviation from white per pixel for a float [0, 1] image.

    For the wheel used here this equals the rendered ``rad``, independent of
    direction (every wheel hue saturates at least one channel to zero).
    """
    return (1.0 - rgb01).max(axis=2)


def write_png(image: ColorImage, path) -> None:
    Image.fromarray(image.rgb, mode="RGB").save(path, format="PNG")


def write_magnitude_png(mag: MagnitudeMap, path) -> None:
    """Grayscale render, darker = more motion (white at zero), like colorize."""
    m = mag if mag.normalized else normalize_magnitudes(mag)
    gray = np.floor(255.0 * (1.0 - m.mag)).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(path, format="PNG")
