"""Grayscale frame access, patch extraction, and ZNCC template search.

The matcher is zero-mean normalized cross-correlation on an integer
displacement grid: scores are invariant to affine intensity changes of
either side, which is what makes template matching robust to thermal
gain and offset drift. No subpixel refinement is attempted.
"""

from __future__ import annotations

import io
import math
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image, UnidentifiedImageError

from .core import BoundingBox
from .util import round_half_up

MIN_PATCH_SIDE = 4

FRAME_SUFFIXES = (".pgm", ".png")


class FrameLoadError(IOError):
    """A frame file is missing, undecodable, or inconsistent with its sequence."""


class DegeneratePatchError(ValueError):
    """The requested patch region, clamped to the frame, is smaller than 4x4."""


class MatchInfeasibleError(ValueError):
    """No placement of the template fits inside the frame within the search range."""


@dataclass(frozen=True, eq=False)
class GrayFrame:
    """Single grayscale frame. ``pixels`` is a read-only (height, width) array;
    file-backed frames are uint8, synthetic float frames are accepted for analysis."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"frame pixels must be a 2-D array, got shape {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class Patch:
    """Rectangular pixel region copied out of a frame, at least 4x4."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64).copy()
        if arr.ndim != 2:
            raise ValueError(f"patch must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < MIN_PATCH_SIDE or arr.shape[1] < MIN_PATCH_SIDE:
            raise DegeneratePatchError(f"patch must be at least 4x4, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Displacement:
    """Integer pixel offset found by the matcher."""

    dx: int
    dy: int

    def as_tuple(self) -> tuple[int, int]:
        return (self.dx, self.dy)


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a binary PGM (P5, maxval <= 255) into a uint8 array."""
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos] != 0x0A:
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FrameLoadError("truncated PGM header")
        return data[start:pos]

    magic = token()
    if magic != b"P5":
        raise FrameLoadError(f"not a binary PGM (magic {magic!r}); only P5 is supported")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise FrameLoadError(f"malformed PGM header: {exc}") from exc
    if width < 1 or height < 1:
        raise FrameLoadError(f"invalid PGM dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise FrameLoadError(f"PGM maxval must be in 1..255, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise FrameLoadError(f"PGM raster truncated: expected {width * height} bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    """Write a uint8 array as binary PGM (P5, maxval 255)."""
    arr = np.ascontiguousarray(np.asarray(pixels, dtype=np.uint8))
    if arr.ndim != 2:
        raise ValueError(f"PGM pixels must be 2-D, got shape {arr.shape}")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + arr.tobytes())


def _decode_png(data: bytes) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise FrameLoadError(f"undecodable PNG: {exc}") from exc
    if img.mode == "L":
        return np.asarray(img, dtype=np.uint8)
    if img.mode == "P":
        img = img.convert("RGB")
    if img.mode in ("RGB", "RGBA"):
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
        # luma per ITU-R 601, rounded half up
        luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
        return np.floor(luma + 0.5).clip(0, 255).astype(np.uint8)
    raise FrameLoadError(f"unsupported PNG mode {img.mode!r}; need 8-bit gray or RGB")


def decode_frame(path: str | Path) -> GrayFrame:
    """Load one frame file (binary PGM required; 8-bit gray/RGB PNG accepted)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FrameLoadError(f"cannot read frame {path}: {exc}") from exc
    if path.suffix.lower() == ".png":
        return GrayFrame(_decode_png(data))
    return GrayFrame(read_pgm(data))


class FrameSequence:
    """Directory of frame files, ordered lexicographically by file name.

    All frames must share one resolution; the first decoded frame pins it.
    Safe for concurrent reads.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FrameLoadError(f"frame directory {self.directory} does not exist")
        self.names = sorted(
            p.name for p in self.directory.iterdir()
            if p.suffix.lower() in FRAME_SUFFIXES
        )
        if not self.names:
            raise FrameLoadError(f"no frame files (*.pgm, *.png) in {self.directory}")
        self._dims: tuple[int, int] | None = None
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.names)

    def load(self, t: int) -> GrayFrame:
        """Load frame number ``t`` (1-based)."""
        if not 1 <= t <= len(self.names):
            raise IndexError(f"frame {t} out of range 1..{len(self.names)}")
        frame = decode_frame(self.directory / self.names[t - 1])
        dims = (frame.width, frame.height)
        with self._lock:
            if self._dims is None:
                self._dims = dims
            elif self._dims != dims:
                raise FrameLoadError(
                    f"frame {t} is {dims[0]}x{dims[1]}, sequence is "
                    f"{self._dims[0]}x{self._dims[1]}")
        return frame

    def dimensions(self) -> tuple[int, int]:
        """(width, height) of the sequence, decoding the first frame if needed."""
        with self._lock:
            dims = self._dims
        if dims is None:
            self.load(1)
            with self._lock:
                dims = self._dims
        return dims


def load_frame(seq: FrameSequence, t: int) -> GrayFrame:
    """Load frame ``t`` (1-based) from a sequence."""
    return seq.load(t)


def _int_region(box: BoundingBox) -> tuple[int, int, int, int]:
    # Integer grid placement: size rounds half-up, origin anchors the rounded
    # size on the box center. Keeps extraction and search placement congruent,
    # so a template always self-matches at zero displacement.
    w = max(round_half_up(box.w), 1)
    h = max(round_half_up(box.h), 1)
    cx, cy = box.center()
    x0 = math.floor(cx - w / 2.0)
    y0 = math.floor(cy - h / 2.0)
    return x0, y0, w, h


def extract_patch(frame: GrayFrame, box: BoundingBox) -> Patch:
    """Copy the integer-grid region under ``box``, clamped to the frame.

    Raises :class:`DegeneratePatchError` when the clamped region is
    smaller than 4x4.
    """
    x0, y0, w, h = _int_region(box)
    xa, ya = max(x0, 0), max(y0, 0)
    xb, yb = min(x0 + w, frame.width), min(y0 + h, frame.height)
    if xb - xa < MIN_PATCH_SIDE or yb - ya < MIN_PATCH_SIDE:
        raise DegeneratePatchError(
            f"box clamps to {max(xb - xa, 0)}x{max(yb - ya, 0)} at ({xa},{ya}); need 4x4")
    return Patch(frame.pixels[ya:yb, xa:xb])


def patch_variance(patch: Patch) -> float:
    """Population variance of patch intensities."""
    return float(np.var(patch.pixels))


def zncc_score(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-mean normalized cross-correlation of two equal-shape arrays.

    Returns 0 when either side has zero variance. Identical arrays score
    exactly 1.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    az = a - a.mean()
    bz = b - b.mean()
    va = float((az * az).sum())
    vb = float((bz * bz).sum())
    if va == 0.0 or vb == 0.0:
        return 0.0
    return float((az * bz).sum() / math.sqrt(va * vb))


def _tie_key(dy: int, dx: int) -> tuple[int, int, int]:
    return (dx * dx + dy * dy, dy, dx)


def zncc_match(
    template: Patch,
    frame: GrayFrame,
    center: tuple[float, float],
    radius: int,
) -> tuple[Displacement, float]:
    """Search ``[-radius, radius]^2`` around ``center`` for the best template placement.

    Placements where the template would leave the frame are skipped; if none
    fits, :class:`MatchInfeasibleError` is raised. Equal scores are broken by
    smallest ``dx^2+dy^2``, then smallest ``dy``, then smallest ``dx``.
    """
    if radius < 1:
        raise ValueError(f"search radius must be >= 1, got {radius}")
    h, w = template.pixels.shape
    cx, cy = center
    x0 = math.floor(cx - w / 2.0)
    y0 = math.floor(cy - h / 2.0)
    dx_lo, dx_hi = max(-radius, -x0), min(radius, frame.width - w - x0)
    dy_lo, dy_hi = max(-radius, -y0), min(radius, frame.height - h - y0)
    if dx_lo > dx_hi or dy_lo > dy_hi:
        raise MatchInfeasibleError(
            f"{w}x{h} template has no feasible placement in "
            f"{frame.width}x{frame.height} frame within radius {radius}")

    sub = np.asarray(
        frame.pixels[y0 + dy_lo : y0 + dy_hi + h, x0 + dx_lo : x0 + dx_hi + w],
        dtype=np.float64)
    windows = sliding_window_view(sub, (h, w))
    tpl = np.asarray(template.pixels, dtype=np.float64)
    tz = tpl - tpl.mean()
    tvar = float((tz * tz).sum())

    n = float(h * w)
    s1 = windows.sum(axis=(2, 3))
    s2 = np.einsum("ijkl,ijkl->ij", windows, windows)
    ivar = np.maximum(s2 - s1 * s1 / n, 0.0)
    if tvar == 0.0:
        scores = np.zeros(ivar.shape)
    else:
        num = np.einsum("ijkl,kl->ij", windows, tz)
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.where(ivar > 0.0, num / np.sqrt(tvar * ivar), 0.0)

    best_score = float(scores.max())
    if best_score == 0.0:
        # zero-variance rule fires exactly; pick the tie-break displacement
        candidates = [(dy, dx) for dy in range(dy_lo, dy_hi + 1)
                      for dx in range(dx_lo, dx_hi + 1)
                      if scores[dy - dy_lo, dx - dx_lo] == 0.0]
        dy, dx = min(candidates, key=lambda d: _tie_key(*d))
        return Displacement(dx, dy), 0.0

    # Rescore near-ties with the exact scalar path so self-matches return 1.0
    # and ties resolve on bit-identical values.
    near = np.argwhere(scores >= best_score - 1e-9)
    best = None
    for iy, ix in near:
        dy, dx = int(iy) + dy_lo, int(ix) + dx_lo
        win = sub[iy : iy + h, ix : ix + w]
        exact = zncc_score(tpl, win)
        key = (-exact, *_tie_key(dy, dx))
        if best is None or key < best[0]:
            best = (key, Displacement(dx, dy), exact)
    score = min(1.0, max(-1.0, best[2]))
    return best[1], score
