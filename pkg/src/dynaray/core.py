"""Grids, sampled functions, interpolation and file I/O.

Conventions
-----------
* Images are stored row-major as ``values[iy, ix]`` with shape ``(ny, nx)``.
  Pixel centers sit at ``-extent + (i + 0.5) * 2 * extent / n`` on each axis,
  so the grid is symmetric about the origin.
* Sinograms are stored as ``values[i_phi, j_s]`` with shape ``(n_phi, n_s)``.
  Angles are uniform and endpoint-inclusive on ``phi_range``; detector
  offsets are uniform and endpoint-inclusive on ``[-s_max, s_max]``.
* Everything is float64.  16-bit integers only appear when exporting PGM.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import map_coordinates

TWO_PI = 2.0 * math.pi


class DynarayIOError(OSError):
    """Raised when reading or writing an artifact fails; carries the path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = Path(path)


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    extent: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs nx, ny >= 2")
        if not self.extent > 0:
            raise ValueError("extent must be positive")

    @property
    def pixel_size(self) -> tuple[float, float]:
        return 2.0 * self.extent / self.nx, 2.0 * self.extent / self.ny

    @property
    def xs(self) -> np.ndarray:
        h = 2.0 * self.extent / self.nx
        return -self.extent + (np.arange(self.nx) + 0.5) * h

    @property
    def ys(self) -> np.ndarray:
        h = 2.0 * self.extent / self.ny
        return -self.extent + (np.arange(self.ny) + 0.5) * h

    def points(self) -> np.ndarray:
        """Pixel centers, shape ``(ny, nx, 2)``."""
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.stack([X, Y], axis=-1)


@dataclass(frozen=True)
class ImageGrid:
    nx: int
    ny: int
    extent: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        GridSpec(self.nx, self.ny, self.extent)
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.ny, self.nx):
            raise ValueError(f"values shape {v.shape} != ({self.ny}, {self.nx})")
        if not np.all(np.isfinite(v)):
            raise ValueError("image values must be finite")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_spec(cls, spec: GridSpec, values) -> "ImageGrid":
        return cls(spec.nx, spec.ny, spec.extent, values)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ImageGrid":
        return cls.from_spec(spec, np.zeros((spec.ny, spec.nx)))

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.nx, self.ny, self.extent)

    @property
    def pixel_area(self) -> float:
        hx, hy = self.spec.pixel_size
        return hx * hy


@dataclass(frozen=True)
class SinoSpec:
    n_phi: int
    n_s: int
    s_max: float
    phi_range: tuple[float, float] = (0.0, TWO_PI)

    def __post_init__(self):
        if self.n_phi < 2 or self.n_s < 2:
            raise ValueError("sinogram needs n_phi, n_s >= 2")
        if not self.s_max > 0:
            raise ValueError("s_max must be positive")
        lo, hi = self.phi_range
        if not hi > lo:
            raise ValueError("phi_range must be increasing")
        object.__setattr__(self, "phi_range", (float(lo), float(hi)))

    @property
    def phis(self) -> np.ndarray:
        return np.linspace(self.phi_range[0], self.phi_range[1], self.n_phi)

    @property
    def ss(self) -> np.ndarray:
        return np.linspace(-self.s_max, self.s_max, self.n_s)

    @property
    def ds(self) -> float:
        return 2.0 * self.s_max / (self.n_s - 1)

    @property
    def dphi(self) -> float:
        return (self.phi_range[1] - self.phi_range[0]) / (self.n_phi - 1)


@dataclass(frozen=True)
class Sinogram:
    n_phi: int
    n_s: int
    phi_range: tuple[float, float]
    s_max: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        spec = SinoSpec(self.n_phi, self.n_s, self.s_max, tuple(self.phi_range))
        object.__setattr__(self, "phi_range", spec.phi_range)
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.n_phi, self.n_s):
            raise ValueError(f"values shape {v.shape} != ({self.n_phi}, {self.n_s})")
        if not np.all(np.isfinite(v)):
            raise ValueError("sinogram values must be finite")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_spec(cls, spec: SinoSpec, values) -> "Sinogram":
        return cls(spec.n_phi, spec.n_s, spec.phi_range, spec.s_max, values)

    @property
    def spec(self) -> SinoSpec:
        return SinoSpec(self.n_phi, self.n_s, self.s_max, self.phi_range)

    @property
    def phis(self) -> np.ndarray:
        return self.spec.phis

    @property
    def ss(self) -> np.ndarray:
        return self.spec.ss

    def with_values(self, values) -> "Sinogram":
        return Sinogram(self.n_phi, self.n_s, self.phi_range, self.s_max, values)


def canonical_angle(angle):
    """Map angles onto [0, 2*pi)."""
    a = np.mod(np.asarray(angle, dtype=np.float64), TWO_PI)
    # np.mod returns exactly 2*pi for tiny negative inputs
    a = np.where(a >= TWO_PI, 0.0, a)
    return float(a) if a.ndim == 0 else a


def theta(angle) -> np.ndarray:
    angle = np.asarray(angle, dtype=np.float64)
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def theta_perp(angle) -> np.ndarray:
    angle = np.asarray(angle, dtype=np.float64)
    return np.stack([-np.sin(angle), np.cos(angle)], axis=-1)


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------


class BilinearSampler:
    """Bilinear interpolator with zero extension, reusable across many calls.

    A ring of zero-valued pixels is added around the grid; points outside the
    physical extent return exactly 0.
    """

    def __init__(self, values: np.ndarray, extent: float):
        self.values = np.asarray(values, dtype=np.float64)
        self.extent = float(extent)
        self.ny, self.nx = self.values.shape
        self._padded = np.pad(self.values, 1)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        e = self.extent
        # padded index of the pixel center i is i + 1
        u = (x + e) * (self.nx / (2.0 * e)) + 0.5
        v = (y + e) * (self.ny / (2.0 * e)) + 0.5
        inside = (np.abs(x) <= e) & (np.abs(y) <= e)
        out = map_coordinates(self._padded, [v.ravel(), u.ravel()], order=1, mode="constant", cval=0.0,
                              prefilter=False).reshape(x.shape)
        return np.where(inside, out, 0.0)


def _bilinear(values: np.ndarray, extent: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return BilinearSampler(values, extent)(x, y)


def bilinear_sample(grid: ImageGrid, x) -> np.ndarray | float:
    """Bilinear interpolation of ``grid`` at point(s) ``x`` (last axis = 2).

    The image is extended by zero: a virtual ring of zero-valued pixel
    centers lies half a pixel outside the extent, and anything beyond the
    physical extent samples to exactly 0.
    """
    pts = np.asarray(x, dtype=np.float64)
    out = _bilinear(grid.values, grid.extent, pts[..., 0], pts[..., 1])
    return float(out) if out.ndim == 0 else out


def _linear_rows(rows: np.ndarray, s_max: float, s: np.ndarray) -> np.ndarray:
    """Linear interpolation of each row of ``rows`` (shape (m, n_s)) at ``s`` (shape (m, k))."""
    m, n_s = rows.shape
    ds = 2.0 * s_max / (n_s - 1)
    u = (s + s_max) / ds
    inside = (u >= 0.0) & (u <= n_s - 1)
    u = np.where(inside, u, 0.0)
    j0 = np.minimum(np.floor(u).astype(np.intp), n_s - 2)
    w = u - j0
    r = np.arange(m)[:, None]
    out = rows[r, j0] * (1.0 - w) + rows[r, j0 + 1] * w
    return np.where(inside, out, 0.0)


def linear_sample_s(sino: Sinogram, phi_index: int, s) -> np.ndarray | float:
    """Linear interpolation in ``s`` along one angle row; 0 for ``|s| > s_max``."""
    if not 0 <= phi_index < sino.n_phi:
        raise IndexError(f"phi_index {phi_index} out of range [0, {sino.n_phi})")
    s_arr = np.asarray(s, dtype=np.float64)
    out = _linear_rows(sino.values[phi_index : phi_index + 1], sino.s_max, s_arr.reshape(1, -1))
    out = out.reshape(s_arr.shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def rescale_u16(values) -> np.ndarray:
    """Affine map min -> 0, max -> 65535 with round-half-up; constant input maps to 0."""
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot export non-finite values")
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.uint16)
    scaled = np.floor((v - lo) * (65535.0 / (hi - lo)) + 0.5)
    return np.clip(scaled, 0, 65535).astype(np.uint16)


def _display_rows(payload) -> np.ndarray:
    # images are written with +y up (first PGM row = largest y); sinograms as stored
    if isinstance(payload, ImageGrid):
        return payload.values[::-1]
    if isinstance(payload, Sinogram):
        return payload.values
    arr = np.asarray(payload, dtype=np.float64)
    return arr.reshape(1, -1) if arr.ndim == 1 else arr


def write_pgm16_pixels(path, pixels: np.ndarray) -> None:
    path = Path(path)
    pixels = np.asarray(pixels, dtype=np.uint16)
    height, width = pixels.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{width} {height}\n65535\n".encode("ascii"))
            # PGM mandates most-significant byte first
            fh.write(pixels.astype(">u2").tobytes())
    except OSError as exc:
        raise DynarayIOError(path, exc.strerror or str(exc)) from exc


def write_pgm16(path, payload) -> None:
    write_pgm16_pixels(path, rescale_u16(_display_rows(payload)))


def read_pgm16(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DynarayIOError(path, exc.strerror or str(exc)) from exc
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    pos += 1
    if tokens[0] != "P5" or tokens[3] != "65535":
        raise DynarayIOError(path, "not a 16-bit P5 PGM")
    width, height = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data[pos:], dtype=">u2", count=width * height).reshape(height, width).astype(np.uint16)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def header_for(payload) -> dict:
    if isinstance(payload, ImageGrid):
        return {"type": "image", "nx": payload.nx, "ny": payload.ny, "extent": payload.extent,
                "dtype": "<f8", "order": "row-major", "shape": [payload.ny, payload.nx]}
    if isinstance(payload, Sinogram):
        return {"type": "sinogram", "n_phi": payload.n_phi, "n_s": payload.n_s,
                "phi_range": list(payload.phi_range), "s_max": payload.s_max,
                "dtype": "<f8", "order": "row-major", "shape": [payload.n_phi, payload.n_s]}
    raise TypeError(f"cannot write {type(payload).__name__} as rawf64")


def write_rawf64(path, payload) -> Path:
    """Write little-endian float64 row-major data plus a JSON sidecar; returns the sidecar path."""
    path = Path(path)
    header = header_for(payload)
    side = sidecar_path(path)
    try:
        path.write_bytes(np.ascontiguousarray(payload.values, dtype="<f8").tobytes())
        side.write_text(json.dumps(header, indent=2) + "\n")
    except OSError as exc:
        raise DynarayIOError(path, exc.strerror or str(exc)) from exc
    return side


def read_rawf64(path) -> ImageGrid | Sinogram:
    path = Path(path)
    side = sidecar_path(path)
    try:
        header = json.loads(side.read_text())
        raw = path.read_bytes()
    except OSError as exc:
        raise DynarayIOError(path, exc.strerror or str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise DynarayIOError(side, f"bad JSON header: {exc}") from exc
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    try:
        if header["type"] == "image":
            return ImageGrid(header["nx"], header["ny"], header["extent"],
                             values.reshape(header["ny"], header["nx"]))
        if header["type"] == "sinogram":
            return Sinogram(header["n_phi"], header["n_s"], tuple(header["phi_range"]),
                            header["s_max"], values.reshape(header["n_phi"], header["n_s"]))
    except (KeyError, ValueError) as exc:
        raise DynarayIOError(path, f"header/payload mismatch: {exc}") from exc
    raise DynarayIOError(side, f"unknown payload type {header.get('type')!r}")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    except OSError as exc:
        raise DynarayIOError(path, exc.strerror or str(exc)) from exc


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DynarayIOError(path, exc.strerror or str(exc)) from exc
    if not rows:
        raise DynarayIOError(path, "empty CSV")
    return rows[0], rows[1:]
