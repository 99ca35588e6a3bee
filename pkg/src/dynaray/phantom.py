"""Ellipse-sum phantoms: rasterization, exact parallel-beam projections and
boundary wavefront sets."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import GridSpec, ImageGrid, canonical_angle, theta


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    tilt: float = 0.0
    intensity: float = 1.0

    def __post_init__(self):
        a, b = self.semi_axes
        if not (a > 0 and b > 0):
            raise ValueError("semi-axes must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "semi_axes", (float(a), float(b)))

    def local(self, x: np.ndarray) -> np.ndarray:
        """Coordinates of ``x`` in the ellipse frame (centered, untilted)."""
        d = np.asarray(x, dtype=np.float64) - np.asarray(self.center)
        c, s = math.cos(self.tilt), math.sin(self.tilt)
        return np.stack([c * d[..., 0] + s * d[..., 1], -s * d[..., 0] + c * d[..., 1]], axis=-1)

    def contains(self, x) -> np.ndarray:
        u = self.local(x)
        a, b = self.semi_axes
        return (u[..., 0] / a) ** 2 + (u[..., 1] / b) ** 2 <= 1.0

    def boundary(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Boundary points and unit outward normals at parameters ``t``."""
        t = np.asarray(t, dtype=np.float64)
        a, b = self.semi_axes
        c, s = math.cos(self.tilt), math.sin(self.tilt)
        px, py = a * np.cos(t), b * np.sin(t)
        nx, ny = np.cos(t) / a, np.sin(t) / b
        pts = np.stack([self.center[0] + c * px - s * py, self.center[1] + s * px + c * py], axis=-1)
        nrm = np.stack([c * nx - s * ny, s * nx + c * ny], axis=-1)
        nrm /= np.linalg.norm(nrm, axis=-1, keepdims=True)
        return pts, nrm


@dataclass(frozen=True)
class EllipsePhantom:
    ellipses: tuple[Ellipse, ...]

    def __post_init__(self):
        object.__setattr__(self, "ellipses", tuple(self.ellipses))

    def max_radius(self) -> float:
        if not self.ellipses:
            return 0.0
        return max(math.hypot(*e.center) + max(e.semi_axes) for e in self.ellipses)

    def to_records(self) -> list[dict]:
        return [{"center": list(e.center), "semi_axes": list(e.semi_axes), "tilt": e.tilt,
                 "intensity": e.intensity} for e in self.ellipses]

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "EllipsePhantom":
        out = []
        for r in records:
            unknown = set(r) - {"center", "semi_axes", "tilt", "intensity"}
            if unknown:
                raise ValueError(f"unknown ellipse keys {sorted(unknown)}")
            out.append(Ellipse(tuple(r["center"]), tuple(r["semi_axes"]), float(r.get("tilt", 0.0)),
                               float(r.get("intensity", 1.0))))
        return cls(tuple(out))

    @classmethod
    def from_json(cls, text: str) -> "EllipsePhantom":
        return cls.from_records(json.loads(text))


@dataclass(frozen=True)
class SingularitySample:
    """One covector of the wavefront set: point, codirection angle, jump strength."""

    x: tuple[float, float]
    xi_angle: float
    strength: float
    ellipse: int = -1
    t: float = float("nan")

    @property
    def xi(self) -> np.ndarray:
        return theta(self.xi_angle)


# Illustrative default: an outer shell (two nested ellipses) with three
# interior inclusions.  Repository constants, not measured values.
DEFAULT_PHANTOM = EllipsePhantom((
    Ellipse((0.0, 0.0), (0.80, 0.62), 0.0, 1.0),
    Ellipse((0.0, 0.0), (0.70, 0.52), 0.0, -0.6),
    Ellipse((-0.28, 0.12), (0.20, 0.13), 0.5, 0.5),
    Ellipse((0.30, -0.12), (0.12, 0.22), -0.35, 0.7),
    Ellipse((0.08, 0.30), (0.08, 0.08), 0.0, 0.8),
))

# Two separated ellipses, used where isolated edge seeds are needed.
TWO_ELLIPSE_PHANTOM = EllipsePhantom((
    Ellipse((-0.35, 0.05), (0.30, 0.20), 0.4, 1.0),
    Ellipse((0.38, -0.10), (0.18, 0.32), -0.2, 0.8),
))


def rasterize(phantom: EllipsePhantom, spec: GridSpec) -> ImageGrid:
    """Pixel value = sum of intensities of the ellipses containing the pixel center."""
    pts = spec.points()
    out = np.zeros((spec.ny, spec.nx))
    for e in phantom.ellipses:
        out += np.where(e.contains(pts), e.intensity, 0.0)
    return ImageGrid.from_spec(spec, out)


def analytic_static_radon(phantom: EllipsePhantom, phi, s) -> np.ndarray:
    """Exact line integrals ``R f(phi, s)`` of the ellipse sum (no motion)."""
    phi = np.asarray(phi, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    phi, s = np.broadcast_arrays(phi, s)
    out = np.zeros(phi.shape)
    for e in phantom.ellipses:
        a, b = e.semi_axes
        st = s - (e.center[0] * np.cos(phi) + e.center[1] * np.sin(phi))
        rel = phi - e.tilt
        r2 = (a * np.cos(rel)) ** 2 + (b * np.sin(rel)) ** 2
        chord = np.sqrt(np.clip(r2 - st ** 2, 0.0, None))
        out += e.intensity * 2.0 * a * b * chord / r2
    return out if out.ndim else float(out)


def boundary_wavefront(phantom: EllipsePhantom, n_per_ellipse: int = 64) -> list[SingularitySample]:
    """Uniformly parametrized boundary points with outward normals; emits both ``+xi`` and ``-xi``."""
    if n_per_ellipse < 4:
        raise ValueError("n_per_ellipse must be >= 4")
    out: list[SingularitySample] = []
    t = np.arange(n_per_ellipse) * (2 * math.pi / n_per_ellipse)
    for k, e in enumerate(phantom.ellipses):
        pts, nrm = e.boundary(t)
        ang = canonical_angle(np.arctan2(nrm[:, 1], nrm[:, 0]))
        for i in range(n_per_ellipse):
            x = (float(pts[i, 0]), float(pts[i, 1]))
            out.append(SingularitySample(x, float(ang[i]), e.intensity, k, float(t[i])))
            out.append(SingularitySample(x, canonical_angle(ang[i] + math.pi), e.intensity, k, float(t[i])))
    return out


def boundary_distance(phantom: EllipsePhantom, x, exclude: int = -1, n_dense: int = 4096) -> np.ndarray:
    """Approximate distance from points ``x`` to the nearest boundary of any other ellipse."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    best = np.full(len(x), np.inf)
    t = np.linspace(0.0, 2 * math.pi, n_dense, endpoint=False)
    for k, e in enumerate(phantom.ellipses):
        if k == exclude:
            continue
        pts, _ = e.boundary(t)
        d = np.min(np.linalg.norm(x[:, None, :] - pts[None, :, :], axis=-1), axis=1)
        best = np.minimum(best, d)
    return best


def isolated_samples(phantom: EllipsePhantom, samples: Sequence[SingularitySample], min_distance: float,
                     extent: float | None = None) -> list[SingularitySample]:
    """Keep samples farther than ``min_distance`` from every other ellipse boundary
    (and from the image border when ``extent`` is given)."""
    keep = []
    for smp in samples:
        d = boundary_distance(phantom, smp.x, exclude=smp.ellipse)[0]
        if d <= min_distance:
            continue
        if extent is not None and max(abs(smp.x[0]), abs(smp.x[1])) > extent - min_distance:
            continue
        keep.append(smp)
    return keep
