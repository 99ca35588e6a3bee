"""Dynamic forward projection, data filters, backprojections and FBP-type
reconstruction operators.

The forward operator integrates the deformed object ``f o Gamma_phi`` along
straight lines (equivalently, ``f`` along the curves ``C(phi, s)``).  The
backprojection evaluates data at ``s = H(phi, x)``.  The reconstruction is
``backproject(cutoff * filter(cutoff * forward(f))) / (4 pi)``.

Weight modes
------------
``"intensity"``
    each particle keeps its value: ``h(phi, y) = f(Gamma_phi y)``.
``"mass_preserving"``
    ``h(phi, y) = |det D Gamma_phi(y)| f(Gamma_phi y)``, so that the total
    mass of ``h(phi, .)`` equals that of ``f``.
callable ``mu(phi, z)``
    a positive weight on reference-frame points, ``h = mu(phi, Gamma_phi y) f(Gamma_phi y)``.

Backprojections use the formal dual of the chosen forward weight unless an
explicit backprojection weight ``nu(phi, x)`` is passed.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Union

import numpy as np

from .core import (TWO_PI, BilinearSampler, GridSpec, ImageGrid, Sinogram, SinoSpec, _linear_rows,
                   theta, theta_perp)
from .motion import MotionModel, _H_raw, check_phi

WeightMode = Union[Literal["intensity", "mass_preserving"], Callable]
RAMP_NORMALIZATION = 1.0 / (4.0 * math.pi)
_PHI_TOL = 1e-9


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("DYNARAY_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def _run_partitioned(fn, parts, threads):
    # outputs are written to disjoint partitions, so ordering never changes results
    threads = resolve_threads(threads)
    if threads == 1 or len(parts) == 1:
        for p in parts:
            fn(p)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fn, parts))


_BLOCK = 8


def _chunks(n, block=_BLOCK):
    # fixed block size: batch shapes, and hence rounding, never depend on the thread count
    return [(a, min(a + block, n)) for a in range(0, n, block)]


@dataclass(frozen=True)
class FilterSpec:
    kind: Literal["ramp", "lambda", "none"] = "ramp"
    apodization: Literal["none", "cosine"] = "cosine"
    cutoff_fraction: float = 1.0

    def __post_init__(self):
        if self.kind not in ("ramp", "lambda", "none"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.apodization not in ("none", "cosine"):
            raise ValueError(f"unknown apodization {self.apodization!r}")
        if not 0.0 < self.cutoff_fraction <= 1.0:
            raise ValueError("cutoff_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class CutoffSpec:
    kind: Literal["sharp", "smooth"] = "sharp"
    taper_width: float = 0.15
    psi_margin: float = 0.05
    interval: tuple[float, float] = (0.0, TWO_PI)

    def __post_init__(self):
        if self.kind not in ("sharp", "smooth"):
            raise ValueError(f"unknown cutoff kind {self.kind!r}")
        if self.kind == "smooth" and not self.taper_width > 0:
            raise ValueError("smooth cutoff needs taper_width > 0")
        if self.psi_margin < 0:
            raise ValueError("psi_margin must be >= 0")


def angular_window(phis, cutoff: CutoffSpec) -> np.ndarray:
    """Sharp indicator of the data interval, or a raised-cosine taper that
    vanishes at both ends and equals one at distance ``taper_width`` inside."""
    phis = np.asarray(phis, dtype=np.float64)
    lo, hi = cutoff.interval
    inside = (phis >= lo - _PHI_TOL) & (phis <= hi + _PHI_TOL)
    if cutoff.kind == "sharp":
        return inside.astype(np.float64)
    tau = cutoff.taper_width
    d = np.minimum(phis - lo, hi - phis)
    w = np.where(d >= tau, 1.0, 0.5 * (1.0 - np.cos(math.pi * np.clip(d, 0.0, tau) / tau)))
    return np.where(inside, w, 0.0)


# ---------------------------------------------------------------------------
# forward operator
# ---------------------------------------------------------------------------


def _forward_weight(model: MotionModel, weight_mode: WeightMode, phi, y, z):
    if weight_mode == "intensity":
        return None
    if weight_mode == "mass_preserving":
        return model.jacobian_det(phi, y)
    if callable(weight_mode):
        return weight_mode(phi, z)
    raise ValueError(f"unknown weight mode {weight_mode!r}")


def forward_project(f: ImageGrid, model: MotionModel, sino_spec: SinoSpec, weight_mode: WeightMode = "intensity",
                    *, step: float | None = None, half_length: float | None = None,
                    threads: int | None = None) -> Sinogram:
    """``g(phi, s) = int f(Gamma_phi(s theta + t theta_perp)) w dt`` by uniform quadrature in ``t``.

    ``t`` runs over ``[-half_length, half_length]`` (default ``s_max``) with a
    step of at most half a pixel.
    """
    phis = sino_spec.phis
    check_phi(model, phis)
    h = min(f.spec.pixel_size)
    step = 0.5 * h if step is None else step
    if step > 0.5 * h * (1 + 1e-12):
        raise ValueError("quadrature step must not exceed half a pixel")
    T = sino_spec.s_max if half_length is None else half_length
    nt = int(math.ceil(2.0 * T / step)) + 1
    t = np.linspace(-T, T, nt)
    dt = t[1] - t[0]
    ss = sino_spec.ss
    out = np.zeros((sino_spec.n_phi, sino_spec.n_s))
    sampler = BilinearSampler(f.values, f.extent)

    def rows(bounds):
        for i in range(*bounds):
            phi = phis[i]
            y = ss[:, None, None] * theta(phi) + t[None, :, None] * theta_perp(phi)
            z = model.forward(phi, y)
            sample = sampler(z[..., 0], z[..., 1])
            w = _forward_weight(model, weight_mode, phi, y, z)
            if w is not None:
                sample = sample * w
            out[i] = sample.sum(axis=1) * dt

    _run_partitioned(rows, _chunks(sino_spec.n_phi), threads)
    return Sinogram.from_spec(sino_spec, out)


# ---------------------------------------------------------------------------
# filters
# ---------------------------------------------------------------------------


def padded_length(n_s: int) -> int:
    return 1 << int(math.ceil(math.log2(2 * n_s)))


def filter_response(spec: FilterSpec, n_pad: int, ds: float) -> np.ndarray:
    """Frequency response on the ``np.fft.fftfreq`` grid of a length-``n_pad`` row.

    Frequencies are angular (rad per unit ``s``): ``|sigma|`` for the ramp,
    ``sigma**2`` for the Lambda filter, both band-limited at
    ``cutoff_fraction * pi / ds``.
    """
    sigma = 2.0 * math.pi * np.fft.fftfreq(n_pad, d=ds)
    if spec.kind == "none":
        return np.ones(n_pad)
    base = np.abs(sigma) if spec.kind == "ramp" else sigma ** 2
    sigma_c = spec.cutoff_fraction * math.pi / ds
    band = np.abs(sigma) <= sigma_c * (1 + 1e-12)
    if spec.apodization == "cosine":
        base = base * np.cos(0.5 * math.pi * np.clip(np.abs(sigma) / sigma_c, 0.0, 1.0))
    return np.where(band, base, 0.0)


def apply_filter(g: Sinogram, spec: FilterSpec, *, threads: int | None = None) -> Sinogram:
    """Per-angle filtering in ``s`` with zero padding to at least ``2 n_s``."""
    if spec.kind == "none":
        return g
    if g.n_s < 8:
        raise ValueError("filtering needs n_s >= 8")
    n_pad = padded_length(g.n_s)
    resp = filter_response(spec, n_pad, g.spec.ds)
    out = np.empty_like(g.values)

    def rows(bounds):
        a, b = bounds
        G = np.fft.fft(g.values[a:b], n=n_pad, axis=1)
        out[a:b] = np.fft.ifft(G * resp, axis=1).real[:, : g.n_s]

    _run_partitioned(rows, _chunks(g.n_phi), threads)
    return g.with_values(out)


# ---------------------------------------------------------------------------
# backprojection
# ---------------------------------------------------------------------------


def dual_weight(model: MotionModel, weight_mode: WeightMode) -> Callable:
    """Backprojection weight ``nu`` that makes the backprojection the formal dual of the forward operator."""
    if weight_mode == "intensity":
        return model.jacobian_det_inverse
    if weight_mode == "mass_preserving":
        return lambda phi, x: np.ones(x.shape[:-1])
    if callable(weight_mode):
        return lambda phi, x: weight_mode(phi, x) * model.jacobian_det_inverse(phi, x)
    raise ValueError(f"unknown weight mode {weight_mode!r}")


def _backproject(g: Sinogram, model: MotionModel, grid_spec: GridSpec, phi_weights: np.ndarray,
                 nu: Callable, threads) -> ImageGrid:
    pts = grid_spec.points()
    out = np.zeros((grid_spec.ny, grid_spec.nx))
    phis = g.phis
    active = [i for i in range(g.n_phi) if phi_weights[i] != 0.0]

    def rows(bounds):
        a, b = bounds
        p = pts[a:b]
        acc = np.zeros(p.shape[:-1])
        for i in active:
            s = _H_raw(model, phis[i], p)
            v = _linear_rows(g.values[i : i + 1], g.s_max, s.reshape(1, -1)).reshape(s.shape)
            acc += phi_weights[i] * nu(phis[i], p) * v
        out[a:b] = acc

    _run_partitioned(rows, _chunks(grid_spec.ny), threads)
    return ImageGrid.from_spec(grid_spec, out)


def _covers_full_turn(g: Sinogram) -> bool:
    lo, hi = g.phi_range
    return abs(lo) <= _PHI_TOL and abs(hi - TWO_PI) <= _PHI_TOL


def backproject_periodic(g: Sinogram, model: MotionModel, grid_spec: GridSpec,
                         weight_mode: WeightMode = "intensity", *, nu: Callable | None = None,
                         threads: int | None = None) -> ImageGrid:
    """``sum_i nu(phi_i, x) g(phi_i, H(phi_i, x)) dphi`` over one period.

    The samples at 0 and 2*pi describe the same angle, so the last row gets
    weight 0 and all others ``dphi`` (closed equal-weight rule).
    """
    if not model.periodic:
        raise ValueError(f"model {model.name!r} is not smoothly periodic; use backproject_restricted")
    if not _covers_full_turn(g):
        raise ValueError("periodic backprojection needs data on [0, 2pi]")
    w = np.full(g.n_phi, g.spec.dphi)
    w[-1] = 0.0
    return _backproject(g, model, grid_spec, w, nu or dual_weight(model, weight_mode), threads)


def backproject_restricted(g: Sinogram, model: MotionModel, grid_spec: GridSpec, cutoff: CutoffSpec | None = None,
                           weight_mode: WeightMode = "intensity", *, nu: Callable | None = None,
                           threads: int | None = None) -> ImageGrid:
    """Dual of the forward operator on the data interval (trapezoid rule, no endpoint identification).

    The dual-side cutoff ``psi`` equals one on the data interval and data
    vanish outside it, so it reduces to the indicator.  With a smooth
    ``cutoff`` the angular taper multiplies the backprojection weight.
    """
    cutoff = cutoff or CutoffSpec()
    if cutoff.psi_margin > model.epsilon:
        raise ValueError("psi_margin must not exceed the model's extension margin epsilon")
    check_phi(model, g.phis)
    w = np.full(g.n_phi, g.spec.dphi)
    w[0] *= 0.5
    w[-1] *= 0.5
    w = w * angular_window(g.phis, cutoff)
    return _backproject(g, model, grid_spec, w, nu or dual_weight(model, weight_mode), threads)


# ---------------------------------------------------------------------------
# composed reconstruction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineSpec:
    sino: SinoSpec
    grid: GridSpec
    filter: FilterSpec = field(default_factory=FilterSpec)
    cutoff: CutoffSpec = field(default_factory=CutoffSpec)
    weight_mode: WeightMode = "intensity"
    backprojection: Literal["auto", "periodic", "restricted"] = "auto"
    normalization: float = RAMP_NORMALIZATION


def reconstruct(model: MotionModel, spec: PipelineSpec, *, f: ImageGrid | None = None, g: Sinogram | None = None,
                threads: int | None = None) -> ImageGrid:
    """``L g = normalization * R^t_psi (window * P (window * g))`` with ``g = R f`` when ``f`` is given.

    The angular window is the indicator of the data interval (sharp) or the
    raised-cosine taper (smooth); in the smooth case it multiplies both the
    data and the backprojection weight.
    """
    if (f is None) == (g is None):
        raise ValueError("pass exactly one of f or g")
    if g is None:
        g = forward_project(f, model, spec.sino, spec.weight_mode, threads=threads)
    win = angular_window(g.phis, spec.cutoff)
    data = g.with_values(g.values * win[:, None])
    filtered = apply_filter(data, spec.filter, threads=threads)

    mode = spec.backprojection
    if mode == "auto":
        mode = "periodic" if (model.periodic and spec.cutoff.kind == "sharp" and _covers_full_turn(g)) else "restricted"
    if mode == "periodic":
        img = backproject_periodic(filtered, model, spec.grid, spec.weight_mode, threads=threads)
    else:
        img = backproject_restricted(filtered, model, spec.grid, spec.cutoff, spec.weight_mode, threads=threads)
    return ImageGrid.from_spec(spec.grid, img.values * spec.normalization)
