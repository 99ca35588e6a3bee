"""Predictions made from the motion model alone.

* ``check_bolker``: immersion determinant ``IC = det[D_x H; D_x D_phi H]`` and a
  sampled injectivity test of ``x -> (H, D_phi H)``.
* ``map_to_data``: where an object covector ``(x, xi)`` shows up in the data.
* ``visibility``: which codirections at ``x`` are probed by some angle in ``A``.
* ``artifact_curves``: curves ``C(phi_end, s)`` along which a sharp angular
  cutoff at ``phi_end in {0, 2 pi}`` may spread singularities.
* ``check_uniqueness_condition`` and ``edge_energy``.

Directions are handled up to sign unless ``oriented=True`` is requested:
``xi`` and ``-xi`` are probed by the same data (``sigma`` may be negative).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .core import TWO_PI, ImageGrid, bilinear_sample, canonical_angle, theta
from .motion import (MotionModel, _dphi_H_raw, _grad_H_raw, _H_raw, check_phi, eval_grad_dphi_H,
                     eval_N, integration_curve)
from .operators import _chunks, _run_partitioned
from .phantom import SingularitySample

DEFAULT_SCAN = 2048


# ---------------------------------------------------------------------------
# Bolker condition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BolkerTolerances:
    ic_tol: float = 1e-6
    h_tol: float | None = None   # default 1e-6 * max |x|
    dh_tol: float = 1e-6
    x_sep: float | None = None   # default 2 * sample spacing


@dataclass
class BolkerReport:
    """Sampled Bolker check.  ``passed`` means "no violation found at this
    resolution"; a sampled test cannot prove injectivity."""

    model: str
    phis: np.ndarray
    points: np.ndarray
    ic_grid: np.ndarray          # shape (n_phi, n_points)
    injectivity_violations: list = field(default_factory=list)
    ic_tol: float = 1e-6

    @property
    def ic_min(self) -> float:
        return float(np.min(np.abs(self.ic_grid)))

    @property
    def ic_sign_consistent(self) -> bool:
        return bool(np.all(self.ic_grid > 0) or np.all(self.ic_grid < 0))

    @property
    def passed(self) -> bool:
        return self.ic_min > self.ic_tol and not self.injectivity_violations

    def summary(self) -> dict:
        return {
            "model": self.model,
            "n_phi": int(len(self.phis)),
            "n_points": int(len(self.points)),
            "ic_min": self.ic_min,
            "ic_max": float(np.max(np.abs(self.ic_grid))),
            "ic_sign_consistent": self.ic_sign_consistent,
            "n_injectivity_violations": len(self.injectivity_violations),
            "passed": self.passed,
            "statement": ("no violation found at sampled resolution" if self.passed
                          else "violation found at sampled resolution"),
        }


def _min_spacing(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    d, _ = cKDTree(points).query(points, k=2)
    return float(np.min(d[:, 1]))


def check_bolker(model: MotionModel, x_grid, phi_grid, tolerances: BolkerTolerances | None = None,
                 *, threads: int | None = None) -> BolkerReport:
    """Evaluate ``IC(x, phi)`` on the sample grid and search for pairs of distinct
    points sharing ``(H, D_phi H)`` at the same angle."""
    tol = tolerances or BolkerTolerances()
    pts = np.asarray(x_grid, dtype=np.float64).reshape(-1, 2)
    phis = np.asarray(phi_grid, dtype=np.float64).ravel()
    if len(pts) == 0 or len(phis) == 0:
        raise ValueError("x_grid and phi_grid must be nonempty")
    check_phi(model, phis)
    h_tol = tol.h_tol if tol.h_tol is not None else 1e-6 * max(1.0, float(np.max(np.abs(pts))))
    x_sep = tol.x_sep if tol.x_sep is not None else 2.0 * _min_spacing(pts)

    ic = np.empty((len(phis), len(pts)))
    found: list[list] = [[] for _ in phis]

    def work(bounds):
        a, b = bounds
        for i in range(a, b):
            p = phis[i]
            N = _grad_H_raw(model, p, pts)
            G = eval_grad_dphi_H(model, p, pts)
            ic[i] = N[:, 0] * G[:, 1] - N[:, 1] * G[:, 0]
            key = np.stack([_H_raw(model, p, pts) / h_tol, _dphi_H_raw(model, p, pts) / tol.dh_tol], axis=-1)
            for j, k in sorted(cKDTree(key).query_pairs(1.0, p=np.inf)):
                if np.linalg.norm(pts[j] - pts[k]) > x_sep:
                    found[i].append((float(p), tuple(pts[j]), tuple(pts[k])))

    _run_partitioned(work, _chunks(len(phis)), threads)
    violations = [v for per_phi in found for v in per_phi]
    return BolkerReport(model.name, phis, pts, ic, violations, tol.ic_tol)


# ---------------------------------------------------------------------------
# object covectors -> data covectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DataSingularity:
    """Data covector ``sigma (ds - d_phi H dphi)`` at ``(phi, s)``, stored as ``eta = (-sigma d_phi H, sigma)``."""

    phi: float
    s: float
    eta: tuple[float, float]

    @property
    def sigma(self) -> float:
        return self.eta[1]

    def __post_init__(self):
        if self.eta[1] == 0.0:
            raise ValueError("data covectors have a nonzero ds component")


def default_phi_search(model: MotionModel, extended: bool = False) -> tuple[float, float]:
    """``[0, 2 pi)`` for periodic models; ``[0, 2 pi]`` or the open ``(-eps, 2 pi + eps)`` otherwise."""
    if model.periodic:
        return (0.0, TWO_PI)
    if extended:
        shrink = model.epsilon * (1.0 - 1e-9)
        return (-shrink, TWO_PI + shrink)
    return (0.0, TWO_PI)


def _parallel_roots(model: MotionModel, x: np.ndarray, xi: np.ndarray, lo: float, hi: float,
                    n_scan: int, half_open: bool) -> list[float]:
    """All ``phi`` in the search interval with ``N(phi, x)`` parallel to ``xi`` (either sign)."""
    def cross(p):
        N = _grad_H_raw(model, p, x)
        return N[..., 0] * xi[1] - N[..., 1] * xi[0]

    grid = np.linspace(lo, hi, n_scan + 1)
    vals = cross(grid)
    scale = np.linalg.norm(_grad_H_raw(model, grid, x), axis=-1) * np.linalg.norm(xi)
    zero = np.abs(vals) <= 1e-13 * scale
    roots: list[float] = [float(grid[i]) for i in np.flatnonzero(zero)]
    for i in range(n_scan):
        if zero[i] or zero[i + 1]:
            continue
        if vals[i] * vals[i + 1] < 0:
            roots.append(brentq(cross, grid[i], grid[i + 1], xtol=1e-12, rtol=4 * np.finfo(float).eps))
    # touching roots (no sign change) are below scan resolution; flag them
    a = np.abs(vals) / np.maximum(scale, 1e-300)
    interior = (a[1:-1] < a[:-2]) & (a[1:-1] < a[2:]) & (a[1:-1] < 1e-3)
    for i in np.flatnonzero(interior) + 1:
        if vals[i - 1] * vals[i + 1] > 0 and not zero[i]:
            warnings.warn(f"possible tangential root near phi={grid[i]:.6f}; multiplicity below scan resolution",
                          RuntimeWarning, stacklevel=3)
    roots.sort()
    if half_open:
        roots = [r for r in roots if r < hi - 1e-12]
    out: list[float] = []
    for r in roots:
        if not out or r - out[-1] > 1e-9:
            out.append(r)
    return out


def map_to_data(model: MotionModel, sample: SingularitySample, phi_search: tuple[float, float] | None = None,
                n_scan: int = DEFAULT_SCAN, *, oriented: bool = False,
                bolker: BolkerReport | None = None) -> list[DataSingularity]:
    """Data covectors produced by the object covector ``(x, xi)``.

    Solutions are the angles with ``N(phi, x)`` parallel to ``xi``; with
    ``oriented=True`` only those with ``N . xi > 0`` (``sigma > 0``) are kept.
    An empty list means the covector is invisible on ``phi_search``.
    """
    if bolker is not None and not bolker.passed:
        warnings.warn(f"Bolker check failed for {model.name!r}; data correspondence may not be one-to-one",
                      RuntimeWarning, stacklevel=2)
    lo, hi = phi_search if phi_search is not None else default_phi_search(model)
    check_phi(model, [lo, hi])
    x = np.asarray(sample.x, dtype=np.float64)
    xi = sample.xi
    half_open = model.periodic and abs(hi - lo - TWO_PI) <= 1e-12
    out = []
    for p in _parallel_roots(model, x, xi, lo, hi, n_scan, half_open):
        N = _grad_H_raw(model, p, x)
        sigma = float(np.dot(xi, N) / np.dot(N, N))
        if oriented and sigma <= 0:
            continue
        dH = float(_dphi_H_raw(model, p, x))
        out.append(DataSingularity(float(p), float(_H_raw(model, p, x)), (-sigma * dH, sigma)))
    return out


# ---------------------------------------------------------------------------
# visible / invisible directions
# ---------------------------------------------------------------------------


def _merge_circle(arcs: Iterable[tuple[float, float]], tol: float = 0.0) -> list[tuple[float, float]]:
    """Union of arcs ``[a, b]`` (``b >= a``, any real) as sorted disjoint intervals of ``[0, 2 pi]``."""
    pieces = []
    for a, b in arcs:
        if b - a >= TWO_PI - tol:
            return [(0.0, TWO_PI)]
        a0 = a % TWO_PI
        b0 = a0 + (b - a)
        if b0 <= TWO_PI:
            pieces.append((a0, b0))
        else:
            pieces.append((a0, TWO_PI))
            pieces.append((0.0, b0 - TWO_PI))
    pieces.sort()
    merged: list[list[float]] = []
    for a, b in pieces:
        if merged and a <= merged[-1][1] + tol:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    if len(merged) == 1 and merged[0][0] <= tol and merged[0][1] >= TWO_PI - tol:
        return [(0.0, TWO_PI)]
    return [(float(a), float(b)) for a, b in merged]


@dataclass
class VisibilityReport:
    """Codirections at ``x`` probed by angles in ``A`` (up to sign).

    ``visible`` is a list of closed arcs in ``[0, 2 pi]``; ``invisible`` is the
    complement (open arcs); ``boundary_angles`` are the codirections probed at
    the ends of ``A`` (empty for a periodic model observed over a full turn).
    """

    x: tuple[float, float]
    A: list[tuple[float, float]]
    visible: list[tuple[float, float]]
    invisible: list[tuple[float, float]]
    boundary_angles: list[float]
    scan_cell: float
    _paths: list = field(default_factory=list, repr=False)
    _half_open: bool = False

    def contains(self, angle: float) -> bool:
        a = canonical_angle(angle)
        return any(lo - 1e-12 <= a <= hi + 1e-12 for lo, hi in self.visible) or (
            a < 1e-12 and any(hi >= TWO_PI - 1e-12 for _, hi in self.visible))

    def multiplicity(self, angle: float) -> int:
        """Number of scanned angles at which ``N`` points exactly along ``theta(angle)``
        (oriented crossings, the larger of the counts for ``xi`` and ``-xi``)."""
        return max(self._crossings(angle), self._crossings(angle + math.pi))

    def _crossings(self, angle: float) -> int:
        total = 0
        for path in self._paths:
            lo, hi = float(np.min(path)), float(np.max(path))
            k0 = math.ceil((lo - angle) / TWO_PI)
            k1 = math.floor((hi - angle) / TWO_PI)
            for k in range(k0, k1 + 1):
                c = angle + k * TWO_PI
                d = path - c
                # half-open cells [a_i, a_i+1) so shared nodes count once
                hits = ((d[:-1] <= 0) & (d[1:] > 0)) | ((d[:-1] >= 0) & (d[1:] < 0))
                total += int(np.count_nonzero(hits))
                if not self._half_open and d[-1] == 0:
                    total += 1
        return total

    def classify(self, angle: float, margin: float = 0.0) -> str:
        """``"visible"``, ``"invisible"`` or ``"boundary"`` (within ``margin`` of an
        end-of-interval direction or of an edge of the visible set)."""
        a = canonical_angle(angle)
        edges = list(self.boundary_angles)
        if self.visible != [(0.0, TWO_PI)]:
            edges += [e for arc in self.visible for e in arc]
        for e in edges:
            d = abs((a - e + math.pi) % TWO_PI - math.pi)
            if d <= margin:
                return "boundary"
        return "visible" if self.contains(a) else "invisible"

    def rows(self) -> list[list]:
        out = [["visible", lo, hi] for lo, hi in self.visible]
        out += [["invisible", lo, hi] for lo, hi in self.invisible]
        out += [["boundary", b, b] for b in self.boundary_angles]
        return out


def _complement(arcs: list[tuple[float, float]]) -> list[tuple[float, float]]:
    if arcs == [(0.0, TWO_PI)]:
        return []
    if not arcs:
        return [(0.0, TWO_PI)]
    gaps = []
    for (_, b0), (a1, _) in zip(arcs, arcs[1:]):
        gaps.append((b0, a1))
    first, last = arcs[0][0], arcs[-1][1]
    if last < TWO_PI or first > 0:
        wrap_lo, wrap_hi = last, first + TWO_PI
        if wrap_hi - wrap_lo > 0:
            if wrap_hi <= TWO_PI:
                gaps.append((wrap_lo, wrap_hi))
            elif wrap_lo >= TWO_PI:
                gaps.append((wrap_lo - TWO_PI, wrap_hi - TWO_PI))
            else:
                if TWO_PI - wrap_lo > 0:
                    gaps.append((wrap_lo, TWO_PI))
                if wrap_hi - TWO_PI > 0:
                    gaps.append((0.0, wrap_hi - TWO_PI))
    return sorted((float(a), float(b)) for a, b in gaps if b > a)


def visibility(model: MotionModel, x, A: Sequence[tuple[float, float]] = ((0.0, TWO_PI),),
               n_phi_scan: int = DEFAULT_SCAN) -> VisibilityReport:
    """Sweep each interval of ``A`` and collect the directions of ``+-N(phi, x)``."""
    if n_phi_scan < 16:
        raise ValueError("n_phi_scan must be >= 16")
    x = np.asarray(x, dtype=np.float64)
    arcs = []
    paths = []
    bounds = []
    cell = 0.0
    for lo, hi in A:
        check_phi(model, [lo, hi])
        phis = np.linspace(lo, hi, n_phi_scan + 1)
        cell = max(cell, (hi - lo) / n_phi_scan)
        N = _grad_H_raw(model, phis, x)
        ang = np.unwrap(np.arctan2(N[:, 1], N[:, 0]))
        paths.append(ang)
        a, b = float(np.min(ang)), float(np.max(ang))
        arcs += [(a, b), (a + math.pi, b + math.pi)]
        bounds += [float(ang[0]), float(ang[-1])]
    visible = _merge_circle(arcs)
    full_turn = (model.periodic and len(A) == 1 and abs(A[0][1] - A[0][0] - TWO_PI) <= 1e-12)
    boundary = [] if full_turn else sorted({round(canonical_angle(b + k), 15) for b in bounds for k in (0.0, math.pi)})
    rep = VisibilityReport((float(x[0]), float(x[1])), [tuple(map(float, a)) for a in A], visible,
                           _complement(visible), boundary, cell)
    rep._paths = paths
    rep._half_open = full_turn
    return rep


def visibility_classifier(model: MotionModel, A: Sequence[tuple[float, float]] = ((0.0, TWO_PI),),
                          margin: float = 0.0, n_phi_scan: int = DEFAULT_SCAN) -> Callable[[SingularitySample], str]:
    """Per-seed classifier that evaluates ``visibility`` at each seed's point."""
    cache: dict = {}

    def classify(sample: SingularitySample) -> str:
        key = tuple(sample.x)
        if key not in cache:
            cache[key] = visibility(model, sample.x, A, n_phi_scan)
        return cache[key].classify(sample.xi_angle, margin)

    return classify


# ---------------------------------------------------------------------------
# artifact curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArtifactCurve:
    phi_end: float
    seed: SingularitySample
    s: float
    points: np.ndarray          # (n, 2) polyline inside the image box
    codirections: np.ndarray    # (n, 2) unit conormals N / |N| along the polyline

    def sagitta(self) -> float:
        return sagitta(self.points)

    def chord_direction(self) -> np.ndarray:
        return chord_direction(self.points)


def sagitta(points: np.ndarray) -> float:
    """Largest distance of a polyline vertex from the chord joining its endpoints."""
    p = np.asarray(points, dtype=np.float64)
    if len(p) < 3:
        return 0.0
    d = p[-1] - p[0]
    L = np.linalg.norm(d)
    if L == 0:
        return float(np.max(np.linalg.norm(p - p[0], axis=-1)))
    rel = p - p[0]
    return float(np.max(np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / L))


def chord_direction(points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    d = p[-1] - p[0]
    return d / np.linalg.norm(d)


def line_angle_difference(u, v) -> float:
    """Angle in ``[0, pi/2]`` between the undirected lines spanned by ``u`` and ``v``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    c = abs(float(np.dot(u, v))) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.acos(min(1.0, c))


def _clip_run(points: np.ndarray, extent: float, anchor: np.ndarray) -> np.ndarray:
    inside = np.all(np.abs(points) <= extent, axis=-1)
    if not np.any(inside):
        return points[:0]
    idx = np.flatnonzero(inside)
    near = idx[np.argmin(np.linalg.norm(points[idx] - anchor, axis=-1))]
    a = near
    while a > 0 and inside[a - 1]:
        a -= 1
    b = near
    while b + 1 < len(points) and inside[b + 1]:
        b += 1
    return points[a : b + 1]


def artifact_curves(model: MotionModel, wavefront: Sequence[SingularitySample], grid_extent: float,
                    phi_ends: Sequence[float] = (0.0, TWO_PI), art_tol: float = TWO_PI / DEFAULT_SCAN,
                    *, n_points: int = 2049, dedupe_distance: float | None = None,
                    bolker: BolkerReport | None = None) -> list[ArtifactCurve]:
    """Trace ``C(phi_end, H(phi_end, x))`` for every seed whose codirection is
    parallel (up to sign, within ``art_tol``) to ``N(phi_end, x)``.

    Seeds of the same ``phi_end`` closer than ``dedupe_distance`` (default one
    hundredth of the extent) to an already accepted seed are skipped.
    """
    if bolker is not None and not bolker.passed:
        warnings.warn(f"Bolker check failed for {model.name!r}", RuntimeWarning, stacklevel=2)
    if dedupe_distance is None:
        dedupe_distance = 0.01 * grid_extent
    sin_tol = math.sin(art_tol)
    out: list[ArtifactCurve] = []
    for phi_end in phi_ends:
        check_phi(model, phi_end)
        if not wavefront:
            continue
        xs = np.array([w.x for w in wavefront], dtype=np.float64)
        xis = np.array([w.xi for w in wavefront])
        N = eval_N(model, phi_end, xs)
        mis = np.abs(N[:, 0] * xis[:, 1] - N[:, 1] * xis[:, 0]) / np.linalg.norm(N, axis=-1)
        order = np.argsort(mis, kind="stable")
        accepted: list[np.ndarray] = []
        for i in order:
            if mis[i] >= sin_tol:
                break
            if any(np.linalg.norm(xs[i] - a) < dedupe_distance for a in accepted):
                continue
            accepted.append(xs[i])
            s = float(_H_raw(model, phi_end, xs[i]))
            pts = integration_curve(model, phi_end, s, (-3.0 * grid_extent, 3.0 * grid_extent), n_points)
            pts = _clip_run(pts, grid_extent, xs[i])
            if len(pts) < 2:
                continue
            Nc = eval_N(model, phi_end, pts)
            out.append(ArtifactCurve(float(phi_end), wavefront[i], s, pts,
                                     Nc / np.linalg.norm(Nc, axis=-1, keepdims=True)))
    return out


def curves_to_rows(curves: Sequence[ArtifactCurve]) -> list[list]:
    rows = []
    for k, c in enumerate(curves):
        for j, p in enumerate(c.points):
            rows.append([k, c.phi_end, c.s, j, float(p[0]), float(p[1])])
    return rows


CURVE_CSV_HEADER = ["curve", "phi_end", "s", "vertex", "x", "y"]


def rows_to_polylines(rows: Sequence[Sequence]) -> list[np.ndarray]:
    """Inverse of ``curves_to_rows`` restricted to the geometry."""
    groups: dict[int, list] = {}
    for r in rows:
        groups.setdefault(int(r[0]), []).append((int(r[3]), float(r[4]), float(r[5])))
    out = []
    for k in sorted(groups):
        v = sorted(groups[k])
        out.append(np.array([[x, y] for _, x, y in v]))
    return out


# ---------------------------------------------------------------------------
# uniqueness condition
# ---------------------------------------------------------------------------


@dataclass
class UniquenessReport:
    model: str
    n_samples: int
    counts: np.ndarray            # shape (n_points, n_directions)
    violations: list              # (x, xi_angle, count) with count > 1

    @property
    def fraction_unique(self) -> float:
        return float(np.mean(self.counts <= 1)) if self.counts.size else 1.0

    @property
    def holds(self) -> bool:
        return not self.violations

    def summary(self) -> dict:
        return {"model": self.model, "n_samples": self.n_samples, "fraction_unique": self.fraction_unique,
                "n_violations": len(self.violations), "max_count": int(self.counts.max(initial=0)),
                "holds": self.holds}


def check_uniqueness_condition(model: MotionModel, x_grid, direction_grid, *, n_scan: int = DEFAULT_SCAN,
                               phi_search: tuple[float, float] | None = None,
                               threads: int | None = None) -> UniquenessReport:
    """Count, per sampled ``(x, xi)``, the angles producing that covector in the
    data, with ``xi`` and ``-xi`` identified (count = max of the two oriented counts)."""
    pts = np.asarray(x_grid, dtype=np.float64).reshape(-1, 2)
    dirs = np.asarray(direction_grid, dtype=np.float64).ravel()
    search = phi_search or default_phi_search(model, extended=True)
    counts = np.zeros((len(pts), len(dirs)), dtype=int)

    def work(bounds):
        a, b = bounds
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for i in range(a, b):
                for j, d in enumerate(dirs):
                    c = [len(map_to_data(model, SingularitySample(tuple(pts[i]), float(ang), 1.0), search,
                                         n_scan, oriented=True)) for ang in (d, d + math.pi)]
                    counts[i, j] = max(c)

    _run_partitioned(work, _chunks(len(pts)), threads)
    viol = [(tuple(map(float, pts[i])), float(dirs[j]), int(counts[i, j]))
            for i, j in zip(*np.nonzero(counts > 1))]
    return UniquenessReport(model.name, counts.size, counts, viol)


# ---------------------------------------------------------------------------
# edge energy
# ---------------------------------------------------------------------------


@dataclass
class EdgeEnergySummary:
    energies: np.ndarray
    labels: list[str]
    visible_mean: float
    invisible_mean: float
    n_visible: int
    n_invisible: int
    n_boundary: int

    @property
    def ratio(self) -> float:
        """``invisible_mean / visible_mean`` (nan when either class is empty)."""
        if self.n_visible == 0 or self.n_invisible == 0 or self.visible_mean == 0:
            return float("nan")
        return self.invisible_mean / self.visible_mean

    def class_energies(self, label: str) -> np.ndarray:
        return self.energies[[lab == label for lab in self.labels]]

    def as_dict(self) -> dict:
        vis = self.class_energies("visible")
        return {"visible_mean": self.visible_mean, "invisible_mean": self.invisible_mean,
                "ratio_invisible_over_visible": self.ratio, "n_visible": self.n_visible,
                "n_invisible": self.n_invisible, "n_boundary": self.n_boundary,
                "visible_min": float(vis.min()) if vis.size else float("nan"),
                "visible_median": float(np.median(vis)) if vis.size else float("nan")}


def edge_energy(recon: ImageGrid, wavefront: Sequence[SingularitySample], window: float,
                classifier: VisibilityReport | Callable[[SingularitySample], str], *,
                margin: float = 0.0, n_samples: int | None = None) -> EdgeEnergySummary:
    """Mean ``|d recon / d xi|`` over ``x + t xi``, ``|t| <= window``, divided by ``|strength|``.

    ``classifier`` is a ``VisibilityReport`` (used for every seed) or a callable
    returning ``"visible"``, ``"invisible"`` or ``"boundary"`` per seed.
    """
    if n_samples is None:
        px = min(recon.spec.pixel_size)
        n_samples = max(8, int(math.ceil(4 * window / px)))
    t = np.linspace(-window, window, n_samples + 1)
    dt = t[1] - t[0]
    energies = np.zeros(len(wavefront))
    labels = []
    for k, w in enumerate(wavefront):
        line = np.asarray(w.x)[None, :] + t[:, None] * w.xi[None, :]
        v = bilinear_sample(recon, line)
        e = float(np.mean(np.abs(np.diff(v)) / dt))
        energies[k] = e / abs(w.strength) if w.strength != 0 else e
        if isinstance(classifier, VisibilityReport):
            labels.append(classifier.classify(w.xi_angle, margin))
        else:
            labels.append(classifier(w))
    vis = energies[[lab == "visible" for lab in labels]]
    inv = energies[[lab == "invisible" for lab in labels]]
    return EdgeEnergySummary(energies, labels, float(vis.mean()) if vis.size else float("nan"),
                             float(inv.mean()) if inv.size else float("nan"), int(vis.size), int(inv.size),
                             labels.count("boundary"))
