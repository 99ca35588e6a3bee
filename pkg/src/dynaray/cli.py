"""Command-line front end: ``dynaray {simulate,reconstruct,analyze,overlay,report}``.

Configuration is one JSON file plus ``--set dotted.key=value`` overrides.
Exit codes: 0 success, 2 configuration error, 3 hypothesis or Bolker check
failed (without ``--force``), 4 I/O or geometry error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .core import (TWO_PI, DynarayIOError, GridSpec, ImageGrid, Sinogram, SinoSpec, read_csv, read_rawf64,
                   rescale_u16, sidecar_path, write_csv, write_pgm16, write_pgm16_pixels, write_rawf64)
from .microlocal import (CURVE_CSV_HEADER, BolkerTolerances, artifact_curves, check_bolker,
                         check_uniqueness_condition, curves_to_rows, edge_energy, rows_to_polylines,
                         visibility, visibility_classifier)
from .motion import MotionModel, check_hypothesis, get_model
from .operators import CutoffSpec, FilterSpec, PipelineSpec, forward_project, reconstruct
from .phantom import (DEFAULT_PHANTOM, TWO_ELLIPSE_PHANTOM, EllipsePhantom, boundary_wavefront, rasterize)

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_IO = 0, 2, 3, 4

NAMED_PHANTOMS = {"default": DEFAULT_PHANTOM, "two_ellipse": TWO_ELLIPSE_PHANTOM, "empty": EllipsePhantom(())}


class ConfigError(ValueError):
    pass


class CheckFailed(RuntimeError):
    pass


class GeometryMismatch(DynarayIOError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class MotionConfig:
    name: str = "identity"
    params: dict = field(default_factory=dict)


@dataclass
class SinogramConfig:
    n_phi: int = 300
    n_s: int = 450
    s_max: float = 1.5
    phi_range: list = field(default_factory=lambda: [0.0, TWO_PI])


@dataclass
class GridConfig:
    nx: int = 256
    ny: int = 256
    extent: float = 1.0


@dataclass
class FilterConfig:
    kind: str = "ramp"
    apodization: str = "cosine"
    cutoff_fraction: float = 1.0


@dataclass
class CutoffConfig:
    kind: str = "sharp"
    taper_width: float = 0.15
    psi_margin: float = 0.05


@dataclass
class AnalysisConfig:
    bolker: bool = True
    visibility: bool = True
    artifacts: bool = True
    uniqueness: bool = True
    edge_energy: bool = True
    bolker_nx: int = 32
    bolker_nphi: int = 64
    query_points: list = field(default_factory=lambda: [[0.0, 0.0], [0.4, 0.3], [-0.5, 0.2]])
    n_phi_scan: int = 2048
    n_per_ellipse: int = 4096
    uniqueness_nx: int = 5
    uniqueness_ndir: int = 36
    edge_window_pixels: float = 3.0
    edge_seeds_per_ellipse: int = 64
    classify_margin: float = 0.05


@dataclass
class RunConfig:
    phantom: Any = "default"
    motion: MotionConfig = field(default_factory=MotionConfig)
    sinogram: SinogramConfig = field(default_factory=SinogramConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    cutoff: CutoffConfig = field(default_factory=CutoffConfig)
    weight_mode: str = "intensity"
    backprojection: str = "auto"
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output_dir: str = "dynaray_out"

    # -- construction -----------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        cfg = _build(cls, data, "")
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        try:
            self.phantom_obj()
            get_model(self.motion.name, **self.motion.params)
            self.sino_spec()
            self.grid_spec()
            FilterSpec(**asdict(self.filter))
            CutoffSpec(**asdict(self.cutoff))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.weight_mode not in ("intensity", "mass_preserving"):
            raise ConfigError(f"unknown weight_mode {self.weight_mode!r}")
        if self.backprojection not in ("auto", "periodic", "restricted"):
            raise ConfigError(f"unknown backprojection {self.backprojection!r}")
        if self.analysis.n_phi_scan < 16:
            raise ConfigError("analysis.n_phi_scan must be >= 16")

    # -- resolved objects -------------------------------------------------

    def phantom_obj(self) -> EllipsePhantom:
        if isinstance(self.phantom, str):
            if self.phantom not in NAMED_PHANTOMS:
                raise ConfigError(f"unknown phantom {self.phantom!r}; known: {sorted(NAMED_PHANTOMS)}")
            return NAMED_PHANTOMS[self.phantom]
        if isinstance(self.phantom, list):
            return EllipsePhantom.from_records(self.phantom)
        raise ConfigError("phantom must be a name or a list of ellipse records")

    def model(self) -> MotionModel:
        return get_model(self.motion.name, **self.motion.params)

    def sino_spec(self) -> SinoSpec:
        s = self.sinogram
        return SinoSpec(int(s.n_phi), int(s.n_s), float(s.s_max), (float(s.phi_range[0]), float(s.phi_range[1])))

    def grid_spec(self) -> GridSpec:
        return GridSpec(int(self.grid.nx), int(self.grid.ny), float(self.grid.extent))

    def pipeline(self) -> PipelineSpec:
        return PipelineSpec(self.sino_spec(), self.grid_spec(), FilterSpec(**asdict(self.filter)),
                            CutoffSpec(**asdict(self.cutoff)), self.weight_mode, self.backprojection)


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"section {prefix or '<root>'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        ftype = known[name].type
        sub = _SECTIONS.get(ftype if isinstance(ftype, str) else getattr(ftype, "__name__", ""))
        kwargs[name] = _build(sub, value, f"{prefix}{name}.") if sub else value
    return cls(**kwargs)


_SECTIONS = {c.__name__: c for c in (MotionConfig, SinogramConfig, GridConfig, FilterConfig, CutoffConfig,
                                     AnalysisConfig)}


def apply_override(data: dict, assignment: str) -> None:
    """``a.b.c=value``; the value is parsed as JSON when possible, else kept as a string."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key!r}: {p!r} is not a section")
    node[parts[-1]] = value


def load_config(path: str | None, overrides: Sequence[str] = ()) -> RunConfig:
    data: dict = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise DynarayIOError(path, exc.strerror or str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    for item in overrides:
        apply_override(data, item)
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override or cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DynarayIOError(out, exc.strerror or str(exc)) from exc
    return out


def _write_json(path: Path, payload) -> None:
    try:
        path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")
    except OSError as exc:
        raise DynarayIOError(path, exc.strerror or str(exc)) from exc


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def write_manifest(out: Path, command: str, cfg: RunConfig | None, outputs: Sequence[Path], extra=None) -> Path:
    manifest = {"command": command, "version": __version__,
                "config": cfg.to_dict() if cfg is not None else None,
                "outputs": [str(p) for p in outputs]}
    if extra:
        manifest.update(extra)
    path = out / f"manifest_{command}.json"
    _write_json(path, manifest)
    return path


def _require_hypothesis(model: MotionModel, cfg: RunConfig, force: bool) -> dict:
    g = np.linspace(-cfg.grid.extent, cfg.grid.extent, 17)
    X, Y = np.meshgrid(g, g)
    rep = check_hypothesis(model, points=np.stack([X.ravel(), Y.ravel()], axis=-1))
    if not rep.passed and not force:
        raise CheckFailed(f"motion hypothesis check failed for {model.name!r}: {rep.as_dict()}")
    return rep.as_dict()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, *, out: str | None = None, force: bool = False,
                 threads: int | None = None) -> list[Path]:
    model = cfg.model()
    hyp = _require_hypothesis(model, cfg, force)
    d = _out_dir(cfg, out)
    f = rasterize(cfg.phantom_obj(), cfg.grid_spec())
    g = forward_project(f, model, cfg.sino_spec(), cfg.weight_mode, threads=threads)
    raw = d / "sinogram.rawf64"
    side = write_rawf64(raw, g)
    pgm = d / "sinogram.pgm"
    write_pgm16(pgm, g)
    outputs = [raw, side, pgm]
    outputs.append(write_manifest(d, "simulate", cfg, outputs, {"hypothesis": hyp}))
    return outputs


def _load_sinogram(path) -> Sinogram:
    g = read_rawf64(path)
    if not isinstance(g, Sinogram):
        raise DynarayIOError(path, "expected a sinogram file")
    return g


def cmd_reconstruct(cfg: RunConfig, sinogram_path: str | None = None, *, out: str | None = None,
                    force: bool = False, threads: int | None = None) -> list[Path]:
    model = cfg.model()
    hyp = _require_hypothesis(model, cfg, force)
    d = _out_dir(cfg, out)
    spec = cfg.pipeline()
    if sinogram_path:
        img = reconstruct(model, spec, g=_load_sinogram(sinogram_path), threads=threads)
    else:
        img = reconstruct(model, spec, f=rasterize(cfg.phantom_obj(), cfg.grid_spec()), threads=threads)
    raw = d / "recon.rawf64"
    side = write_rawf64(raw, img)
    pgm = d / "recon.pgm"
    write_pgm16(pgm, img)
    outputs = [raw, side, pgm]
    outputs.append(write_manifest(d, "reconstruct", cfg, outputs,
                                  {"hypothesis": hyp, "sinogram": sinogram_path}))
    return outputs


def _grid_points(extent: float, n: int, frac: float = 0.9) -> np.ndarray:
    g = np.linspace(-frac * extent, frac * extent, n)
    X, Y = np.meshgrid(g, g)
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


def cmd_analyze(cfg: RunConfig, *, recon_path: str | None = None, out: str | None = None, force: bool = False,
                threads: int | None = None) -> list[Path]:
    model = cfg.model()
    a = cfg.analysis
    d = _out_dir(cfg, out)
    extent = cfg.grid.extent
    phantom = cfg.phantom_obj()
    lo, hi = cfg.sino_spec().phi_range
    outputs: list[Path] = []
    bolker = None
    extra: dict = {}

    if a.bolker:
        px = 2 * extent / cfg.grid.nx
        bolker = check_bolker(model, _grid_points(extent, a.bolker_nx), np.linspace(lo, hi, a.bolker_nphi),
                              BolkerTolerances(h_tol=1e-6 * cfg.sinogram.s_max, x_sep=2 * px), threads=threads)
        rows = [[float(p), float(x[0]), float(x[1]), float(v)]
                for i, p in enumerate(bolker.phis) for x, v in zip(bolker.points, bolker.ic_grid[i])]
        write_csv(d / "bolker.csv", ["phi", "x", "y", "ic"], rows)
        summary = bolker.summary()
        summary["injectivity_violations"] = bolker.injectivity_violations[:100]
        _write_json(d / "bolker.json", summary)
        outputs += [d / "bolker.csv", d / "bolker.json"]
        extra["bolker_passed"] = bolker.passed

    if a.visibility:
        rows = []
        for q in a.query_points:
            rep = visibility(model, q, [(lo, hi)], a.n_phi_scan)
            rows += [[float(q[0]), float(q[1]), kind, lo_, hi_] for kind, lo_, hi_ in rep.rows()]
        write_csv(d / "visibility.csv", ["x", "y", "kind", "angle_lo", "angle_hi"], rows)
        outputs.append(d / "visibility.csv")

    if a.artifacts and not model.periodic:
        curves = artifact_curves(model, boundary_wavefront(phantom, a.n_per_ellipse), extent, (lo, hi),
                                 (hi - lo) / a.n_phi_scan)
    else:
        curves = []
    if a.artifacts:
        write_curves(d / "artifact_curves.csv", curves, cfg.grid_spec())
        outputs += [d / "artifact_curves.csv", sidecar_path(d / "artifact_curves.csv")]

    if a.uniqueness:
        urep = check_uniqueness_condition(model, _grid_points(extent, a.uniqueness_nx, 0.8),
                                          np.linspace(0, math.pi, a.uniqueness_ndir, endpoint=False),
                                          n_scan=a.n_phi_scan, threads=threads)
        _write_json(d / "uniqueness.json", {**urep.summary(), "violations": urep.violations[:100]})
        outputs.append(d / "uniqueness.json")

    if a.edge_energy:
        if recon_path:
            recon = read_rawf64(recon_path)
            if not isinstance(recon, ImageGrid):
                raise DynarayIOError(recon_path, "expected an image file")
        else:
            recon = reconstruct(model, cfg.pipeline(), f=rasterize(phantom, cfg.grid_spec()), threads=threads)
        seeds = boundary_wavefront(phantom, a.edge_seeds_per_ellipse)
        px = min(recon.spec.pixel_size)
        summary = edge_energy(recon, seeds, a.edge_window_pixels * px,
                              visibility_classifier(model, [(lo, hi)], a.classify_margin, a.n_phi_scan))
        _write_json(d / "edge_energy.json", summary.as_dict())
        outputs.append(d / "edge_energy.json")

    outputs.append(write_manifest(d, "analyze", cfg, outputs, extra))
    if bolker is not None and not bolker.passed and not force:
        raise CheckFailed(f"Bolker check failed for {model.name!r}: {bolker.summary()}")
    return outputs


def write_curves(path: Path, curves, grid: GridSpec) -> None:
    write_csv(path, CURVE_CSV_HEADER, curves_to_rows(curves))
    _write_json(sidecar_path(path), {"type": "curves", "extent": grid.extent, "nx": grid.nx, "ny": grid.ny,
                                     "n_curves": len(curves)})


def bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer cells of the segment ``(x0, y0) -> (x1, y1)``, both ends included."""
    cells = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        cells.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return cells
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def polyline_pixels(points: np.ndarray, grid: GridSpec) -> set[tuple[int, int]]:
    """(row, col) PGM pixels covered by a polyline; rows count from the top (+y up)."""
    E = grid.extent
    ix = np.floor((points[:, 0] + E) / (2 * E) * grid.nx).astype(int)
    iy = np.floor((points[:, 1] + E) / (2 * E) * grid.ny).astype(int)
    ix = np.clip(ix, 0, grid.nx - 1)
    iy = np.clip(iy, 0, grid.ny - 1)
    out: set[tuple[int, int]] = set()
    for k in range(len(points)):
        seg = [(ix[k], iy[k])] if k == 0 else bresenham(ix[k - 1], iy[k - 1], ix[k], iy[k])
        for cx, cy in seg:
            out.add((grid.ny - 1 - cy, cx))
    return out


def render_overlay(recon: ImageGrid, polylines: Sequence[np.ndarray]) -> np.ndarray:
    pixels = rescale_u16(recon.values[::-1]).copy()
    for pl in polylines:
        for r, c in polyline_pixels(pl, recon.spec):
            pixels[r, c] = 65535
    return pixels


def cmd_overlay(recon_path: str, curves_path: str, *, out: str | None = None) -> list[Path]:
    recon = read_rawf64(recon_path)
    if not isinstance(recon, ImageGrid):
        raise DynarayIOError(recon_path, "expected an image file")
    side = sidecar_path(curves_path)
    try:
        meta = json.loads(side.read_text())
    except OSError as exc:
        raise DynarayIOError(side, exc.strerror or str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise DynarayIOError(side, f"bad JSON: {exc}") from exc
    if not math.isclose(float(meta.get("extent", float("nan"))), recon.extent, rel_tol=1e-12):
        raise GeometryMismatch(curves_path, f"curve extent {meta.get('extent')} != image extent {recon.extent}")
    _, rows = read_csv(curves_path)
    d = Path(out) if out else Path(recon_path).parent
    d.mkdir(parents=True, exist_ok=True)
    path = d / "overlay.pgm"
    write_pgm16_pixels(path, render_overlay(recon, rows_to_polylines(rows)))
    outputs = [path]
    outputs.append(write_manifest(d, "overlay", None, outputs, {"recon": str(recon_path), "curves": str(curves_path)}))
    return outputs


def cmd_report(cfg: RunConfig, *, out: str | None = None, force: bool = False,
               threads: int | None = None) -> list[Path]:
    d = _out_dir(cfg, out)
    outputs = cmd_simulate(cfg, out=str(d), force=force, threads=threads)
    outputs += cmd_reconstruct(cfg, str(d / "sinogram.rawf64"), out=str(d), force=force, threads=threads)
    outputs += cmd_analyze(cfg, recon_path=str(d / "recon.rawf64"), out=str(d), force=force, threads=threads)
    if cfg.analysis.artifacts:
        outputs += cmd_overlay(str(d / "recon.rawf64"), str(d / "artifact_curves.csv"), out=str(d))
    outputs.append(write_manifest(d, "report", cfg, outputs))
    return outputs


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynaray", description="Dynamic tomography simulation, reconstruction "
                                "and visibility/artifact analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", "-c", help="JSON run configuration")
            sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                            help="override a config entry (dotted key, JSON value)")
            sp.add_argument("--force", action="store_true", help="continue when model checks fail")
            sp.add_argument("--threads", type=int, default=None,
                            help="worker threads (default: DYNARAY_THREADS or CPU count)")
        sp.add_argument("--out", help="output directory (default: config output_dir)")

    common(sub.add_parser("simulate", help="forward-project the phantom"))
    sp = sub.add_parser("reconstruct", help="FBP-type reconstruction")
    common(sp)
    sp.add_argument("--sinogram", help="sinogram .rawf64 (default: simulate from the phantom)")
    sp = sub.add_parser("analyze", help="Bolker, visibility, artifact curves, uniqueness, edge energy")
    common(sp)
    sp.add_argument("--recon", help="reconstruction .rawf64 for edge energy (default: reconstruct)")
    sp = sub.add_parser("overlay", help="draw artifact curves over a reconstruction")
    common(sp, config=False)
    sp.add_argument("--recon", required=True)
    sp.add_argument("--curves", required=True)
    common(sub.add_parser("report", help="simulate, reconstruct, analyze and overlay"))
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "overlay":
            outputs = cmd_overlay(args.recon, args.curves, out=args.out)
        else:
            cfg = load_config(args.config, args.overrides)
            kw = dict(out=args.out, force=args.force, threads=args.threads)
            if args.command == "simulate":
                outputs = cmd_simulate(cfg, **kw)
            elif args.command == "reconstruct":
                outputs = cmd_reconstruct(cfg, args.sinogram, **kw)
            elif args.command == "analyze":
                outputs = cmd_analyze(cfg, recon_path=args.recon, **kw)
            else:
                outputs = cmd_report(cfg, **kw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except DynarayIOError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for o in outputs:
        print(o)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
