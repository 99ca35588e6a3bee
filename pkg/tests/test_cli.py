import json
import math

import numpy as np
import pytest

from dynaray.cli import (EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_OK, RunConfig, bresenham, load_config, main,
                         polyline_pixels, render_overlay)
from dynaray.core import (GridSpec, ImageGrid, Sinogram, read_csv, read_pgm16, read_rawf64, sidecar_path, write_pgm16,
                          write_rawf64)
from dynaray.microlocal import rows_to_polylines, sagitta

from oracles import chord

SMALL = ["--set", "grid.nx=48", "--set", "grid.ny=48", "--set", "sinogram.n_phi=40", "--set", "sinogram.n_s=61"]
NO_ANALYSIS = ["--set", "analysis.bolker=false", "--set", "analysis.uniqueness=false",
               "--set", "analysis.visibility=false", "--set", "analysis.edge_energy=false"]


def _run(*argv):
    return main([str(a) for a in argv])


def _write_config(path, data):
    path.write_text(json.dumps(data))
    return path


# --- configuration ----------------------------------------------------------------

def test_default_sampling():
    cfg = RunConfig.from_dict({})
    assert (cfg.sinogram.n_phi, cfg.sinogram.n_s, cfg.grid.nx) == (300, 450, 256)


def test_overrides_parse_json_values():
    cfg = load_config(None, ["motion.name=third_rotation", "sinogram.s_max=2", "phantom=empty"])
    assert cfg.motion.name == "third_rotation" and cfg.sinogram.s_max == 2 and cfg.phantom == "empty"


@pytest.mark.parametrize("data", [
    {"colour": 1},
    {"sinogram": {"n_angles": 3}},
    {"motion": {"name": "warp_drive"}},
    {"weight_mode": "loud"},
    {"grid": {"nx": 1}},
    {"phantom": "unicorn"},
])
def test_bad_config_exits_2(tmp_path, data):
    cfg = _write_config(tmp_path / "c.json", data)
    assert _run("simulate", "--config", cfg, "--out", tmp_path / "o") == EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_invalid_json_exits_2(tmp_path):
    (tmp_path / "c.json").write_text("{nope")
    assert _run("simulate", "--config", tmp_path / "c.json") == EXIT_CONFIG


def test_missing_config_exits_4(tmp_path):
    assert _run("simulate", "--config", tmp_path / "absent.json") == EXIT_IO


def test_missing_sinogram_exits_4(tmp_path):
    assert _run("reconstruct", *SMALL, "--sinogram", tmp_path / "none.rawf64", "--out", tmp_path) == EXIT_IO


def test_mislabelled_periodic_model_exits_3(tmp_path):
    from dynaray.motion import register_model, rotation_model
    register_model("fake_periodic", lambda: rotation_model("fake_periodic", -2.0 / 3.0, periodic=True))
    args = ["simulate", *SMALL, "--set", "motion.name=fake_periodic", "--out", tmp_path]
    assert _run(*args) == EXIT_CHECK
    assert _run(*args, "--force") == EXIT_OK


# --- simulate -------------------------------------------------------------------------

def test_identity_disk_center_column(tmp_path):
    r = 0.5
    cfg = _write_config(tmp_path / "c.json", {
        "phantom": [{"center": [0, 0], "semi_axes": [r, r]}],
        "grid": {"nx": 256, "ny": 256, "extent": 1.0},
        "sinogram": {"n_phi": 60, "n_s": 151, "s_max": 1.5}})
    assert _run("simulate", "--config", cfg, "--out", tmp_path) == EXIT_OK
    g = read_rawf64(tmp_path / "sinogram.rawf64")
    col = g.values[:, list(np.round(g.spec.ss, 12)).index(0.0)]
    np.testing.assert_allclose(col, chord(r, 0.0), rtol=0.01)


def test_empty_phantom_gives_zero_sinogram(tmp_path):
    assert _run("simulate", *SMALL, "--set", "phantom=empty", "--out", tmp_path) == EXIT_OK
    assert not np.any(read_rawf64(tmp_path / "sinogram.rawf64").values)


def test_third_rotation_default_sinogram_shape(tmp_path):
    assert _run("simulate", "--set", "motion.name=third_rotation", "--set", "grid.nx=64", "--set", "grid.ny=64",
                "--out", tmp_path) == EXIT_OK
    g = read_rawf64(tmp_path / "sinogram.rawf64")
    assert isinstance(g, Sinogram) and g.values.shape == (300, 450)
    header = json.loads(sidecar_path(tmp_path / "sinogram.rawf64").read_text())
    assert (header["n_phi"], header["n_s"], header["s_max"]) == (300, 450, 1.5)
    assert header["phi_range"] == pytest.approx([0.0, 2 * math.pi])
    assert read_pgm16(tmp_path / "sinogram.pgm").shape == (300, 450)


def test_manifest_records_resolved_config(tmp_path):
    assert _run("simulate", *SMALL, "--set", "motion.name=counter_rotation", "--out", tmp_path) == EXIT_OK
    m = json.loads((tmp_path / "manifest_simulate.json").read_text())
    assert m["config"]["motion"]["name"] == "counter_rotation"
    assert m["config"]["grid"]["nx"] == 48 and m["config"]["filter"]["kind"] == "ramp"
    assert m["version"]


def test_reruns_and_thread_counts_are_bit_identical(tmp_path):
    base = ["reconstruct", *SMALL, "--set", "motion.name=nonaffine"]
    for name, threads in [("a", 1), ("b", 1), ("c", 3)]:
        assert _run(*base, "--threads", threads, "--out", tmp_path / name) == EXIT_OK
    ref = (tmp_path / "a" / "recon.rawf64").read_bytes()
    assert (tmp_path / "b" / "recon.rawf64").read_bytes() == ref
    assert (tmp_path / "c" / "recon.rawf64").read_bytes() == ref


# --- reconstruct -----------------------------------------------------------------------

def test_reconstruct_from_simulated_sinogram_matches_direct(tmp_path):
    assert _run("simulate", *SMALL, "--out", tmp_path / "s") == EXIT_OK
    assert _run("reconstruct", *SMALL, "--sinogram", tmp_path / "s" / "sinogram.rawf64",
                "--out", tmp_path / "r1") == EXIT_OK
    assert _run("reconstruct", *SMALL, "--out", tmp_path / "r2") == EXIT_OK
    a = read_rawf64(tmp_path / "r1" / "recon.rawf64")
    b = read_rawf64(tmp_path / "r2" / "recon.rawf64")
    assert isinstance(a, ImageGrid) and a.values.tobytes() == b.values.tobytes()


def test_reconstruct_rejects_image_as_sinogram(tmp_path):
    write_rawf64(tmp_path / "img.rawf64", ImageGrid(4, 4, 1.0, np.zeros((4, 4))))
    assert _run("reconstruct", *SMALL, "--sinogram", tmp_path / "img.rawf64", "--out", tmp_path) == EXIT_IO


# --- analyze ----------------------------------------------------------------------------

def test_analyze_writes_all_reports(tmp_path):
    args = ["analyze", *SMALL, "--set", "motion.name=third_rotation", "--set", "analysis.bolker_nx=8",
            "--set", "analysis.bolker_nphi=16", "--set", "analysis.n_per_ellipse=128",
            "--set", "analysis.uniqueness_nx=2", "--set", "analysis.uniqueness_ndir=6",
            "--set", "analysis.n_phi_scan=256", "--set", "analysis.edge_seeds_per_ellipse=8", "--out", tmp_path]
    assert _run(*args) == EXIT_OK
    for name in ("bolker.csv", "bolker.json", "visibility.csv", "artifact_curves.csv",
                 "uniqueness.json", "edge_energy.json", "manifest_analyze.json"):
        assert (tmp_path / name).exists(), name
    bolker = json.loads((tmp_path / "bolker.json").read_text())
    assert bolker["passed"]
    header, rows = read_csv(tmp_path / "bolker.csv")
    assert header == ["phi", "x", "y", "ic"]
    assert max(abs(float(r[3]) - 1 / 3) for r in rows) < 1e-9
    assert json.loads((tmp_path / "uniqueness.json").read_text())["holds"]


def test_analyze_periodic_model_emits_empty_curve_list(tmp_path):
    assert _run("analyze", *SMALL, *NO_ANALYSIS, "--set", "motion.name=counter_rotation", "--out", tmp_path) == 0
    _, rows = read_csv(tmp_path / "artifact_curves.csv")
    assert rows == []


def test_nonaffine_overlay_curves_straight_then_bent(tmp_path):
    assert _run("analyze", *SMALL, *NO_ANALYSIS, "--set", "motion.name=nonaffine",
                "--set", "analysis.n_per_ellipse=512", "--out", tmp_path) == EXIT_OK
    _, rows = read_csv(tmp_path / "artifact_curves.csv")
    px = 2.0 / 256
    ends = {}
    for r in rows:
        ends[int(r[0])] = float(r[1])
    # rows_to_polylines orders polylines by curve id
    polylines = dict(zip(sorted(ends), rows_to_polylines(rows)))
    assert set(ends.values()) == {0.0, 2 * math.pi}
    assert max(sagitta(p) for c, p in polylines.items() if ends[c] == 0.0) < 0.5 * px
    assert max(sagitta(p) for c, p in polylines.items() if ends[c] != 0.0) > px


# --- overlay ------------------------------------------------------------------------------

def _overlay_inputs(tmp_path, curves_rows, extent=1.0):
    rng = np.random.default_rng(3)
    img = ImageGrid(32, 24, 1.0, rng.normal(size=(24, 32)))
    write_rawf64(tmp_path / "recon.rawf64", img)
    (tmp_path / "curves.csv").write_text("curve,phi_end,s,vertex,x,y\n" + "".join(
        ",".join(str(v) for v in r) + "\n" for r in curves_rows))
    sidecar_path(tmp_path / "curves.csv").write_text(json.dumps({"type": "curves", "extent": extent}))
    return img


def test_overlay_without_curves_equals_recon_pgm(tmp_path):
    _overlay_inputs(tmp_path, [])
    assert _run("overlay", "--recon", tmp_path / "recon.rawf64", "--curves", tmp_path / "curves.csv",
                "--out", tmp_path / "o") == EXIT_OK
    write_pgm16(tmp_path / "recon.pgm", read_rawf64(tmp_path / "recon.rawf64"))
    assert (tmp_path / "o" / "overlay.pgm").read_bytes() == (tmp_path / "recon.pgm").read_bytes()


def test_overlay_single_line_changes_bresenham_pixels(tmp_path):
    # pixel centres of (ix, iy) = (2, 3) and (27, 15) on the 32 x 24 grid over [-1, 1]^2
    p0 = (-1 + (2 + 0.5) * 2 / 32, -1 + (3 + 0.5) * 2 / 24)
    p1 = (-1 + (27 + 0.5) * 2 / 32, -1 + (15 + 0.5) * 2 / 24)
    img = _overlay_inputs(tmp_path, [[0, 0.0, 0.1, 0, *p0], [0, 0.0, 0.1, 1, *p1]])
    assert _run("overlay", "--recon", tmp_path / "recon.rawf64", "--curves", tmp_path / "curves.csv") == EXIT_OK
    over = read_pgm16(tmp_path / "overlay.pgm").astype(int)
    base = render_overlay(img, []).astype(int)
    changed = {tuple(rc) for rc in np.argwhere(over != base)}
    expected = {(23 - y, x) for x, y in bresenham(2, 3, 27, 15)}
    # pixels already at full scale cannot change
    expected = {rc for rc in expected if base[rc] != 65535}
    assert changed == expected
    assert all(over[rc] == 65535 for rc in expected)


def test_overlay_geometry_mismatch_is_an_error(tmp_path):
    _overlay_inputs(tmp_path, [], extent=2.0)
    assert _run("overlay", "--recon", tmp_path / "recon.rawf64", "--curves", tmp_path / "curves.csv") == EXIT_IO
    assert not (tmp_path / "overlay.pgm").exists()


def test_overlay_missing_sidecar_is_an_error(tmp_path):
    _overlay_inputs(tmp_path, [])
    sidecar_path(tmp_path / "curves.csv").unlink()
    assert _run("overlay", "--recon", tmp_path / "recon.rawf64", "--curves", tmp_path / "curves.csv") == EXIT_IO


@pytest.mark.parametrize("a,b", [((0, 0), (5, 2)), ((3, 7), (3, 1)), ((4, 4), (0, 0)), ((1, 1), (1, 1)),
                                 ((0, 5), (6, 0))])
def test_bresenham_is_connected_and_symmetric(a, b):
    cells = bresenham(*a, *b)
    assert cells[0] == a and cells[-1] == b
    assert len(cells) == max(abs(b[0] - a[0]), abs(b[1] - a[1])) + 1
    for (x0, y0), (x1, y1) in zip(cells, cells[1:]):
        assert max(abs(x1 - x0), abs(y1 - y0)) == 1


def test_polyline_pixels_flip_rows():
    grid = GridSpec(4, 4, 1.0)
    assert polyline_pixels(np.array([[-0.9, -0.9]]), grid) == {(3, 0)}
    assert polyline_pixels(np.array([[0.9, 0.9]]), grid) == {(0, 3)}


# --- report ---------------------------------------------------------------------------------

def test_report_bundles_everything(tmp_path):
    args = ["report", *SMALL, "--set", "motion.name=third_rotation", "--set", "analysis.bolker_nx=6",
            "--set", "analysis.bolker_nphi=8", "--set", "analysis.n_per_ellipse=64",
            "--set", "analysis.uniqueness_nx=2", "--set", "analysis.uniqueness_ndir=4",
            "--set", "analysis.n_phi_scan=128", "--set", "analysis.edge_seeds_per_ellipse=4", "--out", tmp_path]
    assert _run(*args) == EXIT_OK
    for name in ("sinogram.rawf64", "recon.rawf64", "recon.pgm", "overlay.pgm", "edge_energy.json",
                 "manifest_report.json", "manifest_simulate.json", "manifest_overlay.json"):
        assert (tmp_path / name).exists(), name
