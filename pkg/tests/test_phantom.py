import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynaray.core import GridSpec, SinoSpec
from dynaray.motion import identity_model
from dynaray.operators import forward_project
from dynaray.phantom import (DEFAULT_PHANTOM, Ellipse, EllipsePhantom, analytic_static_radon, boundary_wavefront,
                             isolated_samples, rasterize)

from oracles import chord

UNIT_DISK = EllipsePhantom((Ellipse((0.0, 0.0), (1.0, 1.0)),))


def test_rasterize_origin_pixel():
    img = rasterize(UNIT_DISK, GridSpec(5, 5, 1.2))
    assert img.values[2, 2] == 1.0


def test_rasterize_outside_is_zero():
    img = rasterize(EllipsePhantom((Ellipse((0.0, 0.0), (0.2, 0.2)),)), GridSpec(8, 8, 1.0))
    assert img.values[0, 0] == 0.0


@pytest.mark.parametrize("r", [0.3, 0.5, 0.8])
def test_rasterized_disk_mass(r):
    img = rasterize(EllipsePhantom((Ellipse((0.0, 0.0), (r, r)),)), GridSpec(256, 256, 1.0))
    assert img.values.sum() * img.pixel_area == pytest.approx(math.pi * r * r, rel=0.01)


def test_ellipse_rejects_nonpositive_axes():
    with pytest.raises(ValueError):
        Ellipse((0, 0), (0.0, 1.0))


def test_records_round_trip_and_unknown_keys():
    recs = DEFAULT_PHANTOM.to_records()
    assert EllipsePhantom.from_json(json.dumps(recs)) == DEFAULT_PHANTOM
    with pytest.raises(ValueError):
        EllipsePhantom.from_records([{"center": [0, 0], "semi_axes": [1, 1], "colour": 3}])


# --- analytic projections ------------------------------------------------------

@pytest.mark.parametrize("r", [0.25, 0.6])
def test_disk_center_chord(r):
    ph = EllipsePhantom((Ellipse((0.0, 0.0), (r, r)),))
    phis = np.linspace(0, 2 * math.pi, 9)
    np.testing.assert_allclose(analytic_static_radon(ph, phis, 0.0), 2 * r)
    s = np.linspace(-r, r, 11)
    np.testing.assert_allclose(analytic_static_radon(ph, 0.4, s), chord(r, s), atol=1e-15)


def test_line_missing_support():
    assert analytic_static_radon(UNIT_DISK, 0.3, 1.01) == 0.0


@settings(max_examples=50, deadline=None)
@given(phi=st.floats(0, 2 * math.pi), s=st.floats(-1.2, 1.2))
def test_radon_line_identity_symmetry(phi, s):
    v1 = analytic_static_radon(DEFAULT_PHANTOM, phi, s)
    v2 = analytic_static_radon(DEFAULT_PHANTOM, phi + math.pi, -s)
    # tangent lines amplify rounding through the square root (~sqrt(eps))
    assert v1 == pytest.approx(v2, abs=1e-7)


def test_tilted_ellipse_projection_against_quadrature():
    e = Ellipse((0.2, -0.1), (0.5, 0.2), 0.7, 1.3)
    ph = EllipsePhantom((e,))
    t = np.linspace(-2, 2, 400001)
    for phi, s in [(0.3, 0.1), (1.9, -0.2), (4.0, 0.25)]:
        pts = s * np.array([math.cos(phi), math.sin(phi)]) + t[:, None] * np.array([-math.sin(phi), math.cos(phi)])
        ref = 1.3 * e.contains(pts).sum() * (t[1] - t[0])
        assert analytic_static_radon(ph, phi, s) == pytest.approx(ref, abs=2e-5)


def test_forward_projection_matches_analytic():
    spec = SinoSpec(300, 450, 1.5)
    g = forward_project(rasterize(DEFAULT_PHANTOM, GridSpec(256, 256, 1.0)), identity_model(), spec)
    P, S = np.meshgrid(spec.phis, spec.ss, indexing="ij")
    ref = analytic_static_radon(DEFAULT_PHANTOM, P, S)
    assert np.linalg.norm(g.values - ref) / np.linalg.norm(ref) < 0.02


# --- wavefront ---------------------------------------------------------------------

def test_unit_disk_wavefront_at_one_zero():
    wf = boundary_wavefront(UNIT_DISK, 4)
    at = [w for w in wf if abs(w.x[0] - 1.0) < 1e-12 and abs(w.x[1]) < 1e-12]
    assert sorted(w.xi_angle for w in at) == pytest.approx([0.0, math.pi])


@pytest.mark.parametrize("t", [0.0, 0.3, 1.1, 2.5, 4.0])
def test_axis_aligned_normal(t):
    a, b = 0.7, 0.3
    pts, nrm = Ellipse((0, 0), (a, b)).boundary(np.array([t]))
    ref = np.array([math.cos(t) / a, math.sin(t) / b])
    np.testing.assert_allclose(nrm[0], ref / np.linalg.norm(ref), atol=1e-15)


def test_tilted_normals_rotate_with_tilt():
    t = np.linspace(0, 2 * math.pi, 7)
    _, n0 = Ellipse((0, 0), (0.7, 0.3), 0.0).boundary(t)
    _, n1 = Ellipse((0, 0), (0.7, 0.3), 0.9).boundary(t)
    c, s = math.cos(0.9), math.sin(0.9)
    np.testing.assert_allclose(n1, n0 @ np.array([[c, s], [-s, c]]), atol=1e-15)


def test_normals_unit_and_perpendicular():
    for e in DEFAULT_PHANTOM.ellipses:
        t = np.linspace(0, 2 * math.pi, 50)
        pts, nrm = e.boundary(t)
        h = 1e-6
        tan = (e.boundary(t + h)[0] - e.boundary(t - h)[0]) / (2 * h)
        np.testing.assert_allclose(np.linalg.norm(nrm, axis=-1), 1.0, atol=1e-15)
        assert np.max(np.abs(np.sum(nrm * tan, -1)) / np.linalg.norm(tan, axis=-1)) < 1e-9
        assert np.all(e.contains(pts + 1e-6 * nrm) == False)  # noqa: E712


def test_wavefront_emits_both_signs():
    wf = boundary_wavefront(DEFAULT_PHANTOM, 8)
    assert len(wf) == 2 * 8 * len(DEFAULT_PHANTOM.ellipses)
    for a, b in zip(wf[::2], wf[1::2]):
        assert a.x == b.x
        assert abs((a.xi_angle - b.xi_angle) % (2 * math.pi) - math.pi) < 1e-12


def test_wavefront_needs_four_samples():
    with pytest.raises(ValueError):
        boundary_wavefront(UNIT_DISK, 3)


def test_isolated_samples_excludes_near_other_boundaries():
    ph = EllipsePhantom((Ellipse((0, 0), (0.5, 0.5)), Ellipse((0, 0), (0.45, 0.45))))
    assert isolated_samples(ph, boundary_wavefront(ph, 16), 0.1) == []
    assert len(isolated_samples(ph, boundary_wavefront(ph, 16), 0.01)) == 64
