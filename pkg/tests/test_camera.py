import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cliff_geom.camera import (
    CROP, F_HMR, R_CROP, BBox, BehindCameraError, PerspectiveCamera, RootTranslation,
    WeakPerspective, bbox_info, crop_rotation, crop_to_full_translation,
    crop_to_full_via_crop_depth, estimate_focal, full_pixels_to_crop, full_to_weak,
    gamma_angles, project, weak_project_to_full, weak_to_persp_crop,
)

pos = st.floats(0.05, 5.0)
offset = st.floats(-2000.0, 2000.0)


def test_constants():
    assert (R_CROP, F_HMR) == (224, 5000.0)
    assert (CROP.r, CROP.f_hmr) == (224, 5000.0)
    with pytest.raises(AttributeError):
        CROP.r = 10


@pytest.mark.parametrize("w,h,f", [(3, 4, 5.0), (1920, 1080, 2202.9071700822983),
                                   (224, 224, 224 * math.sqrt(2))])
def test_estimate_focal(w, h, f):
    assert estimate_focal(w, h) == pytest.approx(f, rel=1e-15)


def test_estimate_focal_rejects_nonpositive():
    with pytest.raises(ValueError):
        estimate_focal(0, 10)


def test_weak_to_persp_crop():
    t = weak_to_persp_crop(WeakPerspective(1.0, 0.3, -0.2))
    assert (t.tX, t.tY) == (0.3, -0.2)
    assert t.tZ == pytest.approx(10000 / 224, rel=1e-15)
    assert t.frame == "crop-camera"
    assert weak_to_persp_crop(WeakPerspective(0.5, 0, 0)).tZ == pytest.approx(10000 / 112)


@given(pos, st.floats(-1, 1), st.floats(-1, 1))
def test_weak_scale_doubling_halves_depth(s, tx, ty):
    a = weak_to_persp_crop(WeakPerspective(s, tx, ty))
    b = weak_to_persp_crop(WeakPerspective(2 * s, tx, ty))
    assert b.tZ == pytest.approx(a.tZ / 2, rel=1e-14)
    assert (a.tX, a.tY) == (b.tX, b.tY)


def test_value_type_invariants():
    with pytest.raises(ValueError):
        WeakPerspective(0.0, 0, 0)
    with pytest.raises(ValueError):
        BBox(0, 0, -1)
    with pytest.raises(ValueError):
        RootTranslation(0, 0, -2)
    with pytest.raises(ValueError):
        PerspectiveCamera(0, 10, 10)


def test_bbox_info():
    assert np.allclose(bbox_info(BBox(100, -50, 200), 1000), [0.1, -0.05, 0.2], atol=1e-17)
    assert np.array_equal(bbox_info(BBox(0, 0, 300), 750), [0, 0, 0.4])
    f = estimate_focal(1920, 1080)
    assert np.allclose(bbox_info(BBox(300, 0, 224), f), [0.13618371, 0, 0.10168337], atol=1e-8)


def test_gamma_angles():
    assert gamma_angles(BBox(1000, 0, 10), 1000)[0] == pytest.approx(math.pi / 4)
    assert gamma_angles(BBox(0, 0, 10), 1000) == (0.0, 0.0)
    assert gamma_angles(BBox(577.3503, 0, 10), 1000)[0] == pytest.approx(math.pi / 6, abs=1e-7)


def test_crop_rotation_examples():
    assert np.array_equal(crop_rotation(0, 0), np.eye(3))
    c = math.cos(math.pi / 4)
    expected = np.array([[c, 0, c], [0, 1, 0], [-c, 0, c]])
    assert np.allclose(crop_rotation(math.pi / 4, 0), expected, atol=1e-15)
    with pytest.raises(ValueError):
        crop_rotation(math.pi / 2, 0)


@given(st.floats(-1.4, 1.4), st.floats(-0.52, 0.52), st.floats(0.5, 50.0))
def test_crop_rotation_axis_hits_crop_center(gx, gy, depth):
    f = 1500.0
    bbox = BBox(f * math.tan(gx), f * math.tan(gy), 300)
    r = crop_rotation(*gamma_angles(bbox, f))
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
    axis = r @ np.array([0.0, 0.0, 1.0]) * depth
    uv = project(axis, PerspectiveCamera(f, 4000, 4000))[0]
    assert np.allclose(uv, [bbox.cx, bbox.cy], atol=1e-9)


def test_crop_to_full_example():
    t = crop_to_full_translation(WeakPerspective(0.5, 0.2, -0.1), BBox(100, -50, 200), 1000)
    assert np.allclose(t.as_array(), [2.2, -1.1, 20.0], rtol=1e-14)
    assert t.frame == "full-camera"


def test_centered_crop_keeps_offsets():
    t = crop_to_full_translation(WeakPerspective(0.8, 0.25, -0.4), BBox(0, 0, 400), 1200)
    assert (t.tX, t.tY) == (0.25, -0.4)


@given(pos, st.floats(-1, 1), st.floats(-1, 1), offset, offset, st.floats(20, 2000),
       st.floats(100, 10000))
def test_eq7_routes_agree(s, tx, ty, cx, cy, b, f):
    w, bb = WeakPerspective(s, tx, ty), BBox(cx, cy, b)
    a = crop_to_full_translation(w, bb, f).as_array()
    c = crop_to_full_via_crop_depth(w, bb, f).as_array()
    assert np.allclose(a, c, rtol=1e-12, atol=0)
    assert a[2] == pytest.approx(2 * f / (b * s), rel=1e-12)


@given(pos, st.floats(-1, 1), st.floats(-1, 1), offset, offset, st.floats(20, 2000),
       st.floats(100, 10000))
def test_root_projection_consistency(s, tx, ty, cx, cy, b, f):
    w, bb = WeakPerspective(s, tx, ty), BBox(cx, cy, b)
    t = crop_to_full_translation(w, bb, f)
    uv = project(t.as_array(), PerspectiveCamera(f, 1, 1))[0]
    expected = weak_project_to_full(w, bb)
    assert np.allclose(uv, expected, rtol=1e-9, atol=1e-9 * np.abs(expected).max())


@given(pos, st.floats(-1, 1), st.floats(-1, 1), offset, offset, st.floats(20, 2000),
       st.floats(100, 10000))
def test_full_to_weak_inverts(s, tx, ty, cx, cy, b, f):
    bb = BBox(cx, cy, b)
    t = crop_to_full_translation(WeakPerspective(s, tx, ty), bb, f)
    back = full_to_weak(t, bb, f)
    assert np.allclose(back.as_array(), [s, tx, ty], rtol=1e-9, atol=1e-9)


def test_depth_monotonicity():
    w, bb, f = WeakPerspective(0.7, 0.1, 0.1), BBox(50, 20, 300), 1500.0

    def z(s=w.s, b=bb.b, focal=f):
        return crop_to_full_translation(WeakPerspective(s, 0.1, 0.1), BBox(50, 20, b), focal).tZ

    assert z(s=0.8) < z() < z(s=0.6)
    assert z(b=310) < z() < z(b=290)
    assert z(focal=1400) < z() < z(focal=1600)


def test_crop_to_full_rejects_nonpositive():
    with pytest.raises(ValueError):
        crop_to_full_translation(WeakPerspective(1, 0, 0), BBox(0, 0, 100), 0.0)


def test_project_examples():
    cam = PerspectiveCamera(1000, 1920, 1080)
    assert np.array_equal(project([0, 0, 10], cam), [[0, 0]])
    assert np.allclose(project([1, 2, 10], cam), [[100, 200]])
    with pytest.raises(BehindCameraError) as err:
        project([[0, 0, 1], [0, 0, -1]], cam)
    assert err.value.index == 1


def test_principal_point_offsets_projection():
    cam = PerspectiveCamera(1000, 1920, 1080, px=5.0, py=-3.0)
    assert np.allclose(project([1, 2, 10], cam), [[105, 197]])


def test_depth_ordering_preserved():
    cam = PerspectiveCamera(800, 640, 480)
    near, far = project([[1, 1, 2], [1, 1, 4]], cam)
    assert np.linalg.norm(near) > np.linalg.norm(far)


def test_weak_project_to_full():
    bb = BBox(100, -30, 200)
    assert np.array_equal(weak_project_to_full(WeakPerspective(0.9, 0, 0), bb), [100, -30])
    assert weak_project_to_full(WeakPerspective(0.5, 0.2, 0), bb)[0] == pytest.approx(110)


def test_full_pixels_to_crop_maps_center_to_origin():
    cam = PerspectiveCamera(estimate_focal(1920, 1080), 1920, 1080)
    bb = BBox(420, -150, 260)
    assert np.allclose(full_pixels_to_crop([[bb.cx, bb.cy]], bb, cam), 0, atol=1e-10)
    # near the crop center the rotated crop agrees with plain resampling to first order
    kp = np.array([[bb.cx + 3, bb.cy - 2]])
    approx = (kp - [bb.cx, bb.cy]) * R_CROP / bb.b
    assert np.allclose(full_pixels_to_crop(kp, bb, cam), approx, rtol=0.05)
