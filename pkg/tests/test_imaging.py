import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proscan.exceptions import DegenerateInputError, ExtrapolationError, PlacementError
from proscan.imaging import (PRECISION_CAMERA, CameraModel, Frame, GaussianLocalizer, TrajectoryAnalyzer,
                             _gaussian_image, analyze_trajectory, crlb_precision, localize_2d,
                             photons_for_precision, precision_preset_photons, render_frame, separation_series)
from proscan.mechanics import PiezoAxisModel, ScanState, lateral_scan
from proscan.rng import stream

CAM = CameraModel()


def fisher_bound(photons, bg, sigma, pixel, n=41):
    """x-precision from the numerically differentiated Fisher matrix of the full 6-parameter model."""
    x0 = n * pixel / 2 + 0.3 * pixel
    p = np.array([x0, x0, sigma, sigma, photons, bg])

    def mu(q):
        return _gaussian_image((n, n), (0.0, 0.0), pixel, *q[:5]) + q[5]

    m = mu(p).ravel()
    jac = []
    for i in range(6):
        h = 1e-4 * max(abs(p[i]), 1.0)
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        jac.append((mu(up) - mu(dn)).ravel() / (2 * h))
    jac = np.array(jac)
    return math.sqrt(np.linalg.inv((jac / m) @ jac.T)[0, 0])


def test_default_psf_width():
    assert CAM.psf_sigma == pytest.approx(97.5)


def test_empty_scene():
    f = render_frame([], CameraModel(), 10, seed=1, noise=False)
    assert f.pixels.sum() == 0


def test_photon_normalization():
    f = render_frame([(1050.0, 1050.0, 5000.0)], CAM, 21, noise=False)
    assert abs(f.pixels.sum() - 5000) <= 21 * 21 / 2


def test_center_of_mass():
    x0, y0 = 1033.0, 1071.0
    f = render_frame([(x0, y0, 1e7)], CAM, 21, noise=False)
    px = f.pixels.astype(float)
    c = (np.arange(21) + 0.5) * 100.0
    assert (px.sum(0) @ c) / px.sum() == pytest.approx(x0, abs=1.0)
    assert (px.sum(1) @ c) / px.sum() == pytest.approx(y0, abs=1.0)


def test_placement_margin():
    with pytest.raises(PlacementError):
        render_frame([(200.0, 750.0, 100.0)], CAM, 15, seed=0)


def test_frame_validation():
    with pytest.raises(ValueError):
        Frame(np.array([[1, -1], [0, 0]]))
    with pytest.raises(ValueError):
        CameraModel(pixel_size=0.0)


def test_noiseless_localization():
    f = render_frame([(733.0, 767.0, 1e7)], CAM, 15, noise=False)
    r = localize_2d(f)
    assert r.x == pytest.approx(733.0, abs=0.1)
    assert r.y == pytest.approx(767.0, abs=0.1)
    assert r.sigma_x == pytest.approx(97.5, rel=1e-3)


def test_flat_roi_is_degenerate():
    with pytest.raises(DegenerateInputError):
        GaussianLocalizer().fit(np.full((9, 9), 65535))


def test_two_spots_flagged():
    cam = CameraModel(background_rate=2.0)
    f = render_frame([(600.0, 750.0, 20000.0), (1000.0, 750.0, 20000.0)], cam, 17, seed=stream(0, "f"))
    assert localize_2d(f).flag == "poor-fit"
    one = render_frame([(800.0, 750.0, 20000.0)], cam, 17, seed=stream(0, "f"))
    assert localize_2d(one).flag == ""


def test_crlb_limits():
    assert crlb_precision(1e4, 0.0, 97.5, 1e-9) == pytest.approx(97.5 / 100.0)
    r = crlb_precision(1000.0, 0.0, 97.5, 100.0) / crlb_precision(2000.0, 0.0, 97.5, 100.0)
    assert r == pytest.approx(math.sqrt(2), rel=1e-9)
    with pytest.raises(ValueError):
        crlb_precision(0.0, 1.0, 97.5, 100.0)


@pytest.mark.parametrize("photons, bg", [(2315.0, 10.0), (1000.0, 10.0), (10000.0, 10.0), (500.0, 50.0)])
def test_crlb_against_fisher_information(photons, bg):
    assert crlb_precision(photons, bg, 97.5, 100.0) == pytest.approx(fisher_bound(photons, bg, 97.5, 100.0),
                                                                   rel=0.01)


def test_precision_preset_inverts_crlb():
    n = precision_preset_photons()
    c = PRECISION_CAMERA
    assert crlb_precision(n, c.background_rate, c.psf_sigma, c.pixel_size) == pytest.approx(2.4, rel=1e-6)
    assert photons_for_precision(3.0, 10.0, 97.5, 100.0) < n


def _spread(photons, seeds, cam=PRECISION_CAMERA, tag="loc"):
    x0 = y0 = 7.8 * cam.pixel_size
    xy = np.array([[r.x, r.y] for r in
                   (localize_2d(render_frame([(x0, y0, photons)], cam, 15, seed=stream(s, tag))) for s in seeds)])
    return xy - [x0, y0]


def test_precision_tracks_crlb_over_photon_sweep():
    for photons in (500.0, 1000.0, 2315.0, 8000.0):
        err = _spread(photons, range(200), tag=f"sweep{photons}")
        sigma = float(np.sqrt(np.mean(err.std(axis=0, ddof=1) ** 2)))
        assert sigma == pytest.approx(crlb_precision(photons, 10.0, 97.5, 100.0), rel=0.25)


def test_localization_unbiased():
    err = _spread(precision_preset_photons(), range(500), tag="bias")
    assert np.all(np.abs(err.mean(axis=0)) < 0.3)


def test_trajectory_constructed_line():
    pts = np.column_stack([np.arange(10) * 7.3, np.zeros(10)])
    m, tilt, mean, std, jit = analyze_trajectory(pts)
    assert (m, tilt, mean, std, jit) == pytest.approx((0.0, 0.0, 7.3, 0.0, 0.0), abs=1e-12)


def test_trajectory_tilt():
    x = np.arange(20) * 7.3
    m, tilt, *_ = analyze_trajectory(np.column_stack([x, -0.023 * x]))
    assert m == pytest.approx(-0.023)
    assert tilt == pytest.approx(-1.3176, abs=1e-3)


def test_trajectory_ols_option_matches_on_exact_line():
    x = np.arange(20) * 7.3
    pts = np.column_stack([x, 3.0 - 0.05 * x])
    ols = TrajectoryAnalyzer("ols").fit(pts)
    assert ols.slope_ == pytest.approx(-0.05) and ols.intercept_ == pytest.approx(3.0)


def test_trajectory_needs_three_points():
    with pytest.raises(ValueError):
        analyze_trajectory([[0.0, 0.0], [1.0, 0.0]])


@given(st.floats(-0.5, 0.5), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_trajectory_rigid_motion_invariance(angle, tx, ty, seed):
    _, pts = lateral_scan(ScanState(gap=0.0), [1.0] * 30, "x", PiezoAxisModel(), stream(seed, "traj"))
    c, s = math.cos(angle), math.sin(angle)
    moved = pts @ np.array([[c, s], [-s, c]]) + [tx, ty]
    a = TrajectoryAnalyzer().fit(pts)
    b = TrajectoryAnalyzer().fit(moved)
    assert b.step_mean_ == pytest.approx(a.step_mean_, abs=1e-9)
    assert b.step_std_ == pytest.approx(a.step_std_, abs=1e-9)
    assert b.jitter_ == pytest.approx(a.jitter_, abs=1e-9)
    assert b.tilt_deg_ == pytest.approx(a.tilt_deg_ + math.degrees(angle), abs=1e-7)


def test_transform_coordinates():
    pts = np.column_stack([np.arange(5.0), np.zeros(5)])
    along = TrajectoryAnalyzer().fit(pts).transform(pts)
    assert along[:, 0] == pytest.approx([-2, -1, 0, 1, 2])
    assert along[:, 1] == pytest.approx(np.zeros(5))


# --- separation series ----------------------------------------------------------

COLS, ROWS = 21, 9
CX, CY = COLS * 50.0, ROWS * 50.0
SEP_CAM = CameraModel(background_rate=2.0)


def _frames(offsets, photons=3000.0, gnp=3000.0, tag="sep"):
    frames, rois = [], []
    for i, off in enumerate(offsets):
        src = [(CX, CY, gnp), (CX + off, CY, photons)]
        frames.append(render_frame(src, SEP_CAM, (ROWS, COLS), seed=stream(i, tag)))
        c = int((CX + off) // 100)
        rois.append((0, ROWS, max(c - 3, 0), min(c + 4, COLS)))
    gnp_roi = (0, ROWS, int(CX // 100) - 3, int(CX // 100) + 4)
    return frames, gnp_roi, rois


def test_separated_sequence_has_no_flags():
    offsets = np.linspace(-700, -400, 6)
    frames, g, rois = _frames(offsets)
    s = separation_series(frames, g, rois)
    assert not s.coupled.any()
    assert np.array_equal(s.distance, s.measured)
    assert s.distance == pytest.approx(np.abs(offsets), abs=10.0)


def test_linear_approach_bridged():
    offsets = np.arange(-600.0, 601.0, 25.0)
    frames, g, rois = _frames(offsets)
    s = separation_series(frames, g, rois)
    onset = np.abs(offsets[np.argmax(s.coupled)])
    assert onset == pytest.approx(2 * 97.5, abs=30.0)
    # the ~70 nm enhancement onset lies inside the flagged span
    assert np.all(s.coupled[np.abs(offsets) <= 70])
    err = np.abs(s.distance[s.coupled] - np.abs(offsets[s.coupled]))
    prec = crlb_precision(3000.0, 2.0, 97.5, 100.0)
    # a separation carries the localization error of both spots
    assert err.max() < 2 * math.sqrt(2) * prec


def test_separation_symmetric_under_swap():
    offsets = np.array([-600.0, -450.0, 300.0, 500.0])
    frames, g, rois = _frames(offsets)
    a = separation_series(frames, g, rois, min_sideband=0)
    swapped = [separation_series([f], r, g, min_sideband=0).measured[0] for f, r in zip(frames, rois)]
    assert np.allclose(a.measured, swapped, atol=1e-6)


def test_insufficient_sidebands():
    offsets = np.arange(-150.0, 300.0, 25.0)
    frames, g, rois = _frames(offsets)
    with pytest.raises(ExtrapolationError):
        separation_series(frames, g, rois)
