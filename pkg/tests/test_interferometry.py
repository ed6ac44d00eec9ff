import math
import time

import numpy as np
import pytest

from proscan.interferometry import (FSRGapEstimator, cavity_reflectance, displacement_from_fringes,
                                    find_fringe_extrema, gap_from_fsr, white_light_spectrum)
from proscan.rng import stream
from proscan.spectrum import Spectrum

GRID = np.arange(450.0, 750.0 + 1e-9, 0.5)


def airy_oracle(d, lam, n=1.52):
    """Independent two-interface Airy sum for glass | air (d) | glass."""
    r = (n - 1) / (n + 1)
    phi = 4 * math.pi * d / lam
    return 2 * r * r * (1 - math.cos(phi)) / (1 + r**4 - 2 * r * r * math.cos(phi))


def test_reflectance_against_airy_formula():
    for d in (0.0, 133.0, 266.0, 1000.0, 5000.0):
        for lam in (450.0, 532.0, 700.0):
            assert cavity_reflectance(d, np.array([lam]))[0] == pytest.approx(airy_oracle(d, lam), abs=1e-12)


def test_zero_gap_and_half_wave():
    assert cavity_reflectance(0.0, np.array([532.0]))[0] == pytest.approx(0.0, abs=1e-15)
    # round-trip phase 2 pi: a minimum of the internal reflectance
    g = np.linspace(250, 280, 301)
    r = [cavity_reflectance(x, np.array([532.0]))[0] for x in g]
    assert g[int(np.argmin(r))] == pytest.approx(266.0, abs=0.1)


def test_reflectance_in_unit_interval():
    r = cavity_reflectance(3210.0, GRID)
    assert np.all((r >= 0) & (r <= 1))


def test_gap_from_fsr():
    assert gap_from_fsr(500.0, 525.0) == pytest.approx(5250.0)
    for bad in ((500.0, 500.0), (525.0, 500.0), (0.0, 10.0)):
        with pytest.raises(ValueError):
            gap_from_fsr(*bad)


@pytest.mark.parametrize("gap", [5000.0, 5250.0, 10000.0])
def test_round_trip_through_forward_model(gap):
    spec = white_light_spectrum(gap, GRID)
    est = FSRGapEstimator().fit(spec.wavelengths, spec.intensities)
    assert est.sufficient_
    assert est.gap_ == pytest.approx(gap, rel=0.01)
    # any neighbouring pair gives the same answer for the lossless cavity
    assert np.all(np.abs(est.pair_gaps_ / gap - 1) < 0.02)


def test_noiseless_spectrum_is_reflectance_times_envelope():
    spec = white_light_spectrum(2000.0, GRID, envelope="lamp")
    from proscan.interferometry import lamp_envelope
    assert np.array_equal(spec.intensities, cavity_reflectance(2000.0, GRID) * lamp_envelope(GRID))


def test_small_gap_is_insufficient():
    spec = white_light_spectrum(800.0, GRID)
    est = FSRGapEstimator().fit(spec.wavelengths, spec.intensities)
    assert not est.sufficient_ and math.isnan(est.gap_)
    assert "insufficient" in est.reason_


def test_large_gap_has_many_maxima():
    spec = white_light_spectrum(10000.0, GRID)
    assert find_fringe_extrema(spec).maxima.size >= 5


def test_cosine_maxima_at_analytic_positions():
    x = np.arange(0.0, 200.0 + 1e-9, 0.5) + 450.0
    y = 1 + np.cos(2 * math.pi * (x - 450.0) / 80.0 - math.pi)
    found = find_fringe_extrema(Spectrum(x, y))
    assert found.maxima == pytest.approx([490.0, 570.0], abs=0.25)


def test_monotone_spectrum_is_insufficient():
    found = find_fringe_extrema(Spectrum(GRID, np.linspace(0, 1, GRID.size)))
    assert not found.sufficient


def test_noisy_maxima_count_stable():
    clean = find_fringe_extrema(white_light_spectrum(5000.0, GRID)).maxima.size
    agree = sum(find_fringe_extrema(white_light_spectrum(5000.0, GRID, 0.02, stream(s, "wl"))).maxima.size == clean
                for s in range(100))
    assert agree >= 95


def test_fringe_count_full_ramp():
    gaps = np.linspace(3000.0, 1100.0, 400)
    trace = [cavity_reflectance(g, np.array([532.0]))[0] for g in gaps]
    c = displacement_from_fringes(trace, 532.0)
    assert c.full_oscillations == 7
    assert c.displacement == pytest.approx(1900.0, abs=133.0)


def test_one_oscillation_is_half_wavelength():
    t = np.linspace(0, 2 * math.pi, 200)
    c = displacement_from_fringes(np.cos(t), 532.0)
    assert c.full_oscillations == 1
    assert c.displacement == pytest.approx(266.0, abs=1.0)


def test_flat_trace_is_insufficient():
    c = displacement_from_fringes(np.ones(50), 532.0)
    assert not c.sufficient and c.full_oscillations == 0


def test_estimator_params_round_trip():
    est = FSRGapEstimator(min_prominence=0.2)
    assert est.get_params() == {"min_prominence": 0.2}


def test_fsr_speed():
    t0 = time.perf_counter()
    for g in np.linspace(2000, 20000, 20):
        s = white_light_spectrum(g, GRID)
        FSRGapEstimator().fit(s.wavelengths, s.intensities)
    assert time.perf_counter() - t0 < 5.0
