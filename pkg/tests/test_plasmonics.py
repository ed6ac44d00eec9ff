import math

import numpy as np
import pytest

from proscan.exceptions import GeometryError
from proscan.plasmonics import (DEFAULT_GRID, NanoAntennaModel, ResonanceFitter, approach_shift_curve,
                                effective_polarizability_interface, fit_resonance, image_coupling,
                                moving_average, polarizability_quasistatic, polarizability_radiative,
                                resonance_wavelength, scattering_spectrum, sphere_polarizability)
from proscan.rng import stream

MODEL = NanoAntennaModel()


def test_quasistatic_pinned_value():
    a0 = polarizability_quasistatic(560.0, MODEL)
    eps = MODEL.permittivity(560.0)
    em = MODEL.host
    assert a0 == pytest.approx(4 * math.pi * 40.0**3 * (eps - em) / (eps + 2 * em), rel=1e-12)
    assert a0 == pytest.approx(1698751.1322520718 + 529963.4046999039j, rel=1e-9)


def test_index_matched_sphere_is_invisible():
    class Matched(NanoAntennaModel):
        def permittivity(self, wavelength):
            return complex(self.host)
    assert polarizability_quasistatic(560.0, Matched()) == 0


def test_froehlich_pole():
    class Lossless(NanoAntennaModel):
        def permittivity(self, wavelength):
            return -2.0 * self.host + 1e-9j
    assert abs(polarizability_quasistatic(560.0, Lossless())) > 1e12


def test_radiative_correction_limits():
    assert polarizability_radiative(0.0, 560.0, 1.0) == 0
    a0 = 1e5 + 2e4j
    assert polarizability_radiative(a0, 1e12, 1.0) == pytest.approx(a0, rel=1e-12)
    lam = resonance_wavelength(MODEL, 0.0)
    a = sphere_polarizability(lam, MODEL)
    assert a.imag > 0 and np.isfinite(abs(a))


def test_radiative_correction_matches_reciprocal_form():
    a0 = polarizability_quasistatic(600.0, MODEL)
    k = 2 * math.pi * math.sqrt(MODEL.host) / 600.0
    expect = 1.0 / (1.0 / a0 - 1j * k**3 / (6 * math.pi) - k**2 / (4 * math.pi * 40.0))
    got = polarizability_radiative(a0, 600.0, MODEL.host, 40.0, dynamic_depolarization=True)
    assert got == pytest.approx(expect, rel=1e-12)


def test_image_limits():
    a = 1e6 + 3e5j
    assert effective_polarizability_interface(a, math.inf, 0.4) == a
    assert effective_polarizability_interface(a, 100.0, 0.0) == pytest.approx(a, rel=1e-15)
    big = effective_polarizability_interface(a, 1e7, 0.4)
    assert abs(big / a - 1) < 1e-6
    with pytest.raises(GeometryError):
        effective_polarizability_interface(a, 30.0, 0.4, radius=40.0)


def test_image_dipole_self_consistent_iteration():
    # p = alpha (E0 + 2 beta p / (4 pi (2h)^3)) solved by fixed-point iteration
    a, h, beta = 2e5 + 1e5j, 60.0, 0.396
    p = a
    for _ in range(200):
        p = a * (1 + 2 * beta * p / (4 * math.pi * (2 * h) ** 3))
    assert effective_polarizability_interface(a, h, beta) == pytest.approx(p, rel=1e-12)


def test_beta_of_glass():
    assert MODEL.beta == pytest.approx((1.52**2 - 1) / (1.52**2 + 1), rel=1e-12)


def test_isolated_peak_in_band():
    spec = scattering_spectrum(math.inf, DEFAULT_GRID)
    assert 545.0 <= spec.peak_wavelength() <= 575.0


def test_scattering_deterministic_and_red_shifting():
    s1 = scattering_spectrum(20.0, DEFAULT_GRID)
    s2 = scattering_spectrum(20.0, DEFAULT_GRID)
    assert np.array_equal(s1.intensities, s2.intensities)
    near = resonance_wavelength(MODEL, image_coupling(5.0, MODEL))
    far = resonance_wavelength(MODEL, image_coupling(500.0, MODEL))
    assert near > far


def test_shift_scaling_against_leading_order():
    curve = approach_shift_curve([40.0, 20.0])
    ratio = curve[1, 1] / curve[0, 1]
    predicted = ((40.0 + 40.0) / (40.0 + 20.0)) ** 3
    assert ratio == pytest.approx(predicted, rel=0.15)


def test_shift_curve_properties():
    gaps = np.arange(200.0, -1.0, -10.0)
    curve = approach_shift_curve(gaps)
    assert np.all(np.diff(curve[:, 1]) > 0)
    s = dict(zip(curve[:, 0], curve[:, 1]))
    assert s[0.0] > 3 * s[50.0] if 50.0 in s else True
    iso = approach_shift_curve([1e6])
    assert abs(iso[0, 1]) < 0.2
    five = approach_shift_curve([50.0, 5.0])
    assert five[1, 1] > 3 * five[0, 1]


def test_moving_average():
    assert moving_average([2.0] * 7, 3) == pytest.approx([2.0] * 7)
    assert moving_average([0.0, 3.0, 0.0], 3) == pytest.approx([1.5, 1.0, 1.5])
    with pytest.raises(ValueError):
        moving_average([1.0, 2.0, 3.0], 2)


def test_moving_average_variance_reduction():
    x = stream(5, "ma").standard_normal(10_000)
    ratio = x[1:-1].var() / moving_average(x, 3)[1:-1].var()
    assert ratio == pytest.approx(3.0, rel=0.1)


def test_fit_recovers_generating_resonance():
    for gap in (math.inf, 30.0, 5.0):
        spec = scattering_spectrum(gap, DEFAULT_GRID)
        c = 0.0 if math.isinf(gap) else image_coupling(gap, MODEL)
        lam, resid = fit_resonance(spec)
        assert lam == pytest.approx(resonance_wavelength(MODEL, c), abs=0.2)
        assert resid < 1e-6


def test_fit_repeatability_with_noise():
    vals = [fit_resonance(scattering_spectrum(20.0, DEFAULT_GRID, noise_sigma=0.02, rng=stream(s, "p")))[0]
            for s in range(50)]
    assert np.std(vals) < 1.0


def test_fitter_is_an_estimator():
    est = ResonanceFitter(fit_max_wavelength=580.0)
    assert est.get_params()["fit_max_wavelength"] == 580.0
    spec = scattering_spectrum(10.0, DEFAULT_GRID)
    est.fit(spec.wavelengths, spec.intensities)
    pred = est.predict(spec.wavelengths)
    keep = spec.wavelengths <= 580
    assert pred[keep] == pytest.approx(spec.intensities[keep], abs=1e-6)
