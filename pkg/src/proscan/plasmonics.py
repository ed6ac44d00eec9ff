"""Dipolar gold-sphere antenna near a dielectric interface.

Volume-polarizability convention throughout: ``alpha`` has units of nm^3 and
the induced moment is ``p = eps0 * eps_host * alpha * E``, so an isolated
sphere has ``alpha0 = 4 pi a^3 (eps - eps_host) / (eps + 2 eps_host)``.

Only the mode polarized perpendicular to the substrates is modeled.  The
supporting glass is folded into an effective host permittivity (mean of air
and glass); the approaching top substrate enters through its image dipole.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, least_squares, minimize_scalar
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import FitFailure, GeometryError
from .materials import GLASS_INDEX, DielectricTable, default_gold_table
from .rng import as_generator
from .spectrum import Spectrum
from .validation import check_grid, check_odd_window, check_xy, check_1d

DEFAULT_GRID = np.arange(450.0, 750.0 + 1e-9, 1.0)


@dataclass(frozen=True)
class NanoAntennaModel:
    """Gold nanosphere and its dielectric surroundings.

    Parameters
    ----------
    radius : float
        Sphere radius in nm.
    medium_permittivity : float
        Permittivity of the gap medium (air).
    substrate_permittivity : float
        Permittivity of the approaching glass substrate.
    host_permittivity : float or None
        Permittivity the sphere responds in.  ``None`` uses the mean of the
        gap medium and the supporting glass, a standard effective medium for
        a particle resting on a substrate.
    dynamic_depolarization : bool
        Include the ``k^2 / a`` size correction (red shift of larger spheres).
    gold_table : DielectricTable or None
        Defaults to the bundled table.
    """

    radius: float = 40.0
    medium_permittivity: float = 1.0
    substrate_permittivity: float = GLASS_INDEX**2
    host_permittivity: float | None = None
    dynamic_depolarization: bool = True
    gold_table: DielectricTable | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be > 0")
        if not self.medium_permittivity > 0:
            raise ValueError("medium_permittivity must be > 0")
        if not self.substrate_permittivity > 1:
            raise ValueError("substrate_permittivity must be real and > 1")
        if self.host_permittivity is not None and not self.host_permittivity > 0:
            raise ValueError("host_permittivity must be > 0")

    @property
    def host(self) -> float:
        if self.host_permittivity is not None:
            return float(self.host_permittivity)
        return 0.5 * (self.medium_permittivity + self.substrate_permittivity)

    @property
    def beta(self) -> float:
        """Image strength of the top substrate seen from the gap medium."""
        es, em = self.substrate_permittivity, self.medium_permittivity
        return (es - em) / (es + em)

    def permittivity(self, wavelength):
        return (self.gold_table or default_gold_table())(wavelength)


def polarizability_quasistatic(wavelength, model: NanoAntennaModel):
    """Electrostatic sphere polarizability (nm^3)."""
    eps = model.permittivity(wavelength)
    em = model.host
    return 4.0 * np.pi * model.radius**3 * (eps - em) / (eps + 2.0 * em)


def polarizability_radiative(alpha0, wavelength, eps_m, radius=None, dynamic_depolarization=False):
    """Add radiation damping (and optionally dynamic depolarization) to ``alpha0``.

    ``1/alpha = 1/alpha0 - i k^3 / (6 pi) [- k^2 / (4 pi a)]`` with ``k`` the
    wavenumber in the host.  Written in the multiplied-out form so that
    ``alpha0 = 0`` passes through.
    """
    alpha0 = np.asarray(alpha0, dtype=complex)
    k = 2.0 * np.pi * math.sqrt(eps_m) / np.asarray(wavelength, dtype=float)
    denom = 1.0 - 1j * k**3 * alpha0 / (6.0 * np.pi)
    if dynamic_depolarization:
        if radius is None:
            raise ValueError("dynamic depolarization needs the sphere radius")
        denom = denom - k**2 * alpha0 / (4.0 * np.pi * radius)
    out = alpha0 / denom
    return complex(out) if out.ndim == 0 else out


def sphere_polarizability(wavelength, model: NanoAntennaModel):
    """Quasi-static polarizability with the radiative corrections of ``model``."""
    alpha0 = polarizability_quasistatic(wavelength, model)
    return polarizability_radiative(alpha0, wavelength, model.host, model.radius,
                                    model.dynamic_depolarization)


def effective_polarizability_interface(alpha, h, beta, radius=None):
    """Polarizability of a perpendicular dipole renormalized by its image.

    The image sits ``2 h`` away with moment ``beta * p``; its on-axis field at
    the particle is ``2 beta p / (4 pi (2h)^3)``, giving
    ``alpha_eff = alpha / (1 - beta alpha / (16 pi h^3))``.
    """
    if radius is not None and h < radius:
        raise GeometryError(f"center height {h} nm is below the particle radius {radius} nm")
    if not h > 0:
        raise GeometryError("center height must be > 0")
    if math.isinf(h):
        return alpha
    alpha = np.asarray(alpha, dtype=complex)
    out = alpha / (1.0 - beta * alpha / (16.0 * np.pi * h**3))
    return complex(out) if out.ndim == 0 else out


def image_coupling(gap, model: NanoAntennaModel) -> float:
    """Dimensionless image term ``beta a^3 / (4 h^3)`` with ``h = gap + a``.

    With it, ``1/alpha_eff = 1/alpha - coupling / (4 pi a^3)``.
    """
    if gap < 0:
        raise GeometryError("gap must be >= 0")
    h = gap + model.radius
    return model.beta * model.radius**3 / (4.0 * h**3)


def _lineshape(wavelengths, model, coupling, alpha=None):
    """Unnormalized ``k^4 |alpha_eff|^2`` for a given image coupling."""
    if alpha is None:
        alpha = sphere_polarizability(wavelengths, model)
    a3 = 4.0 * np.pi * model.radius**3
    alpha_eff = alpha / (1.0 - coupling * alpha / a3)
    k = 2.0 * np.pi * math.sqrt(model.host) / wavelengths
    return k**4 * np.abs(alpha_eff) ** 2


def scattering_spectrum(gap, grid, model: NanoAntennaModel | None = None, noise_sigma=0.0, rng=None):
    """Normalized scattering spectrum of the sphere at ``gap`` nm below the top substrate."""
    model = model or NanoAntennaModel()
    grid = check_grid(grid)
    coupling = 0.0 if math.isinf(gap) else image_coupling(gap, model)
    sca = _lineshape(grid, model, coupling)
    sca = sca / sca.max()
    if noise_sigma:
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        rng = as_generator(rng)
        sca = np.clip(sca * (1.0 + noise_sigma * rng.standard_normal(grid.size)), 0.0, None)
    return Spectrum(grid, sca)


def moving_average(series, window: int = 3):
    """Centered running mean; the edges average over the truncated window."""
    x = check_1d(series, "series")
    window = check_odd_window(window, x.size)
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(x.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def resonance_wavelength(model: NanoAntennaModel, coupling: float, bounds=(450.0, 750.0)) -> float:
    """Peak wavelength of the scattering lineshape for a given image coupling."""
    lo, hi = bounds
    lo = max(lo, (model.gold_table or default_gold_table()).span[0])
    hi = min(hi, (model.gold_table or default_gold_table()).span[1])
    coarse = np.arange(lo, hi, 1.0)
    i = int(np.argmax(_lineshape(coarse, model, coupling)))
    a, b = coarse[max(i - 1, 0)], coarse[min(i + 1, coarse.size - 1)]
    if a == b:
        return float(coarse[i])
    res = minimize_scalar(lambda lam: -_lineshape(np.array([lam]), model, coupling)[0],
                          bounds=(a, b), method="bounded", options={"xatol": 1e-6})
    return float(res.x)


def _coupling_for_peak(model, target, c_lo=-0.4, c_hi=0.5):
    """Invert :func:`resonance_wavelength` (monotone in the coupling)."""
    f = lambda c: resonance_wavelength(model, c) - target
    f_lo, f_hi = f(c_lo), f(c_hi)
    if f_lo >= 0:
        return c_lo
    if f_hi <= 0:
        return c_hi
    return brentq(f, c_lo, c_hi, xtol=1e-8)


class ResonanceFitter(BaseEstimator):
    """Least-squares fit of a plasmon spectrum to the image-dipole lineshape.

    The free parameters are the image coupling (which sets the resonance
    wavelength), an amplitude and a constant background.  Only samples up to
    ``fit_max_wavelength`` enter the fit.  Initialization is deterministic:
    resonance at the brightest sample, amplitude at the maximum, background at
    the minimum.

    Parameters
    ----------
    antenna : NanoAntennaModel or None
    fit_max_wavelength : float, default=590
    max_nfev : int, default=400
        Iteration budget of the Levenberg-Marquardt solver.

    Attributes
    ----------
    resonance_wavelength_ : float
    coupling_ : float
    amplitude_, background_ : float
    residual_norm_ : float
    """

    def __init__(self, antenna=None, fit_max_wavelength=590.0, max_nfev=400):
        self.antenna = antenna
        self.fit_max_wavelength = fit_max_wavelength
        self.max_nfev = max_nfev

    def _model(self):
        return self.antenna if self.antenna is not None else NanoAntennaModel()

    def fit(self, wavelengths, intensities):
        wl, y = check_xy(wavelengths, intensities, ("wavelengths", "intensities"))
        keep = wl <= self.fit_max_wavelength
        if keep.sum() < 8:
            raise ValueError(f"need at least 8 samples below {self.fit_max_wavelength} nm, got {keep.sum()}")
        wl, y = wl[keep], y[keep]
        scale = float(np.max(np.abs(y))) or 1.0
        y = y / scale
        model = self._model()
        alpha = sphere_polarizability(wl, model)
        norm = float(_lineshape(wl, model, 0.0, alpha).max())

        def predict(p):
            c, amp, bg = p
            return amp * _lineshape(wl, model, c, alpha) / norm + bg

        c0 = _coupling_for_peak(model, float(wl[np.argmax(y)]))
        p0 = np.array([c0, 1.0, float(y.min())])
        p0[1] = (float(y.max()) - p0[2]) / max(float(predict([c0, 1.0, 0.0]).max()), 1e-12)
        res = least_squares(lambda p: predict(p) - y, p0, method="lm", max_nfev=self.max_nfev,
                            xtol=1e-12, ftol=1e-12, gtol=1e-12)
        residual = float(np.linalg.norm(res.fun)) * scale
        if res.status <= 0 or not np.all(np.isfinite(res.x)):
            raise FitFailure("resonance fit did not converge", residual,
                             {"status": int(res.status), "nfev": int(res.nfev), "message": res.message})
        c, amp, bg = res.x
        self.coupling_ = float(c)
        self.amplitude_ = float(amp) * scale / norm
        self.background_ = float(bg) * scale
        self.residual_norm_ = residual
        self.n_iter_ = int(res.nfev)
        self.resonance_wavelength_ = resonance_wavelength(model, self.coupling_)
        return self

    def predict(self, wavelengths):
        check_is_fitted(self, "coupling_")
        wl = check_grid(wavelengths)
        return self.amplitude_ * _lineshape(wl, self._model(), self.coupling_) + self.background_


def fit_resonance(spectrum: Spectrum, fit_max_wavelength=590.0, model=None):
    """Return ``(resonance_wavelength, residual_norm)``; raises FitFailure."""
    est = ResonanceFitter(model, fit_max_wavelength).fit(spectrum.wavelengths, spectrum.intensities)
    return est.resonance_wavelength_, est.residual_norm_


def approach_shift_curve(gaps, model=None, grid=None, fit_max_wavelength=590.0):
    """Resonance shift relative to the isolated sphere for each gap.

    Returns an ``(n, 2)`` array of ``(gap, shift)``; gaps must be sorted
    descending.
    """
    model = model or NanoAntennaModel()
    gaps = check_1d(gaps, "gaps")
    if np.any(gaps < 0):
        raise ValueError("gaps must be >= 0")
    if np.any(np.diff(gaps) > 0):
        raise ValueError("gaps must be sorted in descending order")
    grid = DEFAULT_GRID if grid is None else grid
    ref, _ = fit_resonance(scattering_spectrum(math.inf, grid, model), fit_max_wavelength, model)
    shifts = [fit_resonance(scattering_spectrum(g, grid, model), fit_max_wavelength, model)[0] - ref
              for g in gaps]
    return np.column_stack([gaps, shifts])
