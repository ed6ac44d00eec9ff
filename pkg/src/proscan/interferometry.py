"""Glass/air/glass cavity: forward reflectance model and coarse gap estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .materials import AIR_INDEX, index_glass
from .rng import as_generator
from .spectrum import Spectrum
from .validation import check_1d, check_grid, check_xy

__all__ = [
    "Spectrum", "FringeExtrema", "FringeCount", "FSRGapEstimator", "cavity_reflectance",
    "white_light_spectrum", "gap_from_fsr", "find_fringe_extrema", "displacement_from_fringes",
    "lamp_envelope",
]


def cavity_reflectance(gap, wavelength, *, glass_index=None, gap_index=AIR_INDEX):
    """Normal-incidence reflectance of a glass / air-gap / glass stack.

    Exact three-layer (Airy) sum with the two internal interfaces; the thick
    substrates' outer faces are ignored.  Broadcasts over ``gap`` and
    ``wavelength``.
    """
    gap = np.asarray(gap, dtype=float)
    lam = np.asarray(wavelength, dtype=float)
    if np.any(gap < 0):
        raise ValueError("gap must be >= 0")
    if np.any(lam <= 0):
        raise ValueError("wavelength must be > 0")
    n1 = index_glass(lam, glass_index)
    r12 = (n1 - gap_index) / (n1 + gap_index)
    r23 = -r12
    phase = np.exp(2j * (2 * np.pi * gap_index * gap / lam))
    r = (r12 + r23 * phase) / (1 + r12 * r23 * phase)
    out = np.abs(r) ** 2
    return float(out) if out.ndim == 0 else out


def lamp_envelope(wavelengths, center=600.0, width=250.0):
    """Smooth broadband source profile (unit peak)."""
    lam = np.asarray(wavelengths, dtype=float)
    return np.exp(-(((lam - center) / width) ** 2))


def white_light_spectrum(gap, grid, noise_sigma=0.0, rng=None, *, envelope=None, glass_index=None):
    """Reflected white-light spectrum of the cavity.

    ``envelope`` is ``None`` (flat), ``"lamp"`` or a callable of wavelength.
    Noise is multiplicative Gaussian with fractional ``noise_sigma``; negative
    samples are clipped to zero.
    """
    grid = check_grid(grid)
    intensity = cavity_reflectance(gap, grid, glass_index=glass_index)
    if envelope == "lamp":
        intensity = intensity * lamp_envelope(grid)
    elif callable(envelope):
        intensity = intensity * np.asarray(envelope(grid), dtype=float)
    elif envelope not in (None, "flat"):
        raise ValueError(f"unknown envelope {envelope!r}")
    if noise_sigma:
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        rng = as_generator(rng)
        intensity = intensity * (1.0 + noise_sigma * rng.standard_normal(grid.size))
        intensity = np.clip(intensity, 0.0, None)
    return Spectrum(grid, intensity)


def gap_from_fsr(lambda1, lambda2):
    """Gap (nm) from two neighboring reflectance maxima of an air cavity."""
    lambda1 = float(lambda1)
    lambda2 = float(lambda2)
    if not lambda2 > lambda1 > 0:
        raise ValueError(f"need lambda2 > lambda1 > 0, got ({lambda1}, {lambda2})")
    return lambda1 * lambda2 / (2.0 * (lambda2 - lambda1))


@dataclass(frozen=True)
class FringeExtrema:
    maxima: np.ndarray
    sufficient: bool
    reason: str = ""


def _parabolic_vertex(x, y, idx):
    """Sub-sample vertex of the parabola through samples idx-1, idx, idx+1."""
    x0, x1, x2 = x[idx - 1], x[idx], x[idx + 1]
    y0, y1, y2 = y[idx - 1], y[idx], y[idx + 1]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
    if a >= 0:
        return x1
    return float(np.clip(-b / (2 * a), x0, x2))


def find_fringe_extrema(spectrum: Spectrum, min_prominence: float = 0.3) -> FringeExtrema:
    """Local maxima whose prominence exceeds ``min_prominence`` of the full range.

    Fewer than two maxima is reported through ``sufficient=False`` rather than
    raised: it is the expected outcome at small gaps.
    """
    wl, y = spectrum.wavelengths, spectrum.intensities
    span = float(y.max() - y.min())
    if span <= 0:
        return FringeExtrema(np.empty(0), False, "insufficient fringes: flat spectrum")
    idx, _ = find_peaks(y, prominence=min_prominence * span)
    maxima = np.array([_parabolic_vertex(wl, y, i) for i in idx])
    if maxima.size < 2:
        return FringeExtrema(maxima, False, f"insufficient fringes: {maxima.size} maximum found")
    return FringeExtrema(maxima, True)


class FSRGapEstimator(BaseEstimator):
    """Absolute gap from the free spectral range of a white-light spectrum.

    Parameters
    ----------
    min_prominence : float, default=0.3
        Peak prominence threshold as a fraction of the spectrum's range.

    Attributes
    ----------
    gap_ : float
        Median of the per-pair gap estimates; NaN when ``sufficient_`` is False.
    pair_gaps_ : ndarray
        One estimate per pair of neighboring maxima.
    maxima_ : ndarray
        Refined maxima wavelengths.
    sufficient_ : bool
    """

    def __init__(self, min_prominence=0.3):
        self.min_prominence = min_prominence

    def fit(self, wavelengths, intensities):
        wavelengths, intensities = check_xy(wavelengths, intensities, ("wavelengths", "intensities"))
        found = find_fringe_extrema(Spectrum(wavelengths, intensities), self.min_prominence)
        self.maxima_ = found.maxima
        self.sufficient_ = found.sufficient
        self.reason_ = found.reason
        if found.sufficient:
            self.pair_gaps_ = np.array([gap_from_fsr(a, b) for a, b in zip(found.maxima[:-1], found.maxima[1:])])
            self.gap_ = float(np.median(self.pair_gaps_))
        else:
            self.pair_gaps_ = np.empty(0)
            self.gap_ = math.nan
        return self

    def predict(self, wavelengths):
        """Noiseless reflectance for the fitted gap."""
        check_is_fitted(self, "gap_")
        if not self.sufficient_:
            raise ValueError(self.reason_)
        return cavity_reflectance(self.gap_, check_grid(wavelengths))


@dataclass(frozen=True)
class FringeCount:
    fringes: float
    full_oscillations: int
    displacement: float
    sufficient: bool
    reason: str = ""


def displacement_from_fringes(trace, wavelength, min_prominence=0.3) -> FringeCount:
    """Displacement from a monochromatic intensity trace recorded during a ramp.

    Whole half-fringes are counted between the first and last detected
    extremum; the partial fringes before the first and after the last extremum
    are read off the normalized intensity phase (arccos).  Every fringe is a
    displacement of ``wavelength / 2``.  Assumes monotone motion and a flat
    fringe envelope.
    """
    y = check_1d(trace, "trace", min_length=3)
    lo, hi = float(y.min()), float(y.max())
    if hi - lo <= 0:
        return FringeCount(0.0, 0, 0.0, False, "insufficient fringes: flat trace")
    prom = min_prominence * (hi - lo)
    imax, _ = find_peaks(y, prominence=prom)
    imin, _ = find_peaks(-y, prominence=prom)
    ext = sorted([(i, 1) for i in imax] + [(i, -1) for i in imin])
    if not ext:
        return FringeCount(0.0, 0, 0.0, False, "insufficient fringes: no extremum")
    c = np.clip(2.0 * (y - lo) / (hi - lo) - 1.0, -1.0, 1.0)

    def partial(value, kind):
        # phase distance from ``value`` to an adjacent maximum (kind=1) or minimum (kind=-1)
        return math.acos(kind * value) / (2 * math.pi)

    fringes = 0.5 * (len(ext) - 1) + partial(c[0], ext[0][1]) + partial(c[-1], ext[-1][1])
    full = int(math.floor(fringes + 1e-9))
    if full < 1:
        return FringeCount(fringes, 0, fringes * wavelength / 2, False,
                           "insufficient fringes: less than one full oscillation")
    return FringeCount(fringes, full, fringes * wavelength / 2.0, True)
