"""Sampled spectra shared by the interferometry and plasmonics code."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_grid, check_1d


@dataclass(frozen=True)
class Spectrum:
    """Wavelength/intensity samples (nm, arbitrary units)."""

    wavelengths: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        wl = check_grid(self.wavelengths)
        inten = check_1d(self.intensities, "intensities")
        if inten.shape != wl.shape:
            raise ValueError("wavelengths and intensities differ in length")
        if np.any(inten < 0):
            raise ValueError("intensities must be non-negative")
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "intensities", inten)

    def __len__(self):
        return self.wavelengths.size

    def peak_wavelength(self) -> float:
        return float(self.wavelengths[np.argmax(self.intensities)])

    def window(self, lo=-np.inf, hi=np.inf) -> "Spectrum":
        keep = (self.wavelengths >= lo) & (self.wavelengths <= hi)
        return Spectrum(self.wavelengths[keep], self.intensities[keep])
