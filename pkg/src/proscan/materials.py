"""Optical constants: tabulated gold permittivity and non-dispersive glass."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import RangeError

GLASS_INDEX = 1.52
AIR_INDEX = 1.0

#: visible window every table has to cover
REQUIRED_SPAN = (450.0, 750.0)


@dataclass(frozen=True)
class DielectricTable:
    """Tabulated complex permittivity, linearly interpolated in wavelength.

    Parameters
    ----------
    wavelengths : array-like
        Strictly increasing vacuum wavelengths in nm.
    permittivity : array-like of complex
        Relative permittivity at each wavelength, ``Im >= 0``.
    provenance_label : str
        Where the numbers came from.
    """

    wavelengths: np.ndarray
    permittivity: np.ndarray
    provenance_label: str = ""

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=float)
        eps = np.asarray(self.permittivity, dtype=complex)
        if wl.ndim != 1 or wl.shape != eps.shape:
            raise ValueError("wavelengths and permittivity must be 1-D and of equal length")
        if wl.size < 2:
            raise ValueError("a dielectric table needs at least 2 rows")
        if np.any(np.diff(wl) <= 0):
            raise ValueError("table wavelengths must be strictly increasing")
        if np.any(eps.imag < 0):
            raise ValueError("Im(permittivity) must be >= 0 for a passive medium")
        if wl[0] > REQUIRED_SPAN[0] or wl[-1] < REQUIRED_SPAN[1]:
            raise ValueError(
                f"table spans [{wl[0]}, {wl[-1]}] nm but must cover "
                f"[{REQUIRED_SPAN[0]}, {REQUIRED_SPAN[1]}] nm"
            )
        wl.flags.writeable = False
        eps.flags.writeable = False
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "permittivity", eps)

    @property
    def span(self):
        return float(self.wavelengths[0]), float(self.wavelengths[-1])

    def __call__(self, wavelength):
        """Interpolate Re and Im independently; scalar in, scalar out."""
        lam = np.asarray(wavelength, dtype=float)
        lo, hi = self.span
        if np.any(~np.isfinite(lam)) or np.any(lam < lo) or np.any(lam > hi):
            raise RangeError(f"wavelength outside tabulated span [{lo}, {hi}] nm")
        re = np.interp(lam, self.wavelengths, self.permittivity.real)
        im = np.interp(lam, self.wavelengths, self.permittivity.imag)
        out = re + 1j * im
        return complex(out) if out.ndim == 0 else out

    def lipschitz_bound(self):
        """Largest |d eps / d lambda| over the table segments (per nm)."""
        return float(np.max(np.abs(np.diff(self.permittivity)) / np.diff(self.wavelengths)))

    @classmethod
    def from_csv(cls, source, provenance_label=None):
        """Read a ``wavelength_nm,eps_re,eps_im`` CSV (header required).

        ``source`` is a path or an open text stream.
        """
        if isinstance(source, (str, Path)):
            text = Path(source).read_text(encoding="utf-8")
            label = provenance_label or str(source)
        else:
            text = source.read()
            label = provenance_label or "user table"
        reader = csv.reader(io.StringIO(text))
        header = [h.strip() for h in next(reader, [])]
        if header != ["wavelength_nm", "eps_re", "eps_im"]:
            raise ValueError(f"expected header wavelength_nm,eps_re,eps_im, got {','.join(header)}")
        wl, eps = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 3 columns, got {len(row)}")
            try:
                w, re, im = (float(v) for v in row)
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            wl.append(w)
            eps.append(complex(re, im))
        return cls(np.array(wl), np.array(eps), label)


@lru_cache(maxsize=1)
def default_gold_table() -> DielectricTable:
    """Bundled gold optical constants (Johnson & Christy 1972, n/k converted to eps)."""
    text = resources.files("proscan.data").joinpath("gold_johnson_christy.csv").read_text("utf-8")
    return DielectricTable.from_csv(io.StringIO(text), "Johnson & Christy 1972, Au")


def permittivity_gold(wavelength, table: DielectricTable | None = None):
    """Complex relative permittivity of gold at ``wavelength`` (nm)."""
    return (table or default_gold_table())(wavelength)


def index_glass(wavelength, override: float | None = None) -> float:
    """Refractive index of the cover glass; dispersion is neglected."""
    if np.any(np.asarray(wavelength, dtype=float) <= 0):
        raise ValueError("wavelength must be positive")
    return GLASS_INDEX if override is None else float(override)
