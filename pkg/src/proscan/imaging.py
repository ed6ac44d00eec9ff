"""Wide-field frames of point emitters, Gaussian localization and trajectory analysis."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.optimize import least_squares
from scipy.special import erf
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DegenerateInputError, ExtrapolationError, FitFailure, PlacementError
from .rng import as_generator


@dataclass(frozen=True)
class CameraModel:
    """Pixelated detector with a Gaussian PSF (all lengths in nm).

    The default PSF width is the usual Gaussian match to an Airy disk,
    ``0.21 * 650 nm / 1.4``.
    """

    pixel_size: float = 100.0
    read_noise: float = 0.0
    background_rate: float = 0.0
    psf_sigma: float = 0.21 * 650.0 / 1.4

    def __post_init__(self):
        if not self.pixel_size > 0 or not self.psf_sigma > 0:
            raise ValueError("pixel_size and psf_sigma must be > 0")
        if self.read_noise < 0 or self.background_rate < 0:
            raise ValueError("read_noise and background_rate must be >= 0")


@dataclass(frozen=True)
class Frame:
    pixels: np.ndarray
    origin: tuple = (0.0, 0.0)
    camera: CameraModel = field(default_factory=CameraModel)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError("pixels must be a 2-D grid")
        if np.any(px < 0) or not np.all(np.equal(np.mod(px, 1), 0)):
            raise ValueError("pixel counts must be non-negative integers")
        object.__setattr__(self, "pixels", px.astype(np.int64))

    @property
    def shape(self):
        return self.pixels.shape


def _pixel_fraction(edges, center, sigma):
    """Fraction of a 1-D Gaussian falling into each interval of ``edges``."""
    cdf = 0.5 * (1.0 + erf((edges - center) / (math.sqrt(2.0) * sigma)))
    return np.diff(cdf)


def _gaussian_image(shape, origin, pixel_size, x, y, sx, sy, photons):
    ny, nx = shape
    xe = origin[0] + pixel_size * np.arange(nx + 1)
    ye = origin[1] + pixel_size * np.arange(ny + 1)
    return photons * np.outer(_pixel_fraction(ye, y, sy), _pixel_fraction(xe, x, sx))


def expected_image(sources, camera: CameraModel, size, origin=(0.0, 0.0)):
    """Noise-free mean counts per pixel, background included."""
    shape = (size, size) if np.isscalar(size) else tuple(size)
    img = np.full(shape, float(camera.background_rate))
    for x, y, photons in sources:
        img += _gaussian_image(shape, origin, camera.pixel_size, x, y, camera.psf_sigma, camera.psf_sigma, photons)
    return img


def render_frame(sources, camera: CameraModel, size, seed=None, origin=(0.0, 0.0), noise=True) -> Frame:
    """Camera frame of point sources ``(x_nm, y_nm, photons)``.

    With ``noise`` the mean image is Poisson sampled and Gaussian read noise is
    added; otherwise the mean image is only rounded.  Counts are clipped at 0.
    """
    shape = (size, size) if np.isscalar(size) else tuple(size)
    margin = 3.0 * camera.psf_sigma
    width = shape[1] * camera.pixel_size
    height = shape[0] * camera.pixel_size
    for x, y, photons in sources:
        if not (origin[0] + margin <= x <= origin[0] + width - margin
                and origin[1] + margin <= y <= origin[1] + height - margin):
            raise PlacementError(f"source at ({x}, {y}) nm is within 3 PSF widths of the frame edge")
        if photons < 0:
            raise ValueError("photon counts must be >= 0")
    mean = expected_image(sources, camera, shape, origin)
    if noise:
        rng = as_generator(seed)
        img = rng.poisson(mean).astype(float)
        if camera.read_noise > 0:
            img += camera.read_noise * rng.standard_normal(shape)
    else:
        img = mean
    return Frame(np.clip(np.rint(img), 0, None).astype(np.int64), tuple(origin), camera)


def crlb_precision(photons, background_per_pixel, psf_sigma, pixel_size):
    """Best achievable per-axis localization precision (nm) for a maximum-likelihood fit.

    Pixelation widens the PSF to ``sa^2 = s^2 + a^2/12``; background enters
    through the integral correction of Mortensen et al. (Nat. Methods 2010).
    """
    if not photons > 0:
        raise ValueError("photons must be > 0")
    sa2 = psf_sigma**2 + pixel_size**2 / 12.0
    if background_per_pixel <= 0 or pixel_size <= 0:
        return math.sqrt(sa2 / photons)
    tau = 2.0 * math.pi * sa2 * background_per_pixel / (photons * pixel_size**2)
    corr, _ = integrate.quad(lambda t: math.log(t) / (1.0 + t / tau), 0.0, 1.0, limit=200)
    return math.sqrt(sa2 / photons / (1.0 + corr))


def photons_for_precision(target, background_per_pixel, psf_sigma, pixel_size):
    """Invert :func:`crlb_precision` for the photon count (bisection in log space)."""
    lo, hi = 1.0, 1e9
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if crlb_precision(mid, background_per_pixel, psf_sigma, pixel_size) > target:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-12:
            break
    return hi


#: camera preset whose CRLB is 2.4 nm: 10 background photons per 100 nm pixel,
#: photon count from :func:`photons_for_precision` (about 2.3e3)
PRECISION_CAMERA = CameraModel(pixel_size=100.0, read_noise=0.0, background_rate=10.0)
PRECISION_TARGET = 2.4


def precision_preset_photons():
    c = PRECISION_CAMERA
    return photons_for_precision(PRECISION_TARGET, c.background_rate, c.psf_sigma, c.pixel_size)


def _deviance(observed, expected):
    expected = np.clip(expected, 1e-12, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(observed > 0, observed * np.log(observed / expected), 0.0)
    dev = 2.0 * (expected - observed + term)
    return (np.sign(observed - expected) * np.sqrt(np.clip(dev, 0.0, None))).ravel()


@dataclass(frozen=True)
class Localization:
    x: float
    y: float
    sigma_x: float
    sigma_y: float
    photons: float
    background: float
    fit_residual: float
    flag: str = ""


class GaussianLocalizer(BaseEstimator):
    """Elliptical 2-D Gaussian (pixel-integrated) plus constant background.

    Parameters
    ----------
    pixel_size : float, default=100
    loss : {"poisson", "gaussian"}, default="poisson"
        ``"poisson"`` minimizes squared deviance residuals, i.e. the
        maximum-likelihood fit for shot-noise limited data; ``"gaussian"`` is
        plain unweighted least squares.
    max_nfev : int, default=200
    poor_fit_threshold : float, default=3.0
        Reduced Pearson chi-square above which the result is flagged
        (typically a second spot in the region).
    """

    def __init__(self, pixel_size=100.0, loss="poisson", max_nfev=200, poor_fit_threshold=3.0):
        self.pixel_size = pixel_size
        self.loss = loss
        self.max_nfev = max_nfev
        self.poor_fit_threshold = poor_fit_threshold

    def fit(self, X, y=None, origin=(0.0, 0.0)):
        """Fit the region ``X`` whose pixel (0, 0) starts at ``origin`` (nm)."""
        img = check_array(X, dtype=np.float64)
        if img.shape[0] < 3 or img.shape[1] < 3:
            raise ValueError("region must be at least 3x3 pixels")
        if img.max() == img.min():
            raise DegenerateInputError("flat or saturated region")
        p = float(self.pixel_size)
        ny, nx = img.shape
        border = np.concatenate([img[0], img[-1], img[1:-1, 0], img[1:-1, -1]])
        bg0 = float(np.median(border))
        iy, ix = np.unravel_index(int(np.argmax(img)), img.shape)
        x0 = origin[0] + (ix + 0.5) * p
        y0 = origin[1] + (iy + 0.5) * p
        w = np.clip(img - bg0, 0, None)
        total = float(w.sum()) or float(img.sum())
        xc = origin[0] + (np.arange(nx) + 0.5) * p
        yc = origin[1] + (np.arange(ny) + 0.5) * p
        sx0 = math.sqrt(max(float((w.sum(0) * (xc - x0) ** 2).sum()) / total, 0.25 * p * p))
        sy0 = math.sqrt(max(float((w.sum(1) * (yc - y0) ** 2).sum()) / total, 0.25 * p * p))
        sx0 = min(sx0, nx * p)
        sy0 = min(sy0, ny * p)

        def model(q):
            return _gaussian_image(img.shape, origin, p, q[0], q[1], q[2], q[3], q[4]) + q[5]

        if self.loss == "poisson":
            resid = lambda q: _deviance(img, model(q))
        elif self.loss == "gaussian":
            resid = lambda q: (model(q) - img).ravel()
        else:
            raise ValueError(f"unknown loss {self.loss!r}")
        q0 = np.array([x0, y0, sx0, sy0, max(total, 1.0), max(bg0, 1e-3)])
        lower = [origin[0], origin[1], 0.1 * p, 0.1 * p, 0.0, 0.0]
        upper = [origin[0] + nx * p, origin[1] + ny * p, nx * p, ny * p, np.inf, np.inf]
        q0 = np.clip(q0, np.add(lower, 1e-9), np.subtract(upper, 1e-9))
        res = least_squares(resid, q0, bounds=(lower, upper), method="trf", x_scale="jac",
                            max_nfev=self.max_nfev, xtol=1e-10, ftol=1e-10)
        if res.status <= 0:
            raise FitFailure("Gaussian localization did not converge", float(np.linalg.norm(res.fun)),
                             {"status": int(res.status), "nfev": int(res.nfev)})
        m = model(res.x)
        chi2 = float(np.sum((img - m) ** 2 / np.clip(m, 1.0, None))) / max(img.size - 6, 1)
        self.x_, self.y_, self.sigma_x_, self.sigma_y_, self.photons_, self.background_ = map(float, res.x)
        self.residual_ = float(np.linalg.norm(res.fun))
        self.reduced_chi2_ = chi2
        self.flag_ = "poor-fit" if chi2 > self.poor_fit_threshold else ""
        self.origin_ = tuple(origin)
        self.shape_ = img.shape
        self.n_iter_ = int(res.nfev)
        return self

    def predict(self, X=None):
        """Model image on the fitted region."""
        check_is_fitted(self, "x_")
        return _gaussian_image(self.shape_, self.origin_, self.pixel_size, self.x_, self.y_,
                               self.sigma_x_, self.sigma_y_, self.photons_) + self.background_

    def result(self) -> Localization:
        check_is_fitted(self, "x_")
        return Localization(self.x_, self.y_, self.sigma_x_, self.sigma_y_, self.photons_,
                            self.background_, self.residual_, self.flag_)


def _roi_slices(roi, shape):
    r0, r1, c0, c1 = (int(v) for v in roi)
    if not (0 <= r0 < r1 <= shape[0] and 0 <= c0 < c1 <= shape[1]):
        raise ValueError(f"roi {roi} outside frame of shape {shape}")
    return slice(r0, r1), slice(c0, c1)


def localize_2d(frame: Frame, roi=None, loss="poisson") -> Localization:
    """Localize the dominant spot in ``roi = (row0, row1, col0, col1)`` (whole frame if None)."""
    roi = roi or (0, frame.shape[0], 0, frame.shape[1])
    rs, cs = _roi_slices(roi, frame.shape)
    p = frame.camera.pixel_size
    origin = (frame.origin[0] + cs.start * p, frame.origin[1] + rs.start * p)
    est = GaussianLocalizer(pixel_size=p, loss=loss).fit(frame.pixels[rs, cs], origin=origin)
    return est.result()


def _fit_two_spots(img, origin, p, init_a, init_b, max_nfev=300):
    """Joint fit of two circular Gaussians with a common width plus background."""
    ny, nx = img.shape

    def model(q):
        return (_gaussian_image(img.shape, origin, p, q[0], q[1], q[6], q[6], q[2])
                + _gaussian_image(img.shape, origin, p, q[3], q[4], q[6], q[6], q[5]) + q[7])

    border = np.concatenate([img[0], img[-1], img[1:-1, 0], img[1:-1, -1]])
    bg0 = max(float(np.median(border)), 1e-3)
    signal = max(float((img - bg0).clip(0).sum()), 2.0)
    q0 = np.array([init_a[0], init_a[1], signal / 2, init_b[0], init_b[1], signal / 2, p, bg0])
    lower = [origin[0], origin[1], 0.0, origin[0], origin[1], 0.0, 0.1 * p, 0.0]
    upper = [origin[0] + nx * p, origin[1] + ny * p, np.inf, origin[0] + nx * p, origin[1] + ny * p, np.inf,
             nx * p, np.inf]
    q0 = np.clip(q0, np.add(lower, 1e-9), np.subtract(upper, 1e-9))
    res = least_squares(lambda q: _deviance(img, model(q)), q0, bounds=(lower, upper), method="trf",
                        x_scale="jac", max_nfev=max_nfev, xtol=1e-10, ftol=1e-10)
    if res.status <= 0:
        raise FitFailure("two-spot fit did not converge", float(np.linalg.norm(res.fun)))
    return res.x


@dataclass(frozen=True)
class SeparationSeries:
    distance: np.ndarray
    measured: np.ndarray
    coupled: np.ndarray
    positions_a: np.ndarray
    positions_b: np.ndarray


def _brightest(img, origin, p, roi):
    rs, cs = _roi_slices(roi, img.shape)
    sub = img[rs, cs]
    iy, ix = np.unravel_index(int(np.argmax(sub)), sub.shape)
    return origin[0] + (cs.start + ix + 0.5) * p, origin[1] + (rs.start + iy + 0.5) * p


def separation_series(frames, stationary_roi, moving_roi, voltages=None, min_sideband=4,
                      merge_factor=2.0) -> SeparationSeries:
    """Spot-to-spot distance per frame, bridged by linear extrapolation where the spots merge.

    Both spots are fitted jointly over the bounding box of the two regions
    (``moving_roi`` may also be a per-frame list of regions).  Frames whose
    fitted separation drops below ``merge_factor`` PSF widths, or whose fit
    fails, are flagged as coupled.  Across the flagged span the distance is
    replaced by the larger of the two one-sided linear fits (distance against
    voltage index) extrapolated inward.
    """
    frames = list(frames)
    n = len(frames)
    rois_b = moving_roi if (len(moving_roi) == n and np.ndim(moving_roi[0]) == 1) else [moving_roi] * n
    xs = np.arange(n, dtype=float) if voltages is None else np.asarray(voltages, dtype=float)
    measured = np.full(n, np.nan)
    pos_a = np.full((n, 2), np.nan)
    pos_b = np.full((n, 2), np.nan)
    coupled = np.zeros(n, dtype=bool)
    for i, fr in enumerate(frames):
        ra, rb = stationary_roi, rois_b[i]
        box = (min(ra[0], rb[0]), max(ra[1], rb[1]), min(ra[2], rb[2]), max(ra[3], rb[3]))
        rs, cs = _roi_slices(box, fr.shape)
        p = fr.camera.pixel_size
        origin = (fr.origin[0] + cs.start * p, fr.origin[1] + rs.start * p)
        img = fr.pixels.astype(float)
        init_a = _brightest(img, fr.origin, p, ra)
        init_b = _brightest(img, fr.origin, p, rb)
        if np.allclose(init_a, init_b):
            init_b = (init_b[0] + 0.5 * p, init_b[1])
        try:
            q = _fit_two_spots(img[rs, cs], origin, p, init_a, init_b)
        except FitFailure:
            coupled[i] = True
            continue
        pos_a[i] = q[0:2]
        pos_b[i] = q[3:5]
        measured[i] = float(np.hypot(*(q[0:2] - q[3:5])))
        coupled[i] = measured[i] < merge_factor * fr.camera.psf_sigma
    distance = measured.copy()
    if coupled.any():
        idx = np.nonzero(coupled)[0]
        first, last = int(idx[0]), int(idx[-1])
        before = np.arange(0, first)
        after = np.arange(last + 1, n)
        if before.size < min_sideband or after.size < min_sideband:
            raise ExtrapolationError(
                f"need {min_sideband} uncoupled frames on each side, got {before.size} and {after.size}")
        fb = np.polyfit(xs[before], measured[before], 1)
        fa = np.polyfit(xs[after], measured[after], 1)
        span = np.arange(first, last + 1)
        distance[span] = np.clip(np.maximum(np.polyval(fb, xs[span]), np.polyval(fa, xs[span])), 0.0, None)
        coupled[span] = True
    return SeparationSeries(distance, measured, coupled, pos_a, pos_b)


class TrajectoryAnalyzer(TransformerMixin, BaseEstimator):
    """Straight-line summary of a scan trajectory.

    Parameters
    ----------
    method : {"tls", "ols"}, default="tls"
        ``"tls"`` fits the line by orthogonal regression, which makes every
        statistic equivariant under rigid motions of the point set; ``"ols"``
        regresses y on x.

    Attributes
    ----------
    slope_, intercept_ : float
    tilt_deg_ : float
        ``atan(slope)`` in degrees.
    step_mean_, step_std_ : float
        Consecutive displacements projected on the line, oriented along the scan.
    jitter_ : float
        RMS perpendicular distance of the points from the line.
    direction_ : ndarray
        Unit vector of the line, pointing from the first towards the last point.
    """

    def __init__(self, method="tls"):
        self.method = method

    def fit(self, X, y=None):
        pts = check_array(X, dtype=np.float64)
        if pts.shape[1] != 2:
            raise ValueError("points must have two columns (x, y)")
        if pts.shape[0] < 3:
            raise ValueError("need at least 3 points")
        center = pts.mean(axis=0)
        if self.method == "tls":
            _, _, vt = np.linalg.svd(pts - center, full_matrices=False)
            u = vt[0]
        elif self.method == "ols":
            m = np.polyfit(pts[:, 0], pts[:, 1], 1)[0]
            u = np.array([1.0, m]) / math.hypot(1.0, m)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        if np.dot(pts[-1] - pts[0], u) < 0:
            u = -u
        normal = np.array([-u[1], u[0]])
        steps = np.diff(pts, axis=0) @ u
        perp = (pts - center) @ normal
        self.direction_ = u
        self.center_ = center
        self.slope_ = float(u[1] / u[0]) if u[0] != 0 else math.inf
        self.intercept_ = float(center[1] - self.slope_ * center[0]) if u[0] != 0 else math.nan
        self.tilt_deg_ = float(math.degrees(math.atan(self.slope_)))
        self.step_mean_ = float(steps.mean())
        self.step_std_ = float(steps.std(ddof=1)) if steps.size > 1 else 0.0
        self.jitter_ = float(math.sqrt(np.mean(perp**2)))
        self.steps_ = steps
        return self

    def transform(self, X):
        """Coordinates along and perpendicular to the fitted line."""
        check_is_fitted(self, "direction_")
        pts = check_array(X, dtype=np.float64) - self.center_
        u = self.direction_
        return np.column_stack([pts @ u, pts @ np.array([-u[1], u[0]])])

    def summary(self):
        check_is_fitted(self, "direction_")
        return {"slope": self.slope_, "tilt_deg": self.tilt_deg_, "step_mean": self.step_mean_,
                "step_std": self.step_std_, "jitter": self.jitter_}


def analyze_trajectory(points, method="tls"):
    """Return ``(slope, tilt_deg, step_mean, step_std, jitter)``."""
    est = TrajectoryAnalyzer(method).fit(points)
    return est.slope_, est.tilt_deg_, est.step_mean_, est.step_std_, est.jitter_
