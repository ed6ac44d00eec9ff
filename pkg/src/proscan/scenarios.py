"""Figure-level experiments: protocol execution, result bundles and re-analysis."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import platform
from dataclasses import dataclass
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, load_config, validate_config
from .emitter import (BiexponentialFitter, DecayHistogram, intensity_trace, linescan_enhancement,
                      poisson_goodness, simulate_decay_histogram)
from .exceptions import ConfigError, ProscanError
from .imaging import (GaussianLocalizer, TrajectoryAnalyzer, crlb_precision, localize_2d,
                      photons_for_precision, render_frame, separation_series)
from .interferometry import FSRGapEstimator, cavity_reflectance, displacement_from_fringes, white_light_spectrum
from .io import format_value, read_csv, read_frame, write_columns, write_csv, write_frame
from .materials import DielectricTable
from .mechanics import ScanState, apply_axial_voltage, apply_lateral_voltage
from .plasmonics import ResonanceFitter, moving_average, scattering_spectrum
from .rng import stream

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "PROSCAN_OUTPUT_ROOT"


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "proscan-output"))


@dataclass
class Bundle:
    """What a run leaves behind; ``files`` maps bundle-relative names to paths."""

    out_dir: Path
    summary: dict
    files: dict = dataclasses.field(default_factory=dict)
    plots: list = dataclasses.field(default_factory=list)
    manifest: dict = dataclasses.field(default_factory=dict)

    def add(self, path):
        path = Path(path)
        self.files[path.relative_to(self.out_dir).as_posix()] = path
        return path


def _step_context(i):
    """Decorate an error raised at protocol step ``i`` without changing its type."""

    def wrap(exc):
        exc.step = i
        if exc.args:
            exc.args = (f"step {i}: {exc.args[0]}",) + tuple(exc.args[1:])
        return exc

    return wrap


def _grid(settings):
    n = int(round((settings.grid_stop - settings.grid_start) / settings.grid_step))
    return settings.grid_start + settings.grid_step * np.arange(n + 1)


def _antenna(cfg: ScenarioConfig):
    antenna = cfg.section("antenna")
    mat = cfg.section("materials")
    if mat.gold_table:
        antenna = dataclasses.replace(antenna, gold_table=DielectricTable.from_csv(mat.gold_table))
    return antenna


# --- scenario runners ------------------------------------------------------------

def _lateral_scan(cfg, bundle, seed):
    model = cfg.section("mechanics")
    rng = stream(seed, "mechanics")
    state = ScanState(gap=0.0)
    steps = cfg.steps()
    points = [state.lateral]
    volts = [0.0]
    for i, (axis, dv) in enumerate(steps, start=1):
        try:
            state = apply_lateral_voltage(state, dv, axis, model, rng)
        except ProscanError as exc:
            raise _step_context(i)(exc)
        points.append(state.lateral)
        volts.append(state.voltage[0 if axis == "x" else 1])
    pts = np.asarray(points)
    bundle.add(write_columns(bundle.out_dir / "trajectory.csv",
                             {"step": np.arange(len(pts)), "voltage_v": volts, "x_nm": pts[:, 0],
                              "y_nm": pts[:, 1]}))
    summary = TrajectoryAnalyzer().fit(pts).summary()
    summary["n_steps"] = len(steps)
    if "camera" in cfg.sections:
        camera = cfg.section("camera")
        loc = cfg.section("localization")
        photons = loc.photons or photons_for_precision(loc.target_precision, camera.background_rate,
                                                       camera.psf_sigma, camera.pixel_size)
        p = camera.pixel_size
        half = loc.roi_size // 2
        rows = []
        for i, (x, y) in enumerate(pts):
            origin = (math.floor(x / p) * p - half * p, math.floor(y / p) * p - half * p)
            frame = render_frame([(x, y, photons)], camera, loc.roi_size, seed=stream(seed, f"camera/frame/{i}"),
                                 origin=origin)
            if i == 0:
                bundle.add(write_frame(bundle.out_dir / "frames" / "frame_0000", frame, seed))
            try:
                r = localize_2d(frame, loss=loc.loss)
            except ProscanError as exc:
                raise _step_context(i)(exc)
            rows.append((i, r.x, r.y, r.sigma_x, r.sigma_y, r.photons, r.flag))
        bundle.add(write_csv(bundle.out_dir / "localizations.csv",
                             ["frame", "x_nm", "y_nm", "sx", "sy", "photons", "flag"], rows))
        measured = np.array([[r[1], r[2]] for r in rows])
        for key, val in TrajectoryAnalyzer().fit(measured).summary().items():
            summary[f"localized_{key}"] = val
        summary["photons_per_frame"] = float(photons)
    return summary, {"trajectory": pts}


def _coarse_approach(cfg, bundle, seed):
    axial = cfg.section("axial")
    ifs = cfg.section("interferometry")
    glass = cfg.section("materials").glass_index
    grid = _grid(ifs)
    envelope = None if ifs.envelope == "flat" else ifs.envelope
    rng_spec = stream(seed, "interferometry/spectra")
    rng_mon = stream(seed, "interferometry/monitor")
    state = ScanState(gap=cfg.section("initial_state").gap)
    gap0 = state.gap

    def monitor(gap):
        r = float(cavity_reflectance(gap, np.array([ifs.monitor_wavelength]), glass_index=glass)[0])
        if ifs.noise_sigma:
            r *= 1.0 + ifs.noise_sigma * float(rng_mon.standard_normal())
        return r

    def spectrum_record(i, gap):
        spec = white_light_spectrum(gap, grid, ifs.noise_sigma, rng_spec, envelope=envelope, glass_index=glass)
        est = FSRGapEstimator(ifs.min_prominence).fit(spec.wavelengths, spec.intensities)
        spectra.append((i, spec))
        return (i, gap, est.gap_, int(est.sufficient_), est.reason_ or "ok")

    spectra = []
    trace = [(0, 0.0, gap0, monitor(gap0))]
    records = [spectrum_record(0, gap0)]
    for i, (axis, dv) in enumerate(cfg.steps(), start=1):
        try:
            state = apply_axial_voltage(state, dv, axial)
        except ProscanError as exc:
            raise _step_context(i)(exc)
        trace.append((i, state.voltage[2], state.gap, monitor(state.gap)))
        if i % ifs.spectrum_every == 0:
            records.append(spectrum_record(i, state.gap))
    bundle.add(write_csv(bundle.out_dir / "monitor_trace.csv", ["step", "voltage_v", "gap_nm", "intensity"], trace))
    bundle.add(write_csv(bundle.out_dir / "fsr_gaps.csv",
                         ["step", "gap_nm", "gap_estimate_nm", "sufficient", "status"], records))
    bundle.add(write_csv(bundle.out_dir / "spectra.csv", ["step", "wavelength_nm", "intensity"],
                         ((i, w, v) for i, s in spectra for w, v in zip(s.wavelengths, s.intensities))))
    bundle.add(write_columns(bundle.out_dir / "spectrum_initial.csv",
                             {"wavelength_nm": spectra[0][1].wavelengths, "intensity": spectra[0][1].intensities}))
    count = displacement_from_fringes([t[3] for t in trace], ifs.monitor_wavelength, ifs.min_prominence)
    ok = [r for r in records if r[3]]
    bad = [r for r in records if not r[3]]
    rel = [abs(r[2] - r[1]) / r[1] for r in ok]
    summary = {
        "initial_gap_nm": gap0,
        "final_gap_nm": state.gap,
        "true_displacement_nm": gap0 - state.gap,
        "fringes": count.fringes,
        "full_oscillations": count.full_oscillations,
        "fringe_displacement_nm": count.displacement,
        "initial_gap_estimate_nm": records[0][2],
        "initial_gap_relative_error": abs(records[0][2] - gap0) / gap0 if records[0][3] else math.nan,
        "max_relative_error_sufficient": max(rel) if rel else math.nan,
        "n_spectra": len(records),
        "n_insufficient": len(bad),
        "breakdown_gap_nm": max(r[1] for r in bad) if bad else math.nan,
    }
    return summary, {"trace": np.array([t[2:] for t in trace]), "records": records}


def _fine_approach(cfg, bundle, seed):
    axial = cfg.section("axial")
    spec_cfg = cfg.section("spectroscopy")
    antenna = _antenna(cfg)
    grid = _grid(spec_cfg)
    rng = stream(seed, "plasmonics/spectra")
    fitter = ResonanceFitter(antenna, spec_cfg.fit_max_wavelength)

    def fit(spec):
        return fitter.fit(spec.wavelengths, spec.intensities).resonance_wavelength_

    ref = fit(scattering_spectrum(math.inf, grid, antenna))
    state = ScanState(gap=cfg.section("initial_state").gap)
    gaps = [state.gap]
    volts = [0.0]
    for axis, dv in cfg.steps():
        state = apply_axial_voltage(state, dv, axial)
        gaps.append(state.gap)
        volts.append(state.voltage[2])
        if state.contact:
            break
    lam = np.empty(len(gaps))
    spectra = []
    for i, g in enumerate(gaps):
        spec = scattering_spectrum(g, grid, antenna, spec_cfg.noise_sigma, rng)
        spectra.append(spec)
        try:
            lam[i] = fit(spec)
        except ProscanError as exc:
            raise _step_context(i)(exc)
    shift = lam - ref
    smooth = moving_average(shift, spec_cfg.smoothing_window) if len(shift) >= spec_cfg.smoothing_window else shift
    gaps = np.asarray(gaps)
    bundle.add(write_columns(bundle.out_dir / "resonance.csv",
                             {"step": np.arange(len(gaps)), "voltage_v": volts, "gap_nm": gaps,
                              "resonance_nm": lam, "shift_nm": shift, "shift_smoothed_nm": smooth}))
    bundle.add(write_columns(bundle.out_dir / "shift_curve.csv", {"gap_nm": gaps, "shift_nm": smooth}))
    bundle.add(write_csv(bundle.out_dir / "spectra.csv", ["step", "wavelength_nm", "intensity"],
                         ((i, w, v) for i, s in enumerate(spectra) for w, v in zip(s.wavelengths, s.intensities))))
    bundle.add(write_columns(bundle.out_dir / "spectrum_contact.csv",
                             {"wavelength_nm": spectra[-1].wavelengths, "intensity": spectra[-1].intensities}))
    order = np.argsort(gaps)[::-1]
    mono = bool(np.all(np.diff(smooth[order]) > 0))
    # leading-order check: shift ~ (a + h)^-3 between the largest gap and half of it
    a = antenna.radius
    h1 = gaps.max()
    j1 = int(np.argmax(gaps))
    j2 = int(np.argmin(np.abs(gaps - h1 / 2)))
    h2 = gaps[j2]
    measured = shift[j2] / shift[j1] if shift[j1] != 0 else math.nan
    predicted = ((a + h1) / (a + h2)) ** 3
    summary = {
        "isolated_resonance_nm": ref,
        "contact_resonance_nm": float(lam[-1]),
        "total_shift_nm": float(smooth[np.argmin(gaps)]),
        "monotone_red_shift": mono,
        "n_spectra": len(gaps),
        "scaling_gaps_nm": [float(h1), float(h2)],
        "scaling_ratio_measured": float(measured),
        "scaling_ratio_predicted": float(predicted),
        "scaling_relative_error": float(abs(measured / predicted - 1)),
    }
    return summary, {"gap": gaps, "shift": smooth}


def _photon_fraction(amp_fast, tau_fast, tau_slow):
    w_f = amp_fast * tau_fast
    return w_f / (w_f + (1 - amp_fast) * tau_slow)


def _lifetimes(cfg, bundle, seed, emitter, peak_rates):
    tc = cfg.section("tcspc")
    amp = emitter.biexciton_amplitude_fraction
    out = {}
    cases = {"uncoupled": (1 / emitter.biexciton_lifetime, 1 / emitter.exciton_lifetime, tc.fit_window_uncoupled),
             "coupled": (peak_rates[0], peak_rates[1], tc.fit_window_coupled)}
    for name, (kf, ks, window) in cases.items():
        frac = _photon_fraction(amp, 1 / kf, 1 / ks)
        hist = simulate_decay_histogram(kf, ks, frac, tc.n_photons, tc.irf_sigma, tc.bin_width,
                                        stream(seed, f"tcspc/{name}"), emitter.period)
        bundle.add(write_columns(bundle.out_dir / f"decay_{name}.csv", {"t_ns": hist.centers, "counts": hist.counts}))
        side = bundle.out_dir / f"decay_{name}.json"
        side.write_text(json.dumps({"irf_sigma": tc.irf_sigma, "seed": seed, "bin_width": hist.bin_width,
                                    "period": emitter.period}, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        bundle.add(side)
        fit = BiexponentialFitter(fit_window=window).fit(hist.centers, hist.counts, hist.irf_sigma)
        out.update({f"{name}_tau_fast_true_ns": 1 / kf, f"{name}_tau_slow_true_ns": 1 / ks,
                    f"{name}_tau_fast_ns": fit.tau_fast_, f"{name}_tau_slow_ns": fit.tau_slow_,
                    f"{name}_irf_limited": fit.irf_limited_})
    return out


def _linescan(cfg, bundle, seed):
    model = cfg.section("mechanics")
    ls = cfg.section("linescan")
    emitter = cfg.section("emitter")
    antenna = _antenna(cfg)
    hot = cfg.section("hot_spot", default=False)
    rng = stream(seed, "mechanics")
    state = ScanState(gap=0.0, lateral=(ls.start_offset, 0.0), track=(ls.start_offset, 0.0))
    offsets = [ls.start_offset]
    nominal = [ls.start_offset]
    volts = [0.0]
    for i, (axis, dv) in enumerate(cfg.steps(), start=1):
        state = apply_lateral_voltage(state, dv, axis, model, rng)
        offsets.append(state.lateral[0])
        volts.append(state.voltage[0])
        nominal.append(ls.start_offset + model.gain * state.voltage[0])
    offsets = np.asarray(offsets)
    try:
        res = linescan_enhancement(offsets, ls.gap, emitter, antenna, hot)
    except ProscanError as exc:
        raise _step_context("linescan")(exc)
    cols = {"step": np.arange(offsets.size), "voltage_v": volts, "offset_nm": offsets}
    cols.update({k: res[k] for k in ("enhancement", "excitation", "quantum_yield", "total_rate_factor",
                                     "exciton_rate", "biexciton_rate")})
    bundle.add(write_columns(bundle.out_dir / "linescan.csv", cols))
    k = int(np.argmax(res["enhancement"]))
    summary = {
        "peak_enhancement": float(res["enhancement"][k]),
        "peak_offset_nm": float(offsets[k]),
        "peak_exciton_rate_per_ns": float(res["exciton_rate"][k]),
        "max_exciton_rate_per_ns": float(res["exciton_rate"].max()),
        "uncoupled_exciton_rate_per_ns": 1.0 / emitter.exciton_lifetime,
        "min_quantum_yield": float(res["quantum_yield"].min()),
        "n_steps": int(offsets.size - 1),
    }
    if hot is not None and offsets.size >= 9:
        # sharpest feature: largest departure from a 7-step running mean
        dev = res["enhancement"] - moving_average(res["enhancement"], 7)
        j = 3 + int(np.argmax(np.abs(dev[3:-3])))
        summary["sharp_feature_offset_nm"] = float(offsets[j])
        summary["sharp_feature_contrast"] = float(dev[j])
    summary.update(_lifetimes(cfg, bundle, seed, emitter,
                              (float(res["biexciton_rate"][k]), float(res["exciton_rate"][k]))))
    if "camera" in cfg.sections:
        summary.update(_two_spot_frames(cfg, bundle, seed, offsets, np.asarray(nominal), res["enhancement"]))
    return summary, {"offset": offsets, "enhancement": res["enhancement"]}


def _two_spot_frames(cfg, bundle, seed, offsets, nominal, enhancement):
    """Image the moving emitter and the dim antenna; bridge the merged region."""
    camera = cfg.section("camera")
    ls = cfg.section("linescan")
    p = camera.pixel_size
    reach = max(np.abs(offsets).max(), np.abs(nominal).max()) + 3 * camera.psf_sigma
    cols = int(2 * math.ceil(reach / p) + 3)
    rows = ls.frame_rows
    cx, cy = cols * p / 2, rows * p / 2
    gnp_roi = (0, rows, int(cx // p) - 3, int(cx // p) + 4)
    frames, rois = [], []
    for i, (off, nom, f) in enumerate(zip(offsets, nominal, enhancement)):
        sources = [(cx, cy, ls.gnp_photons), (cx + off, cy, ls.qdot_photons * f)]
        frame = render_frame(sources, camera, (rows, cols), seed=stream(seed, f"camera/frame/{i}"))
        frames.append(frame)
        c = int((cx + nom) // p)
        rois.append((0, rows, max(c - 3, 0), min(c + 4, cols)))
    bundle.add(write_frame(bundle.out_dir / "frames" / "frame_0000", frames[0], seed))
    try:
        sep = separation_series(frames, gnp_roi, rois)
    except ProscanError as exc:
        raise _step_context("separation")(exc)
    bundle.add(write_columns(bundle.out_dir / "separation.csv",
                             {"step": np.arange(len(frames)), "true_distance_nm": np.abs(offsets),
                              "measured_nm": sep.measured, "distance_nm": sep.distance,
                              "coupled": sep.coupled.astype(int)}))
    flagged = np.nonzero(sep.coupled)[0]
    out = {"n_coupled_frames": int(flagged.size)}
    if flagged.size:
        out["coupled_onset_distance_nm"] = float(np.abs(offsets[flagged[0]]))
        err = np.abs(sep.distance[flagged] - np.abs(offsets[flagged]))
        out["extrapolation_max_error_nm"] = float(err.max())
    return out


def _stability(cfg, bundle, seed):
    st = cfg.section("stability")
    drift = cfg.section("drift")
    trace = intensity_trace(st.enhancement, st.base_rate, st.duration_s, st.bin_ms, drift,
                            stream(seed, "stability/trace"))
    bundle.add(write_columns(bundle.out_dir / "trace.csv", {"bin_index": np.arange(trace.size), "counts": trace}))
    test = poisson_goodness(trace, st.min_expected)
    summary = {"mean": test.mean, "fano": test.fano, "chi2": test.chi2, "dof": test.dof, "pvalue": test.pvalue,
               "n_bins": int(trace.size), "drift": drift.kind}
    return summary, {"trace": trace}


def _localization_precision(cfg, bundle, seed):
    camera = cfg.section("camera")
    loc = cfg.section("localization")
    photons = loc.photons or photons_for_precision(loc.target_precision, camera.background_rate,
                                                   camera.psf_sigma, camera.pixel_size)
    p = camera.pixel_size
    # sub-pixel offset so the truth is not on a pixel symmetry point
    x0 = y0 = (loc.roi_size / 2 + 0.3) * p
    rows = []
    for i in range(loc.n_frames):
        frame = render_frame([(x0, y0, photons)], camera, loc.roi_size, seed=stream(seed, f"camera/frame/{i}"))
        if i == 0:
            bundle.add(write_frame(bundle.out_dir / "frames" / "frame_0000", frame, seed))
        try:
            r = localize_2d(frame, loss=loc.loss)
        except ProscanError as exc:
            raise _step_context(i)(exc)
        rows.append((i, r.x, r.y, r.sigma_x, r.sigma_y, r.photons, r.flag))
    bundle.add(write_csv(bundle.out_dir / "localizations.csv",
                         ["frame", "x_nm", "y_nm", "sx", "sy", "photons", "flag"], rows))
    xy = np.array([[r[1], r[2]] for r in rows])
    crlb = crlb_precision(photons, camera.background_rate, camera.psf_sigma, p)
    std = xy.std(axis=0, ddof=1) if len(rows) > 1 else np.zeros(2)
    precision = float(np.sqrt(np.mean(std**2)))
    summary = {"photons": float(photons), "background_per_pixel": camera.background_rate,
               "precision_x_nm": float(std[0]), "precision_y_nm": float(std[1]), "precision_nm": precision,
               "crlb_nm": crlb, "precision_to_crlb": precision / crlb,
               "bias_x_nm": float(xy[:, 0].mean() - x0), "bias_y_nm": float(xy[:, 1].mean() - y0),
               "n_frames": loc.n_frames}
    return summary, {"xy": xy, "truth": (x0, y0)}


RUNNERS = {
    "lateral-scan": _lateral_scan,
    "coarse-approach": _coarse_approach,
    "fine-approach-plasmon": _fine_approach,
    "linescan-coarse": _linescan,
    "linescan-fine": _linescan,
    "stability": _stability,
    "localization-precision": _localization_precision,
}


# --- bundle plumbing -------------------------------------------------------------

def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions():
    out = {"proscan": __version__, "python": platform.python_version()}
    for dist in ("numpy", "scipy", "scikit-learn"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "unknown"
    return out


def _json_default(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _clean(obj):
    """NaN/inf are not JSON; store them as strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(float(obj)):
        return format_value(float(obj))
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _write_json(path, doc):
    Path(path).write_text(json.dumps(_clean(doc), indent=2, sort_keys=True, default=_json_default) + "\n",
                          encoding="utf-8")
    return Path(path)


def resolve_output_dir(cfg: ScenarioConfig, out_dir=None) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return default_output_root() / f"{cfg.scenario_kind}-seed{cfg.seed}"


def run_scenario(config, out_dir=None, plots=True, seed=None) -> Bundle:
    """Run one scenario and write its result bundle.

    ``config`` is a :class:`ScenarioConfig`, a parsed JSON document or a path.
    The bundle holds the numeric CSVs, ``summary.json``, ``config.json``,
    ``manifest.json`` and (optionally) SVG plots.
    """
    if isinstance(config, ScenarioConfig):
        cfg = config if seed is None else validate_config(config.raw, seed)
    elif isinstance(config, dict):
        cfg = validate_config(config, seed)
    else:
        cfg = load_config(config, seed)
    out = resolve_output_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = Bundle(out, {})
    log.info("running %s (seed %d) into %s", cfg.scenario_kind, cfg.seed, out)
    summary, series = RUNNERS[cfg.scenario_kind](cfg, bundle, cfg.seed)
    summary = {"scenario_kind": cfg.scenario_kind, "seed": cfg.seed, **summary}
    bundle.summary = _clean(summary)
    bundle.add(_write_json(out / "summary.json", bundle.summary))
    bundle.add(_write_json(out / "config.json", cfg.canonical()))
    if plots:
        from .plots import plot_scenario

        bundle.plots = plot_scenario(cfg.scenario_kind, series, out)
    outputs = {name: _sha256(path) for name, path in sorted(bundle.files.items())}
    digest = hashlib.sha256("".join(f"{k}:{v}\n" for k, v in outputs.items()).encode()).hexdigest()
    bundle.manifest = {"scenario_kind": cfg.scenario_kind, "seed": cfg.seed, "config_hash": cfg.hash(),
                       "versions": _versions(), "outputs": outputs, "outputs_hash": digest,
                       "plots": sorted(p.name for p in bundle.plots)}
    _write_json(out / "manifest.json", bundle.manifest)
    return bundle


# --- presets -----------------------------------------------------------------------

def list_presets():
    root = resources.files("proscan.presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name) -> dict:
    names = list_presets()
    if name not in names:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(names)}", field="preset")
    return json.loads(resources.files("proscan.presets").joinpath(f"{name}.json").read_text(encoding="utf-8"))


def reproduce(name, out_dir=None, plots=True) -> Bundle:
    doc = load_preset(name)
    if out_dir is None and not doc.get("output_dir"):
        out_dir = default_output_root() / name
    return run_scenario(doc, out_dir, plots)


# --- re-analysis ---------------------------------------------------------------------

def _xy_columns(path, x, y, required=True):
    data = read_csv(path, required=[x, y] if required else None)
    return data[x], data[y]


def _analyze_localize(files, opts):
    rows = []
    for i, f in enumerate(files):
        r = localize_2d(read_frame(f), loss=opts.get("loss", "poisson"))
        rows.append((i, r.x, r.y, r.sigma_x, r.sigma_y, r.photons, r.flag))
    return ["frame", "x_nm", "y_nm", "sx", "sy", "photons", "flag"], rows


def _analyze_trajectory(files, opts):
    rows = []
    for f in files:
        x, y = _xy_columns(f, "x_nm", "y_nm")
        s = TrajectoryAnalyzer().fit(np.column_stack([x, y])).summary()
        rows.append((Path(f).name, s["slope"], s["tilt_deg"], s["step_mean"], s["step_std"], s["jitter"]))
    return ["file", "slope", "tilt_deg", "step_mean", "step_std", "jitter"], rows


def _analyze_fsr(files, opts):
    rows = []
    for f in files:
        wl, inten = _xy_columns(f, "wavelength_nm", "intensity")
        est = FSRGapEstimator(opts.get("min_prominence", 0.3)).fit(wl, inten)
        rows.append((Path(f).name, est.gap_, int(est.sufficient_), est.reason_ or "ok"))
    return ["file", "gap_nm", "sufficient", "status"], rows


def _analyze_fringes(files, opts):
    rows = []
    wavelength = opts.get("wavelength", 532.0)
    for f in files:
        data = read_csv(f, required=["intensity"])
        c = displacement_from_fringes(data["intensity"], wavelength, opts.get("min_prominence", 0.3))
        rows.append((Path(f).name, c.fringes, c.full_oscillations, c.displacement, int(c.sufficient),
                     c.reason or "ok"))
    return ["file", "fringes", "full_oscillations", "displacement_nm", "sufficient", "status"], rows


def _analyze_resonance(files, opts):
    rows = []
    fitter = ResonanceFitter(fit_max_wavelength=opts.get("fit_max_wavelength", 590.0))
    for f in files:
        wl, inten = _xy_columns(f, "wavelength_nm", "intensity")
        est = fitter.fit(wl, inten)
        rows.append((Path(f).name, est.resonance_wavelength_, est.coupling_, est.residual_norm_))
    return ["file", "resonance_nm", "coupling", "residual"], rows


def _analyze_lifetime(files, opts):
    rows = []
    for f in files:
        t, counts = _xy_columns(f, "t_ns", "counts")
        side = Path(f).with_suffix(".json")
        irf = opts.get("irf_sigma")
        if irf is None and side.exists():
            irf = json.loads(side.read_text(encoding="utf-8")).get("irf_sigma")
        fit = BiexponentialFitter(fit_window=opts.get("window", (None, None))).fit(t, counts, irf or 0.0)
        rows.append((Path(f).name, fit.tau_fast_, fit.tau_fast_err_, fit.tau_slow_, fit.tau_slow_err_,
                     fit.amplitude_fractions_[0], int(fit.single_exponential_), int(fit.irf_limited_)))
    return ["file", "tau_fast_ns", "tau_fast_err_ns", "tau_slow_ns", "tau_slow_err_ns", "fast_amplitude_fraction",
            "single_exponential", "irf_limited"], rows


def _analyze_poisson(files, opts):
    rows = []
    for f in files:
        data = read_csv(f, required=["counts"])
        t = poisson_goodness(data["counts"], opts.get("min_expected", 5.0))
        rows.append((Path(f).name, t.mean, t.fano, t.chi2, t.dof, t.pvalue))
    return ["file", "mean", "fano", "chi2", "dof", "pvalue"], rows


ANALYSES = {
    "localize": _analyze_localize,
    "trajectory": _analyze_trajectory,
    "fsr-gap": _analyze_fsr,
    "fringe-count": _analyze_fringes,
    "resonance-fit": _analyze_resonance,
    "lifetime-fit": _analyze_lifetime,
    "poisson-test": _analyze_poisson,
}


def analyze(kind, files, out_dir=None, **opts):
    """Re-run an analysis on saved or external files.

    Writes ``report.csv`` and ``report.txt`` into ``out_dir`` and returns
    ``(header, rows)``.
    """
    if kind not in ANALYSES:
        raise ConfigError(f"unknown analysis {kind!r}; expected one of {sorted(ANALYSES)}", field="kind")
    if not files:
        raise ConfigError("no input files given", field="files")
    for f in files:
        if not Path(f).exists():
            raise ConfigError(f"input file not found: {f}", field="files")
    header, rows = ANALYSES[kind](list(files), opts)
    out = Path(out_dir) if out_dir is not None else default_output_root() / f"analyze-{kind}"
    write_csv(out / "report.csv", header, rows)
    lines = [f"{kind}: {len(rows)} result(s)"]
    for row in rows:
        lines.append("  " + ", ".join(f"{h}={format_value(v)}" for h, v in zip(header, row)))
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return header, rows
