"""Scenario configuration: a single JSON document, one section per model."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .emitter import Drift, HotSpot, QuantumEmitterModel
from .exceptions import ConfigError
from .imaging import CameraModel
from .mechanics import AxialTransferModel, PiezoAxisModel
from .plasmonics import NanoAntennaModel
from .rng import SEED_MAX


@dataclass(frozen=True)
class MaterialsSettings:
    gold_table: str | None = None
    glass_index: float | None = None


@dataclass(frozen=True)
class InitialState:
    gap: float = 0.0


@dataclass(frozen=True)
class InterferometrySettings:
    """White-light spectra every ``spectrum_every`` steps plus a monochromatic monitor."""

    grid_start: float = 450.0
    grid_stop: float = 750.0
    grid_step: float = 0.5
    noise_sigma: float = 0.0
    envelope: str = "flat"
    min_prominence: float = 0.3
    monitor_wavelength: float = 532.0
    spectrum_every: int = 10

    def __post_init__(self):
        if not self.grid_start < self.grid_stop or not self.grid_step > 0:
            raise ValueError("need grid_start < grid_stop and grid_step > 0")
        if self.spectrum_every < 1:
            raise ValueError("spectrum_every must be >= 1")
        if self.envelope not in ("flat", "lamp"):
            raise ValueError("envelope must be 'flat' or 'lamp'")


@dataclass(frozen=True)
class SpectroscopySettings:
    grid_start: float = 450.0
    grid_stop: float = 750.0
    grid_step: float = 1.0
    noise_sigma: float = 0.0
    fit_max_wavelength: float = 590.0
    smoothing_window: int = 3

    def __post_init__(self):
        if not self.grid_start < self.grid_stop or not self.grid_step > 0:
            raise ValueError("need grid_start < grid_stop and grid_step > 0")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ValueError("smoothing_window must be a positive odd integer")


@dataclass(frozen=True)
class TcspcSettings:
    n_photons: int = 100_000
    irf_sigma: float = 0.15
    bin_width: float = 0.05
    fit_window_uncoupled: tuple = (None, None)
    fit_window_coupled: tuple = (0.0, 10.0)

    def __post_init__(self):
        if self.n_photons < 1 or not self.bin_width > 0 or self.irf_sigma < 0:
            raise ValueError("need n_photons >= 1, bin_width > 0, irf_sigma >= 0")
        for name in ("fit_window_uncoupled", "fit_window_coupled"):
            w = getattr(self, name)
            if len(w) != 2:
                raise ValueError(f"{name} must have two entries")
            object.__setattr__(self, name, tuple(w))


@dataclass(frozen=True)
class LinescanSettings:
    """Lateral scan of the emitter over the antenna at fixed vertical ``gap`` (nm)."""

    start_offset: float = -600.0
    gap: float = 4.0
    qdot_photons: float = 3000.0
    gnp_photons: float = 500.0
    frame_rows: int = 9

    def __post_init__(self):
        if not self.gap > 0:
            raise ValueError("gap must be > 0")
        if self.qdot_photons < 0 or self.gnp_photons < 0 or self.frame_rows < 7:
            raise ValueError("photon counts must be >= 0 and frame_rows >= 7")


@dataclass(frozen=True)
class StabilitySettings:
    enhancement: float = 1.0
    base_rate: float = 5000.0
    duration_s: float = 100.0
    bin_ms: float = 1.0
    min_expected: float = 5.0

    def __post_init__(self):
        if not self.enhancement > 0 or not self.base_rate > 0:
            raise ValueError("enhancement and base_rate must be > 0")
        if not self.duration_s > 0 or not self.bin_ms > 0 or not self.min_expected > 0:
            raise ValueError("duration_s, bin_ms and min_expected must be > 0")
        if self.duration_s * 1e3 / self.bin_ms < 100:
            raise ValueError("need at least 100 bins (duration_s * 1000 / bin_ms)")


@dataclass(frozen=True)
class LocalizationSettings:
    """Photon count per frame; ``None`` inverts the CRLB for ``target_precision``."""

    photons: float | None = None
    target_precision: float = 2.4
    n_frames: int = 200
    roi_size: int = 15
    loss: str = "poisson"

    def __post_init__(self):
        if self.photons is not None and not self.photons > 0:
            raise ValueError("photons must be > 0")
        if self.n_frames < 1 or self.roi_size < 7:
            raise ValueError("need n_frames >= 1 and roi_size >= 7")
        if self.loss not in ("poisson", "gaussian"):
            raise ValueError("loss must be 'poisson' or 'gaussian'")


SECTIONS = {
    "mechanics": PiezoAxisModel,
    "axial": AxialTransferModel,
    "materials": MaterialsSettings,
    "initial_state": InitialState,
    "antenna": NanoAntennaModel,
    "emitter": QuantumEmitterModel,
    "hot_spot": HotSpot,
    "camera": CameraModel,
    "interferometry": InterferometrySettings,
    "spectroscopy": SpectroscopySettings,
    "tcspc": TcspcSettings,
    "linescan": LinescanSettings,
    "stability": StabilitySettings,
    "drift": Drift,
    "localization": LocalizationSettings,
}

#: required sections and allowed protocol axes per scenario kind
KINDS = {
    "lateral-scan": (("mechanics",), ("x", "y")),
    "coarse-approach": (("axial", "interferometry", "initial_state"), ("z",)),
    "fine-approach-plasmon": (("axial", "antenna", "spectroscopy", "initial_state"), ("z",)),
    "linescan-coarse": (("mechanics", "antenna", "emitter", "linescan", "tcspc", "camera"), ("x",)),
    "linescan-fine": (("mechanics", "antenna", "emitter", "linescan", "tcspc"), ("x",)),
    "stability": (("stability",), ()),
    "localization-precision": (("camera", "localization"), ()),
}

# three positions are the least any trajectory or fringe analysis can use
MIN_STEPS = 2

TOP_LEVEL = {"scenario_kind", "seed", "output_dir", "protocol", "description"} | set(SECTIONS)
# fields that are not plain numbers/strings in the JSON document
_HIDDEN_FIELDS = {"antenna": {"gold_table"}}


@dataclass(frozen=True)
class Command:
    axis: str
    voltage_step: float
    repeat: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_kind: str
    seed: int
    sections: dict
    protocol: tuple = ()
    output_dir: str | None = None
    raw: dict = dataclasses.field(default_factory=dict, compare=False, repr=False)

    def section(self, name, default=True):
        """Model object of section ``name``; the class default when absent and ``default``."""
        if name in self.sections:
            return self.sections[name]
        return SECTIONS[name]() if default else None

    def steps(self):
        """Protocol expanded into ``(axis, voltage_step)`` pairs."""
        return [(c.axis, c.voltage_step) for c in self.protocol for _ in range(c.repeat)]

    def canonical(self) -> dict:
        """JSON document without the output location (what the hash covers)."""
        doc = {k: v for k, v in self.raw.items() if k not in ("output_dir", "description")}
        doc["seed"] = self.seed
        return doc

    def hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _build_section(name, body):
    cls = SECTIONS[name]
    if not isinstance(body, dict):
        raise ConfigError(f"section {name!r} must be an object", field=name)
    allowed = {f.name for f in dataclasses.fields(cls)} - _HIDDEN_FIELDS.get(name, set())
    for key in body:
        if key not in allowed:
            raise ConfigError(f"unknown field {name}.{key}; allowed: {', '.join(sorted(allowed))}",
                              field=f"{name}.{key}")
    defaults = {f.name: f.default for f in dataclasses.fields(cls)}
    for key, value in body.items():
        where = f"{name}.{key}"
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"{where} must be finite", field=where)
        default = defaults[key]
        is_number = isinstance(value, (int, float)) and not isinstance(value, bool)
        if isinstance(default, (int, float)) and not isinstance(default, bool) and not is_number:
            raise ConfigError(f"{where} must be a number, got {value!r}", field=where)
        if isinstance(default, str) and not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}", field=where)
    try:
        return cls(**body)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {name!r}: {exc}", field=name) from None


def _build_protocol(items, axes):
    if not isinstance(items, list):
        raise ConfigError("protocol must be a list of commands", field="protocol")
    out = []
    for i, item in enumerate(items):
        where = f"protocol[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(f"{where} must be an object", field=where)
        extra = set(item) - {"axis", "voltage_step", "repeat"}
        if extra:
            raise ConfigError(f"{where}: unknown fields {sorted(extra)}", field=where)
        for key in ("axis", "voltage_step"):
            if key not in item:
                raise ConfigError(f"{where}: missing field {key!r}", field=f"{where}.{key}")
        axis = item["axis"]
        if axis not in axes:
            raise ConfigError(f"{where}: axis {axis!r} not allowed here (allowed: {list(axes)})",
                              field=f"{where}.axis")
        dv = item["voltage_step"]
        if isinstance(dv, bool) or not isinstance(dv, (int, float)) or not math.isfinite(dv):
            raise ConfigError(f"{where}: voltage_step must be a finite number", field=f"{where}.voltage_step")
        rep = item.get("repeat", 1)
        if isinstance(rep, bool) or not isinstance(rep, int) or not 1 <= rep <= 1_000_000:
            raise ConfigError(f"{where}: repeat must be an integer in [1, 1e6]", field=f"{where}.repeat")
        out.append(Command(axis, float(dv), rep))
    return tuple(out)


def validate_config(doc: dict, seed=None) -> ScenarioConfig:
    """Check a parsed JSON document and build the model objects.

    ``seed`` overrides the document's seed.  Raises :class:`ConfigError` naming
    the offending field.
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(doc) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level fields {sorted(unknown)}", field=sorted(unknown)[0])
    kind = doc.get("scenario_kind")
    if kind is None:
        raise ConfigError("missing field 'scenario_kind'", field="scenario_kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown scenario_kind {kind!r}; expected one of {sorted(KINDS)}",
                          field="scenario_kind")
    if seed is None:
        if "seed" not in doc:
            raise ConfigError("missing field 'seed'", field="seed")
        seed = doc["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= SEED_MAX:
        raise ConfigError("seed must be an integer in [0, 2**64)", field="seed")
    required, axes = KINDS[kind]
    for name in required:
        if name not in doc:
            raise ConfigError(f"scenario {kind!r} requires section {name!r}", field=name)
    sections = {name: _build_section(name, doc[name]) for name in SECTIONS if name in doc}
    protocol = _build_protocol(doc.get("protocol", []), axes)
    n_steps = sum(c.repeat for c in protocol)
    if axes and n_steps < MIN_STEPS:
        raise ConfigError(f"scenario {kind!r} needs a protocol of at least {MIN_STEPS} steps", field="protocol")
    out = doc.get("output_dir")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output_dir must be a string", field="output_dir")
    raw = json.loads(json.dumps(doc))
    raw["seed"] = seed
    return ScenarioConfig(kind, seed, sections, protocol, out, raw)


def load_config(path, seed=None) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", field="config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", field="config") from None
    return validate_config(doc, seed)
