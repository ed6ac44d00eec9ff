"""Piezo voltage to substrate motion.

Axial motion bends the flexible top substrate: far from contact the gap follows
a fixed fraction of the piezo travel, close to contact the lever reduction is
much stronger.  Lateral motion rolls the top plate over the spacer beads and
picks up axis crosstalk, on-axis step spread, perpendicular jitter and an
optional reversal deadband.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .rng import as_generator

AXES = {"x": 0, "y": 1}


@dataclass(frozen=True)
class PiezoAxisModel:
    """Lateral rolling model, shared by both scan axes.

    Parameters
    ----------
    gain : float
        Nominal substrate step per volt (nm/V).
    crosstalk_slope : float
        Orthogonal displacement per unit of on-axis displacement.
    jitter_sigma : float
        Perpendicular position noise (nm); redrawn every step, not accumulated.
    step_sigma : float
        Spread of the realized on-axis step (nm); accumulates along the scan.
    backlash_deadband : float
        Travel absorbed after a direction reversal (nm).
    gain_ramp : float
        Relative gain increase per volt of accumulated axis voltage; 0 disables.
    """

    gain: float = 7.3
    crosstalk_slope: float = -0.023
    jitter_sigma: float = 2.74
    step_sigma: float = 3.5
    backlash_deadband: float = 0.0
    gain_ramp: float = 0.0

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("gain must be > 0")
        if self.jitter_sigma < 0 or self.step_sigma < 0 or self.backlash_deadband < 0:
            raise ValueError("jitter_sigma, step_sigma and backlash_deadband must be >= 0")
        if not abs(self.crosstalk_slope) < 0.1:
            raise ValueError("|crosstalk_slope| must stay below 0.1 (small-tilt regime)")
        if self.gain_ramp < 0:
            raise ValueError("gain_ramp must be >= 0")


#: zig-zag preset: a 5 nm deadband reproduces the smaller steps after turning points
ZIGZAG_PRESET = PiezoAxisModel(backlash_deadband=5.0)


@dataclass(frozen=True)
class AxialTransferModel:
    """Piezo voltage to gap change.

    ``coarse_ratio`` is the substrate/piezo displacement ratio far from
    contact (1.9 um of gap change for 13 um of piezo travel); below
    ``fine_regime_threshold`` the gap changes by ``fine_gain`` nm/V.
    """

    unloaded_gain: float = 380.0
    fine_gain: float = 2.0
    coarse_ratio: float = 1.9 / 13.0
    fine_regime_threshold: float = 500.0

    def __post_init__(self):
        if not 0 < self.coarse_ratio < 1:
            raise ValueError("coarse_ratio must lie in (0, 1)")
        if not 0 < self.fine_gain < self.coarse_gain < self.unloaded_gain:
            raise ValueError("need 0 < fine_gain < coarse_ratio * unloaded_gain < unloaded_gain")
        if self.fine_regime_threshold < 0:
            raise ValueError("fine_regime_threshold must be >= 0")

    @property
    def coarse_gain(self):
        """Gap change per volt far from contact (nm/V)."""
        return self.coarse_ratio * self.unloaded_gain


@dataclass(frozen=True)
class ScanState:
    """Geometry of the two substrates.

    ``lateral`` is the realized position including the current perpendicular
    jitter; ``track`` is the jitter-free position the next step starts from.
    """

    gap: float
    lateral: tuple = (0.0, 0.0)
    track: tuple = (0.0, 0.0)
    last_direction: tuple = (0, 0)
    pending_backlash: tuple = (0.0, 0.0)
    voltage: tuple = (0.0, 0.0, 0.0)
    contact: bool = field(default=None)

    def __post_init__(self):
        if not np.isfinite(self.gap) or self.gap < 0:
            raise ValueError("gap must be finite and >= 0")
        contact = self.gap == 0
        if self.contact is None:
            object.__setattr__(self, "contact", contact)
        elif bool(self.contact) != contact:
            raise ValueError("contact must be set exactly when gap == 0")
        if any(b < 0 for b in self.pending_backlash):
            raise ValueError("pending_backlash must be >= 0")


def apply_axial_voltage(state: ScanState, delta_v: float, model: AxialTransferModel) -> ScanState:
    """Press (positive ``delta_v``) or release the top substrate.

    The transfer is piecewise linear in the gap: ``coarse_gain`` above the
    fine-regime threshold and ``fine_gain`` below it.  A step that crosses the
    threshold is split there.  The gap clamps at 0 (contact).
    """
    if delta_v == 0:
        return state
    gap = float(state.gap)
    remaining = float(delta_v)
    thr = model.fine_regime_threshold
    if remaining > 0:
        if gap > thr:
            needed = (gap - thr) / model.coarse_gain
            used = min(needed, remaining)
            gap -= used * model.coarse_gain
            remaining -= used
            if used == needed:
                gap = thr
        if remaining > 0:
            gap -= remaining * model.fine_gain
        gap = max(gap, 0.0)
    else:
        remaining = -remaining
        if gap < thr:
            needed = (thr - gap) / model.fine_gain
            used = min(needed, remaining)
            gap += used * model.fine_gain
            remaining -= used
            if used == needed:
                gap = thr
        if remaining > 0:
            gap += remaining * model.coarse_gain
    vx, vy, vz = state.voltage
    return replace(state, gap=gap, contact=gap == 0.0, voltage=(vx, vy, vz + delta_v))


def apply_lateral_voltage(state: ScanState, delta_v: float, axis: str, model: PiezoAxisModel,
                          rng=None) -> ScanState:
    """One lateral step along ``axis`` ('x' or 'y').

    The generator always consumes exactly two normal draws (step spread, then
    perpendicular jitter) for a non-zero step, so the stream position never
    depends on the branch taken.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    if delta_v == 0:
        return state
    i = AXES[axis]
    j = 1 - i
    rng = as_generator(rng)
    spread, jitter = rng.standard_normal(2)

    v_before = state.voltage[i]
    gain = model.gain * (1.0 + model.gain_ramp * abs(v_before + 0.5 * delta_v))
    nominal = gain * delta_v
    direction = 1 if delta_v > 0 else -1

    pending = list(state.pending_backlash)
    last = list(state.last_direction)
    if last[i] != 0 and last[i] != direction:
        pending[i] = model.backlash_deadband
    absorbed = min(abs(nominal), pending[i])
    pending[i] -= absorbed
    moved = abs(nominal) - absorbed
    if moved > 0:
        # spread is not truncated: an occasional short backward slip is allowed
        moved += model.step_sigma * spread
    realized = direction * moved
    last[i] = direction

    track = list(state.track)
    track[i] += realized
    track[j] += model.crosstalk_slope * realized
    lateral = list(track)
    lateral[j] += model.jitter_sigma * jitter

    voltage = list(state.voltage)
    voltage[i] += delta_v
    return replace(state, track=tuple(track), lateral=tuple(lateral), last_direction=tuple(last),
                   pending_backlash=tuple(pending), voltage=tuple(voltage))


def lateral_scan(state: ScanState, voltages, axis: str, model: PiezoAxisModel, rng=None):
    """Apply a sequence of voltage steps; return the final state and the positions.

    The returned ``(n + 1, 2)`` array starts with the initial realized position.
    """
    rng = as_generator(rng)
    points = [state.lateral]
    for dv in voltages:
        state = apply_lateral_voltage(state, float(dv), axis, model, rng)
        points.append(state.lateral)
    return state, np.asarray(points, dtype=float)


def bead_roll_translation(bead_center_shift: float) -> float:
    """Plate displacement for a given bead-center displacement (ideal rolling)."""
    if not np.isfinite(bead_center_shift):
        raise ValueError("bead_center_shift must be finite")
    return 2.0 * bead_center_shift
