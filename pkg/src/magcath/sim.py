"""Closed-loop cannulation simulator.

Couples the dipole-field steering model, the deformation-versus-field
mapping, the marker-geometry perception stack, and an insertion state
machine into a deterministic 27 Hz loop.  The plant is quasi-static: the
instrument's tip angle relaxes toward the field-commanded deformation
through a first-order lag integrated with its exact discrete solution,
so halving the step size reproduces the same trajectory to rounding.

World model
    The steerable segment lives in the x-y plane with its base clamped
    at the origin pointing along +x.  The deployed segment of length
    ``insertion_length`` is rendered as a straight ray at the current
    tip angle — adequate for the pursuit geometry because the controller
    only consumes the signed angle between the instrument axis and the
    sight line to a pursuit point just past the duct entry.  Only the
    field component transverse to the base axis bends the axially
    magnetised segment, so the deformation map is signed and passes
    through zero continuously.  The external permanent magnet (EPM)
    moves in 3-D above the plane; its field at the tip is evaluated
    with the exact dipole model, never a small-angle surrogate.

Safety
    A field governor runs every tick: if the EPM's actual field at the
    tip exceeds the configured limit, the EPM is projected radially
    outward until the limit holds, and the event is logged.  The logged
    per-frame field magnitude therefore never exceeds ``b_max`` in any
    mode, by construction rather than by hope.

Depth is deliberately unobservable to the controller: steering uses
image-plane angles only, and deployment progress comes from the
advancing-unit odometry, mirroring the physical system's blindness.

All stochastic elements (detection jitter, dropout, sensor noise,
operator tremor) draw from one seeded generator owned by the session,
so runs replay bit-exactly and metrics recomputed from the event log
match the live values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .magnetics import (
    CatheterParams,
    DipoleSource,
    FieldTask,
    InfeasibleFieldError,
    dipole_field,
    inverse_pose,
    max_deflection,
    norm,
    unit,
    vec3,
)
from .balloon import BalloonSpec, SafeRange, anchoring_pressure, safe_range
from .perception import (
    BoundingBox,
    MarkerClass,
    NoiseSpec,
    angular_correction,
    centroid,
    select_best,
    synth_detect,
)

__all__ = [
    "TICK_RATE_HZ",
    "TICK_DT",
    "Phase",
    "Mode",
    "SafetyStopError",
    "ControllerConfig",
    "Scenario",
    "PlantState",
    "FbgReading",
    "FbgMonitor",
    "fbg_check",
    "DeformationModel",
    "CalibrationTable",
    "UserCommand",
    "EpmCommand",
    "FsmInputs",
    "insertion_fsm",
    "step_plant",
    "autonomous_step",
    "manual_step",
    "ScriptedOperator",
    "Simulation",
    "RunMetrics",
    "run_scenario",
    "metrics_from_log",
    "write_log_jsonl",
    "read_log_jsonl",
]


# --- constants ---------------------------------------------------------------

TICK_RATE_HZ = 27.0
"""Loop cadence [Hz]; matches the shape-sensing/video frame rate."""

TICK_DT = 1.0 / TICK_RATE_HZ
"""Nominal tick duration [s]."""

_EPM_PARK_FIELD = 1e-5
"""Minimum commanded field magnitude [T].  A zero-field request would
put the EPM at infinity, so small deformation targets are realised by
rotating the commanded field toward the instrument axis (which exerts
no bending moment) while the magnitude stays at this floor."""


class Phase(Enum):
    """Insertion state-machine phases."""

    ALIGN = "ALIGN"
    ADVANCE = "ADVANCE"
    PAUSE_REALIGN = "PAUSE_REALIGN"
    HOLD = "HOLD"
    DONE = "DONE"
    ABORT = "ABORT"


class Mode(Enum):
    """Who is steering."""

    AUTONOMOUS = "autonomous"
    MANUAL = "manual"
    HOLD = "hold"


class SafetyStopError(RuntimeError):
    """Raised when a plant step is attempted with an over-limit field."""


# --- configuration types -----------------------------------------------------


@dataclass(frozen=True)
class ControllerConfig:
    """Gains and limits of the steering loop.

    Attributes:
        mode: Initial steering mode.
        step_gain: Fraction of the measured angular error applied when
            re-aiming the deformation target each tick (0 < gain ≤ 1).
            The target is recomputed as an absolute re-aim from the
            measured instrument angle, never accumulated, so actuation
            lag cannot wind the command up.
        dls_damping: Damped least-squares length scale [m]; EPM position
            increments are attenuated by |δ|²/(|δ|² + λ²), suppressing
            chatter near the target pose while leaving large corrections
            essentially untouched.
        max_pose_step: (translation [m], rotation [rad]) clamp on the EPM
            pose increment per tick.
        align_threshold: |θ_err| below which the tip counts as aligned.
        advance_speed: Deployment speed in ADVANCE [m/s].
        lookahead: Distance [m] the pursuit point sits past the duct
            entry along the duct direction.  Aiming at a point beyond
            the entry keeps the sight-line geometry well conditioned as
            the tip closes in and hands the heading over to the duct
            axis smoothly.
        fbg_tolerance: Allowed |model − measured| tip-angle gap [rad].
        fbg_consecutive: Violations in a row required to raise the flag.
        lag_tau: First-order actuation lag time constant [s].
    """

    mode: Mode = Mode.AUTONOMOUS
    step_gain: float = 0.6
    dls_damping: float = 1e-3
    max_pose_step: tuple[float, float] = (0.02, 0.35)
    align_threshold: float = math.radians(2.0)
    advance_speed: float = 3e-3
    lookahead: float = 0.025
    fbg_tolerance: float = math.radians(2.0)
    fbg_consecutive: int = 3
    lag_tau: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 < self.step_gain <= 1.0:
            raise ValueError("step_gain must lie in (0, 1]")
        if self.dls_damping < 0.0:
            raise ValueError("dls_damping must be non-negative")
        if self.max_pose_step[0] <= 0.0 or self.max_pose_step[1] <= 0.0:
            raise ValueError("max_pose_step components must be positive")
        for name in (
            "align_threshold",
            "advance_speed",
            "lookahead",
            "fbg_tolerance",
            "lag_tau",
        ):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.fbg_consecutive < 1:
            raise ValueError("fbg_consecutive must be at least 1")


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs besides the controller gains.

    Attributes:
        papilla_position: Duct entry point in the instrument plane [m].
        entry_direction: Unit-ish direction of the duct at the entry.
        target_depth: Deployed length that counts as success [m].
        initial_insertion: Deployed length at t = 0 [m].
        catheter: Steerable-segment parameters for the field mapping.
        epm_moment: EPM dipole moment magnitude [A·m²].
        field_limits: Allowed field-magnitude window at the tip.
        balloon: Anchoring balloon, if the scenario carries one.
        duct_radius: Duct radius for balloon contact [m].
        friction_coefficient: Balloon-wall friction for the hold-force
            diagnostic.
        detector_noise: Synthetic-detection noise model.
        fbg_noise_sd: Shape-sensor angle noise [rad].
        fbg_bias: Systematic shape-sensor offset [rad] — models a
            miscalibrated or drifted sensor; a bias beyond the
            consistency tolerance forces the monitor's hold.
        pixels_per_meter: Orthographic image scale for the detector.
        seed: Session RNG seed.
        max_ticks: Timeout, in ticks.
        bump_schedule: (tick, Δangle [rad]) disturbances injected into
            the plant — used to script misalignment episodes.
    """

    papilla_position: tuple[float, float] = (0.10, 0.03)
    entry_direction: tuple[float, float] = (1.0, 0.0)
    target_depth: float = 0.075
    initial_insertion: float = 5e-3
    catheter: CatheterParams = field(
        default_factory=lambda: CatheterParams(
            length=0.08, radius=7.35e-4, youngs_modulus=1.2e6, remanence=0.1
        )
    )
    epm_moment: float = 906.0
    field_limits: FieldTask = field(
        default_factory=lambda: FieldTask(b_min=0.0, b_max=2.5e-3)
    )
    balloon: Optional[BalloonSpec] = None
    duct_radius: float = 1.5e-3
    friction_coefficient: float = 0.4
    detector_noise: NoiseSpec = field(default_factory=NoiseSpec)
    fbg_noise_sd: float = 0.0
    fbg_bias: float = 0.0
    pixels_per_meter: float = 4000.0
    seed: int = 0
    max_ticks: int = 27 * 300
    bump_schedule: tuple[tuple[int, float], ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.initial_insertion <= self.catheter.length:
            raise ValueError("initial insertion outside [0, catheter length]")
        if not self.initial_insertion < self.target_depth <= self.catheter.length:
            raise ValueError(
                "target depth must exceed the initial insertion and fit the "
                "instrument length"
            )
        if norm(vec3(*self.entry_direction, 0.0)) == 0.0:
            raise ValueError("entry direction must be non-zero")
        if self.max_ticks < 1:
            raise ValueError("max_ticks must be positive")
        if self.epm_moment <= 0.0:
            raise ValueError("epm_moment must be positive")

    # -- interchange ----------------------------------------------------------

    def to_json(self) -> dict:
        """Plain-JSON form (scenario files)."""
        out = {
            "papilla_position": list(self.papilla_position),
            "entry_direction": list(self.entry_direction),
            "target_depth": self.target_depth,
            "initial_insertion": self.initial_insertion,
            "catheter": {
                "length": self.catheter.length,
                "radius": self.catheter.radius,
                "youngs_modulus": self.catheter.youngs_modulus,
                "remanence": self.catheter.remanence,
            },
            "epm_moment": self.epm_moment,
            "field_limits": {
                "b_min": self.field_limits.b_min,
                "b_max": self.field_limits.b_max,
            },
            "duct_radius": self.duct_radius,
            "friction_coefficient": self.friction_coefficient,
            "detector_noise": {
                "jitter_px": self.detector_noise.jitter_px,
                "dropout": self.detector_noise.dropout,
                "confidence_mean": self.detector_noise.confidence_mean,
                "confidence_sd": self.detector_noise.confidence_sd,
                "box_half_size": self.detector_noise.box_half_size,
            },
            "fbg_noise_sd": self.fbg_noise_sd,
            "fbg_bias": self.fbg_bias,
            "pixels_per_meter": self.pixels_per_meter,
            "seed": self.seed,
            "max_ticks": self.max_ticks,
            "bump_schedule": [list(b) for b in self.bump_schedule],
        }
        if self.balloon is not None:
            out["balloon"] = {
                "inner_radius": self.balloon.inner_radius,
                "outer_radius": self.balloon.outer_radius,
                "height": self.balloon.height,
                "c1": self.balloon.c1,
                "c2": self.balloon.c2,
                "c3": self.balloon.c3,
                "burst_pressure_mean": self.balloon.burst_pressure_mean,
                "burst_pressure_sd": self.balloon.burst_pressure_sd,
            }
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "Scenario":
        """Inverse of :meth:`to_json`; unknown keys are rejected."""
        known = {
            "papilla_position", "entry_direction", "target_depth",
            "initial_insertion", "catheter", "epm_moment", "field_limits",
            "balloon", "duct_radius", "friction_coefficient",
            "detector_noise", "fbg_noise_sd", "fbg_bias",
            "pixels_per_meter", "seed", "max_ticks", "bump_schedule",
        }
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        kwargs: dict = {}
        for key in known & set(obj):
            value = obj[key]
            if key == "catheter":
                value = CatheterParams(**value)
            elif key == "field_limits":
                value = FieldTask(**value)
            elif key == "balloon" and value is not None:
                value = BalloonSpec(**value)
            elif key == "detector_noise":
                value = NoiseSpec(**value)
            elif key in ("papilla_position", "entry_direction"):
                value = tuple(float(v) for v in value)
            elif key == "bump_schedule":
                value = tuple((int(t), float(d)) for t, d in value)
            kwargs[key] = value
        return cls(**kwargs)


# --- plant state -------------------------------------------------------------


@dataclass(frozen=True)
class PlantState:
    """Snapshot of the physical world at one tick.

    Attributes:
        epm: Current EPM pose (position + dipole direction).
        insertion_length: Deployed instrument length [m].
        tip_angle: Current bending angle of the deployed segment [rad].
        commanded_angle: The controller's current deformation target
            [rad]; the plant relaxes toward the field-implied angle,
            which tracks this after the EPM settles.
        papilla_position: Entry point in the plane [m].
        entry_direction: Unit duct direction at the entry.
        balloon_pressure: Anchoring balloon internal pressure [Pa].
        balloon_inflated: Whether the anchor is considered set.
        t: Simulated time [s].
    """

    epm: DipoleSource
    insertion_length: float
    tip_angle: float
    commanded_angle: float
    papilla_position: tuple[float, float]
    entry_direction: tuple[float, float]
    balloon_pressure: float = 0.0
    balloon_inflated: bool = False
    t: float = 0.0

    def __post_init__(self) -> None:
        if self.insertion_length < 0.0:
            raise ValueError("insertion length cannot be negative")


def tip_position(state: PlantState) -> tuple[float, float]:
    """Tip point of the deployed segment in the plane [m]."""
    ell = state.insertion_length
    return (
        ell * math.cos(state.tip_angle),
        ell * math.sin(state.tip_angle),
    )


def marker_points(
    state: PlantState, spacing: float = 0.01
) -> tuple[tuple[float, float], tuple[float, float]]:
    """(marker1, marker2) positions; marker2 rides the tip, marker1 sits
    ``spacing`` metres behind it along the instrument axis."""
    tx, ty = tip_position(state)
    hx, hy = math.cos(state.tip_angle), math.sin(state.tip_angle)
    return ((tx - spacing * hx, ty - spacing * hy), (tx, ty))


# --- deformation mapping -----------------------------------------------------


class DeformationModel:
    """Invertible transverse-field ↔ tip-angle mapping.

    Only the field component normal to the instrument's base axis loads
    the axially magnetised segment, so the map takes the magnitude of
    that transverse component (the caller carries its sign).  The
    default model divides the tip-deflection closed form by the
    instrument length, giving the small-rotation tip angle; it is linear
    in the transverse field, hence trivially invertible.  Systems
    identified on hardware can substitute a :class:`CalibrationTable`
    with the same interface.
    """

    def __init__(self, catheter: CatheterParams):
        self._catheter = catheter
        self._slope = max_deflection(catheter, 1.0) / catheter.length

    def field_to_angle(self, b_magnitude: float) -> float:
        """Equilibrium tip angle [rad] for a transverse field component
        of the given magnitude [T] (sign handled by the caller)."""
        if b_magnitude < 0.0:
            raise ValueError("field magnitude cannot be negative")
        return self._slope * b_magnitude

    def angle_to_field(self, angle: float) -> float:
        """Transverse field magnitude [T] whose equilibrium angle is
        |angle|."""
        return abs(angle) / self._slope


class CalibrationTable:
    """Piecewise-linear deformation map identified from bench data.

    Args:
        field_points: Strictly increasing |B| samples [T], starting at 0.
        angle_points: Matching tip angles [rad], strictly increasing.
    """

    def __init__(self, field_points: Sequence[float], angle_points: Sequence[float]):
        b = np.asarray(field_points, dtype=float)
        a = np.asarray(angle_points, dtype=float)
        if b.shape != a.shape or b.ndim != 1 or b.size < 2:
            raise ValueError("calibration table needs matching 1-D samples")
        if b[0] != 0.0 or a[0] != 0.0:
            raise ValueError("calibration table must start at (0, 0)")
        if np.any(np.diff(b) <= 0.0) or np.any(np.diff(a) <= 0.0):
            raise ValueError("calibration samples must be strictly increasing")
        self._b = b
        self._a = a

    def field_to_angle(self, b_magnitude: float) -> float:
        if b_magnitude < 0.0:
            raise ValueError("field magnitude cannot be negative")
        return float(np.interp(b_magnitude, self._b, self._a))

    def angle_to_field(self, angle: float) -> float:
        return float(np.interp(abs(angle), self._a, self._b))


# --- FBG consistency ---------------------------------------------------------


@dataclass(frozen=True)
class FbgReading:
    """One shape-sensor sample.

    Attributes:
        measured_tip_angle: Reconstructed tip angle [rad].
        noise_sd: Standard deviation the sample was drawn with [rad]
            (carried for logging; not used in the check).
    """

    measured_tip_angle: float
    noise_sd: float = 0.0


def fbg_check(commanded_angle: float, reading: FbgReading, tolerance: float) -> bool:
    """Single-frame consistency verdict: True when the shape sensor
    agrees with the model-side angle within tolerance."""
    if tolerance <= 0.0:
        raise ValueError("tolerance must be positive")
    return abs(commanded_angle - reading.measured_tip_angle) <= tolerance


class FbgMonitor:
    """Counts consecutive consistency violations and latches a flag.

    The flag is raised on the K-th consecutive violating frame and stays
    up until :meth:`reset` (the loop maps it to a forced HOLD that the
    operator must clear).
    """

    def __init__(self, tolerance: float, consecutive: int = 3):
        if consecutive < 1:
            raise ValueError("consecutive must be at least 1")
        self.tolerance = tolerance
        self.consecutive = consecutive
        self._streak = 0
        self.flagged = False

    def update(self, commanded_angle: float, reading: FbgReading) -> bool:
        """Feed one frame; returns the (possibly newly raised) flag."""
        if fbg_check(commanded_angle, reading, self.tolerance):
            self._streak = 0
        else:
            self._streak += 1
            if self._streak >= self.consecutive:
                self.flagged = True
        return self.flagged

    def reset(self) -> None:
        self._streak = 0
        self.flagged = False


# --- commands ----------------------------------------------------------------


@dataclass(frozen=True)
class UserCommand:
    """One operator input sample (normalized axes + buttons).

    Attributes:
        pose_axes: EPM translation axes in [−1, 1]³, scaled by the
            per-tick pose-step clamp.
        advance_axis: Deployment axis in [−1, 1]; positive deploys.
        inflate_pressure: Target balloon pressure [Pa], or None.
        gripper_closure: Commanded jaw closure fraction in [0, 1], or
            None (logged; the gripper has no plant coupling here).
        hold: Latch the safety HOLD.
        resume: Clear HOLD and return to alignment.
        abort: End the run.
        set_mode: Switch steering mode, or None.
    """

    pose_axes: tuple[float, float, float] = (0.0, 0.0, 0.0)
    advance_axis: float = 0.0
    inflate_pressure: Optional[float] = None
    gripper_closure: Optional[float] = None
    hold: bool = False
    resume: bool = False
    abort: bool = False
    set_mode: Optional[Mode] = None

    def validate(self) -> Optional[str]:
        """Returns a rejection reason, or None when the command is ok."""
        if any(not -1.0 <= a <= 1.0 for a in self.pose_axes):
            return "pose axes must lie in [-1, 1]"
        if not -1.0 <= self.advance_axis <= 1.0:
            return "advance axis must lie in [-1, 1]"
        if self.inflate_pressure is not None and self.inflate_pressure < 0.0:
            return "inflate pressure cannot be negative"
        if self.gripper_closure is not None and not 0.0 <= self.gripper_closure <= 1.0:
            return "gripper closure must lie in [0, 1]"
        return None


@dataclass(frozen=True)
class EpmCommand:
    """Incremental EPM pose command for one tick.

    Attributes:
        delta_position: Translation increment [m] (already damped and
            clamped).
        new_direction: Dipole direction to rotate toward (unit), or None
            to keep the current one.
        hold: True when the controller intentionally froze the pose
            (missing detections, negligible error, infeasible request).
    """

    delta_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    new_direction: Optional[tuple[float, float, float]] = None
    hold: bool = False


# --- state machine -----------------------------------------------------------


@dataclass(frozen=True)
class FsmInputs:
    """Condensed per-tick facts the state machine transitions on."""

    aligned: Optional[bool]  # None when no measurement this tick
    at_target: bool
    interrupt: bool = False
    resume: bool = False
    abort: bool = False
    to_manual: bool = False
    fbg_flag: bool = False


def insertion_fsm(phase: Phase, inputs: FsmInputs) -> Phase:
    """One transition of the insertion state machine.

    Priority: abort > safety interrupts > completion > alignment logic.
    HOLD is sticky: only an explicit resume (back through alignment) or
    a mode decision leaves it.  Missing measurements keep the current
    phase — deployment gating elsewhere ensures a blind tick never
    advances the instrument.
    """
    if phase in (Phase.DONE, Phase.ABORT):
        return phase
    if inputs.abort:
        return Phase.ABORT
    if inputs.interrupt or inputs.fbg_flag:
        return Phase.HOLD
    if phase == Phase.HOLD:
        if inputs.resume:
            return Phase.ALIGN
        return Phase.HOLD
    if inputs.at_target:
        return Phase.DONE
    if inputs.aligned is None:
        return phase
    if phase == Phase.ALIGN:
        return Phase.ADVANCE if inputs.aligned else Phase.ALIGN
    if phase == Phase.ADVANCE:
        return Phase.ADVANCE if inputs.aligned else Phase.PAUSE_REALIGN
    if phase == Phase.PAUSE_REALIGN:
        return Phase.ADVANCE if inputs.aligned else Phase.PAUSE_REALIGN
    return phase


# --- plant integration -------------------------------------------------------


def _field_angle_equilibrium(
    state: PlantState,
    deformation: DeformationModel,
    limits: FieldTask,
) -> tuple[float, float]:
    """(equilibrium tip angle, |B| at tip) for the current EPM pose.

    Only the in-plane field component normal to the instrument's base
    axis exerts a bending moment on the axially magnetised segment; the
    axial component is load-free.  The equilibrium angle is therefore
    signed by that transverse component and passes through zero
    continuously — there is no dead band at small fields.
    """
    tx, ty = tip_position(state)
    b_vec = dipole_field(state.epm, vec3(tx, ty, 0.0))
    b_mag = norm(b_vec)
    if b_mag > limits.b_max * (1.0 + 1e-9):
        raise SafetyStopError(
            f"field at tip {b_mag:.3e} T exceeds limit {limits.b_max:.3e} T"
        )
    ex, ey = state.entry_direction
    transverse = -b_vec[0] * ey + b_vec[1] * ex  # B · (base axis rotated +90°)
    theta_eq = math.copysign(
        deformation.field_to_angle(abs(transverse)), transverse
    )
    return theta_eq, b_mag


def step_plant(
    state: PlantState,
    dt: float,
    deformation: DeformationModel,
    limits: FieldTask,
    lag_tau: float,
    advance_speed: float = 0.0,
    max_insertion: Optional[float] = None,
) -> PlantState:
    """Advance the physical state by one step of length ``dt``.

    The tip angle relaxes toward the field-implied equilibrium with the
    exact first-order-lag update θ⁺ = θ_eq + (θ − θ_eq)·exp(−dt/τ), so
    the integrator is step-size-exact.  Deployment advances at the
    commanded speed, clamped to the instrument length.

    Raises:
        SafetyStopError: the standing field at the tip exceeds the
            configured limit (the loop's governor prevents this; direct
            callers get the honest error).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    theta_eq, _ = _field_angle_equilibrium(state, deformation, limits)
    decay = math.exp(-dt / lag_tau)
    theta = theta_eq + (state.tip_angle - theta_eq) * decay
    ell = state.insertion_length + advance_speed * dt
    cap = state.epm  # no pose change inside the plant step
    limit = max_insertion if max_insertion is not None else math.inf
    ell = min(max(ell, 0.0), limit)
    return replace(
        state,
        epm=cap,
        tip_angle=theta,
        insertion_length=ell,
        t=state.t + dt,
    )


# --- controller --------------------------------------------------------------


def _observe(
    state: PlantState,
    noise: NoiseSpec,
    pixels_per_meter: float,
    rng: np.random.Generator,
) -> list[BoundingBox]:
    """Project the scene to pixels and run the synthetic detector."""
    m1, m2 = marker_points(state)
    s = pixels_per_meter
    scene = {
        MarkerClass.MARKER_1: (m1[0] * s, m1[1] * s),
        MarkerClass.MARKER_2: (m2[0] * s, m2[1] * s),
        MarkerClass.PAPILLA: (
            state.papilla_position[0] * s,
            state.papilla_position[1] * s,
        ),
    }
    return synth_detect(scene, noise, rng)


def theta_error_from_detections(
    detections: Sequence[BoundingBox],
    entry_direction: tuple[float, float] = (1.0, 0.0),
    lookahead_px: float = 0.0,
) -> Optional[float]:
    """Signed steering error [rad] from one detection frame.

    The error is measured to a pursuit point ``lookahead_px`` pixels
    past the detected duct-entry centroid along the duct direction.
    With zero lookahead this is the plain entry-pointing error; a
    positive lookahead keeps the sight line well conditioned when the
    tip is close to the entry and blends the heading into the duct
    axis.

    Returns None when any of the three object classes is missing — the
    caller treats a blind frame as a hold.
    """
    best = select_best(detections)
    m1 = best[MarkerClass.MARKER_1]
    m2 = best[MarkerClass.MARKER_2]
    pap = best[MarkerClass.PAPILLA]
    if m1 is None or m2 is None or pap is None:
        return None
    c1, c2, cp = centroid(m1), centroid(m2), centroid(pap)
    ex, ey = entry_direction
    aim = (cp[0] + lookahead_px * ex, cp[1] + lookahead_px * ey)
    if c1 == c2 or c2 == aim:
        return None
    return angular_correction(c1, c2, aim).theta


def _damped_clamped_delta(
    raw: np.ndarray, damping: float, max_step: float
) -> np.ndarray:
    """DLS-style attenuation |δ|²/(|δ|²+λ²) followed by a norm clamp."""
    d = norm(raw)
    if d == 0.0:
        return raw
    scale = d * d / (d * d + damping * damping)
    out = raw * scale
    d_out = norm(out)
    if d_out > max_step:
        out = out * (max_step / d_out)
    return out


def _epm_command_for_angle(
    state: PlantState,
    theta_des: float,
    deformation: DeformationModel,
    limits: FieldTask,
    epm_moment: float,
    config: ControllerConfig,
) -> EpmCommand:
    """Incremental EPM pose command that drives the tip toward
    ``theta_des``.

    The desired deformation maps to a transverse field component
    (clamped to the safety window), the field to a full EPM pose via
    the closed-form dipole inverse, and the pose to a damped, clamped
    increment.  When the required transverse component falls below the
    actuation floor, the commanded vector is padded with an axial
    component — which exerts no bending moment — so the magnitude stays
    realisable without flipping the bending side through zero.
    """
    b_t = min(deformation.angle_to_field(theta_des), limits.b_max)
    ex, ey = state.entry_direction
    axial = vec3(ex, ey, 0.0)
    normal = vec3(-ey, ex, 0.0)
    signed_t = math.copysign(b_t, theta_des) if theta_des != 0.0 else 0.0
    if b_t >= _EPM_PARK_FIELD:
        b_vec = normal * signed_t
    else:
        pad = math.sqrt(_EPM_PARK_FIELD * _EPM_PARK_FIELD - b_t * b_t)
        b_vec = normal * signed_t + axial * pad
    tx, ty = tip_position(state)
    try:
        target_pose = inverse_pose(
            b_vec, epm_moment, target=vec3(tx, ty, 0.0)
        )
    except InfeasibleFieldError:
        return EpmCommand(hold=True)
    raw = target_pose.position - state.epm.position
    delta = _damped_clamped_delta(
        raw, config.dls_damping, config.max_pose_step[0]
    )
    return EpmCommand(
        delta_position=tuple(float(v) for v in delta),
        new_direction=tuple(float(v) for v in target_pose.moment_direction),
    )


def _apply_epm_command(
    state: PlantState, command: EpmCommand, config: ControllerConfig
) -> PlantState:
    """Apply a pose increment, rotating the dipole by at most the
    per-tick rotation clamp."""
    if command.hold:
        return state
    pos = state.epm.position + vec3(*command.delta_position)
    direction = state.epm.moment_direction
    if command.new_direction is not None:
        target = unit(vec3(*command.new_direction))
        cos_a = float(np.clip(np.dot(direction, target), -1.0, 1.0))
        angle = math.atan2(norm(np.cross(direction, target)), cos_a)
        max_rot = config.max_pose_step[1]
        if angle <= max_rot or angle == 0.0:
            direction = target
        else:
            # slerp toward the target by the clamp angle
            axis = np.cross(direction, target)
            axis_n = norm(axis)
            if axis_n == 0.0:
                direction = target  # antiparallel flip; take it whole
            else:
                axis = axis / axis_n
                c, s = math.cos(max_rot), math.sin(max_rot)
                direction = (
                    direction * c
                    + np.cross(axis, direction) * s
                    + axis * float(np.dot(axis, direction)) * (1.0 - c)
                )
    epm = DipoleSource(
        position=pos,
        moment_direction=unit(direction),
        moment_magnitude=state.epm.moment_magnitude,
    )
    return replace(state, epm=epm)


def _measured_body_angle(
    detections: Sequence[BoundingBox],
) -> Optional[float]:
    """Instrument-axis angle [rad] from the two marker centroids, or
    None when either marker is missing or the centroids coincide."""
    best = select_best(detections)
    m1 = best[MarkerClass.MARKER_1]
    m2 = best[MarkerClass.MARKER_2]
    if m1 is None or m2 is None:
        return None
    c1, c2 = centroid(m1), centroid(m2)
    if c1 == c2:
        return None
    return math.atan2(c2[1] - c1[1], c2[0] - c1[0])


def autonomous_step(
    state: PlantState,
    config: ControllerConfig,
    detections: Sequence[BoundingBox],
    deformation: DeformationModel,
    limits: FieldTask,
    pixels_per_meter: float = 4000.0,
) -> tuple[EpmCommand, PlantState]:
    """One autonomous controller step from a detection frame.

    The deformation target is an absolute re-aim: the measured
    instrument angle plus ``step_gain`` times the angular error to the
    pursuit point.  Because the target is recomputed from measurement
    every tick rather than accumulated, actuation lag and EPM transit
    delay shrink the correction instead of winding it up, and the
    closed loop contracts for any delay while the loop gain stays below
    two.  The target maps through the inverse field/pose chain to an
    incremental EPM command.  Missing detections or an infeasible pose
    request emit a hold command and leave the pose untouched.

    Returns:
        (command, updated state) — the state update covers the EPM pose
        and the controller's commanded angle only; plant integration is
        separate.
    """
    lookahead_px = config.lookahead * pixels_per_meter
    theta_err = theta_error_from_detections(
        detections, state.entry_direction, lookahead_px
    )
    body = _measured_body_angle(detections)
    if theta_err is None or body is None:
        return EpmCommand(hold=True), state
    theta_des = body + config.step_gain * theta_err
    theta_cap = deformation.field_to_angle(limits.b_max)
    theta_des = max(-theta_cap, min(theta_cap, theta_des))
    command = _epm_command_for_angle(
        state, theta_des, deformation, limits, state.epm.moment_magnitude, config
    )
    new_state = _apply_epm_command(state, command, config)
    new_state = replace(new_state, commanded_angle=theta_des)
    return command, new_state


def manual_step(
    state: PlantState,
    user_cmd: UserCommand,
    config: ControllerConfig,
    limits: FieldTask,
    balloon: Optional[BalloonSpec] = None,
    balloon_safe: Optional[SafeRange] = None,
) -> tuple[PlantState, list[dict]]:
    """Apply one operator command under the same safety clamps as the
    autonomous path.

    Pose axes translate the EPM by at most the per-tick step; inflation
    is clamped to the balloon's safe pressure; structurally invalid
    commands are rejected without side effects.

    Returns:
        (updated state, event records) — events cover rejections and
        safety clamps so the log captures every intervention.
    """
    events: list[dict] = []
    reason = user_cmd.validate()
    if reason is not None:
        return state, [{"event": "command_rejected", "reason": reason}]
    delta = vec3(*user_cmd.pose_axes) * config.max_pose_step[0]
    delta = _damped_clamped_delta(delta, 0.0, config.max_pose_step[0])
    new_state = state
    if norm(delta) > 0.0:
        epm = DipoleSource(
            position=state.epm.position + delta,
            moment_direction=state.epm.moment_direction,
            moment_magnitude=state.epm.moment_magnitude,
        )
        new_state = replace(new_state, epm=epm)
    if user_cmd.inflate_pressure is not None and balloon is not None:
        target = user_cmd.inflate_pressure
        if balloon_safe is not None and target > balloon_safe.p_max_safe:
            events.append(
                {
                    "event": "inflate_clamped",
                    "requested": target,
                    "applied": balloon_safe.p_max_safe,
                }
            )
            target = balloon_safe.p_max_safe
        new_state = replace(
            new_state,
            balloon_pressure=target,
            balloon_inflated=target > 0.0,
        )
    return new_state, events


# --- scripted operator -------------------------------------------------------


class ScriptedOperator:
    """Proportional human-like steering policy for comparison runs.

    Models the documented handicaps of a human in the loop: a reaction
    delay (acts on stale error samples), overshoot (gain above the
    critically damped value), and hand tremor (zero-mean noise on the
    commanded deformation).  Parameters are plain constructor arguments
    so comparison studies can sweep them.
    """

    def __init__(
        self,
        reaction_delay_ticks: int = 8,
        gain: float = 0.5,
        overshoot: float = 1.4,
        tremor_sd: float = math.radians(0.6),
        advance_axis: float = 1.0,
    ):
        if reaction_delay_ticks < 0:
            raise ValueError("reaction delay cannot be negative")
        if not -1.0 <= advance_axis <= 1.0:
            raise ValueError("advance_axis must lie in [-1, 1]")
        self.reaction_delay_ticks = reaction_delay_ticks
        self.gain = gain
        self.overshoot = overshoot
        self.tremor_sd = tremor_sd
        self.advance_axis = advance_axis
        self._history: list[tuple[float, Optional[float]]] = []

    def desired_angle(
        self,
        state: PlantState,
        theta_err: Optional[float],
        rng: np.random.Generator,
    ) -> Optional[float]:
        """Deformation target for this tick, or None to hold.

        The operator re-aims from what they saw ``reaction_delay_ticks``
        ago: the instrument angle and the angular error on that stale
        frame, with overshoot and tremor on top.  Deployment gating
        stays with the safety interlock in every mode; the operator
        model only degrades steering quality, which is what the
        autonomous-versus-manual comparison isolates.
        """
        self._history.append((state.tip_angle, theta_err))
        idx = len(self._history) - 1 - self.reaction_delay_ticks
        stale_angle, stale_err = (
            self._history[idx] if idx >= 0 else (0.0, None)
        )
        tremor = float(rng.normal(0.0, 1.0)) * self.tremor_sd
        if stale_err is None:
            return None
        return (
            stale_angle
            + self.gain * self.overshoot * stale_err
            + tremor
        )


# --- metrics -----------------------------------------------------------------


@dataclass(frozen=True)
class RunMetrics:
    """Outcome summary of one run.

    Attributes:
        insertion_time: Simulated seconds from start to DONE (or to the
            end of the log when the run did not complete).
        epm_path_length: Total EPM translation [m].
        epm_turning_sum: Σ|heading change| of the EPM path [rad] — the
            erraticness measure.
        success: Target depth reached.
        override_events: Operator interrupts plus sensor-forced holds.
        phase_durations: Simulated seconds spent per phase name.
        realign_episodes: ADVANCE → PAUSE_REALIGN transitions.
        fbg_flags: Frames on which the consistency flag was newly raised.
        hold_force: Final anchoring hold-force diagnostic [N] (0 when no
            balloon is modeled).
    """

    insertion_time: float
    epm_path_length: float
    epm_turning_sum: float
    success: bool
    override_events: int
    phase_durations: Mapping[str, float]
    realign_episodes: int
    fbg_flags: int
    hold_force: float

    def __post_init__(self) -> None:
        if self.insertion_time < 0.0 or self.epm_path_length < 0.0:
            raise ValueError("metrics cannot be negative")
        if self.epm_turning_sum < 0.0 or self.override_events < 0:
            raise ValueError("metrics cannot be negative")


def metrics_from_log(log: Sequence[Mapping]) -> RunMetrics:
    """Recompute run metrics purely from an event log.

    The same function produces the live metrics at the end of a run, so
    replaying a persisted JSONL log reproduces them bit-exactly.

    Time accounting: frames that did not deploy contribute their nominal
    tick duration; contiguous runs of deploying frames are folded into
    segments whose duration is (deployed distance) / (speed) — a single
    division per segment.  In an uninterrupted noise-free run that is
    exactly (target − initial)/speed, so doubling the speed halves the
    ADVANCE-phase duration exactly, with no accumulated tick rounding.
    """
    frames = [r for r in log if r.get("type") == "state"]
    events = [r for r in log if r.get("type") == "event"]
    if not frames:
        raise ValueError("log contains no state frames")

    path_length = 0.0
    turning = 0.0
    prev_pos: Optional[np.ndarray] = None
    prev_heading: Optional[np.ndarray] = None
    durations: dict[str, float] = {p.value: 0.0 for p in Phase}
    success = False
    insertion_time = 0.0

    seg_start: Optional[float] = None  # insertion length entering the segment
    seg_speed = 0.0
    seg_end = 0.0

    def close_segment() -> float:
        nonlocal seg_start
        if seg_start is None:
            return 0.0
        duration = (seg_end - seg_start) / seg_speed
        seg_start = None
        return duration

    for frame in frames:
        pos = np.asarray(frame["epm_position"], dtype=float)
        if prev_pos is not None:
            step = pos - prev_pos
            d = norm(step)
            if d > 1e-15:
                path_length += d
                heading = step / d
                if prev_heading is not None:
                    cos_a = float(np.clip(np.dot(prev_heading, heading), -1.0, 1.0))
                    turning += math.atan2(
                        norm(np.cross(prev_heading, heading)), cos_a
                    )
                prev_heading = heading
        prev_pos = pos

        deployed = frame.get("advanced_by", 0.0) > 0.0
        if deployed:
            if seg_start is None or frame["advance_speed"] != seg_speed:
                dt_seg = close_segment()
                durations[Phase.ADVANCE.value] += dt_seg
                insertion_time += dt_seg
                seg_start = frame["insertion_before"]
                seg_speed = frame["advance_speed"]
            seg_end = frame["insertion_length"]
        else:
            dt_seg = close_segment()
            durations[Phase.ADVANCE.value] += dt_seg
            insertion_time += dt_seg
            durations[frame["phase"]] += frame["dt"]
            insertion_time += frame["dt"]

        if frame["phase"] == Phase.DONE.value:
            success = True
            break

    dt_seg = close_segment()
    durations[Phase.ADVANCE.value] += dt_seg
    insertion_time += dt_seg

    overrides = sum(
        1 for e in events if e.get("event") in ("operator_hold", "fbg_hold")
    )
    realigns = sum(
        1
        for e in events
        if e.get("event") == "phase_change"
        and e.get("from") == Phase.ADVANCE.value
        and e.get("to") == Phase.PAUSE_REALIGN.value
    )
    fbg_flags = sum(1 for e in events if e.get("event") == "fbg_hold")
    hold_force = 0.0
    for frame in reversed(frames):
        if "hold_force" in frame:
            hold_force = frame["hold_force"]
            break
    return RunMetrics(
        insertion_time=insertion_time,
        epm_path_length=path_length,
        epm_turning_sum=turning,
        success=success,
        override_events=overrides,
        phase_durations=durations,
        realign_episodes=realigns,
        fbg_flags=fbg_flags,
        hold_force=hold_force,
    )


# --- session loop ------------------------------------------------------------


class Simulation:
    """One owned closed-loop session.

    Construction places the EPM at a parked overhead pose and starts the
    state machine in the requested phase (scenario runs begin aligned to
    the task — ALIGN; interactive service sessions begin in HOLD).

    Every call to :meth:`tick` consumes the queued commands in arrival
    order, runs perception → control → safety governor → plant, appends
    exactly one state frame (plus any events) to the log, and returns
    the frame.
    """

    def __init__(
        self,
        scenario: Scenario,
        config: Optional[ControllerConfig] = None,
        mode: Mode = Mode.AUTONOMOUS,
        start_phase: Phase = Phase.ALIGN,
        operator: Optional[ScriptedOperator] = None,
    ):
        self.scenario = scenario
        self.config = config if config is not None else ControllerConfig(mode=mode)
        self.mode = mode
        self.phase = start_phase
        self.operator = operator
        self.rng = np.random.default_rng(scenario.seed)
        self.deformation = DeformationModel(scenario.catheter)
        self.monitor = FbgMonitor(
            self.config.fbg_tolerance, self.config.fbg_consecutive
        )
        self._balloon_safe: Optional[SafeRange] = None
        if scenario.balloon is not None:
            self._balloon_safe = safe_range(scenario.balloon, safety_factor=1.5)
        e_dir = unit(vec3(*scenario.entry_direction, 0.0))
        tip0 = (scenario.initial_insertion, 0.0)
        # park with the field along the instrument axis: full authority to
        # either bending side, zero standing deformation
        park = inverse_pose(
            e_dir * _EPM_PARK_FIELD,
            scenario.epm_moment,
            target=vec3(tip0[0], tip0[1], 0.0),
        )
        self.state = PlantState(
            epm=DipoleSource(
                position=park.position,
                moment_direction=park.moment_direction,
                moment_magnitude=scenario.epm_moment,
            ),
            insertion_length=scenario.initial_insertion,
            tip_angle=0.0,
            commanded_angle=0.0,
            papilla_position=scenario.papilla_position,
            entry_direction=(float(e_dir[0]), float(e_dir[1])),
        )
        self.tick_index = 0
        self.log: list[dict] = []
        self._pending: list[UserCommand] = []
        self._bumps = dict(scenario.bump_schedule)
        self._manual_axis = 0.0  # latched deployment axis (manual mode)

    # -- command ingestion ----------------------------------------------------

    def enqueue(self, command: UserCommand) -> int:
        """Queue a command; returns the tick it will apply at."""
        self._pending.append(command)
        return self.tick_index

    # -- safety governor ------------------------------------------------------

    def _govern_field(self) -> Optional[dict]:
        """Project the EPM outward until the field limit holds."""
        tx, ty = tip_position(self.state)
        tip = vec3(tx, ty, 0.0)
        b = norm(dipole_field(self.state.epm, tip))
        b_max = self.scenario.field_limits.b_max
        if b <= b_max:
            return None
        # |B| falls as 1/d³ at fixed orientation: scale the standoff
        radial = self.state.epm.position - tip
        factor = (b / b_max) ** (1.0 / 3.0) * (1.0 + 1e-12)
        epm = DipoleSource(
            position=tip + radial * factor,
            moment_direction=self.state.epm.moment_direction,
            moment_magnitude=self.state.epm.moment_magnitude,
        )
        self.state = replace(self.state, epm=epm)
        return {"event": "safety_clamp", "b_before": b, "b_limit": b_max}

    # -- one tick ---------------------------------------------------------------

    def tick(self) -> dict:
        """Advance the session by one 27 Hz tick; returns the state frame."""
        scenario = self.scenario
        config = self.config
        events: list[dict] = []
        dt = TICK_DT

        # 1. commands (ordered, before any physics this tick)
        interrupt = resume = abort = False
        for cmd in self._pending:
            if cmd.set_mode is not None:
                self.mode = cmd.set_mode
                events.append({"event": "mode_change", "to": cmd.set_mode.value})
            if cmd.hold:
                interrupt = True
                events.append({"event": "operator_hold"})
            if cmd.resume:
                resume = True
                self.monitor.reset()
            if cmd.abort:
                abort = True
            if self.mode == Mode.MANUAL and not cmd.hold:
                self.state, manual_events = manual_step(
                    self.state,
                    cmd,
                    config,
                    scenario.field_limits,
                    scenario.balloon,
                    self._balloon_safe,
                )
                events.extend(manual_events)
                if cmd.validate() is None:
                    self._manual_axis = cmd.advance_axis
        commands_seen = len(self._pending)
        self._pending.clear()

        # 2. perception
        detections = _observe(
            self.state, scenario.detector_noise, scenario.pixels_per_meter, self.rng
        )
        theta_err = theta_error_from_detections(
            detections,
            self.state.entry_direction,
            config.lookahead * scenario.pixels_per_meter,
        )

        # 3. steering
        if self.phase not in (Phase.DONE, Phase.ABORT, Phase.HOLD):
            if self.mode == Mode.AUTONOMOUS:
                _, self.state = autonomous_step(
                    self.state, config, detections, self.deformation,
                    scenario.field_limits, scenario.pixels_per_meter,
                )
            elif self.mode == Mode.MANUAL and self.operator is not None:
                theta_des = self.operator.desired_angle(
                    self.state, theta_err, self.rng
                )
                if theta_des is not None:
                    cap = self.deformation.field_to_angle(
                        scenario.field_limits.b_max
                    )
                    theta_des = max(-cap, min(cap, theta_des))
                    command = _epm_command_for_angle(
                        self.state, theta_des, self.deformation,
                        scenario.field_limits, scenario.epm_moment, config,
                    )
                    self.state = _apply_epm_command(self.state, command, config)
                    self.state = replace(self.state, commanded_angle=theta_des)

        # 4. safety governor (all modes, every tick)
        clamp_event = self._govern_field()
        if clamp_event is not None:
            events.append(clamp_event)

        # 5. shape-sensor consistency
        fbg_noise = (
            float(self.rng.normal(0.0, 1.0)) * scenario.fbg_noise_sd
            if scenario.fbg_noise_sd > 0.0
            else 0.0
        )
        reading = FbgReading(
            measured_tip_angle=(
                self.state.tip_angle + scenario.fbg_bias + fbg_noise
            ),
            noise_sd=scenario.fbg_noise_sd,
        )
        was_flagged = self.monitor.flagged
        flagged = self.monitor.update(self.state.tip_angle, reading)
        if flagged and not was_flagged:
            events.append({"event": "fbg_hold"})

        # 6. state machine
        aligned = (
            None if theta_err is None else abs(theta_err) < config.align_threshold
        )
        at_target = self.state.insertion_length >= scenario.target_depth
        inputs = FsmInputs(
            aligned=aligned,
            at_target=at_target,
            interrupt=interrupt,
            resume=resume,
            abort=abort,
            fbg_flag=flagged and not was_flagged,
        )
        new_phase = insertion_fsm(self.phase, inputs)
        if new_phase != self.phase:
            events.append(
                {
                    "event": "phase_change",
                    "from": self.phase.value,
                    "to": new_phase.value,
                }
            )
            self.phase = new_phase

        # 7. plant integration (fractional tick at the DONE crossing).
        # Deployment is interlocked on the state machine's green light in
        # every mode; the manual axis scales (or reverses) the speed but
        # cannot bypass the alignment gate.
        if self.mode == Mode.AUTONOMOUS:
            axis = 1.0
        elif self.operator is not None:
            axis = self.operator.advance_axis
        else:
            axis = self._manual_axis
        deploy_ok = self.phase == Phase.ADVANCE and aligned is True
        speed = 0.0
        if axis > 0.0 and deploy_ok:
            speed = config.advance_speed * axis
        elif axis < 0.0 and self.phase not in (Phase.DONE, Phase.ABORT, Phase.HOLD):
            speed = config.advance_speed * axis  # retraction
        insertion_before = self.state.insertion_length
        advanced_by = 0.0
        dt_effective = dt
        landed = False
        if speed > 0.0:
            remaining = scenario.target_depth - insertion_before
            full_step = speed * dt
            if full_step >= remaining:
                advanced_by = remaining
                dt_effective = remaining / speed
                landed = True
            else:
                advanced_by = full_step
        self.state = step_plant(
            self.state,
            dt_effective,
            self.deformation,
            scenario.field_limits,
            config.lag_tau,
            advance_speed=speed,
            max_insertion=scenario.target_depth if speed > 0.0 else None,
        )
        if landed:
            # land on the target exactly: the fractional step's rounding
            # must not leave the odometer one ulp shy of completion
            self.state = replace(
                self.state, insertion_length=scenario.target_depth
            )

        # 8. scripted disturbances
        bump = self._bumps.get(self.tick_index)
        if bump is not None:
            self.state = replace(
                self.state, tip_angle=self.state.tip_angle + bump
            )
            events.append({"event": "bump", "delta": bump})

        # 9. completion check after integration
        if (
            self.phase not in (Phase.DONE, Phase.ABORT)
            and self.state.insertion_length >= scenario.target_depth
        ):
            events.append(
                {
                    "event": "phase_change",
                    "from": self.phase.value,
                    "to": Phase.DONE.value,
                }
            )
            self.phase = Phase.DONE

        # 10. frame assembly
        tx, ty = tip_position(self.state)
        b_at_tip = norm(dipole_field(self.state.epm, vec3(tx, ty, 0.0)))
        frame = {
            "type": "state",
            "tick": self.tick_index,
            "t": self.state.t,
            "dt": dt,
            "phase": self.phase.value,
            "mode": self.mode.value,
            "theta_err": theta_err,
            "tip_angle": self.state.tip_angle,
            "commanded_angle": self.state.commanded_angle,
            "insertion_length": self.state.insertion_length,
            "insertion_before": insertion_before,
            "advanced_by": advanced_by,
            "advance_speed": speed,
            "target_depth": scenario.target_depth,
            "tip_position": [tx, ty],
            "papilla_position": list(self.state.papilla_position),
            "epm_position": [float(v) for v in self.state.epm.position],
            "epm_direction": [float(v) for v in self.state.epm.moment_direction],
            "b_at_tip": b_at_tip,
            "b_max": scenario.field_limits.b_max,
            "fbg_measured": reading.measured_tip_angle,
            "fbg_flag": self.monitor.flagged,
            "balloon_pressure": self.state.balloon_pressure,
            "commands_seen": commands_seen,
        }
        if scenario.balloon is not None:
            contact = anchoring_pressure(
                scenario.balloon,
                scenario.duct_radius,
                self.state.balloon_pressure,
                0.0,
            )
            area = (
                2.0 * math.pi * scenario.duct_radius * scenario.balloon.height
            )
            frame["hold_force"] = (
                scenario.friction_coefficient * contact * area
            )
        for event in events:
            self.log.append(
                {"type": "event", "tick": self.tick_index, **event}
            )
        self.log.append(frame)
        self.tick_index += 1
        return frame

    # -- whole-run driver -------------------------------------------------------

    def run(self) -> RunMetrics:
        """Tick until DONE/ABORT or the scenario timeout; returns metrics."""
        while (
            self.phase not in (Phase.DONE, Phase.ABORT)
            and self.tick_index < self.scenario.max_ticks
        ):
            self.tick()
        if self.phase not in (Phase.DONE, Phase.ABORT):
            self.log.append(
                {"type": "event", "tick": self.tick_index, "event": "timeout"}
            )
        return metrics_from_log(self.log)


def run_scenario(
    scenario: Scenario,
    mode: Mode = Mode.AUTONOMOUS,
    config: Optional[ControllerConfig] = None,
    operator: Optional[ScriptedOperator] = None,
) -> tuple[RunMetrics, list[dict]]:
    """Run one scenario to completion.

    Args:
        scenario: World description (see :class:`Scenario`).
        mode: AUTONOMOUS for the closed loop, MANUAL with an ``operator``
            for scripted human-model comparisons.
        config: Controller gains; defaults are the tuned set.
        operator: Scripted policy for MANUAL mode.

    Returns:
        (metrics, event log).  Deterministic for a fixed scenario seed.
    """
    if mode == Mode.MANUAL and operator is None:
        operator = ScriptedOperator()
    sim = Simulation(
        scenario, config=config, mode=mode, start_phase=Phase.ALIGN,
        operator=operator,
    )
    metrics = sim.run()
    return metrics, sim.log


# --- log persistence ---------------------------------------------------------


def write_log_jsonl(path: Union[str, Path], log: Sequence[Mapping]) -> None:
    """Persist an event log, one record per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in log:
            fh.write(json.dumps(record) + "\n")


def read_log_jsonl(path: Union[str, Path]) -> list[dict]:
    """Read an event log written by :func:`write_log_jsonl`."""
    out: list[dict] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
