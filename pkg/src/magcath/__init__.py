"""magcath — design and simulation toolkit for magnetically steered catheters.

Subpackages are import-light: heavy optional pieces (the websocket service,
the CLI) are only pulled in when asked for.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .magnetics import (
    MU_0,
    CatheterParams,
    DipoleSource,
    FieldTask,
    GridSpec,
    InfeasibleFieldError,
    WorkspaceReport,
    dipole_field,
    feasible_workspace,
    field_for_deflection,
    inverse_pose,
    max_deflection,
    tip_torque,
)
from .balloon import (
    BalloonSpec,
    SafeRange,
    StabilityReport,
    TwoBalloonReport,
    anchoring_pressure,
    axial_force,
    delta_p,
    safe_range,
    stability_screen,
    stretch_at_pressure,
    two_balloon_equilibria,
)
from .gripper import (
    ActuationCurve,
    GripperSpec,
    JawGeometry,
    NonConvergenceError,
    actuation_curve,
    frequency_separation,
    optimize_geometry,
    solve_end_load,
)
from .perception import (
    BoundingBox,
    DetectionMetrics,
    MarkerClass,
    NoiseSpec,
    angular_correction,
    evaluate_detector,
    match_statistics,
    synth_detect,
)
from .sim import (
    ControllerConfig,
    Mode,
    Phase,
    RunMetrics,
    Scenario,
    ScriptedOperator,
    Simulation,
    metrics_from_log,
    read_log_jsonl,
    run_scenario,
    write_log_jsonl,
)

__all__ = [
    "MU_0",
    "CatheterParams",
    "DipoleSource",
    "FieldTask",
    "GridSpec",
    "InfeasibleFieldError",
    "WorkspaceReport",
    "dipole_field",
    "feasible_workspace",
    "field_for_deflection",
    "inverse_pose",
    "max_deflection",
    "tip_torque",
    "BalloonSpec",
    "SafeRange",
    "StabilityReport",
    "TwoBalloonReport",
    "anchoring_pressure",
    "axial_force",
    "delta_p",
    "safe_range",
    "stability_screen",
    "stretch_at_pressure",
    "two_balloon_equilibria",
    "ActuationCurve",
    "GripperSpec",
    "JawGeometry",
    "NonConvergenceError",
    "actuation_curve",
    "frequency_separation",
    "optimize_geometry",
    "solve_end_load",
    "BoundingBox",
    "DetectionMetrics",
    "MarkerClass",
    "NoiseSpec",
    "angular_correction",
    "evaluate_detector",
    "match_statistics",
    "synth_detect",
    "ControllerConfig",
    "Mode",
    "Phase",
    "RunMetrics",
    "Scenario",
    "ScriptedOperator",
    "Simulation",
    "metrics_from_log",
    "read_log_jsonl",
    "run_scenario",
    "write_log_jsonl",
    "__version__",
]
