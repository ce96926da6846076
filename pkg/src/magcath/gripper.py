"""Smooth-curvature model of the compliant gripper flexures.

Each flexure blade is a slender cantilever whose curvature along the arc
is expanded in the first three shifted Legendre polynomials,

    phi'(s) = a0/L + (a1/L) (2 s/L - 1) + (a2/L) (6 s^2/L^2 - 6 s/L + 1),

so the coefficient vector alpha = (a0, a1, a2) serves as the generalized
coordinates.  Because the higher modes integrate to zero over the span, the
tip tangent angle is always a0, and the bending energy is diagonal:
U = (EI/2L) (a0^2 + a1^2/3 + a2^2/5).  Deformation under an end load
(f_x, f_y, M) comes from stationarity of

    Pi(alpha) = U - f_x (x_tip - L) - f_y y_tip - M a0,

solved by a damped Newton iteration with analytic gradient and Hessian.
Tip integrals use fixed-order Gauss-Legendre quadrature, which is exact to
machine precision at the orders used here.

The same module carries the jaw actuation curve (tendon force vs jaw gap),
the geometry optimizer that trades catheter-tip disturbance against grip
authority, and the pre-twisted-blade frequency nondimensionalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq, minimize

from .magnetics import MU_0, CatheterParams, max_deflection

# Default Gauss-Legendre order for tip integrals (exactness far beyond the
# cubic tangent-angle polynomial composed with trig).
GAUSS_ORDER: int = 24

# First root of the clamped-free frequency equation cos(b) cosh(b) = -1.
BETA_1: float = 1.8751040687119611


class NonConvergenceError(RuntimeError):
    """Newton iteration failed; carries diagnostics for the caller."""

    def __init__(self, message: str, iterations: int, grad_norm: float,
                 alpha: tuple[float, float, float]):
        super().__init__(message)
        self.iterations = iterations
        self.grad_norm = grad_norm
        self.alpha = alpha


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GripperSpec:
    """One flexure blade of the gripper.

    Attributes:
        beam_length: Blade span L [m].
        width: Cross-section width (the stiff in-plane dimension) [m].
        thickness: Cross-section thickness (the compliant dimension) [m].
        youngs_modulus: E [Pa].
        density: Material density [kg/m^3].
        twist_angle: Total pre-twist along the span [rad] (0 = straight).
    """

    beam_length: float
    width: float
    thickness: float
    youngs_modulus: float
    density: float
    twist_angle: float = 0.0

    def __post_init__(self) -> None:
        if min(self.beam_length, self.width, self.thickness,
               self.youngs_modulus, self.density) <= 0.0:
            raise ValueError("spec dimensions and material constants must be positive")

    @property
    def area(self) -> float:
        """Cross-section area [m^2]."""
        return self.width * self.thickness

    @property
    def second_moment_xx(self) -> float:
        """I about the width axis (bending through the thickness) [m^4]."""
        return self.width * self.thickness**3 / 12.0

    @property
    def second_moment_yy(self) -> float:
        """I about the thickness axis [m^4]."""
        return self.thickness * self.width**3 / 12.0

    @property
    def bending_stiffness(self) -> float:
        """EI of the compliant plane [N m^2]."""
        return self.youngs_modulus * self.second_moment_xx


@dataclass(frozen=True)
class CurvatureCoeffs:
    """Generalized coordinates of the blade shape."""

    alpha: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.alpha) != 3 or not all(math.isfinite(a) for a in self.alpha):
            raise ValueError("alpha must be three finite coefficients")

    def as_array(self) -> NDArray[np.float64]:
        return np.asarray(self.alpha, dtype=np.float64)


@dataclass(frozen=True)
class EndLoad:
    """Concentrated load at the blade tip."""

    f_x: float = 0.0
    f_y: float = 0.0
    moment: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.f_x, self.f_y, self.moment)):
            raise ValueError("load components must be finite")


@dataclass(frozen=True)
class JawGeometry:
    """Kinematics of the shuttle-driven jaw pair.

    Attributes:
        initial_gap: Jaw opening at rest [m].
        lever_ratio: Jaw-gap reduction per unit shuttle travel.
        shuttle_travel: Full shuttle stroke [m].
        n_blades: Flexure blades sharing the tendon load.
        moment_arm: Lever arm converting tendon force to a reaction torque
            on the carrying catheter [m].
    """

    initial_gap: float = 2.0e-3
    lever_ratio: float = 1.0
    shuttle_travel: float = 1.5e-3
    n_blades: int = 2
    moment_arm: float = 1.0e-3

    def __post_init__(self) -> None:
        if self.shuttle_travel <= 0.0 or self.initial_gap <= 0.0:
            raise ValueError("shuttle travel and initial gap must be positive")
        if self.lever_ratio <= 0.0 or self.moment_arm <= 0.0:
            raise ValueError("lever ratio and moment arm must be positive")
        if self.n_blades < 1:
            raise ValueError("need at least one blade")


@dataclass(frozen=True)
class ActuationCurve:
    """Tendon force and jaw gap over the shuttle stroke."""

    shuttle_displacement: NDArray[np.float64]
    tendon_force: NDArray[np.float64]
    jaw_gap: NDArray[np.float64]

    def rows(self) -> list[tuple[float, float, float]]:
        return [
            (float(s), float(f), float(g))
            for s, f, g in zip(self.shuttle_displacement, self.tendon_force, self.jaw_gap)
        ]


class FrequencySeparation(NamedTuple):
    """Blade first mode against the acoustic shell band."""

    blade_hz: float
    shell_hz: float
    gap_hz: float
    ratio: float


# ---------------------------------------------------------------------------
# shape kinematics
# ---------------------------------------------------------------------------


def curvature(s: float, coeffs: CurvatureCoeffs, beam_length: float) -> float:
    """Curvature phi'(s) of the blade at arclength s [1/m]."""
    if not 0.0 <= s <= beam_length:
        raise ValueError("arclength outside the blade span")
    a0, a1, a2 = coeffs.alpha
    t = s / beam_length
    return (a0 + a1 * (2.0 * t - 1.0) + a2 * (6.0 * t * t - 6.0 * t + 1.0)) / (
        beam_length
    )


def tangent_angle(s: float, coeffs: CurvatureCoeffs, beam_length: float) -> float:
    """Tangent angle phi(s), the exact integral of the curvature expansion."""
    if not 0.0 <= s <= beam_length:
        raise ValueError("arclength outside the blade span")
    a0, a1, a2 = coeffs.alpha
    t = s / beam_length
    return a0 * t + a1 * (t * t - t) + a2 * (2.0 * t**3 - 3.0 * t * t + t)


@lru_cache(maxsize=8)
def _gauss_01(order: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _phi_at(t: NDArray[np.float64], alpha: NDArray[np.float64]) -> NDArray[np.float64]:
    return (
        alpha[0] * t
        + alpha[1] * (t * t - t)
        + alpha[2] * (2.0 * t**3 - 3.0 * t * t + t)
    )


def _basis_at(t: NDArray[np.float64]) -> NDArray[np.float64]:
    # dphi/dalpha_i, shape (3, len(t))
    return np.stack([t, t * t - t, 2.0 * t**3 - 3.0 * t * t + t])


def tip_pose(
    coeffs: CurvatureCoeffs,
    beam_length: float,
    base_angle: float = 0.0,
    order: int = GAUSS_ORDER,
) -> tuple[float, float, float]:
    """Tip position and tangent of the deformed blade.

    Args:
        coeffs: Curvature coefficients.
        beam_length: Blade span [m].
        base_angle: Orientation of the clamped base in the world frame [rad].
        order: Gauss-Legendre order (>= 20 recommended).

    Returns:
        (x, y, phi_tip) in the world frame; phi_tip = base_angle + a0.
    """
    if order < 2:
        raise ValueError("quadrature order must be at least 2")
    t, w = _gauss_01(order)
    phi = base_angle + _phi_at(t, coeffs.as_array())
    x = beam_length * float(w @ np.cos(phi))
    y = beam_length * float(w @ np.sin(phi))
    return x, y, base_angle + coeffs.alpha[0]


# ---------------------------------------------------------------------------
# end-load equilibrium
# ---------------------------------------------------------------------------

_DIAG = np.array([1.0, 1.0 / 3.0, 1.0 / 5.0])


def potential_energy(
    spec: GripperSpec,
    coeffs: CurvatureCoeffs,
    load: EndLoad,
    order: int = GAUSS_ORDER,
) -> float:
    """Total potential Pi(alpha) of the loaded blade [J]."""
    alpha = coeffs.as_array()
    ei_l = spec.bending_stiffness / spec.beam_length
    u = 0.5 * ei_l * float(_DIAG @ (alpha * alpha))
    x, y, _ = tip_pose(coeffs, spec.beam_length, order=order)
    return (
        u
        - load.f_x * (x - spec.beam_length)
        - load.f_y * y
        - load.moment * alpha[0]
    )


def _grad_hess(
    spec: GripperSpec,
    alpha: NDArray[np.float64],
    load: EndLoad,
    order: int,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    t, w = _gauss_01(order)
    phi = _phi_at(t, alpha)
    basis = _basis_at(t)  # (3, n)
    sin_phi, cos_phi = np.sin(phi), np.cos(phi)
    length = spec.beam_length
    ei_l = spec.bending_stiffness / length

    # d(x,y)/dalpha
    dx = -length * (basis * sin_phi) @ w
    dy = length * (basis * cos_phi) @ w
    grad = ei_l * _DIAG * alpha - load.f_x * dx - load.f_y * dy
    grad[0] -= load.moment

    wb = basis * w  # weighted basis rows
    proj_cos = (wb * cos_phi) @ basis.T
    proj_sin = (wb * sin_phi) @ basis.T
    hess = np.diag(ei_l * _DIAG) + length * (
        load.f_x * proj_cos + load.f_y * proj_sin
    )
    return grad, hess


def solve_end_load(
    spec: GripperSpec,
    load: EndLoad,
    max_tip_angle: float = math.pi / 2.0,
    max_iter: int = 80,
    order: int = GAUSS_ORDER,
) -> CurvatureCoeffs:
    """Equilibrium curvature coefficients under an end load.

    Damped Newton on the energy gradient, starting from the straight
    configuration; converges when the gradient norm drops below 1e-10 of
    the problem's load/stiffness scale.  Iterates that stall at the
    floating-point floor of the energy landscape (the line search can no
    longer move the coefficients) are accepted when the residual gradient
    sits within a slightly looser guard band, since no further progress
    is representable in double precision.

    Args:
        spec: Blade description.
        load: Applied tip load.
        max_tip_angle: Elastic-regime cap on |phi_tip| [rad].
        max_iter: Iteration cap before declaring non-convergence.
        order: Quadrature order for tip integrals.

    Raises:
        NonConvergenceError: no stationary point found within the cap.
        ValueError: converged tip angle exceeds ``max_tip_angle``.
    """
    length = spec.beam_length
    scale = (
        spec.bending_stiffness / length
        + (abs(load.f_x) + abs(load.f_y)) * length
        + abs(load.moment)
    )
    tol = 1e-10 * scale
    stall_tol = 1e-8 * scale
    alpha = np.zeros(3)
    energy = potential_energy(spec, CurvatureCoeffs(tuple(alpha)), load, order)

    for iteration in range(max_iter):
        grad, hess = _grad_hess(spec, alpha, load, order)
        g_norm = float(np.linalg.norm(grad))
        if g_norm <= tol:
            break
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = -grad * length / (spec.bending_stiffness / length)
        # backtracking line search on the energy
        t_step = 1.0
        for _ in range(40):
            candidate = alpha + t_step * step
            e_new = potential_energy(spec, CurvatureCoeffs(tuple(candidate)), load, order)
            if e_new <= energy + 1e-4 * t_step * float(grad @ step):
                break
            t_step *= 0.5
        new_alpha = alpha + t_step * step
        if np.array_equal(new_alpha, alpha):
            # The update underflowed: the iterate cannot move in double
            # precision, so the residual gradient is pure rounding noise.
            if g_norm <= stall_tol:
                break
            raise NonConvergenceError(
                "line search stalled away from equilibrium",
                iterations=iteration + 1,
                grad_norm=g_norm,
                alpha=tuple(alpha),
            )
        alpha = new_alpha
        energy = potential_energy(spec, CurvatureCoeffs(tuple(alpha)), load, order)
    else:
        grad, _ = _grad_hess(spec, alpha, load, order)
        raise NonConvergenceError(
            "end-load equilibrium did not converge",
            iterations=max_iter,
            grad_norm=float(np.linalg.norm(grad)),
            alpha=tuple(alpha),
        )

    if abs(alpha[0]) > max_tip_angle:
        raise ValueError(
            f"tip angle {alpha[0]:.3f} rad exceeds the elastic-regime cap "
            f"{max_tip_angle:.3f} rad"
        )
    return CurvatureCoeffs(tuple(float(a) for a in alpha))


def energy_gradient(
    spec: GripperSpec,
    coeffs: CurvatureCoeffs,
    load: EndLoad,
    order: int = GAUSS_ORDER,
) -> NDArray[np.float64]:
    """Gradient of Pi at alpha (exposed for stationarity checks)."""
    grad, _ = _grad_hess(spec, coeffs.as_array(), load, order)
    return grad


# ---------------------------------------------------------------------------
# jaw actuation
# ---------------------------------------------------------------------------


def force_for_tip_deflection(
    spec: GripperSpec,
    target_y: float,
    max_tip_angle: float = math.pi / 2.0,
    order: int = GAUSS_ORDER,
) -> float:
    """Transverse tip force producing a given tip deflection [N]."""
    if target_y < 0.0:
        raise ValueError("deflection must be non-negative")
    if target_y == 0.0:
        return 0.0

    def deflection(f_y: float) -> float:
        coeffs = solve_end_load(
            spec, EndLoad(f_y=f_y), max_tip_angle=max_tip_angle, order=order
        )
        return tip_pose(coeffs, spec.beam_length, order=order)[1]

    # expand the bracket geometrically from the linear-theory estimate
    f_linear = 3.0 * spec.bending_stiffness * target_y / spec.beam_length**3
    hi = max(f_linear, 1e-12)
    for _ in range(60):
        if deflection(hi) >= target_y:
            break
        hi *= 2.0
    else:
        raise ValueError("deflection unreachable within the elastic cap")
    return float(brentq(lambda f: deflection(f) - target_y, 0.0, hi, xtol=1e-14))


def actuation_curve(
    spec: GripperSpec,
    jaw: JawGeometry,
    n_steps: int = 12,
    order: int = GAUSS_ORDER,
) -> ActuationCurve:
    """Tendon force and jaw gap across the shuttle stroke.

    Each shuttle position displaces every blade tip transversally by the
    same amount; the tendon carries the blade reactions in parallel.
    """
    if n_steps < 2:
        raise ValueError("need at least two steps")
    displacements = np.linspace(0.0, jaw.shuttle_travel, n_steps)
    forces = np.empty_like(displacements)
    gaps = np.empty_like(displacements)
    for i, delta in enumerate(displacements):
        blade_force = force_for_tip_deflection(spec, float(delta), order=order)
        forces[i] = jaw.n_blades * blade_force
        gaps[i] = max(0.0, jaw.initial_gap - jaw.lever_ratio * float(delta))
    return ActuationCurve(
        shuttle_displacement=displacements, tendon_force=forces, jaw_gap=gaps
    )


def bench_deviation(
    curve: ActuationCurve,
    bench_force: NDArray[np.float64],
    bench_gap: NDArray[np.float64],
) -> float:
    """Mean relative force deviation of the model against bench data.

    Bench rows are matched by jaw gap (linear interpolation on the model
    curve); returns a fraction (0.07 = 7%).
    """
    gaps = np.asarray(bench_gap, dtype=float)
    forces = np.asarray(bench_force, dtype=float)
    if gaps.shape != forces.shape or gaps.size == 0:
        raise ValueError("bench columns must be nonempty and equal length")
    order_idx = np.argsort(curve.jaw_gap)
    model = np.interp(gaps, curve.jaw_gap[order_idx], curve.tendon_force[order_idx])
    denom = np.maximum(np.abs(forces), 1e-12)
    return float(np.mean(np.abs(model - forces) / denom))


# ---------------------------------------------------------------------------
# geometry optimization
# ---------------------------------------------------------------------------


def reaction_tip_deviation(catheter: CatheterParams, reaction_torque: float) -> float:
    """Catheter tip deviation caused by a reaction torque at its tip [m].

    The torque is mapped to the equivalent field magnitude that would
    produce the same peak bending moment, then through the deflection
    closed form — keeping the coupling consistent with the field model.
    """
    if reaction_torque < 0.0:
        raise ValueError("reaction torque must be non-negative")
    b_equiv = (
        reaction_torque
        * MU_0
        / (catheter.remanence * catheter.radius**2 * catheter.length)
    )
    return max_deflection(catheter, b_equiv)


def make_default_objective(
    catheter: CatheterParams,
    jaw: JawGeometry,
    hold_force: float = 0.05,
    penalty_scale: float = 1.0,
) -> Callable[[GripperSpec], float]:
    """Objective: catheter disturbance plus a soft grip-authority penalty.

    A compliant blade disturbs the catheter less (smaller closure force,
    smaller reaction torque) but below ``hold_force`` it cannot grip; the
    penalty grows quadratically below that threshold.  Deviation is in
    metres; the penalty scale converts squared-newton shortfall to metres.
    """

    def objective(spec: GripperSpec) -> float:
        closure = actuation_curve(spec, jaw, n_steps=2).tendon_force[-1]
        deviation = reaction_tip_deviation(catheter, closure * jaw.moment_arm)
        shortfall = max(0.0, hold_force - closure)
        return deviation + penalty_scale * shortfall**2

    return objective


def optimize_geometry(
    base_spec: GripperSpec,
    bounds: dict[str, tuple[float, float]],
    objective: Callable[[GripperSpec], float] | None = None,
    catheter: CatheterParams | None = None,
    jaw: JawGeometry | None = None,
) -> GripperSpec:
    """Minimize an objective over box-bounded spec fields.

    Deterministic Nelder-Mead with a fixed initial simplex (midpoint plus
    5%-of-span perturbations); no randomness, so repeated calls return the
    identical optimum.

    Args:
        base_spec: Spec providing the non-optimized fields.
        bounds: Map of GripperSpec field name to (lo, hi); lo == hi pins
            the field.
        objective: Callable on GripperSpec; defaults to the catheter-
            disturbance objective (requires ``catheter``).
        catheter: Catheter for the default objective.
        jaw: Jaw geometry for the default objective.

    Raises:
        ValueError: empty bounds, unknown field, or lo > hi.
    """
    if not bounds:
        raise ValueError("bounds must name at least one spec field")
    valid_fields = {
        "beam_length", "width", "thickness", "youngs_modulus", "density",
        "twist_angle",
    }
    for name, (lo, hi) in bounds.items():
        if name not in valid_fields:
            raise ValueError(f"unknown spec field: {name}")
        if lo > hi:
            raise ValueError(f"infeasible bounds for {name}: {lo} > {hi}")

    if objective is None:
        if catheter is None:
            raise ValueError("default objective needs a catheter")
        objective = make_default_objective(catheter, jaw or JawGeometry())

    names = sorted(bounds)
    free = [n for n in names if bounds[n][0] < bounds[n][1]]
    pinned = {n: bounds[n][0] for n in names if bounds[n][0] == bounds[n][1]}

    def build(x: NDArray[np.float64]) -> GripperSpec:
        fields = dict(pinned)
        fields.update({n: float(v) for n, v in zip(free, x)})
        return replace(base_spec, **fields)

    if not free:
        return build(np.empty(0))

    lo = np.array([bounds[n][0] for n in free])
    hi = np.array([bounds[n][1] for n in free])
    x0 = 0.5 * (lo + hi)
    simplex = [x0]
    for i in range(len(free)):
        vertex = x0.copy()
        vertex[i] = min(hi[i], vertex[i] + 0.05 * (hi[i] - lo[i]))
        simplex.append(vertex)

    result = minimize(
        lambda x: objective(build(np.clip(x, lo, hi))),
        x0,
        method="Nelder-Mead",
        bounds=list(zip(lo, hi)),
        options={
            "initial_simplex": np.array(simplex),
            "xatol": 1e-10,
            "fatol": 1e-14,
            "maxiter": 600,
        },
    )
    return build(np.clip(result.x, lo, hi))


# ---------------------------------------------------------------------------
# pre-twisted blade frequency
# ---------------------------------------------------------------------------


def twisted_frequency(spec: GripperSpec, w: float) -> float:
    """Nondimensional frequency w_bar = w sqrt(rho A L^4 / sqrt(E I_xx E I_yy))."""
    if w < 0.0:
        raise ValueError("frequency must be non-negative")
    e = spec.youngs_modulus
    stiff = math.sqrt(e * spec.second_moment_xx * e * spec.second_moment_yy)
    return w * math.sqrt(spec.density * spec.area * spec.beam_length**4 / stiff)


def first_mode_frequency(spec: GripperSpec) -> float:
    """Cantilever first-mode estimate [rad/s] using the geometric-mean I."""
    i_eff = math.sqrt(spec.second_moment_xx * spec.second_moment_yy)
    return BETA_1**2 * math.sqrt(
        spec.youngs_modulus
        * i_eff
        / (spec.density * spec.area * spec.beam_length**4)
    )


def frequency_separation(
    spec: GripperSpec, shell_frequency_hz: float = 1.0e6
) -> FrequencySeparation:
    """Gap between the blade's first mode and the acoustic shell band."""
    blade_hz = first_mode_frequency(spec) / (2.0 * math.pi)
    return FrequencySeparation(
        blade_hz=blade_hz,
        shell_hz=shell_frequency_hz,
        gap_hz=abs(shell_frequency_hz - blade_hz),
        ratio=shell_frequency_hz / blade_hz,
    )
