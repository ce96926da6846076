"""Thick-walled hyperelastic anchoring-balloon mechanics.

The anchoring balloon is modelled as an incompressible thick cylinder of a
Yeoh solid inflated at fixed length (the axial cables suppress stretch, so
lambda_z = 1 throughout).  With lambda the hoop stretch and incompressibility
forcing lambda_r = 1/lambda, the strain energy reduces to a function of
lambda alone:

    u(lambda)  = lambda^2 + lambda^-2 - 2  =  (lambda^2 - 1)^2 / lambda^2
    W(lambda)  = C1 u + C2 u^2 + C3 u^3

Radial equilibrium integrates across the wall to the inflation pressure

    delta_p = int_{lambda_ex}^{lambda_in}  W'(lambda) / (lambda^2 - 1)  dlambda

whose integrand has a removable singularity at lambda = 1.  Both this
integral and the axial-force resultant admit elementary antiderivatives
(``_p_tilde`` / ``_f_tilde``); the quadrature routines in this module
integrate the raw forms instead and exist precisely to cross-check the
closed forms, so do not "simplify" one in terms of the other.

Conventions: stretches dimensionless, pressures in Pa, forces in N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import quad

# Pressure split used when reporting model-vs-bench radius RMSE [Pa].
RMSE_SPLIT_PA: float = 1.0e4

# Switch to the cancellation-free factored integrand this close to lambda=1.
_SINGULARITY_GUARD: float = 1e-4


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BalloonSpec:
    """Reference geometry and material of the anchoring balloon.

    Attributes:
        inner_radius: Reference (unpressurised) inner radius R_in [m].
        outer_radius: Reference outer radius R_out [m].
        height: Cylinder length [m].
        yeoh: Material constants (C1, C2, C3) [Pa]; C1 must be positive.
        burst_pressure_mean: Optional characterised burst mean [Pa].
        burst_pressure_sd: Optional burst standard deviation [Pa].
    """

    inner_radius: float
    outer_radius: float
    height: float
    yeoh: tuple[float, float, float]
    burst_pressure_mean: float | None = None
    burst_pressure_sd: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.inner_radius < self.outer_radius:
            raise ValueError("need 0 < inner_radius < outer_radius")
        if self.height <= 0.0:
            raise ValueError("height must be positive")
        if len(self.yeoh) != 3:
            raise ValueError("yeoh must be (C1, C2, C3)")
        if self.yeoh[0] <= 0.0:
            raise ValueError("C1 must be positive")

    @property
    def diameter_to_thickness(self) -> float:
        """Outer diameter over wall thickness (reference configuration)."""
        return 2.0 * self.outer_radius / (self.outer_radius - self.inner_radius)

    @property
    def thick_wall_flagged(self) -> bool:
        """Wall-regime check as adopted: ratio above 10 is flagged ``True``.

        Note the conventional reading of this ratio is the opposite (large
        values usually indicate thin walls); callers should treat the flag
        as a bookkeeping marker, not a validity proof.
        """
        return self.diameter_to_thickness > 10.0


@dataclass(frozen=True)
class InflationState:
    """Inflation point of a balloon: stretches, pressure, axial load."""

    lambda_in: float
    lambda_ex: float
    delta_p: float
    f_ex: float

    def __post_init__(self) -> None:
        if self.lambda_in < 1.0:
            raise ValueError("lambda_in must be >= 1")
        if not 1.0 <= self.lambda_ex <= self.lambda_in + 1e-12:
            raise ValueError("lambda_ex must lie in [1, lambda_in]")


@dataclass(frozen=True)
class StabilityReport:
    """Bifurcation screening result for one balloon design."""

    prismatic_ok: bool
    axisymmetric_ok: bool
    asymmetric_ok: bool
    prismatic_margin: float
    axisymmetric_margin: float
    asymmetric_margin: float
    critical_mode: int


@dataclass(frozen=True)
class TwoBalloonReport:
    """Equal-pressure equilibria of two coupled balloons.

    Pressures are dimensionless (normalised by the membrane modulus); the
    structure of the branches depends only on the coupling constant K.

    Attributes:
        lambda_star: Stretch at the pressure maximum (bifurcation onset),
            or None when the relation is monotone over the window.
        p_cr: Pressure at lambda_star (snap-through threshold), or None.
        critical_points: All interior stationary stretches found.
        symmetric: Sampled (lambda, lambda) pairs — always equilibria.
        asymmetric: (lambda_a, lambda_b) pairs with lambda_a > lambda_b that
            balance pressure; empty below the bifurcation point.
    """

    lambda_star: float | None
    p_cr: float | None
    critical_points: tuple[float, ...]
    symmetric: tuple[tuple[float, float], ...]
    asymmetric: tuple[tuple[float, float], ...]


class SafeRange(NamedTuple):
    """Safe actuation pressure and the stretch at the governing pressure."""

    p_max_safe: float
    lambda_at_p_max: float


class RmseSplit(NamedTuple):
    """Radius RMSE below/above the reporting split pressure."""

    below: float
    above: float


# ---------------------------------------------------------------------------
# kinematics
# ---------------------------------------------------------------------------


def lambda_ex_of(spec: BalloonSpec, lambda_in: float) -> float:
    """Outer hoop stretch for a given inner stretch at fixed length.

    Incompressibility at lambda_z = 1 conserves the wall cross-section:
    r_out^2 = R_out^2 - R_in^2 + (lambda_in R_in)^2, so
    lambda_ex = r_out / R_out.

    Args:
        spec: Balloon description.
        lambda_in: Inner hoop stretch, >= 1.

    Returns:
        lambda_ex in [1, lambda_in].
    """
    if lambda_in < 1.0:
        raise ValueError("lambda_in must be >= 1")
    r_in2 = (lambda_in * spec.inner_radius) ** 2
    r_out2 = spec.outer_radius**2 - spec.inner_radius**2 + r_in2
    return math.sqrt(r_out2) / spec.outer_radius


def outer_radius_at(spec: BalloonSpec, lambda_in: float) -> float:
    """Deformed outer radius at a given inner stretch [m]."""
    return lambda_ex_of(spec, lambda_in) * spec.outer_radius


# ---------------------------------------------------------------------------
# reduced-energy derivatives
# ---------------------------------------------------------------------------


def _u_of(lam: float) -> float:
    # (lambda - 1)^2 (lambda + 1)^2 / lambda^2: exact near 1 because the
    # subtraction lambda - 1 is performed on the raw argument.
    return (lam - 1.0) ** 2 * (lam + 1.0) ** 2 / lam**2


def _g_of(lam: float, yeoh: tuple[float, float, float]) -> float:
    # dW/du = C1 + 2 C2 u + 3 C3 u^2
    c1, c2, c3 = yeoh
    u = _u_of(lam)
    return c1 + 2.0 * c2 * u + 3.0 * c3 * u * u


def _w_lambda(lam: float, yeoh: tuple[float, float, float]) -> float:
    # dW/dlambda via the chain rule, kept in raw (uncancelled) form.
    u_prime = 2.0 * lam - 2.0 / lam**3
    return _g_of(lam, yeoh) * u_prime


def _w_zeta(lam: float, yeoh: tuple[float, float, float]) -> float:
    # dW/dlambda_z evaluated at lambda_z = 1.
    return _g_of(lam, yeoh) * (2.0 - 2.0 / lam**2)


def _w_lambda_lambda(lam: float, yeoh: tuple[float, float, float]) -> float:
    # d2W/dlambda2 (used by the prismatic diagnostic integral).
    c1, c2, c3 = yeoh
    u = _u_of(lam)
    g = c1 + 2.0 * c2 * u + 3.0 * c3 * u * u
    g_prime = 2.0 * c2 + 6.0 * c3 * u
    u_prime = 2.0 * lam - 2.0 / lam**3
    u_second = 2.0 + 6.0 / lam**4
    return g_prime * u_prime * u_prime + g * u_second


def _pressure_integrand(lam: float, yeoh: tuple[float, float, float]) -> float:
    """W'(lambda)/(lambda^2 - 1) with the removable pole stabilised.

    Within ``_SINGULARITY_GUARD`` of lambda = 1 the quotient is replaced by
    its exact factored limit form 2 (lambda^2 + 1)/lambda^3 * dW/du, which
    is what the raw expression converges to but without the 0/0
    cancellation.
    """
    if abs(lam - 1.0) < _SINGULARITY_GUARD:
        return _g_of(lam, yeoh) * 2.0 * (lam**2 + 1.0) / lam**3
    return _w_lambda(lam, yeoh) / (lam**2 - 1.0)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def _p_tilde(lam: float, yeoh: tuple[float, float, float]) -> float:
    """Antiderivative of the pressure integrand."""
    c1, c2, c3 = yeoh
    ln = math.log(lam)
    inv2 = 1.0 / lam**2
    inv4 = inv2 * inv2
    inv6 = inv4 * inv2
    lam2 = lam * lam
    lam4 = lam2 * lam2
    return (
        c1 * (2.0 * ln - inv2)
        + c2 * (2.0 * lam2 - 4.0 * ln + 2.0 * inv2 - inv4)
        + c3 * (1.5 * lam4 - 9.0 * lam2 + 12.0 * ln - 6.0 * inv2 + 4.5 * inv4 - inv6)
    )


def _f_tilde(lam: float, yeoh: tuple[float, float, float]) -> float:
    """Antiderivative of the axial resultant integrand -2 (dW/du) u / lambda ...

    ... reduced to -2 [C1/lam + 2 C2 u/lam + 3 C3 u^2/lam] integrated in
    lambda; elementary because u/lam and u^2/lam are Laurent polynomials.
    """
    c1, c2, c3 = yeoh
    ln = math.log(lam)
    inv2 = 1.0 / lam**2
    inv4 = inv2 * inv2
    lam2 = lam * lam
    lam4 = lam2 * lam2
    return (
        -2.0 * c1 * ln
        + c2 * (-2.0 * lam2 + 8.0 * ln + 2.0 * inv2)
        + c3 * (-1.5 * lam4 + 12.0 * lam2 - 36.0 * ln - 12.0 * inv2 + 1.5 * inv4)
    )


def delta_p(spec: BalloonSpec, lambda_in: float) -> float:
    """Inflation pressure difference across the wall, closed form [Pa].

    Args:
        spec: Balloon description.
        lambda_in: Inner hoop stretch; 1 returns exactly 0.

    Returns:
        delta_p = p_in - p_ex at equilibrium.
    """
    if lambda_in < 1.0:
        raise ValueError("lambda_in must be >= 1")
    if lambda_in == 1.0:
        return 0.0
    lam_ex = lambda_ex_of(spec, lambda_in)
    return _p_tilde(lambda_in, spec.yeoh) - _p_tilde(lam_ex, spec.yeoh)


def delta_p_quadrature(spec: BalloonSpec, lambda_in: float) -> float:
    """Inflation pressure via adaptive quadrature of the integral form [Pa].

    This is the cross-check route for :func:`delta_p`; it integrates the raw
    equilibrium integrand instead of evaluating the antiderivative.
    """
    if lambda_in < 1.0:
        raise ValueError("lambda_in must be >= 1")
    if lambda_in == 1.0:
        return 0.0
    lam_ex = lambda_ex_of(spec, lambda_in)
    value, _ = quad(
        _pressure_integrand,
        lam_ex,
        lambda_in,
        args=(spec.yeoh,),
        epsabs=1e-13,
        epsrel=1e-11,
        limit=200,
    )
    return value


def axial_force(
    spec: BalloonSpec,
    lambda_in: float,
    p_in: float | None = None,
    p_ex: float = 0.0,
) -> float:
    """Axial force transmitted to the balloon mount, closed form [N].

    The wall resultant integrates sigma_z over the deformed annulus; with
    the cap load subtracted the external force is

        f_ex = pi R_in^2 (lambda_in^2 - 1) [f~(lambda_in) - f~(lambda_ex)]
               - p_ex pi lambda_ex^2 R_out^2

    at the equilibrium internal pressure.  Supplying ``p_in`` different from
    the equilibrium value adds the off-balance cap term
    -(p_in - p_eq) pi r_in^2.

    Args:
        spec: Balloon description.
        lambda_in: Inner hoop stretch (>= 1).
        p_in: Internal pressure [Pa]; None means the equilibrium pressure.
        p_ex: External pressure [Pa].
    """
    if lambda_in < 1.0:
        raise ValueError("lambda_in must be >= 1")
    lam_ex = lambda_ex_of(spec, lambda_in)
    area_const = spec.inner_radius**2 * (lambda_in**2 - 1.0)
    internal = math.pi * area_const * (
        _f_tilde(lambda_in, spec.yeoh) - _f_tilde(lam_ex, spec.yeoh)
    )
    value = internal - p_ex * math.pi * lam_ex**2 * spec.outer_radius**2
    if p_in is not None:
        p_eq = p_ex + delta_p(spec, lambda_in)
        r_in = lambda_in * spec.inner_radius
        value -= (p_in - p_eq) * math.pi * r_in**2
    return value


def axial_force_quadrature(
    spec: BalloonSpec,
    lambda_in: float,
    p_in: float | None = None,
    p_ex: float = 0.0,
) -> float:
    """Axial force via the nested sigma_z construction [N].

    Builds sigma_r by integrating radial equilibrium from the outer face,
    lifts it to sigma_z with the plane-strain constitutive offset, and
    integrates sigma_z over the annulus — no antiderivatives involved, so
    it cross-checks :func:`axial_force` end to end.
    """
    if lambda_in < 1.0:
        raise ValueError("lambda_in must be >= 1")
    lam_ex = lambda_ex_of(spec, lambda_in)
    if lambda_in == 1.0:
        return -p_ex * math.pi * spec.outer_radius**2
    yeoh = spec.yeoh
    area_const = spec.inner_radius**2 * (lambda_in**2 - 1.0)

    def sigma_z(lam: float) -> float:
        hoop_drop, _ = quad(
            _pressure_integrand, lam_ex, lam, args=(yeoh,), epsabs=1e-13,
            epsrel=1e-11, limit=200,
        )
        return -p_ex + _w_zeta(lam, yeoh) - hoop_drop

    wall, _ = quad(
        lambda lam: sigma_z(lam) * lam / (lam**2 - 1.0) ** 2,
        lam_ex,
        lambda_in,
        epsabs=1e-13,
        epsrel=1e-10,
        limit=200,
    )
    f_in = 2.0 * math.pi * area_const * wall
    if p_in is None:
        p_in = p_ex + delta_p_quadrature(spec, lambda_in)
    r_in = lambda_in * spec.inner_radius
    return f_in - p_in * math.pi * r_in**2


def inflation_state(
    spec: BalloonSpec,
    lambda_in: float,
    p_in: float | None = None,
    p_ex: float = 0.0,
) -> InflationState:
    """Bundle stretches, pressure and axial load at one inflation point."""
    return InflationState(
        lambda_in=lambda_in,
        lambda_ex=lambda_ex_of(spec, lambda_in),
        delta_p=delta_p(spec, lambda_in),
        f_ex=axial_force(spec, lambda_in, p_in=p_in, p_ex=p_ex),
    )


# ---------------------------------------------------------------------------
# bifurcation screening
# ---------------------------------------------------------------------------


def stability_screen(
    spec: BalloonSpec,
    lambda_z: float = 1.0,
    mode_n: int = 1,
    sweep_max: float = 3.0,
) -> StabilityReport:
    """Screen a design against axisymmetric/prismatic/asymmetric bifurcation.

    The axisymmetric mode-n margin is lambda_z - n pi R_out /
    (lambda_z^{3/2} L); positive margins exclude that mode.  Prismatic and
    asymmetric modes are screened by sweeping the inflation kinematics and
    checking the deformed radii stay an admissible ordered pair; the
    prismatic margin additionally reports the diagnostic integral
    int W''(lambda) lambda dlambda over the swept stretch range (its value
    is informational — no sign convention is asserted for it).

    Args:
        spec: Balloon description.
        lambda_z: Axial stretch; this model fixes it to exactly 1.
        mode_n: Axisymmetric mode number to evaluate (>= 1).
        sweep_max: Upper inner-stretch bound for the admissible-set sweep.
    """
    if lambda_z != 1.0:
        raise ValueError("model is built at lambda_z = 1")
    if mode_n < 1:
        raise ValueError("mode_n must be >= 1")

    axi_margin = lambda_z - (mode_n * math.pi * spec.outer_radius) / (
        lambda_z**1.5 * spec.height
    )
    # largest mode with positive margin: n < L / (pi R_out)
    ratio = spec.height / (math.pi * spec.outer_radius)
    critical_mode = max(0, math.ceil(ratio) - 1)

    # admissible-set sweep: deformed radii must stay ordered and real
    margin = math.inf
    for lam in np.linspace(1.0, sweep_max, 64):
        r_in = lam * spec.inner_radius
        r_out2 = math.sqrt(lambda_z) * (
            spec.outer_radius**2 - spec.inner_radius**2
        ) + r_in**2
        if r_out2 <= 0.0:
            margin = -math.inf
            break
        margin = min(margin, math.sqrt(r_out2) - r_in)
    admissible = margin > 0.0

    lam_hi = sweep_max
    lam_ex_hi = lambda_ex_of(spec, lam_hi)
    diag, _ = quad(
        lambda lam: _w_lambda_lambda(lam, spec.yeoh) * lam, lam_ex_hi, lam_hi
    )

    return StabilityReport(
        prismatic_ok=admissible,
        axisymmetric_ok=axi_margin > 0.0,
        asymmetric_ok=admissible,
        prismatic_margin=diag,
        axisymmetric_margin=axi_margin,
        asymmetric_margin=margin,
        critical_mode=critical_mode,
    )


# ---------------------------------------------------------------------------
# coupled balloons
# ---------------------------------------------------------------------------


def coupled_pressure(lam: float, coupling: float) -> float:
    """Normalised pressure-stretch law of one balloon in the coupled pair.

    p(lambda) = (1/lambda - 1/lambda^2)(1 + lambda^2 / K).  Dimensionless;
    multiply by the membrane modulus scale to recover Pa.
    """
    if lam <= 0.0:
        raise ValueError("stretch must be positive")
    return (1.0 / lam - 1.0 / lam**2) * (1.0 + lam * lam / coupling)


def coupled_pressure_derivative(lam: float, coupling: float) -> float:
    """d/dlambda of :func:`coupled_pressure`: (2 - lambda)/lambda^3 + 1/K."""
    return (2.0 - lam) / lam**3 + 1.0 / coupling


def equilibrium_residual(lambda_a: float, lambda_b: float, coupling: float) -> float:
    """Pressure mismatch between the two balloons (zero at equilibrium)."""
    return coupled_pressure(lambda_a, coupling) - coupled_pressure(lambda_b, coupling)


def _bisect(f, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    f_lo = f(lo)
    if f_lo == 0.0:
        return lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0 or hi - lo < tol:
            return mid
        if (f_lo < 0.0) == (f_mid < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def two_balloon_equilibria(
    spec_a: BalloonSpec,
    spec_b: BalloonSpec,
    coupling: float,
    lambda_window: tuple[float, float] = (1.0, 6.0),
    n_scan: int = 10_000,
    n_branch: int = 25,
) -> TwoBalloonReport:
    """Equal-pressure equilibria of two fluid-coupled balloons.

    The normalised pressure law has an interior maximum (at lambda_star)
    when the coupling constant exceeds 27; beyond it, inflating one balloon
    past lambda_star admits a second equilibrium with the partner resting
    below lambda_star — the snap-through branch.  Roots are located by a
    coarse scan followed by bisection to 1e-12 (deterministic).

    Args:
        spec_a: First balloon (validated; the normalised law itself is
            geometry-free).
        spec_b: Second balloon.
        coupling: Material coupling constant K > 0.
        lambda_window: Search window [lo, hi] with lo >= 1.
        n_scan: Coarse-scan resolution for stationary points.
        n_branch: Number of sampled branch pairs.

    Returns:
        TwoBalloonReport; ``asymmetric`` is empty when no bifurcation point
        lies in the window.
    """
    if coupling <= 0.0:
        raise ValueError("coupling constant must be positive")
    lo, hi = lambda_window
    if not 1.0 <= lo < hi:
        raise ValueError("lambda window must satisfy 1 <= lo < hi")

    # stationary points of the pressure law
    lams = np.linspace(lo, hi, n_scan)
    derivs = np.array([coupled_pressure_derivative(l, coupling) for l in lams])
    critical: list[float] = []
    for i in range(len(lams) - 1):
        if derivs[i] == 0.0:
            critical.append(float(lams[i]))
        elif derivs[i] * derivs[i + 1] < 0.0:
            critical.append(
                _bisect(
                    lambda l: coupled_pressure_derivative(l, coupling),
                    float(lams[i]),
                    float(lams[i + 1]),
                )
            )

    lambda_star: float | None = None
    p_cr: float | None = None
    for c in critical:
        # the first stationary point with a locally maximal pressure
        if coupled_pressure_derivative(c - 1e-7, coupling) > 0.0 > (
            coupled_pressure_derivative(c + 1e-7, coupling)
        ):
            lambda_star = c
            p_cr = coupled_pressure(c, coupling)
            break

    symmetric = tuple(
        (float(l), float(l)) for l in np.linspace(lo, hi, n_branch)
    )

    asymmetric: list[tuple[float, float]] = []
    if lambda_star is not None and p_cr is not None:
        eps = 1e-9
        for la in np.linspace(lambda_star * (1.0 + 1e-4), hi, n_branch):
            target = coupled_pressure(float(la), coupling)
            if not 0.0 < target < p_cr:
                continue  # beyond the re-ascending branch: no partner below
            f = lambda lb: coupled_pressure(lb, coupling) - target
            lo_b, hi_b = max(lo, 1.0) + eps, lambda_star
            if f(lo_b) * f(hi_b) > 0.0:
                continue
            lb = _bisect(f, lo_b, hi_b)
            asymmetric.append((float(la), float(lb)))

    return TwoBalloonReport(
        lambda_star=lambda_star,
        p_cr=p_cr,
        critical_points=tuple(critical),
        symmetric=symmetric,
        asymmetric=tuple(asymmetric),
    )


# ---------------------------------------------------------------------------
# safe actuation range
# ---------------------------------------------------------------------------


def _golden_max(f, lo: float, hi: float, tol: float = 1e-10) -> tuple[float, float]:
    """Golden-section maximiser (deterministic, derivative-free)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def safe_range(
    spec: BalloonSpec,
    safety_factor: float,
    lambda_window: tuple[float, float] = (1.0, 4.0),
) -> SafeRange:
    """Maximum safe actuation pressure for the inflation guard.

    Two candidate ceilings are considered: the limit-point pressure of the
    inflation curve over the stretch window (located by golden-section
    search; for a monotone curve this is the window edge) and, when burst
    statistics are characterised, mean - 3 sd.  The lower ceiling divided
    by the safety factor is the safe pressure; the reported stretch is
    where the governing (undivided) pressure is reached.

    Args:
        spec: Balloon description.
        safety_factor: Divisor >= 1 applied to the governing pressure.
        lambda_window: Stretch window to search.

    Raises:
        ValueError: when the window is degenerate and no burst data exists.
    """
    if safety_factor < 1.0:
        raise ValueError("safety_factor must be >= 1")
    lo, hi = lambda_window
    has_window = 1.0 <= lo < hi
    has_burst = spec.burst_pressure_mean is not None
    if not has_window and not has_burst:
        raise ValueError("no pressure ceiling available: bad window, no burst data")

    candidates: list[tuple[float, float]] = []  # (pressure, lambda)
    if has_window:
        lam_limit, p_limit = _golden_max(lambda l: delta_p(spec, l), lo, hi)
        # snap cleanly to the window edge when the curve is monotone
        if p_limit <= delta_p(spec, hi):
            lam_limit, p_limit = hi, delta_p(spec, hi)
        candidates.append((p_limit, lam_limit))
    if has_burst:
        sd = spec.burst_pressure_sd or 0.0
        p_burst = spec.burst_pressure_mean - 3.0 * sd
        if has_window and p_burst < candidates[0][0]:
            # stretch at which the burst ceiling is reached on the rising branch
            lam_hi = candidates[0][1]
            f = lambda l: delta_p(spec, l) - p_burst
            lam_b = _bisect(f, lo, lam_hi) if f(lo) * f(lam_hi) <= 0.0 else lam_hi
            candidates.append((p_burst, lam_b))
        elif not has_window:
            candidates.append((p_burst, math.nan))

    p_gov, lam_gov = min(candidates, key=lambda t: t[0])
    return SafeRange(p_max_safe=p_gov / safety_factor, lambda_at_p_max=lam_gov)


# ---------------------------------------------------------------------------
# anchoring and bench comparison
# ---------------------------------------------------------------------------


def anchoring_pressure(
    spec: BalloonSpec,
    duct_radius: float,
    p_in: float,
    p_ex: float = 0.0,
) -> float:
    """Radial contact pressure against a rigid duct wall [Pa].

    Once the free outer radius would exceed the duct radius the wall is
    kinematically pinned there; extra internal pressure beyond the wall's
    equilibrium drop transmits to the tissue:

        p_contact = p_in - delta_p(lambda_contact) - p_ex   (>= 0)

    Returns 0 before contact.
    """
    if duct_radius <= spec.outer_radius:
        raise ValueError("duct must be wider than the reference balloon")
    lam_contact = math.sqrt(
        (duct_radius**2 - spec.outer_radius**2 + spec.inner_radius**2)
    ) / spec.inner_radius
    wall_drop = delta_p(spec, lam_contact)
    return max(0.0, p_in - p_ex - wall_drop)


def stretch_at_pressure(
    spec: BalloonSpec,
    pressure: float,
    lambda_window: tuple[float, float] = (1.0, 4.0),
) -> float:
    """Inner stretch on the rising inflation branch at a given delta_p."""
    if pressure < 0.0:
        raise ValueError("pressure must be non-negative")
    if pressure == 0.0:
        return 1.0
    lo, hi = lambda_window
    lam_peak, p_peak = _golden_max(lambda l: delta_p(spec, l), lo, hi)
    if delta_p(spec, hi) >= p_peak:
        lam_peak, p_peak = hi, delta_p(spec, hi)
    if pressure > p_peak:
        raise ValueError("pressure beyond the inflation curve over the window")
    return _bisect(lambda l: delta_p(spec, l) - pressure, lo, lam_peak)


def rmse_split(
    pressures: Sequence[float],
    model_radii: Sequence[float],
    measured_radii: Sequence[float],
    split_pa: float = RMSE_SPLIT_PA,
) -> RmseSplit:
    """Radius RMSE against bench data, reported below/above a split pressure.

    Empty bins report NaN rather than raising, so a partial bench sweep
    still produces a row.
    """
    p = np.asarray(pressures, dtype=float)
    err = np.asarray(model_radii, dtype=float) - np.asarray(measured_radii, dtype=float)
    if p.shape != err.shape:
        raise ValueError("pressure and radius columns must have equal length")

    def _rmse(mask: np.ndarray) -> float:
        if not np.any(mask):
            return math.nan
        return float(np.sqrt(np.mean(err[mask] ** 2)))

    return RmseSplit(below=_rmse(p < split_pa), above=_rmse(p >= split_pa))
