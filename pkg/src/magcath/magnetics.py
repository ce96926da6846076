"""Dipole-field actuation model for a magnetically steered catheter.

An external permanent magnet (EPM) mounted on a positioning arm is treated
as a point dipole.  At a point ``p`` measured from the magnet centre the
flux density is

    B(p) = mu0 |m| / (4 pi |p|^3) * (3 p_hat p_hat^T - I) m_hat

which is exact in the far field and a good approximation beyond roughly two
magnet diameters.  The field magnitude at distance d therefore lies between
mu0 |m| / (4 pi d^3) (equatorial) and twice that value (on-axis), which is
what makes the feasible-workspace computation a closed-form spherical shell.

The distal segment of the catheter carries a magnetised elastomer jacket
with remanence ``B_r``.  Under an applied field of magnitude B the restoring
torque per the slender-rod model decays linearly toward the tip and the
Euler-Bernoulli tip deflection follows in closed form; both are exposed here
together with their inverses so the simulator can map commanded bend angles
back to required field strengths.

All quantities are SI (metres, teslas, amperes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

# Permeability of free space [N A^-2].
MU_0: float = 4.0e-7 * math.pi

# Below this separation the point-dipole model is meaningless and the field
# expression overflows; treat queries closer than this as coincident.
MIN_SEPARATION: float = 1e-9

Vec3 = NDArray[np.float64]


class InfeasibleFieldError(ValueError):
    """Requested field cannot be produced from any allowed magnet pose."""


# ---------------------------------------------------------------------------
# small vector helpers
# ---------------------------------------------------------------------------


def vec3(x: float, y: float, z: float) -> Vec3:
    """Build a 3-vector as a float64 array."""
    return np.array([x, y, z], dtype=np.float64)


def norm(v: NDArray[np.floating]) -> float:
    """Euclidean norm of a vector."""
    return float(np.linalg.norm(v))


def unit(v: NDArray[np.floating]) -> Vec3:
    """Return ``v`` scaled to unit length.

    Raises:
        ValueError: if ``v`` has (numerically) zero length.
    """
    n = norm(v)
    if n < 1e-300:
        raise ValueError("cannot normalise a zero vector")
    return np.asarray(v, dtype=np.float64) / n


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DipoleSource:
    """Point-dipole description of the external permanent magnet.

    Attributes:
        position: Magnet centre in world coordinates [m].
        moment_direction: Unit vector along the dipole moment.
        moment_magnitude: |m| in A m^2 (non-negative).
    """

    position: Vec3
    moment_direction: Vec3
    moment_magnitude: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "moment_direction", unit(self.moment_direction))
        if self.moment_magnitude < 0.0:
            raise ValueError("moment_magnitude must be non-negative")

    @property
    def moment(self) -> Vec3:
        """Dipole moment vector m [A m^2]."""
        return self.moment_magnitude * self.moment_direction

    @classmethod
    def from_cylinder(
        cls,
        position: Vec3,
        direction: Vec3,
        remanence: float,
        diameter: float,
        height: float,
    ) -> "DipoleSource":
        """Equivalent dipole of an axially magnetised cylinder.

        The moment is m = B_r V / mu0 with V the cylinder volume, the usual
        uniform-magnetisation equivalence.

        Args:
            position: Magnet centre [m].
            direction: Magnetisation axis (normalised internally).
            remanence: Remanent flux density B_r [T].
            diameter: Cylinder diameter [m].
            height: Cylinder height [m].
        """
        if remanence <= 0.0 or diameter <= 0.0 or height <= 0.0:
            raise ValueError("cylinder parameters must be positive")
        volume = math.pi * (0.5 * diameter) ** 2 * height
        return cls(
            position=np.asarray(position, dtype=np.float64),
            moment_direction=unit(direction),
            moment_magnitude=remanence * volume / MU_0,
        )


@dataclass(frozen=True)
class CatheterParams:
    """Geometry and material of the magnetised distal segment.

    Attributes:
        length: Magnetised segment length L [m].
        radius: Cross-section radius r [m]; slenderness L/r must exceed 10.
        youngs_modulus: Effective Young's modulus E of the composite [Pa].
        remanence: Magnitude of the jacket remanence |B_r| [T].
    """

    length: float
    radius: float
    youngs_modulus: float
    remanence: float

    def __post_init__(self) -> None:
        if min(self.length, self.radius, self.youngs_modulus, self.remanence) <= 0.0:
            raise ValueError("catheter parameters must be positive")
        if self.length / self.radius <= 10.0:
            raise ValueError("slender-rod model requires length/radius > 10")

    @property
    def second_moment(self) -> float:
        """Area moment of inertia of the circular section, pi r^4 / 4 [m^4]."""
        return math.pi * self.radius**4 / 4.0


@dataclass(frozen=True)
class FieldTask:
    """Magnitude window the field must fall in at the target.

    ``b_min == b_max`` is admitted as a degenerate (zero-measure) task so a
    collapsing workspace can be represented; ``b_min > b_max`` is rejected.
    """

    b_min: float
    b_max: float

    def __post_init__(self) -> None:
        if self.b_min < 0.0 or self.b_max <= 0.0 or self.b_min > self.b_max:
            raise ValueError("field task requires 0 <= b_min <= b_max and b_max > 0")


@dataclass(frozen=True)
class GridSpec:
    """Cartesian sampling grid used for the voxel workspace estimate."""

    resolution: int = 64
    half_extent: float | None = None  # defaults to 1.2 * outer shell radius

    def __post_init__(self) -> None:
        if self.resolution < 8:
            raise ValueError("grid resolution below 8 per axis is too coarse to trust")
        if self.half_extent is not None and self.half_extent <= 0.0:
            raise ValueError("half_extent must be positive")


@dataclass(frozen=True)
class WorkspaceReport:
    """Feasible-workspace summary for a dipole source and a field task.

    The analytic shell radii come from inverting the on-axis / equatorial
    magnitude bounds; the voxel count is a cross-check on the same region.
    """

    inner_radius: float
    outer_radius: float
    volume: float
    grid_volume: float
    grid_resolution: int
    empty: bool = field(default=False)


# ---------------------------------------------------------------------------
# forward and inverse field maps
# ---------------------------------------------------------------------------


def dipole_field(source: DipoleSource, point: NDArray[np.floating]) -> Vec3:
    """Flux density of a point dipole at a query point.

    Args:
        source: Dipole description.
        point: Query position in world coordinates [m].

    Returns:
        Field vector B [T].

    Raises:
        ValueError: if the query point is within ``MIN_SEPARATION`` of the
            dipole centre.
    """
    p = np.asarray(point, dtype=np.float64) - source.position
    d = norm(p)
    if d < MIN_SEPARATION:
        raise ValueError("query point coincides with the dipole centre")
    p_hat = p / d
    m_hat = source.moment_direction
    scale = MU_0 * source.moment_magnitude / (4.0 * math.pi * d**3)
    return scale * (3.0 * p_hat * float(p_hat @ m_hat) - m_hat)


def field_magnitude_bounds(moment_magnitude: float, distance: float) -> tuple[float, float]:
    """Achievable |B| range at a given distance over all dipole orientations.

    Returns:
        ``(equatorial, on_axis)`` — the lattermost is exactly twice the former.
    """
    if distance < MIN_SEPARATION:
        raise ValueError("distance below minimum separation")
    base = MU_0 * moment_magnitude / (4.0 * math.pi * distance**3)
    return base, 2.0 * base


def inverse_pose(
    b_desired: NDArray[np.floating],
    moment_magnitude: float,
    target: NDArray[np.floating] | None = None,
    heading: NDArray[np.floating] | None = None,
    standoff: tuple[float, float] | None = None,
) -> DipoleSource:
    """Magnet pose that reproduces a desired field vector at a target point.

    The magnet is placed along the ``heading`` ray from the target (default
    straight above, +z, matching an overhead arm mount).  With the unit
    separation direction p_hat fixed, the moment orientation that maps onto
    the requested field direction is

        m_hat ~ (3/2 p_hat p_hat^T - I) b_hat

    (the inverse of the dipole projector), and the standoff distance follows
    from matching magnitudes.  The returned pose reproduces ``b_desired``
    exactly in direction and magnitude under the point-dipole model.

    Args:
        b_desired: Field vector to realise at the target [T]; must be nonzero.
        moment_magnitude: |m| of the magnet [A m^2].
        target: Target point [m]; defaults to the origin.
        heading: Unit ray from target towards the magnet; defaults to +z.
        standoff: Optional ``(d_min, d_max)`` interval [m]; if the required
            separation falls outside it the pose is infeasible.

    Raises:
        InfeasibleFieldError: when the required standoff violates the interval.
        ValueError: for a zero desired field or non-positive moment.
    """
    b = np.asarray(b_desired, dtype=np.float64)
    b_mag = norm(b)
    if b_mag <= 0.0:
        raise ValueError("desired field must be nonzero")
    if moment_magnitude <= 0.0:
        raise ValueError("moment magnitude must be positive")
    tgt = np.zeros(3) if target is None else np.asarray(target, dtype=np.float64)
    p_hat = vec3(0.0, 0.0, 1.0) if heading is None else unit(heading)

    b_hat = b / b_mag
    # w = (3/2 p p^T - I) b_hat; |w| ranges over [1/2, 1] as b swings from
    # the dipole axis to the equator, so the solve below never degenerates.
    w = 1.5 * p_hat * float(p_hat @ b_hat) - b_hat
    w_norm = norm(w)
    m_hat = w / w_norm

    distance = (MU_0 * moment_magnitude / (4.0 * math.pi * b_mag * w_norm)) ** (1.0 / 3.0)
    if standoff is not None:
        d_min, d_max = standoff
        if not d_min <= distance <= d_max:
            raise InfeasibleFieldError(
                f"required standoff {distance:.4g} m outside allowed "
                f"[{d_min:.4g}, {d_max:.4g}] m"
            )
    return DipoleSource(
        position=tgt + distance * p_hat,
        moment_direction=m_hat,
        moment_magnitude=moment_magnitude,
    )


# ---------------------------------------------------------------------------
# catheter load model
# ---------------------------------------------------------------------------


def tip_torque(catheter: CatheterParams, b_magnitude: float, x: float) -> float:
    """Magnetic bending torque at arclength ``x`` along the magnetised segment.

    tau(x) = |B_r| |B| r^2 (L - x) / mu0 — linear decay toward the free tip.

    Args:
        catheter: Segment parameters.
        b_magnitude: Applied field magnitude [T].
        x: Arclength from the proximal end of the segment, 0 <= x <= L [m].

    Returns:
        Torque [N m].
    """
    if b_magnitude < 0.0:
        raise ValueError("field magnitude must be non-negative")
    if not 0.0 <= x <= catheter.length:
        raise ValueError("arclength outside the magnetised segment")
    return (
        catheter.remanence
        * b_magnitude
        * catheter.radius**2
        * (catheter.length - x)
        / MU_0
    )


def max_deflection(catheter: CatheterParams, b_magnitude: float) -> float:
    """Euler-Bernoulli tip deflection under the linearly decaying torque.

    delta = 4 |B_r| |B| L^3 / (3 E mu0 r^2 pi), consistent with integrating
    tau(x) against the cantilever influence function with I = pi r^4 / 4.
    """
    if b_magnitude < 0.0:
        raise ValueError("field magnitude must be non-negative")
    return (
        4.0
        * catheter.remanence
        * b_magnitude
        * catheter.length**3
        / (3.0 * catheter.youngs_modulus * MU_0 * catheter.radius**2 * math.pi)
    )


def field_for_deflection(catheter: CatheterParams, deflection: float) -> float:
    """Field magnitude required for a given tip deflection (inverse of above)."""
    if deflection < 0.0:
        raise ValueError("deflection must be non-negative")
    return (
        deflection
        * 3.0
        * catheter.youngs_modulus
        * MU_0
        * catheter.radius**2
        * math.pi
        / (4.0 * catheter.remanence * catheter.length**3)
    )


# ---------------------------------------------------------------------------
# feasible workspace
# ---------------------------------------------------------------------------


def shell_radii(moment_magnitude: float, task: FieldTask) -> tuple[float, float]:
    """Inner/outer radii of the feasible shell around the magnet.

    A point at distance d is feasible when the achievable magnitude interval
    [mu0 m / (4 pi d^3), mu0 m / (2 pi d^3)] meets [b_min, b_max]:

        r_in  = (mu0 m / (4 pi b_max))^(1/3)
        r_out = (mu0 m / (2 pi b_min))^(1/3)   (infinite when b_min == 0)
    """
    r_in = (MU_0 * moment_magnitude / (4.0 * math.pi * task.b_max)) ** (1.0 / 3.0)
    if task.b_min == 0.0:
        return r_in, math.inf
    r_out = (MU_0 * moment_magnitude / (2.0 * math.pi * task.b_min)) ** (1.0 / 3.0)
    return r_in, r_out


def feasible_workspace(
    moment_magnitude: float,
    task: FieldTask,
    grid: GridSpec | None = None,
) -> WorkspaceReport:
    """Analytic shell workspace with a voxel-count cross-check.

    Args:
        moment_magnitude: Magnet moment |m| [A m^2].
        task: Field magnitude window.
        grid: Voxel grid; resolution >= 8 per axis.

    Returns:
        WorkspaceReport with analytic and voxel volumes.  ``empty`` is set
        when no distance satisfies the window (r_in > r_out).
    """
    grid = grid or GridSpec()
    r_in, r_out = shell_radii(moment_magnitude, task)
    if r_in > r_out:
        return WorkspaceReport(
            inner_radius=r_in,
            outer_radius=r_out,
            volume=0.0,
            grid_volume=0.0,
            grid_resolution=grid.resolution,
            empty=True,
        )
    if math.isinf(r_out):
        raise ValueError("b_min = 0 gives an unbounded workspace; no finite volume")
    volume = 4.0 * math.pi / 3.0 * (r_out**3 - r_in**3)

    extent = grid.half_extent if grid.half_extent is not None else 1.2 * r_out
    n = grid.resolution
    cell = 2.0 * extent / n
    centres = -extent + cell * (np.arange(n) + 0.5)
    xx, yy, zz = np.meshgrid(centres, centres, centres, indexing="ij")
    rr = np.sqrt(xx * xx + yy * yy + zz * zz)
    count = int(np.count_nonzero((rr >= r_in) & (rr <= r_out)))
    return WorkspaceReport(
        inner_radius=r_in,
        outer_radius=r_out,
        volume=volume,
        grid_volume=count * cell**3,
        grid_resolution=n,
        empty=False,
    )


def workspace_monte_carlo(
    moment_magnitude: float,
    task: FieldTask,
    n_samples: int = 1_000_000,
    rng: np.random.Generator | None = None,
    half_extent: float | None = None,
) -> float:
    """Monte-Carlo volume of the feasible region by direct field-bound tests.

    Samples points uniformly in a bounding cube and checks feasibility from
    the magnitude bounds at each sampled distance — an estimate independent
    of the closed-form shell volume.

    Args:
        moment_magnitude: Magnet moment [A m^2].
        task: Field magnitude window.
        n_samples: Number of uniform samples.
        rng: Source of randomness (seeded by caller for reproducibility).
        half_extent: Cube half-width [m]; defaults to 1.2 * outer radius.

    Returns:
        Estimated feasible volume [m^3].
    """
    rng = rng or np.random.default_rng(0)
    r_in, r_out = shell_radii(moment_magnitude, task)
    if r_in > r_out:
        return 0.0
    if math.isinf(r_out):
        raise ValueError("b_min = 0 gives an unbounded workspace; no finite volume")
    extent = half_extent if half_extent is not None else 1.2 * r_out
    pts = rng.uniform(-extent, extent, size=(n_samples, 3))
    d = np.linalg.norm(pts, axis=1)
    d = np.maximum(d, MIN_SEPARATION)
    lo = MU_0 * moment_magnitude / (4.0 * math.pi * d**3)
    feasible = (lo <= task.b_max) & (2.0 * lo >= task.b_min)
    return float(np.count_nonzero(feasible)) / n_samples * (2.0 * extent) ** 3
