"""Vector fields, first integrals and equilibria of the planar/spatial
circular and elliptic restricted three-body problems.

Conventions used throughout the package:

* adimensional rotating (CRTBP) or rotating-pulsating (ERTBP) frame,
* the more massive primary P1 sits at ``(mu, 0, 0)`` and the smaller
  primary P2 at ``(mu - 1, 0, 0)``,
* CRTBP states are differentiated with respect to adimensional time ``t``,
  ERTBP states with respect to the true anomaly ``f`` of the primaries.

States are 6-vectors ``(x, y, z, vx, vy, vz)``; the planar problem is the
invariant subspace ``z = vz = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .constants import MU_ROUTH, MU_SUN_JUPITER, ECC_JUPITER


class SingularityError(ValueError):
    """State coincides with one of the primaries."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""


@dataclass(frozen=True)
class ModelSpec:
    """Mass parameter and primary eccentricity selecting CRTBP or ERTBP.

    ``ecc == 0`` selects the circular problem; any positive value the
    elliptic one.
    """

    mu: float = MU_SUN_JUPITER
    ecc: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.mu < 0.5:
            raise ValueError(f"mu must be in (0, 1/2), got {self.mu}")
        if not 0.0 <= self.ecc < 1.0:
            raise ValueError(f"ecc must be in [0, 1), got {self.ecc}")

    @property
    def is_elliptic(self) -> bool:
        return self.ecc > 0.0

    @classmethod
    def sun_jupiter_circular(cls) -> "ModelSpec":
        return cls(mu=MU_SUN_JUPITER, ecc=0.0)

    @classmethod
    def sun_jupiter_elliptic(cls) -> "ModelSpec":
        return cls(mu=MU_SUN_JUPITER, ecc=ECC_JUPITER)


@dataclass(frozen=True)
class PhaseState:
    """Position/velocity in the rotating(-pulsating) frame plus the value
    of the model's independent variable (time t, or true anomaly f)."""

    x: float
    y: float
    z: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    s: float = 0.0

    @classmethod
    def from_array(cls, arr, s: float = 0.0) -> "PhaseState":
        arr = np.asarray(arr, dtype=float)
        if arr.shape == (4,):
            return cls(arr[0], arr[1], 0.0, arr[2], arr[3], 0.0, s)
        if arr.shape == (6,):
            return cls(*arr, s)
        raise ValueError(f"expected a 4- or 6-vector, got shape {arr.shape}")

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.vx, self.vy, self.vz])

    def to_planar(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])

    @property
    def is_planar(self) -> bool:
        return self.z == 0.0 and self.vz == 0.0


def _as_state6(state) -> np.ndarray:
    if isinstance(state, PhaseState):
        return state.to_array()
    arr = np.asarray(state, dtype=float)
    if arr.shape == (4,):
        return np.array([arr[0], arr[1], 0.0, arr[2], arr[3], 0.0])
    if arr.shape == (6,):
        return arr
    raise ValueError(f"expected PhaseState or 4/6-vector, got shape {arr.shape}")


def _as_pos3(pos) -> np.ndarray:
    if isinstance(pos, PhaseState):
        return np.array([pos.x, pos.y, pos.z])
    arr = np.asarray(pos, dtype=float)
    if arr.shape == (2,):
        return np.array([arr[0], arr[1], 0.0])
    if arr.shape == (3,):
        return arr
    if arr.shape in ((4,), (6,)):
        return _as_state6(arr)[:3]
    raise ValueError(f"expected a 2- or 3-vector position, got shape {arr.shape}")


def primary_distances(pos, mu: float) -> tuple[float, float]:
    """Distances (r1, r2) from `pos` to P1 at (mu,0,0) and P2 at (mu-1,0,0)."""
    x, y, z = _as_pos3(pos)
    r1 = math.sqrt((x - mu) ** 2 + y * y + z * z)
    r2 = math.sqrt((x - mu + 1.0) ** 2 + y * y + z * z)
    return r1, r2


def effective_potential(pos, mu: float) -> float:
    """Effective potential of the rotating frame.

    Omega = (x^2 + y^2)/2 + (1-mu)/r1 + mu/r2 + mu(1-mu)/2.  The constant
    term makes the Jacobi constant of the triangular points exactly 3.

    Raises
    ------
    SingularityError
        If `pos` coincides with either primary.
    """
    x, y, _ = _as_pos3(pos)
    r1, r2 = primary_distances(pos, mu)
    if r1 == 0.0 or r2 == 0.0:
        raise SingularityError("position coincides with a primary")
    return (0.5 * (x * x + y * y) + (1.0 - mu) / r1 + mu / r2
            + 0.5 * mu * (1.0 - mu))


def effective_potential_gradient(pos, mu: float) -> np.ndarray:
    """Gradient (Omega_x, Omega_y, Omega_z) of `effective_potential`."""
    x, y, z = _as_pos3(pos)
    r1, r2 = primary_distances(pos, mu)
    if r1 == 0.0 or r2 == 0.0:
        raise SingularityError("position coincides with a primary")
    f1 = (1.0 - mu) / r1 ** 3
    f2 = mu / r2 ** 3
    gx = x - f1 * (x - mu) - f2 * (x - mu + 1.0)
    gy = y - f1 * y - f2 * y
    gz = -f1 * z - f2 * z
    return np.array([gx, gy, gz])


def jacobi_constant(state, mu: float) -> float:
    """Jacobi constant C = 2*Omega - (vx^2 + vy^2 + vz^2)."""
    sv = _as_state6(state)
    speed2 = sv[3] ** 2 + sv[4] ** 2 + sv[5] ** 2
    return 2.0 * effective_potential(sv[:3], mu) - speed2


def crtbp_field(state, mu: float) -> np.ndarray:
    """CRTBP vector field: d/dt (x, y, z, vx, vy, vz).

    xddot - 2*ydot = Omega_x, yddot + 2*xdot = Omega_y, zddot = Omega_z.
    """
    sv = _as_state6(state)
    gx, gy, gz = effective_potential_gradient(sv[:3], mu)
    return np.array([sv[3], sv[4], sv[5],
                     2.0 * sv[4] + gx,
                     -2.0 * sv[3] + gy,
                     gz])


def ertbp_field(state, f: float, mu: float, ecc: float) -> np.ndarray:
    """ERTBP vector field in the pulsating frame: d/df of the state.

    The right-hand sides carry the factor 1/(1 + e cos f); the out-of-plane
    equation has the extra restoring term -(e cos f / (1 + e cos f)) z.
    The field is 2*pi-periodic in f and reduces to `crtbp_field` at ecc=0.
    """
    sv = _as_state6(state)
    gx, gy, gz = effective_potential_gradient(sv[:3], mu)
    ec = ecc * math.cos(f)
    den = 1.0 + ec
    return np.array([sv[3], sv[4], sv[5],
                     2.0 * sv[4] + gx / den,
                     -2.0 * sv[3] + gy / den,
                     gz / den - (ec / den) * sv[2]])


def ertbp_invariant_relation(state, f: float, accumulated_integral: float,
                             mu: float, ecc: float) -> float:
    """Invariant relation of the elliptic problem.

    calC = 2*Omega/(1 + e cos f) - 2 e * I - speed^2, where I is the path
    integral of Omega sin f / (1 + e cos f)^2 accumulated along the
    trajectory from f=0 (zero when evaluated at f=0, e.g. on the
    stroboscopic section).  Reduces to `jacobi_constant` at ecc=0.
    """
    sv = _as_state6(state)
    speed2 = sv[3] ** 2 + sv[4] ** 2 + sv[5] ** 2
    om = effective_potential(sv[:3], mu)
    return (2.0 * om / (1.0 + ecc * math.cos(f))
            - 2.0 * ecc * accumulated_integral - speed2)


def hill_region_contains(pos, C: float, mu: float) -> bool:
    """True iff `pos` is in the admissible region at level C: 2*Omega >= C."""
    return 2.0 * effective_potential(pos, mu) >= C


def mirror_state(state: PhaseState) -> PhaseState:
    """Time-reversal mirror (s,x,y,z,vx,vy,vz) -> (-s,x,-y,-z,-vx,vy,vz).

    An involution: applying it twice returns the input.  It conjugates the
    flow to the backward flow, which is what makes perpendicular x-axis
    crossings usable as seeds for symmetric periodic orbits.
    """
    if not isinstance(state, PhaseState):
        state = PhaseState.from_array(np.asarray(state, dtype=float))
    return PhaseState(state.x, -state.y, -state.z,
                      -state.vx, state.vy, state.vz, -state.s)


@dataclass(frozen=True)
class EquilibriumSet:
    """The five Lagrangian points with linear-stability flags.

    Index convention (matching the geometry of the Sun-Jupiter figure):
    L1 between the primaries, L2 beyond P2, L3 beyond P1 on the positive
    x-axis, L4/L5 the triangular points at y = +/- sqrt(3)/2.
    """

    points: np.ndarray       # shape (5, 3)
    stable: np.ndarray       # shape (5,), bool
    mu: float

    def __getitem__(self, i: int) -> np.ndarray:
        # 1-based to keep the customary names L1..L5
        return self.points[i - 1]


def _collinear_stable(x: float, mu: float) -> bool:
    # planar linearisation at an on-axis point; a positive real eigenvalue
    # flags instability
    r1, r2 = primary_distances((x, 0.0, 0.0), mu)
    f1 = (1.0 - mu) / r1 ** 3
    f2 = mu / r2 ** 3
    oxx = 1.0 + 2.0 * (f1 + f2)
    oyy = 1.0 - (f1 + f2)
    a = np.array([[0.0, 0.0, 1.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0],
                  [oxx, 0.0, 0.0, 2.0],
                  [0.0, oyy, -2.0, 0.0]])
    eig = np.linalg.eigvals(a)
    return bool(np.all(np.abs(eig.real) < 1e-9))


def lagrange_points(mu: float, grad_tol: float = 1e-14) -> EquilibriumSet:
    """Locate L1..L5 and flag their linear stability.

    The collinear points are bracketed on the three x-axis intervals
    separated by the primaries and refined by bisection (brentq) plus a
    Newton polish on Omega_x until |grad Omega| < `grad_tol`.  The
    triangular points are analytic and stable iff mu < mu_Routh.

    Raises
    ------
    ConvergenceError
        If a bracket fails to produce a root at the requested tolerance.
    """
    if not 0.0 < mu < 0.5:
        raise ValueError(f"mu must be in (0, 1/2), got {mu}")

    def omx(x):
        return effective_potential_gradient((x, 0.0, 0.0), mu)[0]

    def omxx(x):
        r1, r2 = primary_distances((x, 0.0, 0.0), mu)
        return (1.0 + 2.0 * (1.0 - mu) / r1 ** 3 + 2.0 * mu / r2 ** 3)

    eps = 1e-9
    brackets = [
        (mu - 1.0 + eps, mu - eps),    # L1 between the primaries
        (-3.0, mu - 1.0 - eps),        # L2 beyond P2
        (mu + eps, 3.0),               # L3 beyond P1
    ]
    xs = []
    for lo, hi in brackets:
        try:
            x = brentq(omx, lo, hi, xtol=1e-15, rtol=8.9e-16)
        except ValueError as exc:
            raise ConvergenceError(f"collinear bracketing failed on ({lo}, {hi})") from exc
        for _ in range(8):
            g = omx(x)
            if abs(g) < grad_tol:
                break
            x -= g / omxx(x)
        if abs(omx(x)) > grad_tol * 10.0:
            raise ConvergenceError(f"collinear polish stalled at x={x}")
        xs.append(x)

    tri_y = math.sqrt(3.0) / 2.0
    points = np.array([
        [xs[0], 0.0, 0.0],
        [xs[1], 0.0, 0.0],
        [xs[2], 0.0, 0.0],
        [mu - 0.5, tri_y, 0.0],
        [mu - 0.5, -tri_y, 0.0],
    ])
    tri_stable = mu < MU_ROUTH
    stable = np.array([
        _collinear_stable(xs[0], mu),
        _collinear_stable(xs[1], mu),
        _collinear_stable(xs[2], mu),
        tri_stable,
        tri_stable,
    ])
    return EquilibriumSet(points=points, stable=stable, mu=mu)


class ForbiddenRegionError(ValueError):
    """Requested state lies outside the admissible Hill region."""


def velocity_from_jacobi(x: float, xdot: float, C: float, mu: float) -> float:
    """The negative ydot completing (x, 0, xdot, .) to Jacobi constant C.

    Raises
    ------
    ForbiddenRegionError
        If no real ydot exists (radicand negative).
    """
    rad = 2.0 * effective_potential((x, 0.0, 0.0), mu) - xdot * xdot - C
    if rad < 0.0:
        raise ForbiddenRegionError(
            f"(x, xdot) = ({x}, {xdot}) inadmissible at C = {C}")
    return -math.sqrt(rad)
