"""Symmetric periodic orbits around the first primary: differential
correction, continuation in the Jacobi constant and monodromy stability.

The family of interest is the eccentric 3:2-resonant one that underlies the
Hilda region: orbits crossing the negative x-axis perpendicularly at
perihelion, whose three aphelion lobes point at L3/L4/L5.  Members are
corrected by a two-unknown shooting on the half period, which exploits the
x-axis mirror symmetry: a trajectory leaving one perpendicular crossing and
arriving at another closes into a symmetric periodic orbit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .integrate import integrate
from .model import (
    ConvergenceError,
    ForbiddenRegionError,
    ModelSpec,
    PhaseState,
    crtbp_field,
    effective_potential_gradient,
    velocity_from_jacobi,
)

# semi-major axis of the 3:2 interior resonance, (2/3)^(2/3)
A_RESONANCE = (2.0 / 3.0) ** (2.0 / 3.0)


@dataclass(frozen=True)
class PeriodicOrbit:
    """A corrected symmetric periodic orbit of the planar CRTBP."""

    mu: float
    C: float
    x0: float
    ydot0: float
    period: float
    residual: float              # full-period closure error, max-norm
    monodromy: np.ndarray = field(repr=False)

    @property
    def seed(self) -> PhaseState:
        return PhaseState(self.x0, 0.0, 0.0, 0.0, self.ydot0, 0.0, 0.0)

    @property
    def stability_index(self) -> float:
        """k = lambda + 1/lambda of the nontrivial pair, from trace(M) - 2."""
        return float(np.trace(self.monodromy)) - 2.0

    @property
    def stable(self) -> bool:
        return abs(self.stability_index) <= 2.0 + 1e-9

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.monodromy)

    @property
    def normal_frequency(self) -> float:
        """Normal frequency per unit time, arg(lambda)/T with the eigenvalue
        branch of negative imaginary part (arg in (pi, 2*pi)); lies near 0.5
        across the Hilda window."""
        k = self.stability_index
        if abs(k) > 2.0:
            return float("nan")
        alpha = math.acos(max(-1.0, min(1.0, 0.5 * k)))
        return (2.0 * math.pi - alpha) / self.period


def two_body_guess(C: float, mu: float,
                   branch: str = "perihelion") -> tuple[float, float]:
    """Seed (x0, half_period) from the two-body picture of the resonance.

    The Tisserand relation C ~ 1/a + 2*sqrt(a(1-e^2)) at the resonant
    semi-major axis gives the orbit eccentricity; the perpendicular
    crossing on the negative x-axis sits at perihelion x0 = -a(1-e) for
    the stable Hilda branch, or at aphelion x0 = -a(1+e) for its unstable
    companion (whose periods lie slightly above 4*pi).
    """
    s = (C - 1.0 / A_RESONANCE) / (2.0 * math.sqrt(A_RESONANCE))
    e2 = 1.0 - s * s
    e = math.sqrt(e2) if e2 > 0.0 else 0.0
    if branch == "perihelion":
        return -A_RESONANCE * (1.0 - e), 2.0 * math.pi
    if branch == "aphelion":
        return -A_RESONANCE * (1.0 + e), 2.0 * math.pi
    raise ValueError(f"unknown branch {branch!r}")


def _half_shot(model: ModelSpec, x0: float, tau: float, C: float):
    """Integrate the variational half-period shot from the perpendicular
    lift of (x0, C); returns (y, vx, full state, STM)."""
    ydot0 = velocity_from_jacobi(x0, 0.0, C, model.mu)
    traj = integrate(model, np.array([x0, 0.0, 0.0, ydot0]), 0.0, tau,
                     tol=1e-14, kind="crtbp", variational=True)
    if traj.cause != "reached_end":
        raise ConvergenceError(f"half-period shot terminated: {traj.cause}")
    fin = traj.states[-1]
    M = fin[4:].reshape(4, 4)
    return fin[:4], M, ydot0


def correct_periodic(x0_guess: float, C_target: float, mu: float,
                     tau_guess: float = 2.0 * math.pi,
                     tol: float = 1e-13, max_iter: int = 40) -> PeriodicOrbit:
    """Newton-correct a symmetric periodic orbit at fixed Jacobi constant.

    Shooting unknowns are (x0, half period); the conditions drive y and
    xdot at the half-period point to zero, so the arrival is another
    perpendicular crossing and the mirror symmetry closes the orbit.
    The vy0 completing the perpendicular seed is always reconstructed from
    C_target, which pins the energy level exactly.

    Raises
    ------
    ConvergenceError
        If Newton does not reach `tol` within `max_iter` iterations.
    ForbiddenRegionError
        If the seed leaves the admissible region during correction.
    """
    model = ModelSpec(mu=mu, ecc=0.0)
    x0, tau = float(x0_guess), float(tau_guess)
    for _ in range(max_iter):
        state, M, ydot0 = _half_shot(model, x0, tau, C_target)
        F = np.array([state[1], state[2]])          # y, vx at half period
        if np.max(np.abs(F)) < tol:
            break
        # chain rule through the energy-pinned lift:
        # d(state0)/dx0 = (1, 0, 0, Omega_x/ydot0)
        gx = effective_potential_gradient((x0, 0.0, 0.0), mu)[0]
        dlift = np.array([1.0, 0.0, 0.0, gx / ydot0])
        dF_dx0 = M @ dlift
        f_end = crtbp_field(np.array([state[0], state[1], 0.0,
                                      state[2], state[3], 0.0]), mu)
        J = np.array([[dF_dx0[1], f_end[1]],
                      [dF_dx0[2], f_end[3]]])
        try:
            delta = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular shooting Jacobian") from exc
        step = np.linalg.norm(delta)
        if step > 0.05:
            delta *= 0.05 / step
        x0 += delta[0]
        tau += delta[1]
    else:
        raise ConvergenceError(
            f"periodic-orbit correction stalled at C={C_target}, x0={x0}")

    period = 2.0 * tau
    ydot0 = velocity_from_jacobi(x0, 0.0, C_target, mu)
    full = integrate(model, np.array([x0, 0.0, 0.0, ydot0]), 0.0, period,
                     tol=1e-14, kind="crtbp", variational=True)
    fin = full.states[-1]
    seed4 = np.array([x0, 0.0, 0.0, ydot0])
    residual = float(np.max(np.abs(fin[:4] - seed4)))
    return PeriodicOrbit(mu=mu, C=C_target, x0=x0, ydot0=ydot0,
                         period=period, residual=residual,
                         monodromy=fin[4:].reshape(4, 4).copy())


def monodromy(orbit: PeriodicOrbit, mu: float | None = None) -> np.ndarray:
    """Variational flow over one period from the orbit seed (4x4, planar)."""
    mu = orbit.mu if mu is None else mu
    model = ModelSpec(mu=mu, ecc=0.0)
    traj = integrate(model, np.array([orbit.x0, 0.0, 0.0, orbit.ydot0]),
                     0.0, orbit.period, tol=1e-14, kind="crtbp",
                     variational=True)
    if traj.cause != "reached_end":
        raise ConvergenceError(f"monodromy propagation failed: {traj.cause}")
    return traj.states[-1][4:].reshape(4, 4).copy()


class FamilyTable:
    """Continuation output: an ordered list of corrected family members."""

    def __init__(self, members: list[PeriodicOrbit]):
        self.members = members

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    @property
    def C(self) -> np.ndarray:
        return np.array([m.C for m in self.members])

    @property
    def T(self) -> np.ndarray:
        return np.array([m.period for m in self.members])

    def nearest(self, C: float) -> PeriodicOrbit:
        return self.members[int(np.argmin(np.abs(self.C - C)))]

    def at_level(self, C: float, mu: float | None = None) -> PeriodicOrbit:
        """Correct a member exactly at level C, seeded from the table."""
        best = self.nearest(C)
        return correct_periodic(best.x0, C, mu or best.mu,
                                tau_guess=best.period / 2.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# mu = {self.members[0].mu!r}\n")
            w = csv.writer(fh)
            w.writerow(["C", "T", "x0", "ydot0", "stability_index",
                        "normal_frequency", "residual"])
            for m in self.members:
                w.writerow([repr(float(v)) for v in
                            (m.C, m.period, m.x0, m.ydot0,
                             m.stability_index, m.normal_frequency,
                             m.residual)])


def continue_family(C_start: float, C_end: float, mu: float,
                    dc_max: float = 1e-3, dc_min: float = 1e-6,
                    max_members: int = 4000) -> FamilyTable:
    """Natural-parameter continuation of the family between two C levels.

    Steps adapt within [dc_min, dc_max]; the predictor is a secant through
    the two previous members.  When the corrector keeps failing at dc_min
    (a fold in C), the walk switches to a pseudo-arclength step in
    (x0, C) so turning points are traversed instead of aborting.
    """
    x0g, taug = two_body_guess(C_start, mu)
    members = [correct_periodic(x0g, C_start, mu, tau_guess=taug)]
    direction = 1.0 if C_end >= C_start else -1.0
    dc = dc_max
    while len(members) < max_members:
        last = members[-1]
        if (last.C - C_end) * direction >= 0.0:
            break
        dc = min(dc, abs(C_end - last.C))
        advanced = False
        while dc >= dc_min:
            Cn = last.C + direction * dc
            if len(members) >= 2:
                prev = members[-2]
                slope = (last.x0 - prev.x0) / (last.C - prev.C)
                x0p = last.x0 + slope * (Cn - last.C)
            else:
                x0p = last.x0
            try:
                nxt = correct_periodic(x0p, Cn, mu,
                                       tau_guess=last.period / 2.0)
            except (ConvergenceError, ForbiddenRegionError):
                dc *= 0.5
                continue
            if abs(nxt.x0 - last.x0) > 0.05:
                # corrector jumped to another branch; refine the step
                dc *= 0.5
                continue
            members.append(nxt)
            advanced = True
            dc = min(dc * 2.0, dc_max)
            break
        if not advanced:
            arc = _arclength_step(members, mu)
            if arc is None:
                break
            members.append(arc)
    return FamilyTable(members)


def _arclength_step(members: list[PeriodicOrbit], mu: float,
                    ds: float = 5e-4) -> PeriodicOrbit | None:
    """One pseudo-arclength step in (x0, C) through a fold.

    Returns the new member, or None when even the arclength step fails
    (genuine family termination).
    """
    last = members[-1]
    if len(members) >= 2:
        prev = members[-2]
        tan = np.array([last.x0 - prev.x0, last.C - prev.C])
    else:
        tan = np.array([1e-3, 0.0])
    nrm = np.linalg.norm(tan)
    if nrm == 0.0:
        return None
    tan /= nrm
    model = ModelSpec(mu=mu, ecc=0.0)
    for attempt in range(8):
        step = ds / (2.0 ** attempt)
        x0 = last.x0 + tan[0] * step
        C = last.C + tan[1] * step
        tau = last.period / 2.0
        ok = True
        for _ in range(40):
            try:
                state, M, ydot0 = _half_shot(model, x0, tau, C)
            except (ForbiddenRegionError, ConvergenceError):
                ok = False
                break
            arc = (x0 - last.x0) * tan[0] + (C - last.C) * tan[1] - step
            F = np.array([state[1], state[2], arc])
            if np.max(np.abs(F)) < 1e-12:
                break
            gx = effective_potential_gradient((x0, 0.0, 0.0), mu)[0]
            dlift_x = np.array([1.0, 0.0, 0.0, gx / ydot0])
            dlift_C = np.array([0.0, 0.0, 0.0, -0.5 / ydot0])
            dF_dx0 = M @ dlift_x
            dF_dC = M @ dlift_C
            f_end = crtbp_field(np.array([state[0], state[1], 0.0,
                                          state[2], state[3], 0.0]), mu)
            J = np.array([
                [dF_dx0[1], f_end[1], dF_dC[1]],
                [dF_dx0[2], f_end[3], dF_dC[2]],
                [tan[0], 0.0, tan[1]],
            ])
            try:
                delta = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError:
                ok = False
                break
            x0 += delta[0]
            tau += delta[1]
            C += delta[2]
        else:
            ok = False
        if ok:
            try:
                return correct_periodic(x0, C, mu, tau_guess=tau)
            except (ConvergenceError, ForbiddenRegionError):
                ok = False
    return None
