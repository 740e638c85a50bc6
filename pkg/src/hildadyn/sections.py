"""Poincare constructions: the Jacobi-parameterised spatial section map on
y = 0, the stroboscopic map of the elliptic problem, and the double
(temporal + spatial) section that reduces 3D tori to closed curves.

The spatial section is y = 0 crossed with vy < 0 and x strictly between the
primaries' abscissae, which avoids the tangency/loop pathologies that a
section anchored near L3 would suffer.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .integrate import integrate, integrate_and_sample, section_crossings, strobo_states
from .model import (
    ConvergenceError,
    ForbiddenRegionError,
    ModelSpec,
    PhaseState,
    _as_state6,
    crtbp_field,
    effective_potential,
    effective_potential_gradient,
    jacobi_constant,
    velocity_from_jacobi,
)


@dataclass(frozen=True)
class SectionPoint:
    """A point of the spatial section: (x, xdot) plus its level constant."""

    x: float
    xdot: float
    level: float
    crossing_index: int = 0


def reconstruct_ydot(x: float, xdot: float, C: float, mu: float) -> float:
    """The unique ydot < 0 completing (x, 0, xdot, .) to Jacobi constant C.

    Raises
    ------
    ForbiddenRegionError
        When (x, xdot) is inadmissible at level C (negative radicand).
    """
    return velocity_from_jacobi(x, xdot, C, mu)


def lift_section_point(x: float, xdot: float, C: float, mu: float) -> np.ndarray:
    """Planar state (x, 0, xdot, ydot(C)) of a section point."""
    return np.array([x, 0.0, xdot, reconstruct_ydot(x, xdot, C, mu)])


@dataclass
class PoincareOrbit:
    """Iterates of the spatial Poincare map from one seed."""

    points: np.ndarray            # (n, 2): x, xdot
    level: float
    cause: str

    def __len__(self):
        return len(self.points)

    def section_points(self) -> list[SectionPoint]:
        return [SectionPoint(p[0], p[1], self.level, i)
                for i, p in enumerate(self.points)]


def spatial_poincare_map(point, C: float, mu: float, iterates: int,
                         tol: float = 1e-13,
                         mean_return_budget: float = 60.0) -> PoincareOrbit:
    """Iterate the section map: next crossings of y=0 with vy<0 and x
    between the primaries, at fixed Jacobi constant.

    `point` is (x, xdot) or a SectionPoint.  Collision or escape cuts the
    sequence short; the cause is recorded on the result.
    """
    if isinstance(point, SectionPoint):
        x, xdot = point.x, point.xdot
    else:
        x, xdot = float(point[0]), float(point[1])
    model = ModelSpec(mu=mu, ecc=0.0)
    state = lift_section_point(x, xdot, C, mu)
    s, st, cause = section_crossings(
        model, state, s_max=iterates * mean_return_budget, direction=-1,
        xlo=mu - 1.0, xhi=mu, max_events=iterates, tol=tol, kind="crtbp")
    return PoincareOrbit(points=st[:, [0, 3]].copy(), level=C, cause=cause)


def spatial_map_with_jacobian(x: float, xdot: float, C: float, mu: float,
                              tol: float = 1e-13):
    """One application of the section map plus its 2x2 differential.

    The differential chains the energy-pinned lift, the variational flow to
    the crossing, and the projection back onto the section:
    DP = S (I - f e_y^T / vy1) M DL.
    Returns ((x1, xdot1), DP, return_time).
    """
    model = ModelSpec(mu=mu, ecc=0.0)
    ydot = reconstruct_ydot(x, xdot, C, mu)
    state = np.zeros(20)
    state[:4] = [x, 0.0, xdot, ydot]
    state[4:] = np.eye(4).ravel()
    s, st, cause = section_crossings(
        model, state, s_max=200.0, direction=-1, xlo=mu - 1.0, xhi=mu,
        max_events=1, tol=tol, kind="crtbp", variational=True)
    if len(s) == 0:
        raise ConvergenceError(f"no section return from (x, xdot)=({x}, {xdot}); cause={cause}")
    fin = st[0]
    z1 = fin[:4]
    M = fin[4:].reshape(4, 4)
    f1 = crtbp_field(np.array([z1[0], z1[1], 0.0, z1[2], z1[3], 0.0]), mu)
    fvec = np.array([f1[0], f1[1], f1[3], f1[4]])
    proj = np.eye(4) - np.outer(fvec, np.array([0.0, 1.0, 0.0, 0.0])) / fvec[1]
    gx = effective_potential_gradient((x, 0.0, 0.0), mu)[0]
    dlift = np.array([[1.0, 0.0],
                      [0.0, 0.0],
                      [0.0, 1.0],
                      [gx / ydot, -xdot / ydot]])
    dp = (proj @ M @ dlift)[[0, 2], :]
    return (z1[0], z1[2]), dp, float(s[0])


def stroboscopic_map(state, mu: float, ecc: float, periods: int,
                     f0: float = 0.0, tol: float = 1e-13) -> np.ndarray:
    """States at f = f0 + 2*pi*k, k = 0..periods (row 0 is the input)."""
    if periods == 0:
        return np.atleast_2d(_as_state6(state)).copy()
    model = ModelSpec(mu=mu, ecc=ecc)
    states, cause = strobo_states(model, _as_state6(state), periods, f0=f0, tol=tol)
    return states[:, :6]


def strobo_map_with_jacobian(state4, mu: float, ecc: float, f0: float = 0.0,
                             tol: float = 1e-13):
    """One stroboscopic period of the planar ERTBP with its 4x4 STM."""
    model = ModelSpec(mu=mu, ecc=ecc)
    sv = np.zeros(20)
    sv[:4] = state4
    sv[4:] = np.eye(4).ravel()
    traj = integrate(model, sv, f0, f0 + 2.0 * math.pi, tol=tol,
                     kind="ertbp", variational=True)
    if traj.cause != "reached_end":
        raise ConvergenceError(f"stroboscopic shot terminated: {traj.cause}")
    fin = traj.states[-1]
    return fin[:4].copy(), fin[4:].reshape(4, 4).copy()


@dataclass
class DoubleSectionSlice:
    """Slice of a trajectory on the double section f=f*, y=0.

    `points` are the (x, xdot) positions interpolated onto y = 0 from
    stroboscopic cuts with |y| <= delta, x < 0 and vy < 0; `ydots` carries
    the interpolated vy, and `levels` the invariant-relation value of each
    point evaluated with zero path integral (exact at f* = 0).
    """

    f_star: float
    delta: float
    points: np.ndarray            # (n, 2)
    ydots: np.ndarray             # (n,)
    levels: np.ndarray            # (n,)
    n_raw: int
    mu: float
    ecc: float

    def __len__(self):
        return len(self.points)

    def to_csv(self, path, asteroid_id: str = "", extra_header: dict | None = None) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# mu = {self.mu!r}\n")
            fh.write(f"# ecc = {self.ecc!r}\n")
            fh.write(f"# f_star = {self.f_star!r}\n")
            fh.write(f"# delta = {self.delta!r}\n")
            for k, v in (extra_header or {}).items():
                fh.write(f"# {k} = {v}\n")
            w = csv.writer(fh)
            w.writerow(["asteroid_id", "x", "xdot", "level", "island_index"])
            islands = label_islands(self.points)
            for p, lev, isl in zip(self.points, self.levels, islands):
                w.writerow([asteroid_id, repr(float(p[0])), repr(float(p[1])),
                            repr(float(lev)), isl])


class EmptySliceWarning(UserWarning):
    pass


def double_section(model: ModelSpec, initial, n_periods: int,
                   f_star: float = 0.0, delta: float = 5e-5,
                   tol: float = 1e-13, pair_radius: float | None = None) -> DoubleSectionSlice:
    """Collect the double-section slice of one elliptic trajectory.

    The trajectory starts at f = 0 from `initial`; its cuts with
    f = f* (mod 2*pi) are exact stroboscopic samples.  Cuts inside the slab
    |y| <= delta (with x < 0, vy < 0) are paired across the section --
    each positive-y point with its geometrically nearest negative-y
    neighbour -- and interpolated linearly in y onto y = 0.

    Issues EmptySliceWarning when no slab pairs occur.
    """
    import warnings

    initial = _as_state6(initial)
    if f_star != 0.0:
        head = integrate(model, initial, 0.0, f_star, tol=tol, kind="ertbp")
        start = head.states[-1][:6]
    else:
        start = initial
    states, filled, cause = integrate_and_sample(
        model, start, n_periods, step=2.0 * math.pi, s0=f_star, tol=tol,
        kind="ertbp")
    states = states[:filled]
    y = states[:, 1]
    mask = (np.abs(y) <= delta) & (states[:, 0] < 0.0) & (states[:, 4] < 0.0)
    slab = states[mask]
    n_raw = len(slab)
    pts, yds = _pair_and_interpolate(slab, delta, pair_radius)
    if len(pts) == 0:
        warnings.warn("no slab pairs on the double section; increase the "
                      "trajectory length or delta", EmptySliceWarning)
    om = np.array([effective_potential((p[0], 0.0, 0.0), model.mu) for p in pts])
    den = 1.0 + model.ecc * math.cos(f_star)
    levels = 2.0 * om / den - (pts[:, 1] ** 2 + yds ** 2) if len(pts) else np.empty(0)
    return DoubleSectionSlice(f_star=f_star, delta=delta, points=pts,
                              ydots=yds, levels=levels, n_raw=n_raw,
                              mu=model.mu, ecc=model.ecc)


def _pair_and_interpolate(slab: np.ndarray, delta: float,
                          pair_radius: float | None):
    """Pair opposite-sign slab points that are neighbours in (x, xdot) and
    zero their y by linear interpolation."""
    if len(slab) == 0:
        return np.empty((0, 2)), np.empty(0)
    pos = slab[slab[:, 1] > 0.0]
    neg = slab[slab[:, 1] <= 0.0]
    if len(pos) == 0 or len(neg) == 0:
        return np.empty((0, 2)), np.empty(0)
    tree = cKDTree(neg[:, [0, 3]])
    dist, idx = tree.query(pos[:, [0, 3]])
    if pair_radius is None:
        pair_radius = 8.0 * np.median(dist)
    keep = dist <= pair_radius
    out_pts = []
    out_yd = []
    for p, ok, j in zip(pos, keep, idx):
        if not ok:
            continue
        q = neg[j]
        t = p[1] / (p[1] - q[1])
        out_pts.append(((1 - t) * p[0] + t * q[0], (1 - t) * p[3] + t * q[3]))
        out_yd.append((1 - t) * p[4] + t * q[4])
    return np.array(out_pts).reshape(-1, 2), np.array(out_yd)


def count_closed_curves(points: np.ndarray, gap_factor: float = 8.0) -> int:
    """Geometric island count: angular gap clustering around the centroid.

    A single closed curve covers the full angular range, so the number of
    abnormally large angular gaps estimates the number of islands in a
    chain (0 large gaps means one curve).
    """
    if len(points) < 4:
        return 1
    c = points.mean(axis=0)
    ang = np.sort(np.arctan2(points[:, 1] - c[1], points[:, 0] - c[0]))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2.0 * math.pi]]))
    med = np.median(gaps)
    return max(1, int(np.sum(gaps > gap_factor * max(med, 1e-15))))


def label_islands(points: np.ndarray, gap_factor: float = 8.0) -> np.ndarray:
    """Island index per point, consistent with `count_closed_curves`."""
    n = len(points)
    if n < 4:
        return np.zeros(n, dtype=int)
    c = points.mean(axis=0)
    ang = np.arctan2(points[:, 1] - c[1], points[:, 0] - c[0])
    order = np.argsort(ang)
    sorted_ang = ang[order]
    gaps = np.diff(np.concatenate([sorted_ang, [sorted_ang[0] + 2.0 * math.pi]]))
    med = np.median(gaps)
    cut = gaps > gap_factor * max(med, 1e-15)
    labels = np.zeros(n, dtype=int)
    current = 0
    for pos in range(n):
        labels[order[pos]] = current
        if cut[pos]:
            current += 1
    if cut[-1]:
        # the wrap gap closes the last cluster onto the first
        labels[labels == current] = 0
    return labels


def island_order(points: np.ndarray, kmax: int = 40, ratio: float = 0.25) -> int:
    """Resonance order from map iterates: the stride k at which iterates
    revisit their island (median k-step displacement collapses)."""
    n = len(points)
    if n < 12:
        return 1
    kmax = min(kmax, n // 3)
    meds = np.array([np.median(np.linalg.norm(points[k:] - points[:-k], axis=1))
                     for k in range(1, kmax + 1)])
    baseline = np.median(meds)
    if baseline <= 0.0:
        return 1
    k_best = int(np.argmin(meds)) + 1
    if k_best > 1 and meds[k_best - 1] < ratio * baseline:
        return k_best
    return 1


@dataclass
class LevelFamily:
    """Level-constant family of seeds on the f=0 double-section axis."""

    level: float
    seeds: np.ndarray             # (n, 6) states at f=0, y=0, xdot=0
    anchor: tuple[float, float]   # (x*, ydot*) of the torus point
    curve: object                 # the anchored invariant curve (FourierCurve)


def axis_crossings_of_slice(sl: DoubleSectionSlice):
    """(x, level) at the xdot = 0 crossings of a slice curve, by angular
    ordering and linear interpolation; sorted by increasing x."""
    pts = sl.points
    if len(pts) < 8:
        raise ValueError("slice too sparse to locate axis crossings")
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    order = np.argsort(ang)
    p = pts[order]
    lev = sl.levels[order]
    out = []
    n = len(p)
    for i in range(n):
        j = (i + 1) % n
        y0, y1 = p[i, 1], p[j, 1]
        if y0 == 0.0:
            out.append((p[i, 0], lev[i]))
        elif y0 * y1 < 0.0:
            t = y0 / (y0 - y1)
            out.append(((1 - t) * p[i, 0] + t * p[j, 0],
                        (1 - t) * lev[i] + t * lev[j]))
    out.sort()
    return out


def generate_level_family(asteroid_slice: DoubleSectionSlice, mu: float,
                          ecc: float, n_seeds: int, dx: float = 4e-3,
                          seed_curve=None) -> LevelFamily:
    """Build constant-level initial conditions around a slice's torus.

    (a) the slice point of minimal level constant at its rightmost
    xdot = 0 crossing fixes the level; (b) the 2D torus (double-section
    fixed point) through that axis point is solved as an anchored
    invariant curve of the stroboscopic map; (c) seeds are emitted along
    the axis with increasing x, each vy < 0 adjusted so the level is kept.
    """
    if asteroid_slice.f_star != 0.0:
        raise ValueError("level families are built on the f* = 0 section")
    crossings = axis_crossings_of_slice(asteroid_slice)
    x_star, level = crossings[-1]          # rightmost axis crossing
    from .curves import solve_strobo_curve_anchored

    curve = solve_strobo_curve_anchored(x_star, level, mu, ecc,
                                        seed_curve=seed_curve)
    x0 = curve.eval(0.0)[0]
    seeds = []
    for j in range(n_seeds):
        xj = x0 + j * dx
        rad = (2.0 * effective_potential((xj, 0.0, 0.0), mu) / (1.0 + ecc)
               - level)
        if rad < 0.0:
            raise ForbiddenRegionError(
                f"seed x={xj} inadmissible at level {level}")
        seeds.append([xj, 0.0, 0.0, 0.0, -math.sqrt(rad), 0.0])
    return LevelFamily(level=level, seeds=np.array(seeds),
                       anchor=(x_star, float(curve.eval(0.0)[3])), curve=curve)


def group_nearest_in_level(levels: np.ndarray, center: float, k: int):
    """Indices of the k entries nearest to `center` (T-PSP grouping)."""
    order = np.argsort(np.abs(np.asarray(levels) - center))
    return np.sort(order[:min(k, len(levels))])
