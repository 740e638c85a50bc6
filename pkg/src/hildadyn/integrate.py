"""Trajectory integration API: dense trajectories, section crossings,
uniform sampling and collision bookkeeping.

The heavy lifting happens in `hildadyn.taylor`; this layer owns the
`Trajectory` container with its dense output, the event machinery used by
the Poincare constructions and the sample tables consumed by the frequency
analysis.  Long runs (the 2^20-unit protocol) should use the streaming
helpers `integrate_and_sample` / `strobo_states` / `section_crossings`,
which never materialise per-step polynomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import taylor
from .constants import DEFAULTS, ESCAPE_RADIUS
from .model import ModelSpec, PhaseState, _as_state6

_CHUNK = 16384

_CAUSES = {
    taylor.OK: "reached_end",
    taylor.COLLISION_SUN: "collision_sun",
    taylor.COLLISION_JUPITER: "collision_jupiter",
    taylor.ESCAPE: "escape",
}


class StepUnderflowError(RuntimeError):
    """Step size collapsed, typically very close to a primary."""


class NonFiniteStateError(RuntimeError):
    """The integration produced a non-finite state."""


class SpanTooShortError(ValueError):
    """Requested samples extend beyond the trajectory span."""


@dataclass(frozen=True)
class CollisionRule:
    """Adimensional collision radii of the two primaries."""

    radius_sun: float = DEFAULTS.radius_sun
    radius_jupiter: float = DEFAULTS.radius_jupiter

    def __post_init__(self):
        for r in (self.radius_sun, self.radius_jupiter):
            if not 0.0 < r < 0.01:
                raise ValueError(f"collision radius {r} outside (0, 0.01)")


def _kind_for(model: ModelSpec, kind: str | None, variational: bool) -> int:
    if kind is None:
        kind = "ertbp" if model.is_elliptic else "crtbp"
    if kind == "crtbp":
        return taylor.KIND_CRTBP_VAR if variational else taylor.KIND_CRTBP
    if kind == "ertbp":
        return taylor.KIND_ERTBP_VAR if variational else taylor.KIND_ERTBP
    raise ValueError(f"unknown field kind {kind!r}")


def _initial_vector(initial, kind: int) -> np.ndarray:
    dim = taylor.DIMS[kind]
    if kind == taylor.KIND_CRTBP:
        return _as_state6(initial).copy()
    if kind == taylor.KIND_ERTBP:
        sv = np.zeros(7)
        sv[:6] = _as_state6(initial)
        return sv
    # variational kinds: planar state + identity flow
    arr = np.asarray(initial, dtype=float)
    if arr.shape == (dim,):
        return arr.copy()
    sv = np.zeros(20)
    if isinstance(initial, PhaseState):
        sv[:4] = initial.to_planar()
    elif arr.shape == (4,):
        sv[:4] = arr
    elif arr.shape == (6,):
        sv[:4] = arr[[0, 1, 3, 4]]
    else:
        raise ValueError(f"bad initial state shape {arr.shape}")
    sv[4:] = np.eye(4).ravel()
    return sv


def _validate_tol(tol: float) -> float:
    if not 1e-16 <= tol <= 1e-8:
        raise ValueError(f"tol must lie in [1e-16, 1e-8], got {tol}")
    return float(tol)


class Trajectory:
    """Dense Taylor trajectory: accepted steps plus per-step polynomials.

    Calling the trajectory evaluates the dense output; `traj(s)` accepts a
    scalar or an array of values of the independent variable inside the
    integrated span and returns state rows (x, y, z, vx, vy, vz).  For
    elliptic runs `integral(s)` returns the co-integrated path integral of
    the invariant relation, accumulated from the start of the trajectory.
    """

    def __init__(self, model, kind, ts, states, coeffs, order, tol, status):
        self.model = model
        self.kind = kind
        self.ts = ts
        self.states = states
        self.coeffs = coeffs
        self.order = order
        self.tol = tol
        self.status = status
        self.cause = _CAUSES.get(status, "error")

    @property
    def s0(self) -> float:
        return self.ts[0]

    @property
    def s_end(self) -> float:
        return self.ts[-1]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return len(self.ts)

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        lo, hi = min(self.s0, self.s_end), max(self.s0, self.s_end)
        if np.any(s < lo - 1e-12) or np.any(s > hi + 1e-12):
            raise ValueError("evaluation outside integrated span")
        fwd = self.s_end >= self.s0
        ts = self.ts if fwd else self.ts[::-1]
        idx = np.searchsorted(ts, s, side="right") - 1
        idx = np.clip(idx, 0, len(self.coeffs) - 1)
        if not fwd:
            idx = len(self.coeffs) - 1 - idx
        return s, idx

    def _eval_rows(self, s, rows):
        scalar = np.isscalar(s) or np.ndim(s) == 0
        s, idx = self._locate(s)
        s = np.atleast_1d(s)
        idx = np.atleast_1d(idx)
        out = np.empty((len(s), len(rows)))
        sig = s - self.ts[idx]
        for j, row in enumerate(rows):
            c = self.coeffs[idx, row, :]          # (m, p+1)
            acc = c[:, -1]
            for k in range(self.order - 1, -1, -1):
                acc = acc * sig + c[:, k]
            out[:, j] = acc
        return out[0] if scalar else out

    def __call__(self, s):
        rows = range(6) if self.kind <= taylor.KIND_ERTBP else range(4)
        return self._eval_rows(s, list(rows))

    def integral(self, s):
        if self.kind != taylor.KIND_ERTBP:
            raise ValueError("integral is only carried by elliptic runs")
        v = self._eval_rows(s, [6])
        return v[0] if np.ndim(v) == 1 else v[:, 0]

    def state(self, s) -> PhaseState:
        v = np.atleast_2d(self(s))[0]
        if self.kind >= taylor.KIND_CRTBP_VAR:
            return PhaseState(v[0], v[1], 0.0, v[2], v[3], 0.0, float(s))
        return PhaseState(*v, float(s))

    def to_csv(self, path) -> None:
        """Step-point dump with a header carrying the model spec and tol."""
        import csv

        labels = (["x", "y", "z", "vx", "vy", "vz"]
                  if self.kind <= taylor.KIND_ERTBP else ["x", "y", "vx", "vy"])
        ncol = len(labels)
        with open(path, "w", newline="") as fh:
            fh.write(f"# mu = {self.model.mu!r}\n")
            fh.write(f"# ecc = {self.model.ecc!r}\n")
            fh.write(f"# tol = {self.tol!r}\n")
            fh.write(f"# cause = {self.cause}\n")
            writer = csv.writer(fh)
            writer.writerow(["s"] + labels)
            for t, row in zip(self.ts, self.states):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row[:ncol]])


def integrate(field: ModelSpec, initial, s0: float, s1: float, tol: float = 1e-14,
              collision: CollisionRule | None = None, kind: str | None = None,
              variational: bool = False,
              escape_radius: float = ESCAPE_RADIUS) -> Trajectory:
    """Integrate `field` from s0 to s1 with dense output.

    The local error per step is kept below `tol` (valid range
    [1e-16, 1e-8]).  Integration stops early when the trajectory enters a
    collision sphere or leaves the escape radius; the cause is recorded on
    the returned `Trajectory`.

    Raises
    ------
    StepUnderflowError, NonFiniteStateError
        On numerical breakdown (usually a near-singularity approach).
    """
    tol = _validate_tol(tol)
    rule = collision or CollisionRule()
    ikind = _kind_for(field, kind, variational)
    dim = taylor.DIMS[ikind]
    p = taylor.order_for_tol(tol)
    sv = _initial_vector(initial, ikind)
    rs2, rj2 = rule.radius_sun ** 2, rule.radius_jupiter ** 2
    resc2 = escape_radius ** 2
    W = np.empty((40, p + 2))

    ts_parts, st_parts, co_parts = [], [], []
    t = float(s0)
    status = taylor.OK
    while True:
        ts = np.empty(_CHUNK + 1)
        states = np.empty((_CHUNK + 1, dim))
        coeffs = np.empty((_CHUNK, dim, p + 1))
        n, status, t = taylor._drive_store(
            ikind, sv, t, float(s1), tol, field.mu, field.ecc,
            rs2, rj2, resc2, p, ts, states, coeffs, W)
        first = not ts_parts
        sl = slice(0, n + 1) if first else slice(1, n + 1)
        ts_parts.append(ts[sl].copy())
        st_parts.append(states[sl].copy())
        co_parts.append(coeffs[:n].copy())
        if status != taylor.CAP_REACHED:
            break
        sv = states[n].copy()
    if status == taylor.STEP_UNDERFLOW:
        raise StepUnderflowError(f"step size underflow at s={t}")
    if status == taylor.NONFINITE:
        raise NonFiniteStateError(f"non-finite state at s={t}")
    return Trajectory(field, ikind,
                      np.concatenate(ts_parts), np.vstack(st_parts),
                      np.concatenate(co_parts), p, tol, status)


def find_crossings(traj: Trajectory, event=None, direction: int = 0,
                   refine_tol: float = 1e-13):
    """Locate zeros of a scalar `event(state6)` on the dense output.

    Each accepted step polynomial is scanned for sign changes, each bracket
    is polished with brentq until |event| < `refine_tol`, and the crossing
    is kept only when the sign of d(event)/ds matches `direction`
    (0 keeps both; exact tangencies never produce a sign change and are
    discarded by construction).

    Returns a list of (s_star, PhaseState).
    """
    if event is None:
        event = lambda sv: sv[1]
    nsub = 12
    out = []
    nsteps = len(traj.coeffs)
    fwd = traj.s_end >= traj.s0
    for i in range(nsteps):
        a, b = traj.ts[i], traj.ts[i + 1]
        if a == b:
            continue
        sigs = np.linspace(0.0, b - a, nsub + 1)
        svs = [_step_state(traj, i, s) for s in sigs]
        vals = [event(sv) for sv in svs]
        for j in range(nsub):
            va, vb = vals[j], vals[j + 1]
            if va == 0.0 and i == 0 and j == 0:
                continue  # seed sitting on the section
            if va * vb < 0.0:
                f = lambda sig: event(_step_state(traj, i, sig))
                sig_star = brentq(f, sigs[j], sigs[j + 1], xtol=1e-15, rtol=8.9e-16)
                if abs(f(sig_star)) > refine_tol:
                    continue
                s_star = a + sig_star
                h = 1e-7 * max(1.0, abs(b - a))
                slope = (f(min(sig_star + h, b - a)) - f(max(sig_star - h, 0.0)))
                if not fwd:
                    slope = -slope
                if direction > 0 and slope <= 0:
                    continue
                if direction < 0 and slope >= 0:
                    continue
                if out and abs(s_star - out[-1][0]) < 1e-10:
                    continue
                st = _step_state(traj, i, sig_star)
                out.append((s_star, PhaseState(*st, s_star)))
    return out


def _step_state(traj: Trajectory, i: int, sigma: float) -> np.ndarray:
    c = traj.coeffs[i]
    res = np.empty(6)
    if traj.kind <= taylor.KIND_ERTBP:
        rows = (0, 1, 2, 3, 4, 5)
    else:
        rows = (0, 1, None, 2, 3, None)
    for j, row in enumerate(rows):
        if row is None:
            res[j] = 0.0
        else:
            acc = c[row, traj.order]
            for k in range(traj.order - 1, -1, -1):
                acc = acc * sigma + c[row, k]
            res[j] = acc
    return res


def sample_uniform(traj: Trajectory, step: float = 1.0, n: int | None = None,
                   signal: str = "xy_complex"):
    """Evaluate the dense output at s_k = s0 + k*step, k = 0..n-1.

    signal 'xy_complex' returns x + i*y; 'states' returns state rows.

    Raises
    ------
    SpanTooShortError
        If the trajectory does not span n*step.
    """
    span = traj.s_end - traj.s0
    if n is None:
        n = int(math.floor(span / step)) + 1
    if (n - 1) * step > span + 1e-9:
        raise SpanTooShortError(
            f"trajectory spans {span}, need {(n - 1) * step}")
    s = traj.s0 + step * np.arange(n)
    rows = traj(s)
    if signal == "states":
        return rows
    return rows[:, 0] + 1j * rows[:, 1]


def integrate_and_sample(field: ModelSpec, initial, n: int, step: float = 1.0,
                         s0: float = 0.0, tol: float = 1e-14,
                         collision: CollisionRule | None = None,
                         kind: str | None = None,
                         escape_radius: float = ESCAPE_RADIUS):
    """Streaming integrate-and-sample for long signal tables.

    Unlike `integrate` + `sample_uniform` this never stores the dense
    steps, so n = 2^20 unit-step samples stay within a few tens of MB.

    Returns (states, n_filled, cause): states has shape (n, dim) and rows
    past n_filled are unset when the run terminated early.
    """
    tol = _validate_tol(tol)
    rule = collision or CollisionRule()
    ikind = _kind_for(field, kind, False)
    dim = taylor.DIMS[ikind]
    p = taylor.order_for_tol(tol)
    sv = _initial_vector(initial, ikind)
    out = np.empty((n, dim))
    W = np.empty((40, p + 2))
    coeffs = np.empty((dim, p + 1))
    filled, status, _ = taylor._drive_sample(
        ikind, sv, float(s0), tol, field.mu, field.ecc,
        rule.radius_sun ** 2, rule.radius_jupiter ** 2, escape_radius ** 2,
        p, n, float(step), out, coeffs, W)
    if status == taylor.STEP_UNDERFLOW:
        raise StepUnderflowError("step size underflow during sampling run")
    if status == taylor.NONFINITE:
        raise NonFiniteStateError("non-finite state during sampling run")
    return out, filled, _CAUSES.get(status, "error")


def section_crossings(field: ModelSpec, initial, s_max: float,
                      direction: int = -1, xlo: float = -np.inf,
                      xhi: float = np.inf, max_events: int = 100000,
                      s0: float = 0.0, t_min: float = 1e-9,
                      tol: float = 1e-13,
                      collision: CollisionRule | None = None,
                      kind: str | None = None, variational: bool = False,
                      escape_radius: float = ESCAPE_RADIUS):
    """Streaming y=0 crossing collector (the production Poincare path).

    Returns (s_values, states, cause); states carry the full integration
    vector (including the variational columns when `variational`).
    """
    tol = _validate_tol(tol)
    rule = collision or CollisionRule()
    ikind = _kind_for(field, kind, variational)
    dim = taylor.DIMS[ikind]
    p = taylor.order_for_tol(tol)
    sv = _initial_vector(initial, ikind)
    out_s = np.empty(max_events)
    out_states = np.empty((max_events, dim))
    W = np.empty((40, p + 2))
    coeffs = np.empty((dim, p + 1))
    nev, status, _ = taylor._drive_events_y(
        ikind, sv, float(s0), float(s0 + s_max), tol, field.mu, field.ecc,
        rule.radius_sun ** 2, rule.radius_jupiter ** 2, escape_radius ** 2,
        p, direction, xlo, xhi, s0 + t_min, max_events, out_s, out_states,
        coeffs, W)
    if status == taylor.STEP_UNDERFLOW:
        raise StepUnderflowError("step size underflow during section run")
    if status == taylor.NONFINITE:
        raise NonFiniteStateError("non-finite state during section run")
    return out_s[:nev].copy(), out_states[:nev].copy(), _CAUSES.get(status, "error")


def strobo_states(field: ModelSpec, initial, periods: int, f0: float = 0.0,
                  tol: float = 1e-13, collision: CollisionRule | None = None):
    """States of an elliptic trajectory at f = f0 + 2*pi*k, k = 0..periods."""
    states, filled, cause = integrate_and_sample(
        field, initial, periods + 1, step=2.0 * math.pi, s0=f0, tol=tol,
        collision=collision, kind="ertbp")
    return states[:filled], cause
