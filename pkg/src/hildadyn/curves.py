"""Fourier-Newton solvers for invariant curves of the section maps.

Two families of curves are handled:

* invariant curves of the spatial Poincare map of the CRTBP at fixed
  Jacobi constant (librational curves around the resonant periodic orbit),
  symmetry-reduced so x(theta) is even and xdot(theta) odd, with the
  rotation number among the unknowns;

* invariant curves of the 2*pi stroboscopic map of the planar ERTBP
  (slices of 2D tori), with the rotation number fixed by the originating
  periodic orbit (rho = 4*pi^2 / T) during continuation in eccentricity,
  or free when the curve is anchored at a prescribed section point.

Linearised stability comes from the generalised eigenvalue problem of the
map differential against the rotation operator, discretised on a Fourier
grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .model import ConvergenceError, ModelSpec, effective_potential
from .integrate import integrate
from .sections import spatial_map_with_jacobian, strobo_map_with_jacobian


class ResonanceGapError(ConvergenceError):
    """Continuation stalled at a low-order resonance of the rotation number."""

    def __init__(self, message, ecc_stalled=None):
        super().__init__(message)
        self.ecc_stalled = ecc_stalled


@dataclass(frozen=True)
class FourierCurve:
    """Truncated real Fourier representation of an invariant curve."""

    kind: str                    # 'spatial' (dim 2) or 'strobo' (dim 4)
    a0: np.ndarray               # (dim,)
    ak: np.ndarray               # (N, dim)
    bk: np.ndarray               # (N, dim)
    rho: float
    residual: float
    mu: float
    ecc: float
    level: float
    symmetric: bool = True

    @property
    def dim(self) -> int:
        return len(self.a0)

    @property
    def N(self) -> int:
        return len(self.ak)

    def eval(self, theta):
        """Curve point(s); x is even and xdot odd in theta for
        symmetry-reduced curves (their sine/cosine blocks are zero)."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        k = np.arange(1, self.N + 1)
        arg = np.outer(th, k)
        vals = (self.a0[None, :]
                + np.cos(arg) @ self.ak
                + np.sin(arg) @ self.bk)
        return vals[0] if np.ndim(theta) == 0 else vals

    def deriv(self, theta):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        k = np.arange(1, self.N + 1)
        arg = np.outer(th, k)
        vals = (-np.sin(arg) @ (self.ak * k[:, None])
                + np.cos(arg) @ (self.bk * k[:, None]))
        return vals[0] if np.ndim(theta) == 0 else vals

    def tail(self) -> float:
        if self.N == 0:
            return 0.0
        return float(np.abs(self.ak[-1]).max() + np.abs(self.bk[-1]).max())

    def with_modes(self, N: int) -> "FourierCurve":
        """Pad or truncate to N harmonics."""
        ak = np.zeros((N, self.dim))
        bk = np.zeros((N, self.dim))
        m = min(N, self.N)
        ak[:m] = self.ak[:m]
        bk[:m] = self.bk[:m]
        return replace(self, ak=ak, bk=bk)

    def shifted(self, c: float) -> "FourierCurve":
        """Same curve with parameterisation theta -> theta + c."""
        k = np.arange(1, self.N + 1)[:, None]
        ck, sk = np.cos(k * c), np.sin(k * c)
        return replace(self, ak=ck * self.ak + sk * self.bk,
                       bk=-sk * self.ak + ck * self.bk, symmetric=False)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("# hildadyn invariant curve archive\n")
            for key in ("kind", "rho", "residual", "mu", "ecc", "level",
                        "symmetric"):
                fh.write(f"{key} = {getattr(self, key)!r}\n")
            fh.write(f"dim = {self.dim}\n")
            fh.write(f"N = {self.N}\n")
            row = " ".join(repr(float(v)) for v in self.a0)
            fh.write(f"0 {row} {row0_zeros(self.dim)}\n")
            for i in range(self.N):
                ra = " ".join(repr(float(v)) for v in self.ak[i])
                rb = " ".join(repr(float(v)) for v in self.bk[i])
                fh.write(f"{i + 1} {ra} {rb}\n")


def row0_zeros(dim: int) -> str:
    return " ".join(["0.0"] * dim)


def load_curve(path) -> FourierCurve:
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line:
                key, _, val = line.partition("=")
                meta[key.strip()] = val.strip()
            else:
                rows.append([float(v) for v in line.split()])
    dim = int(meta["dim"])
    N = int(meta["N"])
    a0 = np.array(rows[0][1:dim + 1])
    ak = np.array([r[1:dim + 1] for r in rows[1:]]).reshape(N, dim)
    bk = np.array([r[dim + 1:] for r in rows[1:]]).reshape(N, dim)
    return FourierCurve(kind=meta["kind"].strip("'\""), a0=a0, ak=ak, bk=bk,
                        rho=float(meta["rho"]), residual=float(meta["residual"]),
                        mu=float(meta["mu"]), ecc=float(meta["ecc"]),
                        level=float(meta["level"]),
                        symmetric=meta["symmetric"] == "True")


def eval_curve(curve: FourierCurve, theta):
    """Module-level alias of FourierCurve.eval."""
    return curve.eval(theta)


# ---------------------------------------------------------------------------
# spatial-map curves (CRTBP, symmetry-reduced, unknown rotation number)
# ---------------------------------------------------------------------------

def _spatial_residual_and_jacobian(a, b, rho, C, mu, thetas):
    """Invariance residual and dense Jacobian for the reduced representation
    x = a0 + sum a_k cos, xdot = sum b_k sin; unknowns (a, b, rho)."""
    N = len(a) - 1
    n = len(thetas)
    kk = np.arange(1, N + 1)
    cosk = np.cos(np.outer(thetas, kk))
    sink = np.sin(np.outer(thetas, kk))
    x = a[0] + cosk @ a[1:]
    xd = sink @ b
    ts = thetas + rho
    cosks = np.cos(np.outer(ts, kk))
    sinks = np.sin(np.outer(ts, kk))
    xs = a[0] + cosks @ a[1:]
    xds = sinks @ b
    nun = 2 * N + 2
    r = np.empty(2 * n)
    J = np.zeros((2 * n, nun))
    for i in range(n):
        (x1, xd1), dp, _ = spatial_map_with_jacobian(x[i], xd[i], C, mu)
        r[2 * i] = x1 - xs[i]
        r[2 * i + 1] = xd1 - xds[i]
        # a0 column
        J[2 * i, 0] = dp[0, 0] - 1.0
        J[2 * i + 1, 0] = dp[1, 0]
        # a_k columns
        J[2 * i, 1:N + 1] = dp[0, 0] * cosk[i] - cosks[i]
        J[2 * i + 1, 1:N + 1] = dp[1, 0] * cosk[i]
        # b_k columns
        J[2 * i, N + 1:2 * N + 1] = dp[0, 1] * sink[i]
        J[2 * i + 1, N + 1:2 * N + 1] = dp[1, 1] * sink[i] - sinks[i]
        # rho column: -phi'(theta + rho)
        J[2 * i, nun - 1] = (sinks[i] * kk) @ a[1:]
        J[2 * i + 1, nun - 1] = -(cosks[i] * kk) @ b
    return r, J


def solve_spatial_curve(C: float, x_cross: float, mu: float,
                        fixed_point=None, N: int = 16,
                        seed: FourierCurve | None = None,
                        tol: float = 1e-11, max_iter: int = 25,
                        max_modes: int = 1024) -> FourierCurve:
    """Invariant curve of the spatial map through (x_cross, 0) at level C.

    The amplitude is pinned by requiring the curve to cross the symmetry
    axis at x_cross (phi(0) = (x_cross, 0)); the rotation number is an
    unknown of the Newton solve.  `fixed_point` is the (x, xdot=0) family
    point at this C; when omitted it is recomputed from the resonant
    family.  The number of harmonics doubles automatically while the
    Fourier tail exceeds 1e-11, up to `max_modes`.

    Raises
    ------
    ConvergenceError
        On Newton failure (typically near a resonant rotation number).
    """
    if seed is not None:
        a = np.concatenate([[seed.a0[0]], seed.ak[:, 0]])
        b = seed.bk[:, 1].copy()
        N = seed.N
        rho = seed.rho
        # re-pin the axis crossing
        a[0] += x_cross - (a[0] + a[1:].sum())
    else:
        if fixed_point is None:
            from .porbits import correct_periodic, two_body_guess

            x0g, taug = two_body_guess(C, mu)
            po = correct_periodic(x0g, C, mu, tau_guess=taug)
            fixed_point = po.x0
        _, dp, _ = spatial_map_with_jacobian(fixed_point, 0.0, C, mu)
        tr = 0.5 * (dp[0, 0] + dp[1, 1])
        if abs(tr) > 1.0:
            raise ConvergenceError("fixed point is not elliptic at this level")
        # reversibility gives DP = [[cos rho, b], [c, cos rho]] with
        # b*c = -sin^2(rho); the circulation sign (and hence the rho
        # branch and the sine-coefficient sign) follows sign(c)
        rho = math.acos(tr)
        sigma = 1.0
        if dp[1, 0] < 0.0:
            rho = 2.0 * math.pi - rho
            sigma = -1.0
        h = x_cross - fixed_point
        beta = math.sqrt(abs(dp[1, 0] / dp[0, 1])) if dp[0, 1] != 0 else 1.0
        a = np.zeros(N + 1)
        b = np.zeros(N)
        a[0] = fixed_point
        a[1] = h
        b[0] = sigma * h * beta
    thetas = 2.0 * math.pi * np.arange(2 * N + 1) / (2 * N + 1)

    while True:
        converged = False
        for _ in range(max_iter):
            r, J = _spatial_residual_and_jacobian(a, b, rho, C, mu, thetas)
            res = np.max(np.abs(r))
            if res < tol:
                converged = True
                break
            pin = np.zeros(2 * N + 2)
            pin[:N + 1] = 1.0
            rpin = a[0] + a[1:].sum() - x_cross
            Jfull = np.vstack([J, pin])
            rfull = np.concatenate([r, [rpin]])
            delta, *_ = np.linalg.lstsq(Jfull, -rfull, rcond=None)
            nd = np.linalg.norm(delta)
            if nd > 0.1:
                delta *= 0.1 / nd
            a += delta[:N + 1]
            b += delta[N + 1:2 * N + 1]
            rho = (rho + delta[-1]) % (2.0 * math.pi)
        if not converged:
            raise ConvergenceError(
                f"spatial-curve Newton stalled at C={C}, x_cross={x_cross} "
                f"(residual {res:.2e}, N={N})")
        tail = abs(a[-1]) + abs(b[-1])
        if tail < 1e-11 or N >= max_modes:
            break
        N2 = min(2 * N, max_modes)
        a = np.concatenate([a, np.zeros(N2 - N)])
        b = np.concatenate([b, np.zeros(N2 - N)])
        N = N2
        thetas = 2.0 * math.pi * np.arange(2 * N + 1) / (2 * N + 1)

    ak = np.zeros((N, 2))
    bk = np.zeros((N, 2))
    ak[:, 0] = a[1:]
    bk[:, 1] = b
    return FourierCurve(kind="spatial", a0=np.array([a[0], 0.0]), ak=ak,
                        bk=bk, rho=rho, residual=res, mu=mu, ecc=0.0,
                        level=C, symmetric=True)


# ---------------------------------------------------------------------------
# stroboscopic-map curves (ERTBP, dim 4)
# ---------------------------------------------------------------------------

# symmetric structure: x and ydot are even (cosine series), y and xdot odd
_EVEN = (0, 3)
_ODD = (1, 2)


def _pack_sym(a0, ak, bk):
    parts = [a0[[0, 3]]]
    parts.append(ak[:, [0, 3]].ravel())
    parts.append(bk[:, [1, 2]].ravel())
    return np.concatenate(parts)


def _unpack_sym(u, N):
    a0 = np.zeros(4)
    ak = np.zeros((N, 4))
    bk = np.zeros((N, 4))
    a0[[0, 3]] = u[:2]
    ak[:, [0, 3]] = u[2:2 + 2 * N].reshape(N, 2)
    bk[:, [1, 2]] = u[2 + 2 * N:2 + 4 * N].reshape(N, 2)
    return a0, ak, bk


def _strobo_newton(curve: FourierCurve, rho: float, mu: float, ecc: float,
                   tol: float, max_iter: int,
                   anchor: tuple[float, float] | None = None,
                   free_rho: bool = False):
    """Gauss-Newton for the stroboscopic invariance condition.

    Works on the symmetric reduction when curve.symmetric, else on the full
    coefficient set with the phase fixed by zeroing the first sine
    coefficient of x.  With `anchor`, rows pinning x(0) and ydot(0) are
    appended (used with free_rho for double-section fixed points).
    """
    N = curve.N
    sym = curve.symmetric
    a0, ak, bk = curve.a0.copy(), curve.ak.copy(), curve.bk.copy()
    nth = 2 * N + 1
    thetas = 2.0 * math.pi * np.arange(nth) / nth
    kk = np.arange(1, N + 1)

    for it in range(max_iter):
        cosk = np.cos(np.outer(thetas, kk))
        sink = np.sin(np.outer(thetas, kk))
        ts = thetas + rho
        cosks = np.cos(np.outer(ts, kk))
        sinks = np.sin(np.outer(ts, kk))
        phi = a0[None, :] + cosk @ ak + sink @ bk
        phis = a0[None, :] + cosks @ ak + sinks @ bk
        images = np.empty((nth, 4))
        dps = np.empty((nth, 4, 4))
        for i in range(nth):
            images[i], dps[i] = strobo_map_with_jacobian(phi[i], mu, ecc)
        r = (images - phis).ravel()
        res = np.max(np.abs(r))
        if res < tol:
            return a0, ak, bk, rho, res, True
        # assemble Jacobian
        cols = []
        col_index = []
        if sym:
            comps_cos = _EVEN
            comps_sin = _ODD
        else:
            comps_cos = (0, 1, 2, 3)
            comps_sin = (0, 1, 2, 3)
        # a0 columns
        for j in comps_cos:
            col = np.zeros((nth, 4))
            col[:, :] = dps[:, :, j]
            col -= np.eye(4)[j][None, :]
            cols.append(col.ravel())
            col_index.append(("a0", j, 0))
        # cos columns
        for k in range(1, N + 1):
            for j in comps_cos:
                col = dps[:, :, j] * cosk[:, k - 1:k]
                col -= np.outer(cosks[:, k - 1], np.eye(4)[j])
                cols.append(col.ravel())
                col_index.append(("a", j, k))
        # sin columns
        for k in range(1, N + 1):
            for j in comps_sin:
                col = dps[:, :, j] * sink[:, k - 1:k]
                col -= np.outer(sinks[:, k - 1], np.eye(4)[j])
                cols.append(col.ravel())
                col_index.append(("b", j, k))
        if free_rho:
            dphis = (-sinks * kk[None, :]) @ ak + (cosks * kk[None, :]) @ bk
            cols.append(-dphis.ravel())
            col_index.append(("rho", -1, 0))
        J = np.column_stack(cols)
        rows = [r]
        extra_rows = []
        if anchor is not None:
            # x(0) and ydot(0) pins: theta=0 values are plain coefficient sums
            for j, target in ((0, anchor[0]), (3, anchor[1])):
                row = np.zeros(J.shape[1])
                for c, (tag, comp, k) in enumerate(col_index):
                    if comp == j and tag in ("a0", "a"):
                        row[c] = 1.0
                extra_rows.append(row)
                rows.append([a0[j] + ak[:, j].sum() - target])
        if not sym:
            # phase condition: first sine coefficient of x stays zero
            row = np.zeros(J.shape[1])
            for c, (tag, comp, k) in enumerate(col_index):
                if tag == "b" and comp == 0 and k == 1:
                    row[c] = 1.0
            extra_rows.append(row)
            rows.append([bk[0, 0]])
        if extra_rows:
            J = np.vstack([J] + extra_rows)
        rfull = np.concatenate([np.atleast_1d(x) for x in rows])
        delta, *_ = np.linalg.lstsq(J, -rfull, rcond=None)
        nd = np.linalg.norm(delta)
        if nd > 0.2:
            delta *= 0.2 / nd
        # scatter the update
        pos = 0
        for tag, j, k in col_index:
            if tag == "a0":
                a0[j] += delta[pos]
            elif tag == "a":
                ak[k - 1, j] += delta[pos]
            elif tag == "b":
                bk[k - 1, j] += delta[pos]
            else:
                rho = (rho + delta[pos]) % (2.0 * math.pi)
            pos += 1
    return a0, ak, bk, rho, res, False


def solve_strobo_curve(rho: float, seed_curve: FourierCurve, mu: float,
                       ecc: float, tol: float = 1e-11,
                       max_iter: int = 30) -> FourierCurve:
    """Invariant curve of the stroboscopic map at fixed rotation number.

    `rho` is known a priori (4*pi^2/T for curves born from a CRTBP
    periodic orbit); the Newton unknowns are the Fourier coefficients
    alone.  Non-convergence is the expected signature of the Cantor gaps
    at low-order resonances of rho with 2*pi.
    """
    a0, ak, bk, rho, res, ok = _strobo_newton(
        seed_curve, rho, mu, ecc, tol, max_iter)
    if not ok:
        raise ConvergenceError(
            f"stroboscopic-curve Newton stalled (residual {res:.2e})")
    return FourierCurve(kind="strobo", a0=a0, ak=ak, bk=bk, rho=rho,
                        residual=res, mu=mu, ecc=ecc,
                        level=_level_at_origin(a0, ak, mu, ecc),
                        symmetric=seed_curve.symmetric)


def _level_at_origin(a0, ak, mu, ecc) -> float:
    """Invariant-relation value at phi(0) with zero path integral."""
    p = a0 + ak.sum(axis=0)
    om = effective_potential((p[0], p[1], 0.0), mu)
    return float(2.0 * om / (1.0 + ecc) - (p[2] ** 2 + p[3] ** 2))


def solve_strobo_curve_anchored(x_anchor: float, level: float, mu: float,
                                ecc: float, seed_curve: FourierCurve | None = None,
                                tol: float = 1e-10,
                                max_iter: int = 40) -> FourierCurve:
    """Symmetric stroboscopic curve through (x_anchor, y=0, xdot=0) at a
    prescribed invariant-relation level; the rotation number is free.

    This is the double-section 'fixed point' construction: the anchored
    point has ydot < 0 reconstructed from the level.
    """
    rad = 2.0 * effective_potential((x_anchor, 0.0, 0.0), mu) / (1.0 + ecc) - level
    if rad < 0.0:
        from .model import ForbiddenRegionError

        raise ForbiddenRegionError(f"anchor x={x_anchor} outside level {level}")
    ydot = -math.sqrt(rad)
    if seed_curve is None:
        from .porbits import correct_periodic, two_body_guess

        x0g, taug = two_body_guess(level, mu)
        po = correct_periodic(x0g, level, mu, tau_guess=taug)
        seed_curve = continue_in_eccentricity(po, ecc)[-1]
    a0, ak, bk, rho, res, ok = _strobo_newton(
        seed_curve, seed_curve.rho, mu, ecc, tol, max_iter,
        anchor=(x_anchor, ydot), free_rho=True)
    if not ok:
        raise ConvergenceError(
            f"anchored stroboscopic Newton stalled (residual {res:.2e})")
    return FourierCurve(kind="strobo", a0=a0, ak=ak, bk=bk, rho=rho,
                        residual=res, mu=mu, ecc=ecc,
                        level=_level_at_origin(a0, ak, mu, ecc),
                        symmetric=True)


def curve_from_periodic_orbit(po, n_modes: int | None = None,
                              tol: float = 1e-14) -> FourierCurve:
    """The e = 0 stroboscopic invariant curve carried by a periodic orbit.

    phi(theta) is the orbit state at time theta * T / (2*pi); its Fourier
    coefficients come from an FFT of dense samples.  The perpendicular
    crossing at theta = 0 makes the representation symmetric (x, ydot
    cosine-only; y, xdot sine-only).
    """
    model = ModelSpec(mu=po.mu, ecc=0.0)
    M = 512
    traj = integrate(model, po.seed.to_array(), 0.0, po.period, tol=tol)
    th = np.arange(M) / M
    samples = traj(th * po.period)[:, [0, 1, 3, 4]]
    coef = np.fft.rfft(samples, axis=0) / M
    a0 = coef[0].real.copy()
    ak_full = 2.0 * coef[1:].real
    bk_full = -2.0 * coef[1:].imag
    mags = np.abs(ak_full) + np.abs(bk_full)
    keep = np.nonzero(mags.max(axis=1) > 1e-13)[0]
    N = n_modes or (int(keep[-1]) + 1 if len(keep) else 1)
    N = min(N, M // 2 - 1)
    ak = ak_full[:N].copy()
    bk = bk_full[:N].copy()
    # enforce the exact symmetric structure (components are odd/even by the
    # perpendicular-crossing symmetry; discard FFT noise)
    ak[:, [1, 2]] = 0.0
    bk[:, [0, 3]] = 0.0
    a0[[1, 2]] = 0.0
    rho = 4.0 * math.pi ** 2 / po.period
    curve = FourierCurve(kind="strobo", a0=a0, ak=ak, bk=bk, rho=rho,
                         residual=float("nan"), mu=po.mu, ecc=0.0,
                         level=po.C, symmetric=True)
    return curve


def continue_in_eccentricity(po, ecc_target: float = 0.04869,
                             steps: int = 50, tol: float = 1e-11,
                             min_step_frac: float = 1.0 / 64.0,
                             keep_trace: bool = False):
    """Homotopy of the orbit's stroboscopic curve from e = 0 to ecc_target
    at fixed rho = 4*pi^2 / T.

    Returns the list of accepted curves (all of them when `keep_trace`,
    else first and last).  A step that keeps failing after bisection down
    to min_step_frac of the nominal step raises ResonanceGapError carrying
    the stalled eccentricity.
    """
    rho = 4.0 * math.pi ** 2 / po.period
    curve = curve_from_periodic_orbit(po)
    curve = solve_strobo_curve(rho, curve, po.mu, 0.0, tol=tol)
    out = [curve]
    de_nominal = ecc_target / steps
    e = 0.0
    de = de_nominal
    while e < ecc_target - 1e-15:
        de = min(de, ecc_target - e)
        try:
            nxt = solve_strobo_curve(rho, out[-1], po.mu, e + de, tol=tol)
        except ConvergenceError:
            if de <= de_nominal * min_step_frac:
                raise ResonanceGapError(
                    f"eccentricity continuation stalled near e={e + de}",
                    ecc_stalled=e + de)
            de *= 0.5
            continue
        e += de
        if keep_trace or len(out) == 1:
            out.append(nxt)
        else:
            out[-1] = nxt
        de = min(de * 2.0, de_nominal)
    return out


# ---------------------------------------------------------------------------
# linear stability of invariant curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveStability:
    eigenvalues: np.ndarray
    classification: str            # 'elliptic' | 'hyperbolic' | 'mixed'
    max_modulus_deviation: float
    conditioning: float = field(default=0.0)


def curve_stability(curve: FourierCurve, mu: float, ecc: float,
                    pad: int = 8, tol_elliptic: float = 1e-8,
                    tail_fraction: float = 1e-12) -> CurveStability:
    """Generalised eigenproblem DP(phi(theta)) psi = lambda psi(theta+rho)
    on a Fourier grid.

    The exact spectrum consists of circles {lambda_j e^(i k rho)}; the
    discretisation resolves the members whose eigenfunctions are
    band-limited within the grid.  Eigenpairs whose eigenfunctions carry
    more than `tail_fraction` of their energy in the upper half of the
    modes are truncation artifacts and are discarded before classifying.
    The curve is elliptic when every retained modulus sits on the unit
    circle within `tol_elliptic`.
    """
    K = curve.N + pad
    M = 2 * K + 1
    thetas = 2.0 * math.pi * np.arange(M) / M
    phi = curve.eval(thetas)
    A = np.zeros((4 * M, 4 * M))
    for i in range(M):
        _, dp = strobo_map_with_jacobian(phi[i], mu, ecc, tol=1e-14)
        A[4 * i:4 * i + 4, 4 * i:4 * i + 4] = dp
    # rotation operator on grid values via trigonometric interpolation
    freqs = np.concatenate([np.arange(0, K + 1), np.arange(-K, 0)])
    W = np.exp(-1j * np.outer(freqs, thetas)) / M
    E = np.exp(1j * np.outer(thetas + curve.rho, freqs))
    S = E @ W
    B = np.kron(S, np.eye(4))
    ev, vr = scipy.linalg.eig(A, B, right=True)
    good = np.isfinite(ev)
    psi = vr[:, good].T.reshape(-1, M, 4)
    spec = np.fft.fft(psi, axis=1)
    power = np.sum(np.abs(spec) ** 2, axis=2)
    hi = np.abs(freqs) > K // 2
    frac = power[:, hi].sum(axis=1) / power.sum(axis=1)
    keep = frac < tail_fraction
    ev = ev[good][keep]
    mods = np.abs(ev)
    dev = float(np.max(np.abs(mods - 1.0))) if len(ev) else float("inf")
    if dev <= tol_elliptic:
        cls = "elliptic"
    elif np.any(mods > 1.0 + tol_elliptic):
        cls = "hyperbolic"
    else:
        cls = "mixed"
    cond = float(np.linalg.cond(S))
    return CurveStability(eigenvalues=ev, classification=cls,
                          max_modulus_deviation=dev, conditioning=cond)


def point_to_curve_distance(curve: FourierCurve, points: np.ndarray,
                            coarse: int = 4096) -> np.ndarray:
    """Distance of each point to the curve in its first two components,
    refined past the coarse sampling by Newton on the squared distance."""
    pts = np.asarray(points, dtype=float)[:, :2]
    ths = 2.0 * math.pi * np.arange(coarse) / coarse
    cp = curve.eval(ths)[:, :2]
    from scipy.spatial import cKDTree

    _, idx = cKDTree(cp).query(pts)
    th = ths[idx]
    for _ in range(40):
        c = curve.eval(th)[:, :2]
        dc = curve.deriv(th)[:, :2]
        diff = c - pts
        g = np.sum(diff * dc, axis=1)
        # second derivative of the half squared distance
        h = 1e-6
        dc2 = (curve.deriv(th + h)[:, :2] - curve.deriv(th - h)[:, :2]) / (2 * h)
        hess = np.sum(dc * dc, axis=1) + np.sum(diff * dc2, axis=1)
        hess = np.where(np.abs(hess) < 1e-14, 1e-14, hess)
        step = g / hess
        step = np.clip(step, -2.0 * math.pi / coarse, 2.0 * math.pi / coarse)
        th = th - step
        if np.max(np.abs(step)) < 1e-14:
            break
    return np.linalg.norm(curve.eval(th)[:, :2] - pts, axis=1)


# ---------------------------------------------------------------------------
# rotation-number estimation from iterates (independent oracle)
# ---------------------------------------------------------------------------

def rotation_number_estimate(points: np.ndarray) -> float:
    """Rotation number from map iterates on a closed curve.

    Averages the angular advance about the centroid with a smooth
    exponential bump weight, which converges superpolynomially for
    Diophantine rotation numbers (far faster than plain averaging).
    Iterates on an order-k island chain yield approximately 2*pi*p/k.

    Raises
    ------
    ValueError
        If the point set does not circulate about its centroid.
    """
    pts = np.asarray(points, dtype=float)[:, :2]
    n = len(pts)
    if n < 8:
        raise ValueError("need at least 8 iterates")
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    inc = np.diff(ang) % (2.0 * math.pi)
    med = np.median(inc)
    # recentre increments on the median to avoid wrap tearing
    inc = (inc - med + math.pi) % (2.0 * math.pi) - math.pi + med
    if np.median(np.abs(inc)) < 1e-12:
        raise ValueError("point set does not circulate")
    t = (np.arange(len(inc)) + 0.5) / len(inc)
    w = np.exp(-1.0 / (t * (1.0 - t)))
    rho = float(np.sum(w * inc) / np.sum(w)) % (2.0 * math.pi)
    return rho
