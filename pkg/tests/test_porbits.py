import math

import numpy as np
import pytest

from hildadyn import ModelSpec, integrate, jacobi_constant
from hildadyn.porbits import (
    FamilyTable,
    correct_periodic,
    continue_family,
    monodromy,
    two_body_guess,
)

MU = 9.53881e-4
FOURPI = 4.0 * math.pi
THREEPI = 3.0 * math.pi


class TestCorrectPeriodic:
    def test_anchor_period_matches_published_value(self, anchor_orbit):
        assert anchor_orbit.period == pytest.approx(12.53796, abs=1e-4)
        assert anchor_orbit.C == pytest.approx(3.006373, abs=1e-12)
        assert anchor_orbit.residual < 1e-11
        assert anchor_orbit.stable

    def test_closure_over_full_period(self, anchor_orbit, model_circular):
        traj = integrate(model_circular, anchor_orbit.seed.to_array(),
                         0.0, anchor_orbit.period, tol=1e-14)
        err = np.max(np.abs(traj.states[-1, :6] - anchor_orbit.seed.to_array()))
        assert err < 1e-10

    def test_hilda_level_member(self):
        x0, tau = two_body_guess(3.05021, MU)
        po = correct_periodic(x0, 3.05021, MU, tau_guess=tau)
        assert 12.2 < po.period < FOURPI
        assert po.stable

    def test_energy_level_is_pinned(self, anchor_orbit):
        assert jacobi_constant(anchor_orbit.seed.to_array(), MU) == pytest.approx(
            anchor_orbit.C, abs=1e-12)

    def test_time_symmetry_of_orbit(self, anchor_orbit, model_circular):
        # state(T - t) is the mirror of state(t) for a symmetric orbit
        T = anchor_orbit.period
        traj = integrate(model_circular, anchor_orbit.seed.to_array(),
                         0.0, T, tol=1e-14)
        ts = np.linspace(0.1, T / 2.0, 25)
        a = traj(ts)
        b = traj(T - ts)
        flip = np.array([1.0, -1.0, -1.0, -1.0, 1.0, 1.0])
        assert np.max(np.abs(a * flip - b)) < 1e-10


class TestMonodromy:
    def test_determinant_is_one(self, anchor_orbit):
        M = monodromy(anchor_orbit)
        assert abs(np.linalg.det(M) - 1.0) < 1e-9

    def test_eigenvalue_structure(self, anchor_orbit):
        # {1, 1, lambda, 1/lambda}
        ev = np.sort_complex(anchor_orbit.eigenvalues)
        assert np.min(np.abs(ev - 1.0)) < 1e-4
        pair = [z for z in ev if abs(z - 1.0) > 1e-4]
        assert len(pair) == 2
        assert abs(pair[0] * pair[1] - 1.0) < 1e-9

    def test_stable_member_unit_circle_and_normal_frequency(self, anchor_orbit):
        pair = [z for z in anchor_orbit.eigenvalues if abs(z - 1.0) > 1e-4]
        assert all(abs(abs(z) - 1.0) < 1e-7 for z in pair)
        # close to 0.5 near the 4*pi resonance
        assert abs(anchor_orbit.normal_frequency - 0.5) < 0.06

    def test_unstable_window_above_four_pi(self):
        x0, tau = two_body_guess(3.006373, MU, branch="aphelion")
        po = correct_periodic(x0, 3.006373, MU, tau_guess=tau)
        assert 0.0 < po.period - FOURPI < 0.15
        assert not po.stable
        ev = po.eigenvalues
        lam = np.max(np.abs(ev))
        assert lam > 1.0 + 1e-6
        assert abs(np.imag(ev[np.argmax(np.abs(ev))])) < 1e-8


class TestContinueFamily:
    def test_hilda_range_covered_and_stable(self, hilda_family):
        fam = hilda_family
        assert fam.C.min() <= 2.98 + 1e-9
        assert fam.C.max() >= 3.06 - 1e-3
        assert all(m.stable for m in fam)
        assert all(m.residual < 1e-11 for m in fam)

    def test_period_monotone_decreasing_in_c(self, hilda_family):
        order = np.argsort(hilda_family.C)
        T = hilda_family.T[order]
        assert np.all(np.diff(T) < 0.0)

    def test_period_approaches_four_pi_at_low_c(self):
        fam = continue_family(2.975, 2.96, MU)
        assert np.all(fam.T < FOURPI)
        # T grows toward 4*pi as C decreases
        order = np.argsort(fam.C)
        T = fam.T[order]
        assert T[0] > T[-1]
        assert FOURPI - T.max() < 0.02

    def test_high_c_members_are_rounder(self, hilda_family, model_circular):
        # radial spread of the orbit shrinks as C grows (soft, rounded end)
        def roundness(po):
            traj = integrate(model_circular, po.seed.to_array(), 0.0,
                             po.period, tol=1e-12)
            ss = np.linspace(0.0, po.period, 400)
            xy = traj(ss)[:, :2]
            r = np.hypot(xy[:, 0], xy[:, 1])
            return r.std() / r.mean()

        low = hilda_family.nearest(2.985)
        high = hilda_family.nearest(3.055)
        assert roundness(high) < 0.5 * roundness(low)

    def test_unstable_members_near_three_pi(self):
        fam = continue_family(3.085, 3.1, MU)
        window = [m for m in fam if abs(m.period - THREEPI) < 0.3]
        assert window
        assert any(not m.stable for m in window)

    def test_at_level_interpolation(self, hilda_family):
        po = hilda_family.at_level(3.0123)
        assert po.C == pytest.approx(3.0123, abs=1e-12)
        assert po.residual < 1e-11

    def test_table_csv(self, hilda_family, tmp_path):
        path = tmp_path / "family.csv"
        hilda_family.to_csv(path)
        rows = path.read_text().splitlines()
        assert rows[0].startswith("# mu")
        assert rows[1].split(",")[0] == "C"
        assert len(rows) == len(hilda_family) + 2
