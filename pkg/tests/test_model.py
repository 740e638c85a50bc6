import math

import numpy as np
import pytest
from scipy.optimize import brentq

from hildadyn import (
    ModelSpec,
    PhaseState,
    effective_potential,
    effective_potential_gradient,
    jacobi_constant,
    crtbp_field,
    ertbp_field,
    ertbp_invariant_relation,
    hill_region_contains,
    lagrange_points,
    mirror_state,
)
from hildadyn.model import SingularityError

MU = 9.53881e-4


def _omx_oracle(x, mu=MU):
    # independent on-axis gradient for bracketing-based cross-checks
    d1, d2 = x - mu, x - mu + 1.0
    return x - (1.0 - mu) * d1 / abs(d1) ** 3 - mu * d2 / abs(d2) ** 3


def l3_oracle(mu=MU):
    return brentq(_omx_oracle, mu + 0.5, 2.0, xtol=1e-15)


class TestModelSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModelSpec(mu=0.6)
        with pytest.raises(ValueError):
            ModelSpec(mu=0.0)
        with pytest.raises(ValueError):
            ModelSpec(mu=MU, ecc=1.0)
        assert not ModelSpec(mu=MU, ecc=0.0).is_elliptic
        assert ModelSpec.sun_jupiter_elliptic().is_elliptic


class TestEffectivePotential:
    def test_l4_value_exact(self):
        # forced by C(L4) = 3 with zero velocity
        l4 = (MU - 0.5, math.sqrt(3.0) / 2.0, 0.0)
        assert effective_potential(l4, MU) == pytest.approx(1.5, abs=1e-14)

    def test_z_does_not_enter_centrifugal_term(self):
        # unit z above the first primary: no x^2+y^2 contribution from z
        val = effective_potential((MU, 0.0, 1.0), MU)
        expected = (0.5 * MU ** 2 + (1.0 - MU) / 1.0
                    + MU / math.sqrt(2.0) + 0.5 * MU * (1.0 - MU))
        assert val == pytest.approx(expected, abs=1e-15)
        assert math.isfinite(val)

    def test_l3_matches_independent_root_finder(self):
        # oracle: bracketed root of the on-axis gradient, then the
        # zero-velocity relation Omega = C_L3 / 2
        x3 = l3_oracle()
        c_l3 = 2.0 * effective_potential((x3, 0.0, 0.0), MU)
        assert c_l3 == pytest.approx(3.0019068329826215, abs=1e-12)
        eq = lagrange_points(MU)
        assert 2.0 * effective_potential(eq[3], MU) == pytest.approx(c_l3, abs=1e-13)

    def test_singularity(self):
        with pytest.raises(SingularityError):
            effective_potential((MU, 0.0, 0.0), MU)
        with pytest.raises(SingularityError):
            effective_potential((MU - 1.0, 0.0, 0.0), MU)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12345)
        h = 1e-6
        checked = 0
        while checked < 100:
            pos = rng.uniform(-1.5, 1.5, size=3)
            r1 = np.linalg.norm(pos - np.array([MU, 0, 0]))
            r2 = np.linalg.norm(pos - np.array([MU - 1.0, 0, 0]))
            if min(r1, r2) < 0.05:
                continue
            grad = effective_potential_gradient(pos, MU)
            for ax in range(3):
                dp = pos.copy()
                dm = pos.copy()
                dp[ax] += h
                dm[ax] -= h
                fd = (effective_potential(dp, MU) - effective_potential(dm, MU)) / (2 * h)
                assert grad[ax] == pytest.approx(fd, rel=1e-7, abs=1e-9)
            checked += 1


class TestJacobiConstant:
    def test_l4_exactly_three(self):
        l4 = [MU - 0.5, math.sqrt(3.0) / 2.0, 0.0, 0.0, 0.0, 0.0]
        assert jacobi_constant(l4, MU) == pytest.approx(3.0, abs=1e-14)

    def test_l3_value(self):
        x3 = l3_oracle()
        assert jacobi_constant([x3, 0, 0, 0, 0, 0], MU) == pytest.approx(
            3.0019068329826215, abs=1e-12)

    def test_speed_lowers_c(self):
        pos = (-0.6, 0.1, 0.0)
        rest = jacobi_constant(list(pos) + [0, 0, 0], MU)
        moving = jacobi_constant(list(pos) + [0.1, -0.2, 0.05], MU)
        assert moving < rest


class TestFields:
    def test_equilibria_have_zero_derivative(self):
        eq = lagrange_points(MU)
        for i in range(1, 6):
            state = np.concatenate([eq[i], [0.0, 0.0, 0.0]])
            deriv = crtbp_field(state, MU)
            assert np.max(np.abs(deriv)) < 1e-12

    def test_mirror_symmetry_of_field(self):
        state = np.array([-0.55, 0.2, 0.05, 0.1, -0.8, 0.02])
        mirrored = mirror_state(PhaseState.from_array(state)).to_array()
        d = crtbp_field(state, MU)
        dm = crtbp_field(mirrored, MU)
        # the field at the mirrored point is (-vx, vy, vz, ax, -ay, -az)
        assert dm == pytest.approx([-d[0], d[1], d[2], d[3], -d[4], -d[5]], abs=1e-15)

    def test_acceleration_is_potential_gradient(self):
        state = np.array([0.5, 0.0, 0.0, 0.0, 0.0, 0.0])
        d = crtbp_field(state, MU)
        h = 1e-6
        for ax, idx in ((0, 3), (1, 4), (2, 5)):
            dp = state[:3].copy()
            dm = state[:3].copy()
            dp[ax] += h
            dm[ax] -= h
            fd = (effective_potential(dp, MU) - effective_potential(dm, MU)) / (2 * h)
            assert d[idx] == pytest.approx(fd, abs=1e-8)

    def test_ertbp_reduces_to_crtbp(self):
        state = np.array([-0.6, 0.3, 0.1, 0.2, -0.7, -0.05])
        for f in (0.0, 1.2, 4.0):
            assert ertbp_field(state, f, MU, 0.0) == pytest.approx(
                crtbp_field(state, MU), abs=1e-15)

    def test_lagrange_points_fixed_in_pulsating_frame(self):
        eq = lagrange_points(MU)
        for f in (0.0, 0.7, 3.9):
            state = np.concatenate([eq[4], [0.0, 0.0, 0.0]])
            deriv = ertbp_field(state, f, MU, 0.04869)
            assert np.max(np.abs(deriv)) < 1e-12

    def test_periodic_in_f(self):
        state = np.array([-0.6, 0.3, 0.1, 0.2, -0.7, -0.05])
        a = ertbp_field(state, 0.9, MU, 0.04869)
        b = ertbp_field(state, 0.9 + 2.0 * math.pi, MU, 0.04869)
        assert a == pytest.approx(b, abs=1e-14)


class TestInvariantRelation:
    def test_reduces_to_jacobi(self):
        state = np.array([-0.6, 0.3, 0.0, 0.2, -0.7, 0.0])
        assert ertbp_invariant_relation(state, 1.3, 0.7, MU, 0.0) == pytest.approx(
            jacobi_constant(state, MU), abs=1e-14)

    def test_f_zero_substitution(self):
        state = np.array([-0.6, 0.3, 0.0, 0.2, -0.7, 0.0])
        ecc = 0.04869
        om = effective_potential(state[:3], MU)
        speed2 = np.sum(state[3:] ** 2)
        expected = 2.0 * om / (1.0 + ecc) - speed2
        assert ertbp_invariant_relation(state, 0.0, 0.0, MU, ecc) == pytest.approx(
            expected, abs=1e-15)


class TestLagrangePoints:
    def test_geometry(self):
        eq = lagrange_points(MU)
        assert eq[4] == pytest.approx([MU - 0.5, math.sqrt(3) / 2, 0.0], abs=0)
        assert eq[5] == pytest.approx([MU - 0.5, -math.sqrt(3) / 2, 0.0], abs=0)
        # L3 beyond the first primary on the positive x-axis
        assert eq[3][0] > MU
        assert eq[3][0] == pytest.approx(l3_oracle(), abs=1e-13)
        # L1 between the primaries, L2 beyond the second
        assert MU - 1.0 < eq[1][0] < MU
        assert eq[2][0] < MU - 1.0

    def test_gradient_tolerance(self):
        eq = lagrange_points(MU)
        for i in range(1, 6):
            g = effective_potential_gradient(eq[i], MU)
            assert np.max(np.abs(g)) < 1e-13

    def test_triangular_stability_flags(self):
        assert lagrange_points(MU).stable[3:].all()
        assert not lagrange_points(0.04).stable[3:].any()
        # collinear points are never stable
        assert not lagrange_points(MU).stable[:3].any()


class TestHillRegion:
    def test_boundary_case(self):
        l4 = [MU - 0.5, math.sqrt(3.0) / 2.0, 0.0]
        c4 = jacobi_constant(l4 + [0, 0, 0], MU)
        assert hill_region_contains(l4, c4, MU)
        assert not hill_region_contains(l4, c4 + 1e-9, MU)

    def test_far_field(self):
        assert hill_region_contains((5.0, 0.0, 0.0), 3.06, MU)
        assert hill_region_contains((0.0, -7.0, 0.0), 2.98, MU)


class TestMirrorState:
    def test_involution_bitwise(self):
        st = PhaseState(-0.61, 0.23, 0.07, 0.15, -0.82, 0.01, 4.2)
        assert mirror_state(mirror_state(st)) == st

    def test_perpendicular_crossing_is_fixed(self):
        st = PhaseState(-0.61, 0.0, 0.0, 0.0, -0.82, 0.0, 0.0)
        assert mirror_state(st) == st

    def test_sign_pattern(self):
        st = PhaseState(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0)
        m = mirror_state(st)
        assert (m.x, m.y, m.z, m.vx, m.vy, m.vz, m.s) == (1.0, -2.0, -3.0, -4.0, 5.0, 6.0, -7.0)
