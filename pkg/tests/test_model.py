"""Geometric model: exponents, passage, maps, roof, suspension."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import lorenzlab as ll
from lorenzlab.errors import (
    NotLorenzLikeError,
    PreconditionError,
    SingularLineError,
)
from lorenzlab.model import check_model_values

NONZERO_X = st.floats(min_value=1e-6, max_value=0.5).flatmap(
    lambda v: st.sampled_from([v, -v]))


class TestExponents:
    def test_classical_ratios(self):
        # oracle: plain ratio arithmetic on the quoted saddle eigenvalues
        alpha, beta = ll.derive_exponents(11.8277, -22.8277, -8.0 / 3.0)
        assert alpha == pytest.approx(-(-8.0 / 3.0) / 11.8277, abs=1e-15)
        assert beta == pytest.approx(22.8277 / 11.8277, abs=1e-15)
        assert alpha == pytest.approx(0.22546, abs=1e-5)
        assert beta == pytest.approx(1.93002, abs=1e-5)
        assert 0.0 < alpha < 1.0 < beta

    def test_boundary_rejected(self):
        with pytest.raises(NotLorenzLikeError):
            ll.derive_exponents(11.83, -22.83, -11.83)  # lam3 = -lam1 -> alpha = 1

    def test_scale_invariance(self):
        a1, b1 = ll.derive_exponents(11.83, -22.83, -2.667)
        for c in (0.1, 3.7, 120.0):
            a2, b2 = ll.derive_exponents(c * 11.83, c * -22.83, c * -2.667)
            assert a2 == pytest.approx(a1, rel=1e-15)
            assert b2 == pytest.approx(b1, rel=1e-15)


class TestModelParams:
    def test_classical_construction(self, mparams):
        assert mparams.lam3 == -8.0 / 3.0
        assert mparams.alpha == pytest.approx(0.2254590, abs=1e-6)
        assert mparams.beta == pytest.approx(1.9300184, abs=1e-6)
        assert mparams.fiber_contraction <= 0.132

    def test_invariant_violations(self):
        with pytest.raises(PreconditionError):
            ll.ModelParams.classical(a_cusp=2.0)  # image bound fails
        with pytest.raises(NotLorenzLikeError):
            ll.ModelParams(lam1=11.83, lam2=-22.83, lam3=-20.0)  # -lam3 > lam1
        with pytest.raises(PreconditionError):
            ll.ModelParams.classical(r0=0.0)
        with pytest.raises(PreconditionError):
            ll.ModelParams.classical(B=0.9)
        with pytest.raises(PreconditionError):
            ll.ModelParams.classical(D=0.0)  # branch images overlap

    def test_check_values_reports_named_failures(self):
        rows = check_model_values(11.83, -22.83, -8 / 3, 2.0, 0.5, 0.25, 1.0)
        failed = [name for name, ok, _ in rows if not ok]
        assert any("image bound" in name for name in failed)
        rows = check_model_values(11.83, -22.83, -20.0, 0.3, 0.5, 0.25, 1.0)
        assert not rows[0][1]  # ordering row fails


class TestLinearPassage:
    def test_passage_time_unit(self, mparams):
        x = math.exp(-mparams.lam1)
        _, tau = ll.linear_passage(ll.SectionPoint(x, 0.3), mparams)
        assert tau == pytest.approx(1.0, rel=1e-14)

    def test_against_linear_flow_integration(self, mparams):
        """Oracle: RK4-integrate the linearized saddle flow from
        (0.25, 0.1, 1) until |x| = 1 and compare exit point and time."""
        l1, l2, l3 = mparams.lam1, mparams.lam2, mparams.lam3

        def rk4_linear(y, dt):
            # dx/dt = diag(l1,l2,l3) x, solved stepwise
            k1 = np.array([l1 * y[0], l2 * y[1], l3 * y[2]])
            y2 = y + 0.5 * dt * k1
            k2 = np.array([l1 * y2[0], l2 * y2[1], l3 * y2[2]])
            y3 = y + 0.5 * dt * k2
            k3 = np.array([l1 * y3[0], l2 * y3[1], l3 * y3[2]])
            y4 = y + dt * k3
            k4 = np.array([l1 * y4[0], l2 * y4[1], l3 * y4[2]])
            return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

        dt = 1e-6
        y = np.array([0.25, 0.1, 1.0])
        t = 0.0
        while abs(y[0]) < 1.0:
            y_prev, t_prev = y.copy(), t
            y = rk4_linear(y, dt)
            t += dt
        # linear interpolation of the crossing inside the last step
        theta = (1.0 - abs(y_prev[0])) / (abs(y[0]) - abs(y_prev[0]))
        t_cross = t_prev + theta * dt
        y_cross = y_prev + theta * (y - y_prev)
        exit_point, tau = ll.linear_passage(ll.SectionPoint(0.25, 0.1), mparams)
        assert tau == pytest.approx(t_cross, abs=1e-5)
        assert exit_point[0] == 1.0
        assert exit_point[1] == pytest.approx(y_cross[1], rel=1e-4)
        assert exit_point[2] == pytest.approx(y_cross[2], rel=1e-4)
        # frozen oracle digits (quoted spec digits differ in the 4th place;
        # the integration oracle confirms these)
        assert tau == pytest.approx(0.1172072, abs=1e-6)
        assert exit_point[1] == pytest.approx(0.00688673, abs=1e-7)
        assert exit_point[2] == pytest.approx(0.7315772, abs=1e-6)

    def test_mirror_symmetry(self, mparams):
        e1, t1 = ll.linear_passage(ll.SectionPoint(0.25, 0.1), mparams)
        e2, t2 = ll.linear_passage(ll.SectionPoint(-0.25, 0.1), mparams)
        assert t1 == t2
        assert e2[0] == -1.0
        assert abs(e2[1]) == abs(e1[1]) and e2[2] == e1[2]

    def test_singular_line_rejected(self, mparams):
        with pytest.raises((SingularLineError, PreconditionError)):
            ll.linear_passage(ll.SectionPoint(0.0, 0.1), mparams)


class TestOneDMap:
    def test_value_against_mpmath(self, mparams):
        """High-precision oracle for f(1/2)."""
        with mpmath.workdps(50):
            expected = mpmath.mpf("0.3") * mpmath.mpf("0.5") ** mparams.alpha \
                + mpmath.sqrt(2) * mpmath.mpf("0.5") - mpmath.mpf("0.5")
        got = ll.one_d_map(0.5, mparams)
        assert got == pytest.approx(float(expected), abs=1e-15)
        assert got == pytest.approx(0.46370, abs=1e-5)

    @settings(max_examples=200, deadline=None)
    @given(NONZERO_X)
    def test_odd(self, x):
        m = ll.ModelParams.classical()
        assert ll.one_d_map(-x, m) == -ll.one_d_map(x, m)

    @settings(max_examples=200, deadline=None)
    @given(NONZERO_X)
    def test_derivative_above_sqrt2_and_into_interval(self, x):
        m = ll.ModelParams.classical()
        assert ll.one_d_derivative(x, m) >= math.sqrt(2.0)
        assert abs(ll.one_d_map(x, m)) <= 0.5

    def test_cusp_limits(self, mparams):
        assert ll.one_d_map(1e-12, mparams) == pytest.approx(-0.5, abs=1e-2)
        assert ll.one_d_map(-1e-12, mparams) == pytest.approx(0.5, abs=1e-2)
        assert ll.one_d_derivative(1e-12, mparams) > 1e3

    def test_uniform_expansion_on_grid(self, mparams):
        """min f' over a 1e6 grid is >= sqrt(2) (tolerance 1e-12)."""
        xs = np.linspace(-0.5, 0.5, 1_000_001)
        xs = xs[np.abs(xs) > 1e-9]
        fp = ll.one_d_derivative(xs, mparams)
        assert fp.min() >= math.sqrt(2.0) - 1e-12

    def test_domain_errors(self, mparams):
        with pytest.raises(SingularLineError):
            ll.one_d_map(0.0, mparams)
        with pytest.raises(PreconditionError):
            ll.one_d_map(0.7, mparams)


class TestReturnMap:
    def test_value_against_mpmath(self, mparams):
        """g(0.25, 0.1) = B*y*|x|^beta + D to high precision."""
        with mpmath.workdps(50):
            expected = (mpmath.mpf("0.5") * mpmath.mpf("0.1")
                        * mpmath.mpf("0.25") ** mparams.beta
                        + mpmath.mpf("0.25"))
        out = ll.return_map(ll.SectionPoint(0.25, 0.1), mparams)
        assert out.y == pytest.approx(float(expected), abs=1e-15)
        assert out.x == ll.one_d_map(0.25, mparams)
        # note: direct evaluation gives 0.253443; the quoted 0.253438 traces
        # to lower-precision beta digits
        assert out.y == pytest.approx(0.253443, abs=1e-6)

    def test_foliation_invariance_exact(self, mparams):
        rng = np.random.default_rng(3)
        xs = rng.uniform(-0.5, 0.5, 300)
        xs = xs[np.abs(xs) > 1e-12]
        for x in xs[:100]:
            a = ll.return_map(ll.SectionPoint(x, -0.41), mparams)
            b = ll.return_map(ll.SectionPoint(x, 0.37), mparams)
            assert a.x == b.x  # bitwise, no tolerance

    def test_fiber_contraction(self, mparams):
        rng = np.random.default_rng(4)
        x = rng.uniform(-0.5, 0.5, 10_000)
        x = x[np.abs(x) > 1e-12]
        y1 = rng.uniform(-0.5, 0.5, len(x))
        y2 = rng.uniform(-0.5, 0.5, len(x))
        _, g1 = ll.model.return_map_arrays(x, y1, mparams)
        _, g2 = ll.model.return_map_arrays(x, y2, mparams)
        bound = mparams.fiber_contraction * np.abs(y1 - y2)
        assert np.all(np.abs(g1 - g2) <= bound + 1e-15)

    def test_branch_images_disjoint_inside_s(self, mparams):
        xs = np.linspace(1e-6, 0.5, 200_000)
        ys = np.linspace(-0.5, 0.5, 41)
        sup_g = 0.0
        inf_g = np.inf
        for y in ys:
            _, g = ll.model.return_map_arrays(xs, np.full_like(xs, y), mparams)
            sup_g = max(sup_g, np.abs(g).max())
            inf_g = min(inf_g, np.abs(g).min())
        # sup over S+ of |g| = B (1/2)^(beta+1) + D, attained at the corner
        expected_sup = mparams.B * 0.5 ** (mparams.beta + 1.0) + mparams.D
        assert sup_g == pytest.approx(expected_sup, rel=1e-6)
        assert sup_g == pytest.approx(0.3156, abs=2e-4)
        assert sup_g < 0.5  # trapped inside S
        # images of S+ and S- separated by 2 (D - B (1/2)^(beta+1))
        gap = 2.0 * (mparams.D - mparams.B * 0.5 ** (mparams.beta + 1.0))
        assert 2.0 * inf_g == pytest.approx(gap, rel=1e-6)
        assert gap > 0.0


class TestRoof:
    def test_values(self, mparams):
        # r(1/2) = r0 + log 2 / lam1
        expected = 1.0 + math.log(2.0) / mparams.lam1
        assert ll.roof(0.5, mparams) == pytest.approx(expected, rel=1e-15)
        assert ll.roof(0.5, mparams) == pytest.approx(1.05860, abs=2e-5)
        x = math.exp(-mparams.lam1)
        assert ll.roof(x, mparams) == pytest.approx(2.0, rel=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=1e-6, max_value=0.5))
    def test_even_and_decreasing(self, x):
        m = ll.ModelParams.classical()
        assert ll.roof(x, m) == ll.roof(-x, m)
        if x < 0.4:
            assert ll.roof(x, m) > ll.roof(x + 0.1, m)
        assert ll.roof(x, m) >= m.r0

    def test_log_growth_witness(self, mparams):
        for x in (1e-3, 1e-6, 1e-9):
            assert ll.roof(x, mparams) <= mparams.r0 \
                + (1.0 / mparams.lam1) * abs(math.log(x)) + 1e-12

    def test_consistency_with_linear_passage(self, mparams):
        """roof = passage time + constant outer time r0, exactly."""
        for x in (0.5, 0.25, 0.01, -0.37):
            _, tau = ll.linear_passage(ll.SectionPoint(x, 0.0), mparams)
            assert ll.roof(x, mparams) == mparams.r0 + tau

    def test_infinite_roof_error(self, mparams):
        with pytest.raises(SingularLineError):
            ll.roof(0.0, mparams)


def brute_force_lap_count(x0, s0, t, m):
    """Independent oracle: accumulate roofs until the next one passes s0+t."""
    total = s0 + t
    acc = float(ll.roof(x0, m))
    n = 0
    x = x0
    while acc <= total:
        x = float(ll.one_d_map(x, m))
        acc += float(ll.roof(x, m))
        n += 1
    return n


class TestSuspension:
    def test_below_roof(self, mparams):
        q = ll.SuspensionPoint(base_x=0.3, s=0.2)
        out, n = ll.suspension_evolve(q, 0.1, mparams)
        assert n == 0
        assert out.base_x == 0.3 and out.s == pytest.approx(0.3, abs=1e-15)

    def test_lap_count_brute_force_oracle(self, mparams):
        q = ll.SuspensionPoint(base_x=0.3123, s=0.55)
        out, n = ll.suspension_evolve(q, 10.0, mparams)
        assert n == brute_force_lap_count(0.3123, 0.55, 10.0, mparams)
        assert 0.0 <= out.s < ll.roof(out.base_x, mparams)

    @settings(max_examples=150, deadline=None)
    @given(st.floats(min_value=-0.49, max_value=0.49).filter(
               lambda v: abs(v) > 1e-4),
           st.floats(min_value=0.0, max_value=0.9),
           st.floats(min_value=0.0, max_value=30.0),
           st.floats(min_value=0.0, max_value=30.0))
    def test_semigroup(self, x0, s_frac, t, u):
        m = ll.ModelParams.classical()
        q = ll.SuspensionPoint(base_x=x0, s=s_frac * float(ll.roof(x0, m)))
        one, n_one = ll.suspension_evolve(q, t + u, m)
        mid, n_a = ll.suspension_evolve(q, t, m)
        two, n_b = ll.suspension_evolve(mid, u, m)
        assert n_one == n_a + n_b
        assert two.base_x == one.base_x
        assert two.s == pytest.approx(one.s, abs=1e-10)

    def test_2d_base_carries_fiber(self, mparams):
        q = ll.SuspensionPoint(base_x=0.3, s=0.0, base_y=0.1)
        out, n = ll.suspension_evolve(q, 5.0, mparams)
        assert n >= 1
        assert out.base_y is not None and abs(out.base_y) < 0.5

    def test_invalid_height(self, mparams):
        with pytest.raises(PreconditionError):
            ll.SuspensionPoint(base_x=0.5, s=5.0).validate(mparams)
        with pytest.raises(PreconditionError):
            ll.suspension_evolve(ll.SuspensionPoint(0.3, 0.0), -1.0, mparams)
