"""Correlation decay, lap decomposition, deviations, escape, projection."""

import math

import numpy as np
import pytest

import lorenzlab as ll
from lorenzlab import rates
from lorenzlab.errors import PreconditionError
from lorenzlab.model import return_map_orbit
from lorenzlab.seeding import stream
from test_ergodic import dyadic_orbit

# legal Lorenz-like parameters tuned so the x-autocovariance cascade stays
# resolvable over >= 5 lags (at the classical cusp exponent the correlations
# fall below the 3/sqrt(N) floor after a single lag)
CORR_MODEL = dict(lam3=-0.7 * ll.ModelParams.classical().lam1, a_cusp=0.4757)


def corr_model():
    base = ll.ModelParams.classical()
    return ll.ModelParams(lam1=base.lam1, lam2=base.lam2, **CORR_MODEL)


class TestCorrelation:
    def test_constant_observable_vanishes(self, long_orbit):
        g = np.full(100_000, 2.5)
        rep = rates.correlation_function(g, long_orbit[:100_000], max_lag=10)
        assert np.abs(rep.values).max() <= 1e-14

    def test_variance_at_lag_zero(self, long_orbit):
        rep = rates.correlation_function(long_orbit[:500_000], max_lag=5)
        assert rep.values[0] >= 0.0
        assert rep.values[0] == pytest.approx(long_orbit[:500_000].var(),
                                              rel=1e-6)

    def test_bound_by_sup_norms(self, long_orbit):
        g = long_orbit[:500_000]
        rep = rates.correlation_function(g, max_lag=20)
        bound = np.abs(g).max() ** 2 + g.mean() ** 2
        assert np.abs(rep.values).max() <= bound

    def test_dyadic_fixture_orthogonality(self):
        """cos(2 pi x) under the doubling map: C(n) = 0 for n >= 1 exactly
        (dyadic characters are orthogonal); Monte Carlo within 2% of C(0)."""
        x = dyadic_orbit(1_000_000)
        g = np.cos(2.0 * np.pi * x)
        rep = rates.correlation_function(g, max_lag=10)
        assert rep.values[0] == pytest.approx(0.5, rel=2e-2)
        assert np.abs(rep.values[1:]).max() <= 0.02 * rep.values[0]

    def test_coin_fixture(self):
        rng = stream(11, 0)
        g = rng.integers(0, 2, size=1_000_000).astype(float)
        rep = rates.correlation_function(g, max_lag=10)
        assert rep.values[0] == pytest.approx(0.25, rel=2e-2)
        assert np.abs(rep.values[1:]).max() <= 0.02 * rep.values[0]

    def test_model_exponential_decay(self):
        """x-autocovariance of the return map fits a negative rate with
        R^2 >= 0.9 over the pre-noise-floor lags."""
        m = corr_model()
        xs, _ = return_map_orbit(0.2345, 0.1, 10_000_000, m)
        rep = rates.correlation_function(xs[1000:], max_lag=20)
        assert rep.usable_lags >= 5
        assert rep.fit is not None
        assert rep.fit.slope < 0.0
        assert rep.fit.r_squared >= 0.9

    def test_fit_refused_below_five_lags(self, mparams):
        """At the classical cusp amplitude the floor is reached after one
        lag: the fit must be refused, the curve still emitted."""
        xs, _ = return_map_orbit(0.2345, 0.1, 1_000_000, mparams)
        rep = rates.correlation_function(xs, max_lag=10)
        assert rep.fit is None
        assert rep.refusal is not None
        assert len(rep.values) == 11


def psi_mixed(x, h):
    h = np.asarray(h, dtype=float)
    return 1.0 + 0.3 * np.cos(np.pi * x) + 0.2 * np.sin(h)


class TestLapDecomposition:
    def test_constant_observable_residual(self, mparams):
        """psi = 1 reduces the identity to T = S_n r + boundary terms."""
        rep = rates.lap_decomposition_check(
            0.3123, 0.4, 123.4, lambda x, h: np.ones_like(np.asarray(h)),
            mparams)
        assert rep.lhs == pytest.approx(123.4, abs=1e-10)
        assert rep.residual <= 1e-10

    def test_constant_roof_lap_number(self):
        """Fixture: under a constant roof r = 1 the lap number is
        floor(s + T)."""
        import itertools
        from lorenzlab.model import lap_number_sequence
        for s0, t in ((0.0, 7.3), (0.5, 10.0), (0.99, 3.02), (0.2, 0.5)):
            n = lap_number_sequence(itertools.repeat(1.0), s0, t)
            assert n == math.floor(s0 + t)

    def test_lap_rule_matches_evolve(self, mparams):
        """The explicit-sequence rule agrees with the evolved lap count."""
        from lorenzlab.model import lap_number_sequence, map_orbit
        x0, s0, t = 0.3123, 0.4, 35.0
        orbit = map_orbit(x0, 200, mparams)
        roofs = ll.roof(orbit, mparams)
        _, n = ll.suspension_evolve(ll.SuspensionPoint(x0, s0), t, mparams)
        assert n == lap_number_sequence(roofs, s0, t)

    def test_general_observable_residual(self, mparams):
        rng = stream(21, 0)
        for _ in range(25):
            x0 = float(rng.uniform(-0.5, 0.5))
            if abs(x0) < 1e-3:
                x0 = 0.1
            s0 = float(rng.uniform(0.0, 0.99)) * float(ll.roof(x0, mparams))
            T = float(rng.uniform(10.0, 60.0))
            rep = rates.lap_decomposition_check(x0, s0, T, psi_mixed, mparams)
            assert rep.residual <= 1e-8

    def test_lap_ratio_conv(self, mparams):
        from lorenzlab.model import map_orbit
        mean_roof = float(np.mean(ll.roof(map_orbit(0.37173, 1_000_000,
                                                    mparams)[1000:], mparams)))
        rep = rates.lap_decomposition_check(0.31731, 0.2, 1e4, psi_mixed,
                                            mparams, mean_roof_ref=mean_roof)
        assert rep.ratio_rel_error <= 0.02

    def test_short_horizon_rejected(self, mparams):
        with pytest.raises(PreconditionError):
            rates.lap_decomposition_check(0.3, 0.0, 1.0, psi_mixed, mparams)


class TestDeviationSemiflow:
    def test_oversized_eps_gives_zero_fractions(self, mparams):
        ref, _ = rates.semiflow_reference(mparams, "x", n_laps=100_000)
        curve = rates.deviation_rate_semiflow(
            mparams, eps=2.0, t_grid=[5.0, 10.0], M=2000,
            rng=stream(30, 0), reference=ref)
        assert np.all(curve.fractions == 0.0)
        assert curve.fit is None

    def test_rate_negative_and_significant(self, mparams):
        ref, se = rates.semiflow_reference(mparams, "x", n_laps=500_000)
        curve = rates.deviation_rate_semiflow(
            mparams, eps=0.1, t_grid=np.arange(20.0, 201.0, 20.0), M=20_000,
            rng=stream(31, 0), reference=ref, reference_se=se)
        assert curve.fit.slope < 0.0
        assert curve.rate_significance >= 2.0
        # p-hat = 0 horizons are excluded and reported, never fitted
        assert set(curve.excluded_horizons) <= set(curve.t_grid)

    def test_reference_precision_guard(self, mparams):
        with pytest.raises(PreconditionError):
            rates.deviation_rate_semiflow(mparams, eps=0.001,
                                          t_grid=[10.0], M=1000,
                                          rng=stream(32, 0), reference=0.0,
                                          reference_se=0.01)

    def test_sample_under_roof_is_uniform(self, mparams):
        """Chi-square sanity: the sampler matches the Leb x Leb density
        (constant under the roof graph)."""
        rng = stream(33, 0)
        xs, ss = rates.sample_under_roof(mparams, 200_000, rng)
        assert np.all(ss < ll.roof(xs, mparams))
        # cell occupancy below the minimum roof should be uniform
        sel = ss < mparams.min_roof * 0.999
        h, _, _ = np.histogram2d(xs[sel], ss[sel], bins=10,
                                 range=[[-0.5, 0.5], [0.0, mparams.min_roof
                                                      * 0.999]])
        expected = h.sum() / 100.0
        chi2 = ((h - expected) ** 2 / expected).sum()
        assert chi2 < 99 * 2.5  # ~99 dof, generous

    def test_coin_matches_cramer(self):
        """Closed-form oracle: Bernoulli-mean deviations decay at the Cramer
        rate; fitted slope within 10% at M = 1e6 (designed grid)."""
        curve = rates.deviation_rate_coin(0.14, np.arange(100, 201, 10),
                                          1_000_000, stream(34, 0))
        rate = rates.cramer_rate_bernoulli(0.14)
        assert curve.fit.slope < 0.0
        assert abs(curve.fit.slope) == pytest.approx(rate, rel=0.10)

    def test_exact_binomial_intervals(self):
        # oracle: scipy.stats.binom CDF inversion at the endpoints
        from scipy.stats import binom
        lo, hi = rates.binomial_interval(0, 100)
        assert lo == 0.0 and hi == pytest.approx(1 - 0.025 ** (1 / 100), rel=1e-9)
        lo, hi = rates.binomial_interval(30, 100)
        # Clopper-Pearson coverage identities
        assert binom.sf(29, 100, lo) == pytest.approx(0.025, rel=1e-6)
        assert binom.cdf(30, 100, hi) == pytest.approx(0.025, rel=1e-6)
        curve = rates.deviation_rate_coin(0.2, [20, 40], 2000, stream(60, 0))
        assert np.all(curve.ci_low <= curve.fractions)
        assert np.all(curve.fractions <= curve.ci_high)

    def test_cramer_rate_values(self):
        # I(eps) = (1/2+eps) log(1+2 eps) + (1/2-eps) log(1-2 eps)
        for eps in (0.1, 0.14, 0.2):
            q = 0.5 + eps
            expect = q * math.log(2 * q) + (1 - q) * math.log(2 * (1 - q))
            assert rates.cramer_rate_bernoulli(eps) == pytest.approx(
                expect, rel=1e-12)


class TestDeviationFlow:
    def test_rate_negative_and_significant(self, classical):
        ref, se = rates.flow_reference(classical, "z_scaled", horizon=2000.0)
        curve = rates.deviation_rate_flow(
            classical, eps=0.1, t_grid=np.arange(20.0, 121.0, 20.0),
            M=10_000, rng=stream(35, 0), reference=ref, reference_se=se)
        assert curve.fit.slope < 0.0
        assert curve.rate_significance >= 2.0


class TestEscape:
    def test_vacuous_refused(self, classical, attractor_trajectory):
        _, states = attractor_trajectory
        with pytest.raises(PreconditionError):
            rates.escape_rate(classical, [5.0, 10.0], 1000, stream(40, 0),
                              reference_orbit=states)  # K = whole box

    def test_ball_covering_attractor_empties_immediately(self, classical):
        curve = rates.escape_rate(classical, [5.0, 10.0], 2000,
                                  stream(41, 0),
                                  ball_center=[0.0, 0.0, 25.0],
                                  ball_radius=45.0)
        assert curve.staying[0] <= 0.01

    def test_staying_nonincreasing_and_rate_negative(self, classical,
                                                     attractor_trajectory):
        _, states = attractor_trajectory
        curve = rates.escape_rate(classical, np.arange(5.0, 51.0, 5.0),
                                  20_000, stream(42, 0),
                                  ball_center=[-1.0, -1.5, 16.5],
                                  ball_radius=1.0, reference_orbit=states)
        assert np.all(np.diff(curve.staying) <= 0.0)
        assert curve.fit.slope < 0.0
        assert curve.rate_significance >= 2.0


class TestProjectionCheck:
    def test_fiber_constant_is_lossless(self, mparams):
        psi = lambda x, y, s: 1.0 + 0.5 * np.cos(np.pi * x) + 0.0 * y \
            + 0.0 * np.asarray(s)
        rep = rates.projected_deviation_check(
            psi, mparams, eps=0.05, n_grid=[1, 2, 4, 8, 16], M=2000,
            rng=stream(50, 0), n_reference=100_000)
        assert rep.fiber_oscillation == 0.0
        assert rep.burn_in == 0.0
        assert np.all(rep.violations == 0)
        assert rep.deviating[0] > 0  # the check is not vacuous

    def test_random_family_zero_violations_past_burn_in(self, mparams):
        """Family with fiber oscillation below eps/2: the geometric-series
        bound makes containment structural, violations only conceivable
        below the burn-in (which rounds to zero here)."""
        rng = stream(51, 0)
        for trial in range(3):
            c1 = float(rng.uniform(0.2, 0.5))
            cy = float(rng.uniform(0.002, 0.01))
            psi = (lambda c1, cy: lambda x, y, s:
                   1.0 + c1 * np.cos(np.pi * x)
                   + cy * y * np.sin(np.asarray(s)))(c1, cy)
            rep = rates.projected_deviation_check(
                psi, mparams, eps=0.05, n_grid=[1, 2, 4, 8, 16, 32], M=2000,
                rng=stream(52 + trial, 0), n_reference=100_000)
            n_past = rep.n_grid >= max(2.0 * rep.burn_in, 1.0)
            assert np.all(rep.violations[n_past] == 0)
            assert rep.fiber_oscillation <= 0.05 / 2.0

    def test_burn_in_reported_for_large_oscillation(self, mparams):
        """When the fiber oscillation exceeds eps the reported burn-in obeys
        n0 = log(osc/eps)/log(1/contraction)."""
        psi = lambda x, y, s: 1.0 + 0.3 * np.cos(np.pi * x) \
            + 0.4 * y * np.ones_like(np.asarray(s, dtype=float))
        rep = rates.projected_deviation_check(
            psi, mparams, eps=0.02, n_grid=[1, 2, 4], M=500,
            rng=stream(55, 0), n_reference=50_000)
        assert rep.fiber_oscillation > rep.eps
        expect = math.log(rep.fiber_oscillation / rep.eps) \
            / math.log(1.0 / mparams.fiber_contraction)
        assert rep.burn_in == pytest.approx(expect, rel=1e-9)
        assert rep.burn_in > 0.0
