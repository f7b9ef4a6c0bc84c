"""Ball masses, local dimension, hitting/recurrence, log-law regression."""

import math

import numpy as np
import pytest

import lorenzlab as ll
from lorenzlab import dimension as dim
from lorenzlab.errors import PreconditionError
from lorenzlab.seeding import stream

GRID = dim.RadiiGrid(1e-3, 10**-1.5, 8)


class TestRadiiGrid:
    def test_geometric(self):
        rr = dim.RadiiGrid(1e-3, 1e-1, 5).radii()
        ratios = rr[1:] / rr[:-1]
        assert np.allclose(ratios, ratios[0], rtol=1e-12)

    def test_validation(self):
        with pytest.raises(PreconditionError):
            dim.RadiiGrid(1e-1, 1e-3, 8)
        with pytest.raises(PreconditionError):
            dim.RadiiGrid(1e-3, 1e-1, 3)


class TestBallMass:
    def test_point_mass(self):
        samples = np.full(200_000, 0.123)
        curve = dim.ball_mass_curve(samples, 0.123, GRID)
        assert np.all(curve.masses == 1.0)

    def test_monotone_and_bounded(self, long_orbit):
        curve = dim.ball_mass_curve(long_orbit, 0.2, GRID)
        assert np.all(np.diff(curve.masses) >= 0.0)
        assert curve.masses[-1] <= 1.0

    def test_center_off_support(self, long_orbit):
        with pytest.raises(PreconditionError):
            dim.ball_mass_curve(long_orbit, 7.0, GRID)

    def test_min_count_drops_radii(self):
        rng = stream(0, 0)
        samples = rng.uniform(-1.0, 1.0, 200_000)
        with pytest.warns(UserWarning):
            curve = dim.ball_mass_curve(samples, 0.0,
                                        np.array([1e-6, 1e-5, 1e-2, 1e-1]))
        assert len(curve.dropped_radii) >= 1

    def test_counters_measure_the_same(self, long_orbit):
        raw = dim.ball_mass_curve(long_orbit[:200_000], 0.2, GRID)
        counter = dim.BallCounter(long_orbit[:200_000])
        pre = dim.ball_mass_curve(counter, 0.2, GRID)
        assert np.all(raw.counts == pre.counts)


class TestLocalDimension:
    def test_exact_power_law_recovers_slope(self):
        """Planted mass curve m = C r^s: slope, envelopes coincide at 1e-12."""
        radii = np.geomspace(1e-3, 1e-1, 9)
        for s in (0.5, 1.0, 1.7, 2.3):
            masses = 0.37 * radii**s
            curve = dim.BallMassCurve(radii=radii,
                                      counts=masses * 10**7,
                                      n_samples=10**7,
                                      dropped_radii=np.array([]))
            est = dim.local_dimension(curve)
            assert est.d_hat == pytest.approx(s, abs=1e-12)
            assert est.d_lower == pytest.approx(s, abs=1e-12)
            assert est.d_upper == pytest.approx(s, abs=1e-12)
            assert est.d_lower <= est.d_hat <= est.d_upper

    def test_segment_fixture(self):
        rng = stream(1234, 0)
        seg = np.zeros((1_000_000, 2))
        seg[:, 0] = rng.uniform(-1.0, 1.0, 1_000_000)
        curve = dim.ball_mass_curve(seg, np.zeros(2),
                                    dim.RadiiGrid(3e-3, 1e-1, 8),
                                    metric="euclidean")
        est = dim.local_dimension(curve)
        assert est.d_hat == pytest.approx(1.0, abs=0.05)

    def test_disk_fixture(self):
        rng = stream(1234, 1)
        n = 1_000_000
        th = rng.uniform(0.0, 2.0 * math.pi, n)
        rad = np.sqrt(rng.uniform(0.0, 1.0, n))
        disk = np.stack([rad * np.cos(th), rad * np.sin(th)], axis=1)
        curve = dim.ball_mass_curve(disk, np.zeros(2),
                                    dim.RadiiGrid(0.03, 0.3, 8),
                                    metric="euclidean")
        est = dim.local_dimension(curve)
        assert est.d_hat == pytest.approx(2.0, abs=0.05)

    def test_product_fixture(self):
        """Segment x segment has dimension 2 (independent uniforms)."""
        rng = stream(1234, 2)
        sq = rng.uniform(-1.0, 1.0, size=(1_000_000, 2))
        curve = dim.ball_mass_curve(sq, np.zeros(2),
                                    dim.RadiiGrid(0.03, 0.3, 8))
        est = dim.local_dimension(curve)
        assert est.d_hat == pytest.approx(2.0, abs=0.05)

    def test_quotient_measure_exactness(self, long_orbit):
        """Envelope width d+ - d- stays below 0.15 at mu-typical probes of
        the base (quotient) invariant measure, n = 1e7."""
        counter = dim.BallCounter(long_orbit)
        rng = stream(77, 0)
        widths = []
        for px in dim.draw_probes(long_orbit, 10, rng):
            est = dim.local_dimension(dim.ball_mass_curve(counter, px, GRID))
            widths.append(est.envelope_width)
            assert est.d_lower <= est.d_hat <= est.d_upper
        assert max(widths) <= 0.15

    def test_too_few_radii(self):
        curve = dim.BallMassCurve(radii=np.array([1e-2, 1e-1]),
                                  counts=np.array([10.0, 100.0]),
                                  n_samples=1000,
                                  dropped_radii=np.array([]))
        with pytest.raises(PreconditionError):
            dim.local_dimension(curve)


class TestHitting:
    def test_already_inside_is_zero(self):
        times = np.arange(10.0)
        pts = np.linspace(0.0, 1.0, 10)
        assert dim.hitting_time_samples(times, pts, 0.05, 0.1) == 0.0

    def test_censored_returns_none(self):
        times = np.arange(10.0)
        pts = np.linspace(0.0, 1.0, 10)
        assert dim.hitting_time_samples(times, pts, 5.0, 0.1) is None

    def test_monotone_in_radius_exact(self, mparams, long_orbit):
        sus = dim.suspension_samples(0.2345, 200_000, 0.11, mparams)
        target = sus[12345]
        taus = dim.suspension_hitting_times(
            np.array([0.31, -0.22]), np.array([0.1, 0.4]), target, GRID,
            mparams, horizon=1e6)
        for row in taus:
            clean = row[np.isfinite(row)]
            assert np.all(np.diff(clean) <= 0.0)  # larger r hits no later

    def test_hitting_matches_brute_force_evolution(self, mparams):
        """Oracle: step the suspension on a fine time grid and record the
        first sample inside the max-metric ball; the exact per-lap hitting
        time must agree to the sampling interval."""
        target = np.array([0.2, 0.7])
        radius = 0.05
        x0, s0 = 0.31, 0.11
        dt = 1e-3
        q = ll.SuspensionPoint(base_x=x0, s=s0)
        t_hit = None
        for k in range(1, 200_000):
            out, _ = ll.suspension_evolve(q, k * dt, mparams)
            if max(abs(out.base_x - target[0]), abs(out.s - target[1])) <= radius:
                t_hit = k * dt
                break
        taus = dim.suspension_hitting_times(np.array([x0]), np.array([s0]),
                                            target, np.array([radius]),
                                            mparams, horizon=1e4)
        assert t_hit is not None
        assert taus[0, 0] == pytest.approx(t_hit, abs=dt)


class TestRecurrence:
    def test_never_leaves_reports_minus_inf(self, mparams):
        """A ball so large the orbit never leaves it: recurrence undefined."""
        out = dim.recurrence_time_map(0.1, np.array([2.0]), mparams,
                                      horizon=10_000)
        assert out[0] == -np.inf

    def test_period_two_fixture(self):
        """On an exact period-2 orbit the recurrence time is 2 iterates."""
        orbit = np.tile([0.3, -0.2], 50)
        r = 0.01
        x0 = orbit[0]
        left = False
        tau = None
        for n in range(1, len(orbit)):
            d = abs(orbit[n] - x0)
            if not left and d > r:
                left = True
            elif left and d <= r:
                tau = n
                break
        assert tau == 2

    def test_model_recurrence_positive_and_monotone(self, mparams):
        taus = dim.recurrence_time_map(0.2345, GRID, mparams, horizon=10**7)
        clean = taus[np.isfinite(taus)]
        assert np.all(clean > 0.0)
        assert np.all(np.diff(clean) <= 0.0)  # larger balls recur sooner


class TestLoglawRegression:
    def _records(self, radii, taus):
        n_seed, nr = taus.shape
        return dim.HittingRecords.from_matrix(taus, radii)

    def test_synthetic_exact_slope(self):
        """tau = r^(-s) exactly: regression recovers s to 1e-12."""
        radii = np.geomspace(1e-3, 1e-1, 8)
        for s in (0.7, 1.0, 2.1):
            taus = np.tile(radii**-s, (60, 1))
            rep = dim.loglaw_regression(self._records(radii, taus),
                                        reference=s)
            assert rep.fit.slope == pytest.approx(s, abs=1e-12)
            assert abs(rep.discrepancy) < 1e-12

    def test_censoring_accounting(self):
        radii = np.geomspace(1e-3, 1e-1, 8)
        taus = np.tile(radii**-1.0, (100, 1))
        taus[:60, 0] = np.nan  # 60% censored at the smallest radius
        rep = dim.loglaw_regression(self._records(radii, taus), reference=1.0)
        assert rep.flagged
        assert radii[0] in rep.radii_excluded
        assert len(rep.radii_used) == 7
        assert rep.censor_fraction[float(radii[0])] == pytest.approx(0.6)

    def test_too_few_usable_radii(self):
        radii = np.geomspace(1e-3, 1e-1, 6)
        taus = np.tile(radii**-1.0, (100, 1))
        taus[:, :3] = np.nan
        with pytest.raises(PreconditionError):
            dim.loglaw_regression(self._records(radii, taus), reference=1.0)

    def test_uncensored_plus_censored_total(self):
        radii = np.geomspace(1e-3, 1e-1, 8)
        taus = np.tile(radii**-1.0, (50, 1))
        taus[:10, 2] = np.nan
        rec = self._records(radii, taus)
        per_radius = {}
        for r in radii:
            sel = rec.r == r
            per_radius[r] = (int((~rec.censored[sel]).sum()),
                             int(rec.censored[sel].sum()))
        assert all(u + c == 50 for u, c in per_radius.values())


class TestFlowLogLaw:
    def test_ode_hitting_slope_matches_dimension(self, classical):
        """Lorenz ODE log law with section/flow sampling: fitted hitting
        slope within 0.25 of d_mu - 1 estimated on the same data."""
        traj = ll.integrate(np.array([1.0, 1.0, 1.0]), classical, 30_000.0,
                            method="rk4", dt=2e-3, sample_every=2e-2,
                            dense=False)
        samples = traj.states[traj.t >= 50.0]
        rng = stream(123, 0)
        target = samples[rng.integers(0, len(samples))]
        grid = dim.RadiiGrid(0.25, 2.0, 8)
        est = dim.local_dimension(
            dim.ball_mass_curve(samples, target, grid, metric="euclidean"))
        seeds = samples[rng.integers(0, len(samples), 200)]
        taus = dim.flow_hitting_times(seeds, target, grid, classical,
                                      horizon=2e4, dt=5e-3)
        rep = dim.loglaw_regression(
            dim.HittingRecords.from_matrix(taus, grid.radii()),
            reference=est.d_hat - 1.0)
        assert abs(rep.discrepancy) <= 0.25
        # hitting times are exactly non-increasing in the radius per seed
        for row in taus:
            clean = row[np.isfinite(row)]
            assert np.all(np.diff(clean) <= 0.0)


class TestFlowVsSection:
    def test_constant_roof_product_fixture(self):
        """Uniform segment suspended under a constant roof: section d = 1,
        flow d = 2, difference of the +1 shift ~ 0."""
        rng = stream(99, 0)
        n = 1_000_000
        base = rng.uniform(-0.5, 0.5, n)
        height = rng.uniform(0.0, 1.0, n)
        sus = np.stack([base, height], axis=1)
        grid = dim.RadiiGrid(0.01, 0.2, 8)
        rep = dim.flow_vs_section_dimension(base, sus, [0.1, -0.2, 0.03],
                                            [0.5, 0.4, 0.6], grid)
        assert np.abs(rep.section_d - 1.0).max() < 0.05
        assert np.abs(rep.flow_d - 2.0).max() < 0.1
        assert rep.mean_abs_difference <= 0.1

    def test_model_dimension_shift(self, mparams, long_orbit):
        """Quotient suspension: d_flow ~ d_section + 1 within 0.15."""
        sus = dim.suspension_samples(0.2345, 2_000_000, 0.11, mparams)
        rng = stream(5, 0)
        idx = rng.integers(0, len(sus), 6)
        rep = dim.flow_vs_section_dimension(
            long_orbit[:2_000_000], sus, sus[idx, 0], sus[idx, 1], GRID)
        assert rep.mean_abs_difference <= 0.15
