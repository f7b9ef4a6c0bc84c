"""Local dimension, hitting-time and recurrence-time estimators.

All the r -> 0 limits are estimated as least-squares slopes over a geometric
radii grid; upper/lower finite-r analogues of limsup/liminf come from the
extreme adjacent secants of the same curve.  Hitting times on the suspension
are computed exactly per lap (the base point is constant while the height
rises), so no time discretization enters; hitting times along sampled flow
trajectories are refined to the sampling interval.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .errors import PreconditionError
from .fitting import FitResult, fit_line
from .model import SINGULAR_X, ModelParams, _f_scalar


@dataclass(frozen=True)
class RadiiGrid:
    """Geometric progression of ball radii, r_min .. r_max."""

    r_min: float = 1e-3
    r_max: float = 10 ** -1.5
    count: int = 8

    def __post_init__(self):
        if not 0.0 < self.r_min < self.r_max:
            raise PreconditionError("need 0 < r_min < r_max")
        if self.count < 5:
            raise PreconditionError("need at least 5 radii")

    def radii(self) -> np.ndarray:
        """Radii in increasing order."""
        return np.geomspace(self.r_min, self.r_max, self.count)


@dataclass
class BallMassCurve:
    """Empirical masses of nested balls around one center."""

    radii: np.ndarray
    counts: np.ndarray
    n_samples: int
    dropped_radii: np.ndarray  # radii excluded by the minimum-count rule

    @property
    def masses(self) -> np.ndarray:
        return self.counts / self.n_samples


class BallCounter:
    """Reusable ball-count index over a fixed sample set.

    1-d samples are sorted once; 2-d samples are sorted along the first
    coordinate so each query scans only the matching slab (much faster than
    a k-d tree at these sizes); 3-d and higher fall back to a k-d tree.
    """

    def __init__(self, samples, metric: str = "chebyshev"):
        samples = np.asarray(samples, dtype=float)
        if metric not in ("chebyshev", "euclidean"):
            raise PreconditionError(f"unknown metric {metric!r}")
        self.metric = metric
        self.n = samples.shape[0]
        self.ndim = 1 if samples.ndim == 1 else samples.shape[1]
        if self.ndim == 1:
            self._sorted = np.sort(samples)
        elif self.ndim == 2:
            order = np.argsort(samples[:, 0], kind="stable")
            self._x = np.ascontiguousarray(samples[order, 0])
            self._y = np.ascontiguousarray(samples[order, 1])
        else:
            self._tree = cKDTree(samples)

    def counts(self, center, radii: np.ndarray) -> np.ndarray:
        center = np.atleast_1d(np.asarray(center, dtype=float))
        out = np.empty(len(radii), dtype=np.int64)
        for k, r in enumerate(radii):
            if self.ndim == 1:
                c = center[0]
                out[k] = (np.searchsorted(self._sorted, c + r, side="right")
                          - np.searchsorted(self._sorted, c - r, side="left"))
            elif self.ndim == 2:
                i0 = np.searchsorted(self._x, center[0] - r, side="left")
                i1 = np.searchsorted(self._x, center[0] + r, side="right")
                ys = self._y[i0:i1]
                if self.metric == "chebyshev":
                    out[k] = int(np.count_nonzero(np.abs(ys - center[1]) <= r))
                else:
                    dx = self._x[i0:i1] - center[0]
                    dy = ys - center[1]
                    out[k] = int(np.count_nonzero(dx * dx + dy * dy <= r * r))
            else:
                p = np.inf if self.metric == "chebyshev" else 2
                out[k] = self._tree.query_ball_point(center, r, p=p,
                                                     return_length=True)
        return out


def ball_mass_curve(samples, center, radii: RadiiGrid | np.ndarray,
                    metric: str = "chebyshev", min_count: int = 100
                    ) -> BallMassCurve:
    """Masses mu_hat(B_r(center)) over a radii grid.

    `samples` may be a raw array or a prebuilt BallCounter (reuse the latter
    when probing many centers of the same sample set).  Radii whose ball
    holds fewer than `min_count` samples are dropped with a warning (they
    would be shot-noise dominated).  A zero count at the largest radius
    means the center is off the sampled support and is an error.
    """
    counter = (samples if isinstance(samples, BallCounter)
               else BallCounter(samples, metric))
    n = counter.n
    if n < 10**5:
        raise PreconditionError(f"need >= 1e5 samples for ball masses, got {n}")
    rr = radii.radii() if isinstance(radii, RadiiGrid) else np.sort(np.asarray(radii))
    center = np.asarray(center, dtype=float)
    counts = counter.counts(center, rr)
    if counts[-1] == 0:
        raise PreconditionError("zero mass at the largest radius: "
                                "center not on the sampled attractor")
    keep = counts >= min_count
    if not np.all(keep):
        warnings.warn(f"dropped {int((~keep).sum())} radii with < {min_count} "
                      "samples in the ball", stacklevel=2)
    return BallMassCurve(radii=rr[keep], counts=counts[keep], n_samples=n,
                         dropped_radii=rr[~keep])


@dataclass
class DimensionEstimate:
    """Local-dimension estimate with upper/lower secant envelopes.

    d_lower <= d_hat <= d_upper always; their gap is the finite-r analogue
    of the limsup/liminf spread (zero iff the mass curve is an exact power
    law over the grid).
    """

    fit: FitResult
    d_hat: float
    d_lower: float
    d_upper: float

    @property
    def envelope_width(self) -> float:
        return self.d_upper - self.d_lower


def local_dimension(curve: BallMassCurve) -> DimensionEstimate:
    """Fit log mass vs log r; envelopes from adjacent secants."""
    if len(curve.radii) < 3:
        raise PreconditionError("fewer than 3 usable radii")
    lr = np.log(curve.radii)
    lm = np.log(curve.masses)
    fit = fit_line(lr, lm)
    secants = np.diff(lm) / np.diff(lr)
    return DimensionEstimate(fit=fit, d_hat=fit.slope,
                             d_lower=float(secants.min()),
                             d_upper=float(secants.max()))


def draw_probes(samples: np.ndarray, k: int, rng: np.random.Generator,
                ) -> np.ndarray:
    """Draw probe centers from the empirical measure itself (never from
    Lebesgue on the ambient space)."""
    samples = np.asarray(samples)
    idx = rng.integers(0, samples.shape[0], size=k)
    return samples[idx]


# ---------------------------------------------------------------------------
# Hitting and recurrence times
# ---------------------------------------------------------------------------


def hitting_time_samples(times: np.ndarray, points: np.ndarray, center,
                         radius: float, metric: str = "euclidean"
                         ) -> float | None:
    """First entrance time of a sampled orbit into B_radius(center).

    Resolution is the sampling interval (the first in-ball sample's time is
    returned); None when censored (no entrance within the horizon).
    """
    points = np.asarray(points, dtype=float)
    center = np.asarray(center, dtype=float)
    if points.ndim == 1:
        d = np.abs(points - center)
    elif metric == "chebyshev":
        d = np.abs(points - center).max(axis=1)
    else:
        d = np.linalg.norm(points - center, axis=1)
    hit = np.nonzero(d <= radius)[0]
    return float(times[hit[0]]) if len(hit) else None


@njit(cache=True)
def _map_recurrence_times(x0, radii, horizon, alpha, a_cusp):
    """Recurrence times (iterates) of the quotient map orbit from x0 into
    balls around x0: second entrance after having left.  -1 = censored,
    -2 = never left within the horizon."""
    nr = len(radii)
    out = np.full(nr, -1.0)
    left = np.zeros(nr, dtype=np.bool_)
    x = x0
    found = 0
    for n in range(1, horizon + 1):
        x = _f_scalar(x, alpha, a_cusp)
        if abs(x) < SINGULAR_X:
            break
        d = abs(x - x0)
        for j in range(nr):
            if out[j] >= 0.0:
                continue
            if not left[j]:
                if d > radii[j]:
                    left[j] = True
            elif d <= radii[j]:
                out[j] = n
                found += 1
        if found == nr:
            break
    for j in range(nr):
        if out[j] < 0.0 and not left[j]:
            out[j] = -2.0
    return out


def recurrence_time_map(x0: float, radii, m: ModelParams, horizon: int
                        ) -> np.ndarray:
    """tau'_r(x0) for the quotient map, per radius; NaN entries are censored
    (never returned), -inf entries never left the ball."""
    rr = np.asarray(radii.radii() if isinstance(radii, RadiiGrid) else radii,
                    dtype=float)
    raw = _map_recurrence_times(float(x0), rr, int(horizon), m.alpha, m.a_cusp)
    out = raw.copy()
    out[raw == -1.0] = np.nan
    out[raw == -2.0] = -np.inf
    return out


@njit(cache=True)
def _suspension_hitting(x0s, s0s, tx, ts, radii, horizon, alpha, a_cusp,
                        lam1, r0):
    """Exact hitting times of the quotient-suspension flow into max-metric
    balls around (tx, ts), per seed and radius; -1 = censored.

    During one lap the base point is fixed and the height rises at unit
    speed, so each (lap, radius) admits a closed-form first-entry time.
    """
    n_seeds = len(x0s)
    nr = len(radii)
    out = np.full((n_seeds, nr), -1.0)
    for i in range(n_seeds):
        x = x0s[i]
        s_start = s0s[i]
        t_lap = 0.0
        found = 0
        while t_lap <= horizon and found < nr:
            r_x = r0 - math.log(abs(x)) / lam1
            dx = abs(x - tx)
            for j in range(nr):
                if out[i, j] >= 0.0 or dx > radii[j]:
                    continue
                lo = ts - radii[j]
                hi = ts + radii[j]
                if lo < s_start:
                    lo = s_start
                if hi > r_x:
                    hi = r_x
                if lo <= hi:
                    out[i, j] = t_lap + (lo - s_start)
                    found += 1
            t_lap += r_x - s_start
            s_start = 0.0
            x = _f_scalar(x, alpha, a_cusp)
            if abs(x) < SINGULAR_X:
                break
    return out


def suspension_hitting_times(seeds_x, seeds_s, target, radii, m: ModelParams,
                             horizon: float) -> np.ndarray:
    """Hitting times tau_r(z, target) of the quotient suspension for a batch
    of seeds; entries are NaN where censored."""
    rr = np.asarray(radii.radii() if isinstance(radii, RadiiGrid) else radii,
                    dtype=float)
    tx, ts = float(target[0]), float(target[1])
    out = _suspension_hitting(np.asarray(seeds_x, dtype=float),
                              np.asarray(seeds_s, dtype=float),
                              tx, ts, rr, float(horizon),
                              m.alpha, m.a_cusp, m.lam1, m.r0)
    out[out < 0.0] = np.nan
    return out


@njit(cache=True)
def _flow_hitting_kernel(seeds, cx, cy, cz, radii, horizon, dt, a, r, b):
    """First entrance times of Lorenz orbits into nested Euclidean balls,
    sampled at the integration step (absolute error <= dt); -1 = censored."""
    M = seeds.shape[0]
    nr = len(radii)
    out = np.full((M, nr), -1.0)
    n_steps = int(horizon / dt)
    for i in range(M):
        x, y, z = seeds[i, 0], seeds[i, 1], seeds[i, 2]
        found = 0
        for s in range(n_steps + 1):
            d2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2
            for j in range(nr):
                if out[i, j] < 0.0 and d2 <= radii[j] * radii[j]:
                    out[i, j] = s * dt
                    found += 1
            if found == nr:
                break
            k1x = a * (y - x); k1y = r * x - y - x * z; k1z = x * y - b * z
            u = x + 0.5 * dt * k1x; v = y + 0.5 * dt * k1y; w = z + 0.5 * dt * k1z
            k2x = a * (v - u); k2y = r * u - v - u * w; k2z = u * v - b * w
            u = x + 0.5 * dt * k2x; v = y + 0.5 * dt * k2y; w = z + 0.5 * dt * k2z
            k3x = a * (v - u); k3y = r * u - v - u * w; k3z = u * v - b * w
            u = x + dt * k3x; v = y + dt * k3y; w = z + dt * k3z
            k4x = a * (v - u); k4y = r * u - v - u * w; k4z = u * v - b * w
            x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            z += dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
    return out


def flow_hitting_times(seeds, target, radii, p, horizon: float,
                       dt: float = 5e-3) -> np.ndarray:
    """Hitting times of the Lorenz flow into Euclidean balls around
    `target`, one row per seed; NaN where censored."""
    rr = np.asarray(radii.radii() if isinstance(radii, RadiiGrid) else radii,
                    dtype=float)
    seeds = np.asarray(seeds, dtype=float)
    out = _flow_hitting_kernel(seeds, float(target[0]), float(target[1]),
                               float(target[2]), rr, float(horizon),
                               float(dt), p.a, p.r, p.b)
    out[out < 0.0] = np.nan
    return out


@njit(cache=True)
def _suspension_time_samples(x0, n_samples, dt_sample, alpha, a_cusp, lam1, r0):
    """Time-equidistant samples (x, height) of the quotient suspension; the
    flow's empirical measure converges to the invariant measure of the
    semiflow."""
    out_x = np.empty(n_samples)
    out_s = np.empty(n_samples)
    x = x0
    s_start = 0.0
    t_lap = 0.0
    t_next = 0.0
    i = 0
    while i < n_samples:
        r_x = r0 - math.log(abs(x)) / lam1
        lap_end = t_lap + (r_x - s_start)
        while t_next < lap_end and i < n_samples:
            out_x[i] = x
            out_s[i] = s_start + (t_next - t_lap)
            i += 1
            t_next += dt_sample
        t_lap = lap_end
        s_start = 0.0
        x = _f_scalar(x, alpha, a_cusp)
        if abs(x) < SINGULAR_X:
            return out_x[:i], out_s[:i]
    return out_x, out_s


def suspension_samples(x0: float, n_samples: int, dt_sample: float,
                       m: ModelParams) -> np.ndarray:
    """(n, 2) array of (base, height) flow samples at spacing dt_sample."""
    xs, ss = _suspension_time_samples(float(x0), int(n_samples),
                                      float(dt_sample), m.alpha, m.a_cusp,
                                      m.lam1, m.r0)
    return np.stack([xs, ss], axis=1)


# ---------------------------------------------------------------------------
# Logarithm-law regression
# ---------------------------------------------------------------------------


@dataclass
class HittingRecords:
    """Tidy hitting/recurrence records: one row per (probe, radius, seed)."""

    probe_id: np.ndarray
    r: np.ndarray
    tau: np.ndarray       # NaN where censored
    censored: np.ndarray  # bool
    seed: np.ndarray

    def __post_init__(self):
        n = len(self.r)
        for name in ("probe_id", "tau", "censored", "seed"):
            if len(getattr(self, name)) != n:
                raise PreconditionError("record columns of unequal length")

    @classmethod
    def from_matrix(cls, taus: np.ndarray, radii: np.ndarray, probe_id: int = 0,
                    seeds=None) -> "HittingRecords":
        """Build records from a (n_seeds, n_radii) hitting-time matrix."""
        n_seeds, nr = taus.shape
        seeds = np.arange(n_seeds) if seeds is None else np.asarray(seeds)
        rr = np.tile(radii, n_seeds)
        tt = taus.ravel()
        return cls(probe_id=np.full(n_seeds * nr, probe_id),
                   r=rr, tau=tt, censored=~np.isfinite(tt),
                   seed=np.repeat(seeds, nr))


@dataclass
class LoglawReport:
    """Fitted log tau vs -log r slope against its theoretical reference."""

    fit: FitResult
    reference: float
    discrepancy_sigmas: float
    radii_used: np.ndarray
    radii_excluded: np.ndarray  # censoring > 50%
    censor_fraction: dict
    flagged: bool

    @property
    def discrepancy(self) -> float:
        return self.fit.slope - self.reference


def loglaw_regression(records: HittingRecords, reference: float,
                      min_uncensored: int = 50) -> LoglawReport:
    """Least squares of log tau on -log r, with censored records excluded
    from the fit but fully accounted.  Radii with more than 50% censoring
    (or fewer than `min_uncensored` clean records) are excluded and flag
    the run."""
    radii = np.unique(records.r)
    used, excluded = [], []
    censor_frac = {}
    for r in radii:
        sel = records.r == r
        frac = float(records.censored[sel].mean())
        censor_frac[float(r)] = frac
        n_clean = int((~records.censored[sel]).sum())
        if frac > 0.5 or n_clean < min_uncensored:
            excluded.append(r)
        else:
            used.append(r)
    if len(used) < 5:
        raise PreconditionError(f"only {len(used)} usable radii (need >= 5)")
    keep = np.isin(records.r, used) & ~records.censored & (records.tau > 0.0)
    fit = fit_line(-np.log(records.r[keep]), np.log(records.tau[keep]))
    disc_sig = ((fit.slope - reference) / fit.stderr if fit.stderr > 0.0
                else math.inf)
    return LoglawReport(fit=fit, reference=reference,
                        discrepancy_sigmas=float(disc_sig),
                        radii_used=np.asarray(used),
                        radii_excluded=np.asarray(excluded),
                        censor_fraction=censor_frac,
                        flagged=len(excluded) > 0)


@dataclass
class DimensionPairReport:
    """Per-probe flow vs section local dimensions and their +1 shift."""

    section_d: np.ndarray
    flow_d: np.ndarray

    @property
    def differences(self) -> np.ndarray:
        return self.flow_d - (self.section_d + 1.0)

    @property
    def mean_abs_difference(self) -> float:
        return float(np.abs(self.differences).mean())


def flow_vs_section_dimension(section_samples, suspension_points, probes_x,
                              probes_s, radii: RadiiGrid,
                              min_count: int = 100) -> DimensionPairReport:
    """Estimate d_hat at paired probes on the section (base) measure and the
    suspension measure; report the deviation from the +1 dimension shift."""
    sec_counter = (section_samples if isinstance(section_samples, BallCounter)
                   else BallCounter(section_samples, "chebyshev"))
    flow_counter = (suspension_points if isinstance(suspension_points, BallCounter)
                    else BallCounter(suspension_points, "chebyshev"))
    sec, flow = [], []
    for px, ps in zip(probes_x, probes_s):
        c1 = ball_mass_curve(sec_counter, px, radii, min_count=min_count)
        sec.append(local_dimension(c1).d_hat)
        c2 = ball_mass_curve(flow_counter, np.array([px, ps]), radii,
                             metric="chebyshev", min_count=min_count)
        flow.append(local_dimension(c2).d_hat)
    return DimensionPairReport(section_d=np.array(sec), flow_d=np.array(flow))
