"""Correlation decay, large deviations, escape rates, and the lap-number
decomposition of suspension time averages.

Monte Carlo drivers are vectorized over the seed ensemble and deterministic
given (master seed, parameters): seeds are drawn from per-experiment Philox
streams and reduced in fixed index order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import PreconditionError
from .fitting import FitResult, fit_line
from .model import SINGULAR_X, ModelParams, _f_scalar
from .ode import Params3

# ---------------------------------------------------------------------------
# Correlation functions
# ---------------------------------------------------------------------------


@dataclass
class CorrelationReport:
    """Empirical covariance curve C(n) with an exponential-decay fit.

    `fit` is None when fewer than `min_lags` lags survive above the noise
    floor 3/sqrt(N) (the fit is refused, the curve still reported).
    """

    lags: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_samples: int
    noise_floor: float
    usable_lags: int
    fit: FitResult | None
    refusal: str | None = None

    def check(self):
        if not np.all(np.isfinite(self.values)):
            raise PreconditionError("non-finite correlation values")
        return self


def correlation_function(g_values, f_values=None, max_lag: int = 30,
                         min_lags: int = 5) -> CorrelationReport:
    """Covariance at lags 0..max_lag of observable samples along an orbit.

    C(n) = mean(g_{i+n} f_i) - mean(g) mean(f).  Lags enter the log-linear
    decay fit until |C| first drops below the floor 3/sqrt(N).
    """
    g = np.asarray(g_values, dtype=float)
    f = g if f_values is None else np.asarray(f_values, dtype=float)
    if g.shape != f.shape or g.ndim != 1:
        raise PreconditionError("need matching 1-d observable sample arrays")
    N = len(g)
    if N <= max_lag + 1:
        raise PreconditionError("orbit shorter than the lag range")
    gm, fm = g.mean(), f.mean()
    gc, fc = g - gm, f - fm
    sg, sf = gc.std(), fc.std()
    vals = np.empty(max_lag + 1)
    errs = np.empty(max_lag + 1)
    for n in range(max_lag + 1):
        m = N - n
        vals[n] = float(np.dot(gc[n:], fc[:m])) / m
        errs[n] = sg * sf / math.sqrt(m)
    floor = 3.0 / math.sqrt(N)
    usable = 0
    while usable < max_lag and abs(vals[usable + 1]) >= floor:
        usable += 1
    fit = None
    refusal = None
    if usable >= min_lags:
        fit = fit_line(np.arange(1.0, usable + 1),
                       np.log(np.abs(vals[1:usable + 1])))
    else:
        refusal = (f"only {usable} lags above the noise floor "
                   f"{floor:.3e} (need {min_lags})")
    return CorrelationReport(lags=np.arange(max_lag + 1), values=vals,
                             stderr=errs, n_samples=N, noise_floor=floor,
                             usable_lags=usable, fit=fit,
                             refusal=refusal).check()


# ---------------------------------------------------------------------------
# Lap-number decomposition
# ---------------------------------------------------------------------------


def _gl_nodes(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _integral_on(psi, x: float, lo: float, hi: float, nodes, weights) -> float:
    """Gauss-Legendre integral of h -> psi(x, h) over [lo, hi]."""
    if hi <= lo:
        return 0.0
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return float(half * np.dot(weights, psi(x, mid + half * nodes)))


@dataclass
class LapCheckReport:
    """Residual of the lap decomposition of a suspension time average.

    lhs: direct per-lap time integral of psi along the flow on [0, T];
    rhs: S_n phi(x0) + boundary terms, phi(x) = integral of psi over one
    roof.  `lap_ratio` is n/T, to be compared with 1/mean_roof.
    """

    lhs: float
    rhs: float
    n: int
    T: float
    lap_ratio: float
    mean_roof_ref: float | None = None

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs) / self.T

    @property
    def ratio_rel_error(self) -> float | None:
        if self.mean_roof_ref is None:
            return None
        return abs(self.lap_ratio * self.mean_roof_ref - 1.0)


def lap_decomposition_check(x0: float, s0: float, T: float, psi,
                            m: ModelParams, quad_order: int = 64,
                            mean_roof_ref: float | None = None
                            ) -> LapCheckReport:
    """Verify (1/T) int_0^T psi(X^t(z)) dt = (1/T) S_n phi(x0) + I/T.

    psi(x, h) must be vectorized in h.  The left side is integrated lap by
    lap along the evolved flow; the right side re-evaluates phi over full
    roofs plus the two boundary integrals.  For smooth psi the residual is
    quadrature-exact (~1e-12), so any bookkeeping error (lap counts,
    heights) shows up immediately.
    """
    if T < 10.0 * m.r0:
        raise PreconditionError("horizon too short: need T >= 10 r0")
    nodes, weights = _gl_nodes(quad_order)
    # walk the laps
    xs = [float(x0)]
    roofs = [float(m.r0 - math.log(abs(x0)) / m.lam1)]
    total = s0 + T
    acc = roofs[0]
    x = float(x0)
    while acc <= total:
        x = _f_scalar(x, m.alpha, m.a_cusp)
        if abs(x) < SINGULAR_X:
            raise PreconditionError("orbit hit the singular line mid-check")
        xs.append(x)
        r = m.r0 - math.log(abs(x)) / m.lam1
        roofs.append(r)
        acc += r
    n = len(xs) - 1  # laps completed: S_n r <= s0+T < S_{n+1} r
    s_end = total - (acc - roofs[-1])  # height on the final base point
    # lhs: piecewise integral along the flow
    lhs = _integral_on(psi, xs[0], s0, roofs[0], nodes, weights)
    for j in range(1, n):
        lhs += _integral_on(psi, xs[j], 0.0, roofs[j], nodes, weights)
    if n >= 1:
        lhs += _integral_on(psi, xs[n], 0.0, s_end, nodes, weights)
    else:
        lhs = _integral_on(psi, xs[0], s0, s0 + T, nodes, weights)
    # rhs: Birkhoff sum of phi plus boundary terms
    phi_sum = 0.0
    for j in range(n):
        phi_sum += _integral_on(psi, xs[j], 0.0, roofs[j], nodes, weights)
    boundary = (-_integral_on(psi, xs[0], 0.0, s0, nodes, weights)
                + _integral_on(psi, xs[n], 0.0, s_end, nodes, weights))
    rhs = phi_sum + boundary if n >= 1 else lhs
    return LapCheckReport(lhs=lhs, rhs=rhs, n=n, T=T, lap_ratio=n / T,
                          mean_roof_ref=mean_roof_ref)


# ---------------------------------------------------------------------------
# Large deviations
# ---------------------------------------------------------------------------

SEMIFLOW_OBSERVABLES = {"x": 0, "abs_x": 1, "cos_pi_x": 2}


@njit(cache=True)
def _semiflow_obs(x, code):
    if code == 0:
        return x
    elif code == 1:
        return abs(x)
    return math.cos(math.pi * x)


@njit(cache=True)
def _semiflow_averages(x0s, s0s, t_grid, code, alpha, a_cusp, lam1, r0):
    """Time averages (1/T) int psi over the quotient suspension, for every
    seed and every checkpoint T in t_grid (fiber-constant psi)."""
    n_seed = len(x0s)
    n_t = len(t_grid)
    out = np.empty((n_seed, n_t))
    ok = np.ones(n_seed, dtype=np.bool_)
    for i in range(n_seed):
        x = x0s[i]
        s_start = s0s[i]
        t_lap = 0.0
        acc = 0.0
        kk = 0
        while kk < n_t:
            r_x = r0 - math.log(abs(x)) / lam1
            lap_end = t_lap + (r_x - s_start)
            val = _semiflow_obs(x, code)
            while kk < n_t and t_grid[kk] <= lap_end:
                out[i, kk] = (acc + val * (t_grid[kk] - t_lap)) / t_grid[kk]
                kk += 1
            acc += val * (r_x - s_start)
            t_lap = lap_end
            s_start = 0.0
            x = _f_scalar(x, alpha, a_cusp)
            if abs(x) < SINGULAR_X:
                ok[i] = False
                for k2 in range(kk, n_t):
                    out[i, k2] = np.nan
                break
    return out, ok


@njit(cache=True)
def _roof_weighted_reference(x0, n, code, alpha, a_cusp, lam1, r0):
    """Flow average of a fiber-constant observable over a long base orbit:
    sum psi(x_j) r(x_j) / sum r(x_j), with variance accumulators."""
    x = x0
    sw = 0.0
    swv = 0.0
    svv = 0.0
    for _ in range(n):
        r = r0 - math.log(abs(x)) / lam1
        v = _semiflow_obs(x, code)
        sw += r
        swv += r * v
        svv += r * v * v
        x = _f_scalar(x, alpha, a_cusp)
        if abs(x) < SINGULAR_X:
            break
    mean = swv / sw
    var = svv / sw - mean * mean
    return mean, var, sw


def sample_under_roof(m: ModelParams, n: int, rng: np.random.Generator
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Exact sampling of Leb x Leb^1 restricted under the roof graph.

    Mixture of the rectangle below the minimum roof and the exponential cap
    above it (the roof is r0 - log|x|/lam1, so the cap width shrinks like
    exp(-lam1 (s - r0))).
    """
    r_min = m.min_roof
    rect_area = r_min  # width 1 times height r_min
    cap_area = 1.0 / m.lam1  # int_{r_min}^inf 2 exp(-lam1 (s - r0)) ds
    p_rect = rect_area / (rect_area + cap_area)
    u = rng.random(n)
    xs = np.empty(n)
    ss = np.empty(n)
    in_rect = u < p_rect
    n_rect = int(in_rect.sum())
    xs[in_rect] = rng.uniform(-0.5, 0.5, n_rect)
    ss[in_rect] = rng.uniform(0.0, r_min, n_rect)
    n_cap = n - n_rect
    v = rng.random(n_cap)
    s_cap = r_min + rng.exponential(1.0 / m.lam1, n_cap)
    w = np.exp(-m.lam1 * (s_cap - m.r0))
    xs[~in_rect] = (2.0 * v - 1.0) * w
    ss[~in_rect] = s_cap
    # singular-line guard (probability ~ 0): nudge exact zeros outward
    bad = np.abs(xs) < SINGULAR_X
    xs[bad] = SINGULAR_X
    return xs, ss


def binomial_interval(k: int, n: int, level: float = 0.95
                      ) -> tuple[float, float]:
    """Exact (Clopper-Pearson) two-sided confidence interval for a
    binomial proportion."""
    from scipy.stats import beta

    a = (1.0 - level) / 2.0
    lo = 0.0 if k == 0 else float(beta.ppf(a, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1.0 - a, k + 1, n - k))
    return lo, hi


@dataclass
class DeviationCurve:
    """Deviation fractions p_hat(T) with exact binomial confidence
    intervals and an exponential rate fit."""

    t_grid: np.ndarray
    fractions: np.ndarray
    stderr: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    eps: float
    n_samples: int
    reference: float
    fit: FitResult | None
    excluded_horizons: np.ndarray  # p_hat = 0 there, log undefined
    discarded_seeds: int = 0

    @property
    def rate_significance(self) -> float:
        if self.fit is None or self.fit.stderr == 0.0:
            return 0.0
        return abs(self.fit.slope) / self.fit.stderr


def _deviation_curve_from_averages(avgs, t_grid, eps, reference,
                                   discarded: int) -> DeviationCurve:
    dev = np.abs(avgs - reference) > eps
    M = avgs.shape[0]
    counts = dev.sum(axis=0)
    p = counts / M
    se = np.sqrt(np.maximum(p * (1.0 - p), 1.0 / M) / M)
    cis = np.array([binomial_interval(int(k), M) for k in counts])
    pos = p > 0.0
    fit = None
    if pos.sum() >= 3:
        fit = fit_line(t_grid[pos], np.log(p[pos]),
                       weights=(p[pos] * M) / (1.0 - p[pos] + 1.0 / M))
    return DeviationCurve(t_grid=np.asarray(t_grid, dtype=float), fractions=p,
                          stderr=se, ci_low=cis[:, 0], ci_high=cis[:, 1],
                          eps=eps, n_samples=M,
                          reference=reference, fit=fit,
                          excluded_horizons=np.asarray(t_grid)[~pos],
                          discarded_seeds=discarded)


def semiflow_reference(m: ModelParams, observable: str = "x",
                       n_laps: int = 1_000_000, x0: float = 0.37173
                       ) -> tuple[float, float]:
    """Long-run flow average of a fiber-constant observable and its
    (autocorrelation-ignorant) standard error."""
    code = SEMIFLOW_OBSERVABLES[observable]
    mean, var, horizon = _roof_weighted_reference(
        float(x0), int(n_laps), code, m.alpha, m.a_cusp, m.lam1, m.r0)
    se = math.sqrt(max(var, 0.0) * 2.0 * m.r0 / horizon)
    return mean, se


def deviation_rate_semiflow(m: ModelParams, eps: float, t_grid, M: int,
                            rng: np.random.Generator, reference: float,
                            reference_se: float | None = None,
                            observable: str = "x") -> DeviationCurve:
    """Fraction of Leb x Leb^1 initial conditions whose time-T averages
    deviate from the reference by more than eps, over a horizon grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0.0) or t_grid[0] <= 0.0:
        raise PreconditionError("horizon grid must be positive increasing")
    if M < 100:
        raise PreconditionError("need at least 100 samples per horizon")
    if reference_se is not None and reference_se > eps / 10.0:
        raise PreconditionError(
            f"reference s.e. {reference_se:.3g} exceeds eps/10 = {eps / 10:.3g}")
    code = SEMIFLOW_OBSERVABLES[observable]
    xs, ss = sample_under_roof(m, int(M), rng)
    avgs, ok = _semiflow_averages(xs, ss, t_grid, code, m.alpha, m.a_cusp,
                                  m.lam1, m.r0)
    return _deviation_curve_from_averages(avgs[ok], t_grid, eps, reference,
                                          discarded=int((~ok).sum()))


# --- flow-side ensemble machinery (per-seed compiled RK4) ------------------

# bounded continuous observables on the trapping box; z_scaled is tuned so
# that order-0.1 deviations of its time average are informative
FLOW_OBSERVABLES = {"z_scaled": 0, "z": 1, "x_scaled": 2}

DEFAULT_TRAPPING_BOX = np.array([[-30.0, 30.0], [-30.0, 30.0], [-5.0, 55.0]])


@njit(cache=True)
def _flow_obs(x, y, z, code):
    if code == 0:
        return z / 13.0
    elif code == 1:
        return z
    return x / 10.0


@njit(cache=True)
def _rk4_step(x, y, z, dt, a, r, b):
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
    return x, y, z


@njit(cache=True)
def _flow_averages_kernel(seeds, ckpt_steps, t_grid, dt, a, r, b, code):
    """Running time averages of an observable along the flow, per seed, at
    the checkpoint steps (trapezoid in time)."""
    M = seeds.shape[0]
    nT = len(ckpt_steps)
    out = np.empty((M, nT))
    n_steps = ckpt_steps[-1]
    for i in range(M):
        x, y, z = seeds[i, 0], seeds[i, 1], seeds[i, 2]
        acc = 0.0
        vprev = _flow_obs(x, y, z, code)
        kk = 0
        for s in range(n_steps):
            x, y, z = _rk4_step(x, y, z, dt, a, r, b)
            v = _flow_obs(x, y, z, code)
            acc += 0.5 * (v + vprev) * dt
            vprev = v
            if s + 1 == ckpt_steps[kk]:
                out[i, kk] = acc / t_grid[kk]
                kk += 1
    return out


@njit(cache=True)
def _flow_reference_kernel(x, y, z, n_steps, dt, a, r, b, code, batch_acc):
    n_batches = len(batch_acc)
    per = n_steps // n_batches
    vprev = _flow_obs(x, y, z, code)
    for s in range(n_steps):
        x, y, z = _rk4_step(x, y, z, dt, a, r, b)
        v = _flow_obs(x, y, z, code)
        bi = s // per
        if bi >= n_batches:
            bi = n_batches - 1
        batch_acc[bi] += 0.5 * (v + vprev) * dt
        vprev = v
    return batch_acc


def flow_reference(p: Params3, observable: str = "z_scaled",
                   horizon: float = 1e4, dt: float = 2e-3,
                   s0=(1.0, 1.0, 1.0)) -> tuple[float, float]:
    """Long-orbit reference average of a flow observable (trapezoid in time)
    and a standard error from 50 batch means."""
    code = FLOW_OBSERVABLES[observable]
    n_steps = int(round(horizon / dt))
    batch = _flow_reference_kernel(float(s0[0]), float(s0[1]), float(s0[2]),
                                   n_steps, dt, p.a, p.r, p.b, code,
                                   np.zeros(50))
    means = batch / (horizon / 50)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(50)
                                      * math.sqrt(2.0))


def sample_box(box: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(box[:, 0], box[:, 1], size=(n, 3))


def _checkpoint_steps(t_grid: np.ndarray, dt: float) -> np.ndarray:
    steps = np.round(t_grid / dt).astype(np.int64)
    if np.any(np.diff(steps) <= 0) or steps[0] <= 0:
        raise PreconditionError("horizon grid too fine for the step size")
    return steps


def deviation_rate_flow(p: Params3, eps: float, t_grid, M: int,
                        rng: np.random.Generator, reference: float,
                        reference_se: float | None = None,
                        observable: str = "z_scaled", dt: float = 5e-3,
                        box: np.ndarray | None = None) -> DeviationCurve:
    """Volume fraction of trapping-box initial conditions whose time-T
    averages deviate by more than eps, over a horizon grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if M < 100:
        raise PreconditionError("need at least 100 samples")
    if reference_se is not None and reference_se > eps / 10.0:
        raise PreconditionError(
            f"reference s.e. {reference_se:.3g} exceeds eps/10 = {eps / 10:.3g}")
    box = DEFAULT_TRAPPING_BOX if box is None else np.asarray(box, dtype=float)
    code = FLOW_OBSERVABLES[observable]
    seeds = sample_box(box, int(M), rng)
    ckpt = _checkpoint_steps(t_grid, dt)
    avgs = _flow_averages_kernel(seeds, ckpt, t_grid, dt, p.a, p.r, p.b, code)
    return _deviation_curve_from_averages(avgs, t_grid, eps, reference, 0)


# ---------------------------------------------------------------------------
# Escape rates
# ---------------------------------------------------------------------------


@dataclass
class EscapeCurve:
    """Fraction of volume-sampled seeds whose orbit stays in K up to T."""

    t_grid: np.ndarray
    staying: np.ndarray
    n_samples: int
    k_descriptor: str
    fit: FitResult | None

    @property
    def rate_significance(self) -> float:
        if self.fit is None or self.fit.stderr == 0.0:
            return 0.0
        return abs(self.fit.slope) / self.fit.stderr


@njit(cache=True)
def _escape_steps_kernel(seeds, n_steps, dt, a, r, b, box, cx, cy, cz, rad2):
    """Step index at which each orbit first leaves K (box minus open ball);
    n_steps + 1 when it stays through the horizon.  rad2 < 0 disables the
    ball."""
    M = seeds.shape[0]
    out = np.empty(M, dtype=np.int64)
    for i in range(M):
        x, y, z = seeds[i, 0], seeds[i, 1], seeds[i, 2]
        exit_step = n_steps + 1
        for s in range(n_steps):
            x, y, z = _rk4_step(x, y, z, dt, a, r, b)
            if (x < box[0, 0] or x > box[0, 1] or y < box[1, 0]
                    or y > box[1, 1] or z < box[2, 0] or z > box[2, 1]):
                exit_step = s + 1
                break
            if rad2 > 0.0:
                d2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2
                if d2 <= rad2:
                    exit_step = s + 1
                    break
        out[i] = exit_step
    return out


def escape_rate(p: Params3, t_grid, M: int, rng: np.random.Generator,
                box: np.ndarray | None = None, ball_center=None,
                ball_radius: float = 1.0, dt: float = 5e-3,
                reference_orbit: np.ndarray | None = None) -> EscapeCurve:
    """Staying fractions for K = box minus an open ball (or the plain box).

    Refused as vacuous when a reference attractor orbit never leaves K
    (then mu(K) is empirically 1 and no escape is possible).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    box = DEFAULT_TRAPPING_BOX if box is None else np.asarray(box, dtype=float)
    center = None if ball_center is None else np.asarray(ball_center, dtype=float)

    def in_K(X, Y, Z):
        inside_box = ((X >= box[0, 0]) & (X <= box[0, 1])
                      & (Y >= box[1, 0]) & (Y <= box[1, 1])
                      & (Z >= box[2, 0]) & (Z <= box[2, 1]))
        if center is None:
            return inside_box
        d2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2
        return inside_box & (d2 > ball_radius**2)

    if reference_orbit is not None:
        ref_in = in_K(reference_orbit[:, 0], reference_orbit[:, 1],
                      reference_orbit[:, 2])
        if bool(ref_in.all()):
            raise PreconditionError(
                "vacuous escape experiment: reference orbit never leaves K "
                "(empirical mu(K) = 1)")
    seeds = sample_box(box, int(M), rng)
    if center is not None:
        # resample seeds landing inside the excluded ball
        for _ in range(100):
            d2 = ((seeds - center) ** 2).sum(axis=1)
            bad = d2 <= ball_radius**2
            if not bad.any():
                break
            seeds[bad] = sample_box(box, int(bad.sum()), rng)
    ckpt = _checkpoint_steps(t_grid, dt)
    if center is None:
        cx = cy = cz = 0.0
        rad2 = -1.0
    else:
        cx, cy, cz = center
        rad2 = ball_radius**2
    exit_steps = _escape_steps_kernel(seeds, int(ckpt[-1]), dt, p.a, p.r, p.b,
                                      box, cx, cy, cz, rad2)
    staying = np.array([(exit_steps > s).mean() for s in ckpt])
    pos = staying > 0.0
    fit = fit_line(t_grid[pos], np.log(staying[pos])) if pos.sum() >= 3 else None
    desc = f"box {box.tolist()}"
    if center is not None:
        desc += f" minus ball(center={center.tolist()}, radius={ball_radius})"
    return EscapeCurve(t_grid=t_grid, staying=staying, n_samples=int(M),
                       k_descriptor=desc, fit=fit)


# ---------------------------------------------------------------------------
# Projection lemma instantiation
# ---------------------------------------------------------------------------


@dataclass
class ProjectionCheckReport:
    """Empirical containment of return-map deviation events in the projected
    quotient events.

    For each n in the grid: how many sampled points deviate at 2 eps for the
    fiber-integrated observable phi under the return map, and how many of
    those fall outside both quotient events (zeta-deviation at eps, slow
    recurrence at eps) -- the violations.  `burn_in` is the geometric bound
    log(osc/eps)/log(1/contraction) below which violations are expected.
    """

    n_grid: np.ndarray
    deviating: np.ndarray
    violations: np.ndarray
    burn_in: float
    eps: float
    fiber_oscillation: float
    mean_phi: float
    mean_zeta: float
    discarded: int = 0


def _phi_on_points(psi, xs, ys, m: ModelParams, nodes, weights) -> np.ndarray:
    """phi(x,y) = int_0^{r(x)} psi(x, y, s) ds, vectorized over points."""
    roofs = m.r0 - np.log(np.abs(xs)) / m.lam1
    mid, half = 0.5 * roofs, 0.5 * roofs
    out = np.zeros(len(xs))
    for q, w in zip(nodes, weights):
        out += w * psi(xs, ys, mid + half * q)
    return half * out


def projected_deviation_check(psi, m: ModelParams, eps: float, n_grid,
                              M: int, rng: np.random.Generator,
                              n_reference: int = 200_000,
                              n_bins: int = 400, delta: float = 0.05,
                              quad_order: int = 32) -> ProjectionCheckReport:
    """Monte Carlo instantiation of the stable-leaf projection containment.

    psi(x, y, s) must be vectorized; zeta is built as the fiber supremum of
    |phi| over the sampled attractor slice per x-bin, evaluated at the
    actual base point (so it is exactly phi when psi is fiber-constant).
    """
    from .model import _orbit_2d_kernel

    nodes, weights = _gl_nodes(quad_order)
    # attractor reference: long return-map orbit, burned in
    xs, ys, _ = _orbit_2d_kernel(0.31731, 0.11, n_reference + 1000,
                                 m.alpha, m.beta, m.a_cusp, m.B, m.D)
    xs, ys = xs[1000:], ys[1000:]
    phi_ref = _phi_on_points(psi, xs, ys, m, nodes, weights)
    mean_phi = float(phi_ref.mean())
    # fiber representative per x-bin: the sampled point maximizing |phi|
    bins = np.clip(((xs + 0.5) * n_bins).astype(np.int64), 0, n_bins - 1)
    rep_y = np.zeros(n_bins)
    best = np.full(n_bins, -np.inf)
    for b, yv, pv in zip(bins, ys, np.abs(phi_ref)):
        if pv > best[b]:
            best[b] = pv
            rep_y[b] = yv
    filled = best > -np.inf
    if not filled.all():
        # uncovered bins (near the singular line): borrow the nearest filled one
        idx = np.nonzero(filled)[0]
        for b in np.nonzero(~filled)[0]:
            rep_y[b] = rep_y[idx[np.argmin(np.abs(idx - b))]]

    def zeta(x_arr):
        bb = np.clip(((x_arr + 0.5) * n_bins).astype(np.int64), 0, n_bins - 1)
        return np.abs(_phi_on_points(psi, x_arr, rep_y[bb], m, nodes, weights))

    zeta_ref = zeta(xs)
    mean_zeta = float(zeta_ref.mean())
    osc = float((zeta_ref - phi_ref).max() - min(0.0, (zeta_ref - phi_ref).min()))
    contraction = m.fiber_contraction
    burn_in = (math.log(max(osc, 1e-12) / eps) / math.log(1.0 / contraction)
               if osc > eps else 0.0)

    n_grid = np.asarray(sorted(set(int(v) for v in n_grid)), dtype=np.int64)
    n_max = int(n_grid[-1])
    # test points: base from the attractor marginal, fiber from Lebesgue
    seed_x = xs[rng.integers(0, len(xs), size=M)]
    seed_y = rng.uniform(-0.5, 0.5, M)
    deviating = np.zeros(len(n_grid), dtype=np.int64)
    violations = np.zeros(len(n_grid), dtype=np.int64)
    discarded = 0
    for i in range(M):
        ox, oy, nv = _orbit_2d_kernel(float(seed_x[i]), float(seed_y[i]),
                                      n_max, m.alpha, m.beta, m.a_cusp,
                                      m.B, m.D)
        if nv != n_max + 1:
            discarded += 1
            continue
        phis = _phi_on_points(psi, ox, oy, m, nodes, weights)
        zetas = zeta(ox)
        ax = np.abs(ox)
        recs = np.where(ax < delta, np.abs(np.log(ax)), 0.0)
        cp, cz, cr = np.cumsum(phis), np.cumsum(zetas), np.cumsum(recs)
        for j, nn in enumerate(n_grid):
            f_dev = abs(cp[nn - 1] / nn - mean_phi) > 2.0 * eps
            if not f_dev:
                continue
            deviating[j] += 1
            z_dev = abs(cz[nn - 1] / nn - mean_zeta) > eps
            r_dev = cr[nn - 1] / nn > eps
            if not (z_dev or r_dev):
                violations[j] += 1
    return ProjectionCheckReport(n_grid=n_grid, deviating=deviating,
                                 violations=violations, burn_in=burn_in,
                                 eps=eps, fiber_oscillation=osc,
                                 mean_phi=mean_phi, mean_zeta=mean_zeta,
                                 discarded=discarded)


# ---------------------------------------------------------------------------
# Bernoulli (coin) fixture for the deviation machinery
# ---------------------------------------------------------------------------


def cramer_rate_bernoulli(eps: float, p: float = 0.5) -> float:
    """Cramer rate I(p + eps) for the mean of iid Bernoulli(p), the exact
    exponential decay rate of P(|S_n/n - p| > eps) (two-sided, dominated by
    the nearer tail; symmetric at p = 1/2)."""
    q = p + eps
    if not 0.0 < q < 1.0:
        raise PreconditionError("eps pushes the tilt outside (0,1)")
    return q * math.log(q / p) + (1.0 - q) * math.log((1.0 - q) / (1.0 - p))


def deviation_rate_coin(eps: float, n_grid, M: int, rng: np.random.Generator
                        ) -> DeviationCurve:
    """Deviation fractions of iid fair-coin means, the closed-form fixture:
    the fitted rate should match cramer_rate_bernoulli(eps)."""
    n_grid = np.asarray(n_grid, dtype=np.int64)
    n_max = int(n_grid[-1])
    sums = np.zeros(int(M))
    avgs = np.empty((int(M), len(n_grid)))
    done = 0
    for j, nn in enumerate(n_grid):
        draw = rng.integers(0, 2, size=(int(M), int(nn - done)), dtype=np.int8)
        sums += draw.sum(axis=1, dtype=np.int64)
        done = int(nn)
        avgs[:, j] = sums / nn
    return _deviation_curve_from_averages(avgs, n_grid.astype(float), eps,
                                          0.5, 0)
