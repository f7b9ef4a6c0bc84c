"""Birkhoff averages, empirical measures, Lyapunov exponents, entropy and
base-dynamics diagnostics.

The physical measures are represented purely empirically: long orbits,
box-partition histograms, and running averages.  Every estimator is
deterministic given its seed/orbit inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import PreconditionError
from .model import SQRT2, SINGULAR_X, ModelParams, _f_scalar
from .ode import Jet, Params3, integrate, propagate_jet

REGULARITY_TAGS = ("continuous", "lipschitz", "bounded-variation")


@dataclass(frozen=True)
class Observable:
    """Named scalar observable with a declared regularity class."""

    name: str
    fn: object  # callable point -> float (vectorized over leading axes)
    regularity: str = "continuous"

    def __post_init__(self):
        if self.regularity not in REGULARITY_TAGS:
            raise PreconditionError(
                f"regularity {self.regularity!r} not one of {REGULARITY_TAGS}")

    def __call__(self, x):
        return self.fn(x)


@dataclass
class BirkhoffReport:
    """Final time/iterate average plus a running-convergence trace."""

    final: float
    trace_n: np.ndarray
    trace_avg: np.ndarray
    horizon: float
    complete: bool = True  # False when the orbit terminated early


def birkhoff_average(values, horizon=None, trace_points: int = 200,
                     complete: bool = True) -> BirkhoffReport:
    """Average a sampled observable along an orbit.

    `values` are observable samples at uniform spacing (iterates of a map or
    equally spaced flow samples); the running trace is emitted on a sparse
    index grid for convergence plots.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise PreconditionError("need a non-empty 1-d sample array")
    n = len(values)
    # exactly rounded total, so constant observables average exactly
    final = math.fsum(values) / n
    csum = np.cumsum(values)
    idx = np.unique(np.linspace(1, n, min(trace_points, n)).astype(np.int64))
    trace = csum[idx - 1] / idx
    return BirkhoffReport(final=final, trace_n=idx, trace_avg=trace,
                          horizon=float(horizon if horizon is not None else n),
                          complete=complete)


@dataclass
class EmpiricalHistogram:
    """Box-partition empirical measure on a uniform grid.

    `edges` holds one strictly increasing edge array per axis; counts sum to
    `total` minus `out_of_grid` (which must be zero for valid runs).
    """

    edges: tuple[np.ndarray, ...]
    counts: np.ndarray
    total: int
    out_of_grid: int = 0
    normalized: bool = True

    @property
    def mass(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def ndim(self) -> int:
        return len(self.edges)

    def check(self):
        inside = int(self.counts.sum())
        if inside + self.out_of_grid != self.total:
            raise PreconditionError("histogram counts do not sum to total")
        if self.total > 0 and self.out_of_grid == 0:
            if abs(self.mass.sum() - 1.0) > 1e-12:
                raise PreconditionError("normalized masses do not sum to 1")
        return self

    def integrate(self, fn) -> float:
        """Integral of fn against the (bin-center) empirical measure."""
        centers = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        mesh = np.meshgrid(*centers, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
        vals = np.asarray(fn(pts if self.ndim > 1 else pts[:, 0]), dtype=float)
        return float((vals * self.mass.ravel()).sum())


def empirical_measure(samples, bins, bounds=None) -> EmpiricalHistogram:
    """Histogram `samples` (n,) or (n,d) on a uniform grid.

    `bins` is an int or per-axis tuple; `bounds` a per-axis (lo, hi) list
    (defaults to the sample hull, slightly padded).  Out-of-grid samples are
    counted, never silently dropped.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise PreconditionError("empty sample set")
    if samples.ndim == 1:
        samples = samples[:, None]
    n, d = samples.shape
    if bounds is None:
        lo, hi = samples.min(axis=0), samples.max(axis=0)
        pad = np.maximum(1e-9, 1e-9 * (hi - lo))
        bounds = [(lo[i] - pad[i], hi[i] + pad[i]) for i in range(d)]
    if isinstance(bins, (int, np.integer)):
        bins = (int(bins),) * d
    edges = [np.linspace(b[0], b[1], nb + 1) for b, nb in zip(bounds, bins)]
    inside = np.ones(n, dtype=bool)
    for i in range(d):
        inside &= (samples[:, i] >= edges[i][0]) & (samples[:, i] <= edges[i][-1])
    counts, _ = np.histogramdd(samples[inside], bins=edges)
    return EmpiricalHistogram(edges=tuple(edges), counts=counts, total=n,
                              out_of_grid=int(n - inside.sum())).check()


# ---------------------------------------------------------------------------
# Lyapunov exponents
# ---------------------------------------------------------------------------


@dataclass
class LyapunovReport:
    """Exponent estimates with their running-convergence trace."""

    exponents: np.ndarray  # sorted descending for flows; single entry for maps
    horizon: float
    renorm_period: float | None
    trace_t: np.ndarray
    trace: np.ndarray  # (len(trace_t), n_exponents) running estimates
    complete: bool = True


@njit(cache=True)
def _log_deriv_sum(x0, n, alpha, a_cusp, stride):
    n_trace = n // stride
    trace = np.empty(n_trace)
    x = x0
    acc = 0.0
    i = 0
    for k in range(n):
        ax = abs(x)
        acc += math.log(a_cusp * alpha * ax ** (alpha - 1.0) + SQRT2)
        x = _f_scalar(x, alpha, a_cusp)
        if abs(x) < SINGULAR_X:
            return acc, k + 1, trace[:i], False
        if (k + 1) % stride == 0:
            trace[i] = acc / (k + 1)
            i += 1
    return acc, n, trace[:i], True


def lyapunov_from_log_derivatives(log_derivs, trace_points: int = 200
                                  ) -> LyapunovReport:
    """Estimator core on precomputed log |f'| samples (for fixture maps)."""
    rep = birkhoff_average(log_derivs, trace_points=trace_points)
    return LyapunovReport(exponents=np.array([rep.final]),
                          horizon=rep.horizon, renorm_period=None,
                          trace_t=rep.trace_n.astype(float),
                          trace=rep.trace_avg[:, None])


def map_lyapunov(x0: float, n: int, m: ModelParams,
                 trace_points: int = 200) -> LyapunovReport:
    """Single exponent (1/n) sum log f' along the quotient-map orbit.

    Bounded below by log sqrt(2) since f' >= sqrt(2) everywhere.
    """
    if n < 1000:
        raise PreconditionError(f"need n >= 1e3 iterates, got {n}")
    stride = max(1, n // trace_points)
    acc, n_done, trace, complete = _log_deriv_sum(
        float(x0), int(n), m.alpha, m.a_cusp, stride)
    est = acc / n_done
    return LyapunovReport(exponents=np.array([est]), horizon=float(n_done),
                          renorm_period=None,
                          trace_t=np.arange(1, len(trace) + 1) * stride,
                          trace=trace[:, None], complete=complete)


def flow_lyapunov_spectrum(s0, p: Params3, T: float, renorm_period: float = 0.5,
                           dt: float = 1e-3) -> LyapunovReport:
    """Three flow exponents via tangent-frame propagation with periodic
    reorthonormalization; sorted descending.

    For orbits on the attractor the spectrum contains one near-zero exponent
    (the flow direction) and sums to the constant divergence -(a+1+b).
    """
    if T < 100.0:
        raise PreconditionError(f"need T >= 100 for a stable spectrum, got {T}")
    jet = Jet.identity(s0)
    _, ledger = propagate_jet(jet, p, T, renorm_period=renorm_period, dt=dt)
    times = renorm_period * np.arange(1, len(ledger) + 1)
    times[-1] = T
    running = np.cumsum(ledger, axis=0) / times[:, None]
    order = np.argsort(running[-1])[::-1]
    return LyapunovReport(exponents=running[-1][order], horizon=T,
                          renorm_period=renorm_period, trace_t=times,
                          trace=running[:, order])


# ---------------------------------------------------------------------------
# Non-uniform expansion / slow recurrence diagnostics
# ---------------------------------------------------------------------------


@dataclass
class NueReport:
    """Per-seed expansion and singular-set recurrence averages.

    `expansion` holds (1/n) sum log |1/f'| per seed (non-uniform expansion
    requires a negative limsup); `recurrence` the averages of
    |log d_delta(x, 0)|; `tail_fractions[i]` the fraction of seeds whose
    recurrence average exceeds eps at horizon n_grid[i].
    """

    n: int
    delta: float
    eps: float
    expansion: np.ndarray
    recurrence: np.ndarray
    visit_fraction: np.ndarray
    n_grid: np.ndarray
    tail_fractions: np.ndarray
    expansion_bound: float  # -log sqrt(2), the forced upper bound


@njit(cache=True)
def _nue_orbit(x0, n, alpha, a_cusp, delta):
    x = x0
    acc_exp = 0.0
    acc_rec = 0.0
    visits = 0
    for k in range(n):
        ax = abs(x)
        acc_exp -= math.log(a_cusp * alpha * ax ** (alpha - 1.0) + SQRT2)
        if ax < delta:
            acc_rec += abs(math.log(ax))
            visits += 1
        x = _f_scalar(x, alpha, a_cusp)
        if abs(x) < SINGULAR_X:
            return acc_exp, acc_rec, visits, k + 1
    return acc_exp, acc_rec, visits, n


def nue_diagnostics(seeds, n: int, delta: float, eps: float, m: ModelParams,
                    n_grid=(100, 1000, 10000)) -> NueReport:
    """Empirical check of non-uniform expansion and slow recurrence for the
    quotient map over a batch of seeds.

    Expansion averages are forced <= -log sqrt(2); recurrence averages use
    the truncated distance d_delta(x, {0}) = |x| if |x| < delta else 1.
    """
    if not 0.0 < delta < 0.5:
        raise PreconditionError("delta must lie in (0, 1/2)")
    if n < 1000:
        raise PreconditionError("need n >= 1e3")
    seeds = np.asarray(seeds, dtype=float)
    expansion = np.empty(len(seeds))
    recurrence = np.empty(len(seeds))
    visit_frac = np.empty(len(seeds))
    for i, x0 in enumerate(seeds):
        e, r, v, n_done = _nue_orbit(float(x0), int(n), m.alpha, m.a_cusp, delta)
        expansion[i] = e / n_done
        recurrence[i] = r / n_done
        visit_frac[i] = v / n_done
    n_grid = np.asarray(n_grid, dtype=np.int64)
    tails = np.empty(len(n_grid))
    for j, nj in enumerate(n_grid):
        accs = np.empty(len(seeds))
        for i, x0 in enumerate(seeds):
            _, r, _, n_done = _nue_orbit(float(x0), int(nj), m.alpha, m.a_cusp, delta)
            accs[i] = r / n_done
        tails[j] = float(np.mean(accs > eps))
    return NueReport(n=n, delta=delta, eps=eps, expansion=expansion,
                     recurrence=recurrence, visit_fraction=visit_frac,
                     n_grid=n_grid, tail_fractions=tails,
                     expansion_bound=-math.log(SQRT2))


# ---------------------------------------------------------------------------
# Sensitivity probe
# ---------------------------------------------------------------------------


@dataclass
class SensitivityReport:
    """Separation curve of an orbit pair and its threshold-exceedance time.

    `exceedance_time` is None when the pair never separates past
    delta_star within the horizon (censored, not an error).
    """

    times: np.ndarray
    separation: np.ndarray
    d0: float
    delta_star: float
    exceedance_time: float | None


def sensitivity_probe_flow(s0, p: Params3, d0: float, delta_star: float,
                           horizon: float, dt: float = 1e-3,
                           direction=None) -> SensitivityReport:
    """Track the distance between trajectories launched d0 apart."""
    if not 0.0 < d0 < delta_star:
        raise PreconditionError("need 0 < d0 < delta_star")
    s0 = np.asarray(s0, dtype=float)
    dirn = np.array([1.0, 0.0, 0.0]) if direction is None else np.asarray(direction)
    dirn = dirn / np.linalg.norm(dirn)
    tr1 = integrate(s0, p, horizon, method="rk4", dt=dt, dense=False)
    tr2 = integrate(s0 + d0 * dirn, p, horizon, method="rk4", dt=dt, dense=False)
    sep = np.linalg.norm(tr1.states - tr2.states, axis=1)
    exceed = np.nonzero(sep > delta_star)[0]
    t_ex = float(tr1.t[exceed[0]]) if len(exceed) else None
    return SensitivityReport(times=tr1.t, separation=sep, d0=d0,
                             delta_star=delta_star, exceedance_time=t_ex)


def sensitivity_probe_map(x0: float, m: ModelParams, d0: float,
                          delta_star: float, horizon: int) -> SensitivityReport:
    """Same probe for the quotient map, distance |x_n - y_n| per iterate."""
    if not 0.0 < d0 < delta_star:
        raise PreconditionError("need 0 < d0 < delta_star")
    from .model import _orbit_kernel

    o1, n1 = _orbit_kernel(float(x0), int(horizon), m.alpha, m.a_cusp)
    o2, n2 = _orbit_kernel(float(x0) + d0, int(horizon), m.alpha, m.a_cusp)
    nn = min(n1, n2)
    sep = np.abs(o1[:nn] - o2[:nn])
    exceed = np.nonzero(sep > delta_star)[0]
    t_ex = float(exceed[0]) if len(exceed) else None
    return SensitivityReport(times=np.arange(nn, dtype=float), separation=sep,
                             d0=d0, delta_star=delta_star, exceedance_time=t_ex)


# ---------------------------------------------------------------------------
# Plug-in entropy of the sign itinerary
# ---------------------------------------------------------------------------


@dataclass
class EntropyReport:
    """Block entropies of a two-symbol itinerary.

    `rates[k-1] = H(k) - H(k-1)` estimates the entropy at block length k;
    `k_used` may be below the request when some block would be observed
    fewer than `min_count` times.  The two-symbol partition is assumed
    generating; that caveat travels with every report.
    """

    k_requested: int
    k_used: int
    block_entropy: np.ndarray  # H(1..k_used)
    rates: np.ndarray          # H(k)-H(k-1), k = 1..k_used (H(0) = 0)
    n_symbols: int
    reduced: bool
    partition_note: str = "two-symbol sign partition assumed generating"


def symbol_block_entropy(symbols: np.ndarray, k: int, min_count: int = 30
                         ) -> EntropyReport:
    """Plug-in block entropies of a 0/1 symbol sequence up to length k.

    k is reduced (with `reduced=True`) until every observed block has at
    least `min_count` occurrences.
    """
    symbols = np.asarray(symbols)
    n = len(symbols)
    if k > 60:
        raise PreconditionError("block length limited to 60 bits")
    if n <= k:
        raise PreconditionError("itinerary shorter than the block length")
    bits = symbols.astype(np.uint64)
    H = []
    k_used = 0
    codes = bits.copy()
    for kk in range(1, k + 1):
        if kk > 1:
            # extend each block by the next symbol: shift in bits[i + kk - 1]
            codes = (codes[:-1] << np.uint64(1)) | bits[kk - 1:]
        counts = np.unique(codes, return_counts=True)[1]
        if counts.min() < min_count and kk > 1:
            break
        pk = counts / counts.sum()
        H.append(float(-(pk * np.log(pk)).sum()))
        k_used = kk
    H = np.array(H)
    rates = np.diff(np.concatenate([[0.0], H]))
    return EntropyReport(k_requested=k, k_used=k_used, block_entropy=H,
                         rates=rates, n_symbols=n, reduced=k_used < k)


def entropy_plugin_estimate(x0: float, n: int, m: ModelParams, k: int = 12,
                            min_count: int = 30) -> EntropyReport:
    """Sign-itinerary plug-in entropy of the quotient map orbit.

    Cross-checks the entropy formula: for the quotient map the entropy
    should match the Lyapunov exponent integral (within plug-in bias).
    """
    if n < 10**6:
        raise PreconditionError("need n >= 1e6 for block statistics")
    from .model import map_orbit

    orbit = map_orbit(x0, n, m)
    return symbol_block_entropy((orbit > 0.0).astype(np.uint64), k, min_count)
