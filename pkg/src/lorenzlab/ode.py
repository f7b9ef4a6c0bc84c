"""Classical Lorenz system: vector field, saddle spectrum, trajectory
integration, tangent (jet) propagation, and Poincare-section events.

Two integrators are provided and cross-validated in the tests: a fixed-step
classical 4th-order scheme (bit-reproducible) and an embedded Dormand-Prince
5(4) pair with adaptive steps.  Both retain their accepted nodes so section
events can be refined on dense (cubic Hermite) output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (
    DegenerateSpectrumError,
    FrameCollapseError,
    IntegrationError,
    PreconditionError,
)


@dataclass(frozen=True)
class Params3:
    """Lorenz coefficients (a, r, b).

    Positivity of a and b (and r > 0) is enforced; whether the origin is a
    saddle with one unstable direction is a property of the spectrum and is
    reported by `equilibrium_spectrum`, not assumed here.
    """

    a: float = 10.0
    r: float = 28.0
    b: float = 8.0 / 3.0

    def __post_init__(self):
        vals = (self.a, self.r, self.b)
        if not all(math.isfinite(v) for v in vals):
            raise PreconditionError(f"non-finite coefficients {vals}")
        if self.a <= 0.0 or self.b <= 0.0 or self.r <= 0.0:
            raise PreconditionError(f"coefficients must be positive, got {vals}")

    @property
    def divergence(self) -> float:
        """Constant trace of the Jacobian, -(a + 1 + b)."""
        return -(self.a + 1.0 + self.b)

    def jacobian(self, s) -> np.ndarray:
        x, y, z = s
        return np.array([[-self.a, self.a, 0.0],
                         [self.r - z, -1.0, -x],
                         [y, x, -self.b]])


def vector_field(s, p: Params3) -> np.ndarray:
    """Right-hand side (a(y-x), rx - y - xz, xy - bz).

    Vectorized over leading axes: `s` may have shape (..., 3).
    """
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise PreconditionError(f"non-finite state {s!r}")
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    return np.stack([p.a * (y - x), p.r * x - y - x * z, x * y - p.b * z], axis=-1)


@dataclass(frozen=True)
class EquilibriumSpectrum:
    """Eigenvalues of the linearization at the origin.

    lam1 >= lam2 are the roots of t^2 + (a+1) t - a(r-1); lam3 = -b.
    `lorenz_like` records whether lam2 < lam3 < 0 < -lam3 < lam1 holds.
    """

    lam1: float
    lam2: float
    lam3: float
    lorenz_like: bool

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.lam1, self.lam2, self.lam3)


def equilibrium_spectrum(p: Params3) -> EquilibriumSpectrum:
    """Saddle spectrum at the origin, with degenerate cases rejected."""
    half_tr = -(p.a + 1.0) / 2.0
    disc = (p.a + 1.0) ** 2 + 4.0 * p.a * (p.r - 1.0)
    if disc <= 0.0:
        raise DegenerateSpectrumError(
            f"(x,y)-block eigenvalues repeated or complex (discriminant {disc:.3g})"
        )
    root = math.sqrt(disc) / 2.0
    lam1, lam2 = half_tr + root, half_tr - root
    lam3 = -p.b
    eigs = (lam1, lam2, lam3)
    if any(abs(v) < 1e-12 for v in eigs):
        raise DegenerateSpectrumError(f"zero eigenvalue in {eigs}")
    if min(abs(lam1 - lam3), abs(lam2 - lam3)) < 1e-12:
        raise DegenerateSpectrumError(f"repeated eigenvalue in {eigs}")
    lorenz_like = lam2 < lam3 < 0.0 < -lam3 < lam1
    return EquilibriumSpectrum(lam1, lam2, lam3, lorenz_like)


# ---------------------------------------------------------------------------
# Integrators
# ---------------------------------------------------------------------------


@njit(cache=True)
def _rk4_nodes(x, y, z, a, r, b, dt, n_steps, dt_last):
    """Fixed-step classical RK4; returns states at all step nodes."""
    n_total = n_steps + (1 if dt_last > 0.0 else 0)
    out = np.empty((n_total + 1, 3))
    out[0, 0], out[0, 1], out[0, 2] = x, y, z
    for i in range(n_total):
        h = dt if i < n_steps else dt_last
        k1x = a * (y - x); k1y = r * x - y - x * z; k1z = x * y - b * z
        u = x + 0.5 * h * k1x; v = y + 0.5 * h * k1y; w = z + 0.5 * h * k1z
        k2x = a * (v - u); k2y = r * u - v - u * w; k2z = u * v - b * w
        u = x + 0.5 * h * k2x; v = y + 0.5 * h * k2y; w = z + 0.5 * h * k2z
        k3x = a * (v - u); k3y = r * u - v - u * w; k3z = u * v - b * w
        u = x + h * k3x; v = y + h * k3y; w = z + h * k3z
        k4x = a * (v - u); k4y = r * u - v - u * w; k4z = u * v - b * w
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        out[i + 1, 0], out[i + 1, 1], out[i + 1, 2] = x, y, z
    return out


# Dormand-Prince 5(4) tableau (FSAL); E = b5 - b4 gives the error estimate.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
])
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                  -17253 / 339200, 22 / 525, -1 / 40])


@njit(cache=True)
def _dp45_nodes(y0, a, r, b, t_final, rtol, atol, h0):
    """Adaptive Dormand-Prince 5(4); returns (times, states, derivs, status).

    status 0 = reached t_final, 1 = step-size underflow.
    """
    A, B, E, C = _DP_A, _DP_B, _DP_E, _DP_C
    cap = 4096
    ts = np.empty(cap)
    ys = np.empty((cap, 3))
    fs = np.empty((cap, 3))
    k = np.empty((7, 3))
    y = y0.copy()
    t = 0.0
    f = np.empty(3)
    f[0] = a * (y[1] - y[0]); f[1] = r * y[0] - y[1] - y[0] * y[2]
    f[2] = y[0] * y[1] - b * y[2]
    ts[0] = t
    ys[0] = y
    fs[0] = f
    n = 1
    h = h0
    status = 0
    while t < t_final:
        if h > t_final - t:
            h = t_final - t
        if h < 1e-14 * max(1.0, abs(t)):
            status = 1
            break
        k[0] = f
        y_new = y  # rebound at stage 6
        for st in range(1, 7):
            yt = y.copy()
            # stage state: y + h * sum_j A[st,j] k_j; stage 6 uses the
            # 5th-order weights B, giving the FSAL property
            if st < 6:
                for j in range(st):
                    aij = A[st, j]
                    if aij != 0.0:
                        yt[0] += h * aij * k[j, 0]
                        yt[1] += h * aij * k[j, 1]
                        yt[2] += h * aij * k[j, 2]
            else:
                for j in range(6):
                    bj = B[j]
                    if bj != 0.0:
                        yt[0] += h * bj * k[j, 0]
                        yt[1] += h * bj * k[j, 1]
                        yt[2] += h * bj * k[j, 2]
            k[st, 0] = a * (yt[1] - yt[0])
            k[st, 1] = r * yt[0] - yt[1] - yt[0] * yt[2]
            k[st, 2] = yt[0] * yt[1] - b * yt[2]
            if st == 6:
                y_new = yt
        # error estimate on the embedded 4th-order solution
        errsq = 0.0
        for c in range(3):
            e = 0.0
            for j in range(7):
                e += E[j] * k[j, c]
            e *= h
            sc = atol + rtol * max(abs(y[c]), abs(y_new[c]))
            errsq += (e / sc) ** 2
        err = math.sqrt(errsq / 3.0)
        if err <= 1.0:
            t += h
            y = y_new
            fn = np.empty(3)
            fn[0] = k[6, 0]; fn[1] = k[6, 1]; fn[2] = k[6, 2]
            f = fn
            if n == cap:
                cap *= 2
                ts2 = np.empty(cap); ys2 = np.empty((cap, 3)); fs2 = np.empty((cap, 3))
                ts2[:n] = ts; ys2[:n] = ys; fs2[:n] = fs
                ts, ys, fs = ts2, ys2, fs2
            ts[n] = t
            ys[n] = y
            fs[n] = f
            n += 1
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= fac
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    return ts[:n], ys[:n], fs[:n], status


def _hermite_eval(tq, node_t, node_y, node_f):
    """Cubic Hermite interpolation of states at query times (vectorized)."""
    tq = np.atleast_1d(np.asarray(tq, dtype=float))
    idx = np.clip(np.searchsorted(node_t, tq, side="right") - 1, 0, len(node_t) - 2)
    t0 = node_t[idx]
    h = node_t[idx + 1] - t0
    th = np.where(h > 0.0, (tq - t0) / np.where(h > 0.0, h, 1.0), 0.0)[:, None]
    h = h[:, None]
    y0, y1 = node_y[idx], node_y[idx + 1]
    f0, f1 = node_f[idx], node_f[idx + 1]
    t2, t3 = th * th, th * th * th
    return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + th) * h * f0
            + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * f1)


@dataclass
class Trajectory:
    """Time-stamped samples of an orbit, with optional dense nodes.

    `t`/`states` are the requested output samples; when the integrator's
    accepted nodes are retained (`node_t` etc.), `interpolate` evaluates a
    cubic Hermite interpolant through them, otherwise it falls back to
    piecewise-linear interpolation of the samples (exact on straight-line
    synthetic input).
    """

    t: np.ndarray
    states: np.ndarray
    node_t: np.ndarray | None = None
    node_states: np.ndarray | None = None
    node_derivs: np.ndarray | None = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def interpolate(self, tq) -> np.ndarray:
        if self.node_t is not None and len(self.node_t) >= 2:
            return _hermite_eval(tq, self.node_t, self.node_states, self.node_derivs)
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        out = np.stack([np.interp(tq, self.t, self.states[:, c]) for c in range(3)],
                       axis=-1)
        return out

    def grid_for_events(self) -> tuple[np.ndarray, np.ndarray]:
        """Finest available (times, states) grid for bracketing events."""
        if self.node_t is not None and len(self.node_t) >= 2:
            return self.node_t, self.node_states
        return self.t, self.states


def _sample_grid(t_final: float, sample_every: float) -> np.ndarray:
    n = int(math.floor(t_final / sample_every + 1e-9))
    grid = np.arange(n + 1) * sample_every
    if grid[-1] < t_final - 1e-12 * max(1.0, t_final):
        grid = np.append(grid, t_final)
    else:
        grid[-1] = t_final
    return grid


def integrate(s0, p: Params3, t_final: float, method: str = "rk4",
              dt: float = 1e-3, sample_every: float = 1e-2,
              rtol: float = 1e-9, atol: float = 1e-9, h0: float = 1e-3,
              dense: bool = True) -> Trajectory:
    """Integrate the Lorenz field from s0 over [0, t_final].

    method "rk4": fixed step dt (bit-reproducible); "dp45": adaptive embedded
    pair controlled by rtol/atol.  Output is sampled every `sample_every`
    time units with the final sample exactly at t_final.
    """
    s0 = np.asarray(s0, dtype=float)
    if s0.shape != (3,) or not np.all(np.isfinite(s0)):
        raise PreconditionError(f"bad initial state {s0!r}")
    if t_final < 0.0:
        raise PreconditionError(f"t_final must be >= 0, got {t_final}")
    if t_final == 0.0:
        return Trajectory(t=np.array([0.0]), states=s0[None, :].copy())
    if method == "rk4":
        if dt <= 0.0:
            raise PreconditionError("dt must be positive")
        n_steps = int(math.floor(t_final / dt + 1e-9))
        dt_last = t_final - n_steps * dt
        if dt_last < 1e-12 * max(1.0, t_final):
            dt_last = 0.0
        node_y = _rk4_nodes(s0[0], s0[1], s0[2], p.a, p.r, p.b, dt, n_steps, dt_last)
        node_t = np.arange(len(node_y)) * dt
        if dt_last > 0.0:
            node_t[-1] = t_final
        else:
            node_t[-1] = t_final  # absorb rounding in the last node time
        status = 0
    elif method == "dp45":
        if rtol <= 0.0 or atol <= 0.0:
            raise PreconditionError("tolerances must be positive")
        node_t, node_y, node_f, status = _dp45_nodes(
            s0, p.a, p.r, p.b, t_final, rtol, atol, h0)
    else:
        raise PreconditionError(f"unknown method {method!r}")

    if not np.all(np.isfinite(node_y)):
        bad = int(np.argmax(~np.all(np.isfinite(node_y), axis=1)))
        last = max(bad - 1, 0)
        raise IntegrationError("non-finite state during integration",
                               last_time=float(node_t[last]), last_state=node_y[last])
    if status == 1:
        raise IntegrationError("step-size underflow (stiffness)",
                               last_time=float(node_t[-1]), last_state=node_y[-1])

    if method == "rk4":
        node_f = vector_field(node_y, p)
    tq = _sample_grid(t_final, sample_every)
    states = _hermite_eval(tq, node_t, node_y, node_f)
    # snap sample points that coincide with nodes to the node values
    states[0] = node_y[0]
    states[-1] = node_y[-1]
    traj = Trajectory(t=tq, states=states)
    if dense:
        traj.node_t, traj.node_states, traj.node_derivs = node_t, node_y, node_f
    return traj


# ---------------------------------------------------------------------------
# Tangent dynamics
# ---------------------------------------------------------------------------


@dataclass
class Jet:
    """State plus a tangent frame (columns are tangent vectors)."""

    state: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        self.frame = np.asarray(self.frame, dtype=float)
        if self.state.shape != (3,) or self.frame.shape != (3, 3):
            raise PreconditionError("jet needs a 3-state and a 3x3 frame")
        if np.linalg.cond(self.frame) > 1e12:
            raise PreconditionError("frame columns numerically dependent")

    @classmethod
    def identity(cls, state) -> "Jet":
        return cls(state=np.asarray(state, dtype=float), frame=np.eye(3))


@njit(cache=True)
def _jet_rk4(state, frame, a, r, b, dt, n_steps, renorm_every):
    """RK4 on the augmented (state, frame) system with periodic modified
    Gram-Schmidt renormalization.  Returns (state, frame, ledger, n_renorms,
    collapsed) where ledger rows hold the log norms removed per column."""
    y = state.copy()
    M = frame.copy()
    max_renorms = n_steps // renorm_every + 2
    ledger = np.zeros((max_renorms, 3))
    n_ren = 0
    collapsed = False
    ky = np.empty((4, 3))
    kM = np.empty((4, 3, 3))
    yt = np.empty(3)
    Mt = np.empty((3, 3))
    for i in range(n_steps):
        for st in range(4):
            if st == 0:
                for c in range(3):
                    yt[c] = y[c]
                Mt[:] = M
            else:
                w = 0.5 * dt if st < 3 else dt
                for c in range(3):
                    yt[c] = y[c] + w * ky[st - 1, c]
                for c in range(3):
                    for d in range(3):
                        Mt[c, d] = M[c, d] + w * kM[st - 1, c, d]
            ky[st, 0] = a * (yt[1] - yt[0])
            ky[st, 1] = r * yt[0] - yt[1] - yt[0] * yt[2]
            ky[st, 2] = yt[0] * yt[1] - b * yt[2]
            for d in range(3):
                v0, v1, v2 = Mt[0, d], Mt[1, d], Mt[2, d]
                kM[st, 0, d] = a * (v1 - v0)
                kM[st, 1, d] = (r - yt[2]) * v0 - v1 - yt[0] * v2
                kM[st, 2, d] = yt[1] * v0 + yt[0] * v1 - b * v2
        for c in range(3):
            y[c] += dt / 6.0 * (ky[0, c] + 2.0 * ky[1, c] + 2.0 * ky[2, c] + ky[3, c])
            for d in range(3):
                M[c, d] += dt / 6.0 * (kM[0, c, d] + 2.0 * kM[1, c, d]
                                       + 2.0 * kM[2, c, d] + kM[3, c, d])
        if (i + 1) % renorm_every == 0 or i == n_steps - 1:
            # modified Gram-Schmidt on columns
            for j in range(3):
                for l in range(j):
                    dot = M[0, j] * M[0, l] + M[1, j] * M[1, l] + M[2, j] * M[2, l]
                    for c in range(3):
                        M[c, j] -= dot * M[c, l]
                nrm = math.sqrt(M[0, j] ** 2 + M[1, j] ** 2 + M[2, j] ** 2)
                if nrm < 1e-290 or not math.isfinite(nrm):
                    # norm under/overflow between renormalizations
                    collapsed = True
                    return y, M, ledger[:n_ren], n_ren, collapsed
                ledger[n_ren, j] = math.log(nrm)
                for c in range(3):
                    M[c, j] /= nrm
            n_ren += 1
    return y, M, ledger[:n_ren], n_ren, collapsed


def propagate_jet(j: Jet, p: Params3, t: float, renorm_period: float = 0.5,
                  dt: float = 1e-3) -> tuple[Jet, np.ndarray]:
    """Propagate a jet for time t, renormalizing the frame every
    renorm_period.

    Returns the final jet (frame orthonormal) and the ledger: one row per
    renormalization, holding the log of each column norm removed.  Column
    sums of the ledger divided by t estimate the Lyapunov exponents.
    """
    if renorm_period <= 0.0:
        raise PreconditionError("renorm_period must be positive")
    if t < 0.0:
        raise PreconditionError("t must be >= 0")
    if t == 0.0:
        return Jet(state=j.state.copy(), frame=j.frame.copy()), np.zeros((0, 3))
    n_steps = max(1, int(round(t / dt)))
    renorm_every = max(1, int(round(renorm_period / dt)))
    y, M, ledger, n_ren, collapsed = _jet_rk4(
        j.state, j.frame, p.a, p.r, p.b, t / n_steps, n_steps, renorm_every)
    if collapsed:
        raise FrameCollapseError(
            "tangent frame collapsed between renormalizations; "
            "use a smaller renorm_period")
    return Jet(state=y, frame=M), ledger


# ---------------------------------------------------------------------------
# Poincare-section events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SectionEvent:
    """One transversal crossing of the plane z = c."""

    time: float
    point: np.ndarray
    direction: int  # sign of dz/dt at the crossing: -1 downward, +1 upward
    tangential: bool = False


def detect_section_crossings(traj: Trajectory, plane_z: float,
                             direction: int | None = None,
                             refine_tol: float = 1e-10,
                             tangency_speed: float = 1e-3) -> list[SectionEvent]:
    """Locate crossings of the plane z = plane_z along a trajectory.

    Crossings are bracketed by sign changes of z - c on the finest available
    grid, then refined by bisection on the trajectory's interpolant until
    the plane residual is <= refine_tol.  The crossing direction is the sign
    of the z-velocity there; crossings slower than tangency_speed in |dz/dt|
    are flagged tangential rather than dropped.  `direction` filters to
    -1 (downward) or +1 (upward) crossings.
    """
    if direction not in (None, -1, 1):
        raise PreconditionError("direction filter must be -1, +1 or None")
    grid_t, grid_y = traj.grid_for_events()
    resid = grid_y[:, 2] - plane_z
    events: list[SectionEvent] = []

    def z_of(tq: float) -> float:
        return float(traj.interpolate(tq)[0, 2])

    def emit(t_ev: float, sgn: int):
        point = traj.interpolate(t_ev)[0]
        point[2] = plane_z
        # transversal z-velocity from a symmetric difference on the interpolant
        h = max(1e-8, 1e-8 * abs(t_ev))
        lo, hi = max(t_ev - h, grid_t[0]), min(t_ev + h, grid_t[-1])
        speed = abs(z_of(hi) - z_of(lo)) / (hi - lo) if hi > lo else 0.0
        events.append(SectionEvent(time=float(t_ev), point=point, direction=sgn,
                                   tangential=speed < tangency_speed))

    # samples landing exactly on the plane (e.g. an orbit started there)
    for i in range(len(grid_t)):
        if resid[i] != 0.0 or (i > 0 and resid[i - 1] == 0.0):
            continue
        nxt = resid[i + 1] if i + 1 < len(resid) else 0.0
        prev = resid[i - 1] if i > 0 else 0.0
        ref = nxt if nxt != 0.0 else -prev
        if ref != 0.0:
            emit(grid_t[i], -1 if ref < 0.0 else 1)
    # strict sign changes, refined by bisection on the interpolant
    for i in range(len(grid_t) - 1):
        a, b = resid[i], resid[i + 1]
        if a * b < 0.0:
            sgn = -1 if a > 0.0 else 1
            lo, hi = grid_t[i], grid_t[i + 1]
            flo = a
            t_mid = 0.5 * (lo + hi)
            for _ in range(200):
                t_mid = 0.5 * (lo + hi)
                fm = z_of(t_mid) - plane_z
                if abs(fm) <= refine_tol or (hi - lo) < 1e-15 * max(1.0, abs(t_mid)):
                    break
                if flo * fm < 0.0:
                    hi = t_mid
                else:
                    lo, flo = t_mid, fm
            emit(t_mid, sgn)

    events.sort(key=lambda e: e.time)
    if direction is not None:
        events = [e for e in events if e.direction == direction]
    return events


def return_times(events: list[SectionEvent]) -> np.ndarray:
    """Consecutive differences of event times."""
    ts = np.array([e.time for e in events])
    return np.diff(ts)
