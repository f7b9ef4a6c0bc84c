"""Geometric Lorenz model.

Linear passage through the saddle, the return map on the unit square
cross-section S = [-1/2,1/2]^2, its one-dimensional quotient map, the
logarithmic roof function, and the suspension semiflow built over either
the quotient map (1D base) or the full return map (2D base).

The return map is realized directly in skew-product normal form

    F(x, y) = ( f(x),  sgn(x) * (B * y * |x|^beta + D) )
    f(x)    = sgn(x) * (a_cusp * |x|^alpha + sqrt(2) * |x| - 1/2)

with cusp exponents alpha = -lam3/lam1 in (0,1) and beta = -lam2/lam1 > 1
inherited from the saddle eigenvalues.  The x-image depends on x only, so
the vertical foliation is invariant by construction; the linear term in f
keeps f' >= sqrt(2) everywhere, and (B, D) give uniform fiber contraction
with disjoint branch images inside S.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (
    NotLorenzLikeError,
    PreconditionError,
    SingularLineError,
)

SQRT2 = math.sqrt(2.0)

# Orbit landing closer to the singular line than this is terminated, never
# perturbed; Monte Carlo drivers discard and resample, reporting the count.
SINGULAR_X = 1e-300


def derive_exponents(lam1: float, lam2: float, lam3: float) -> tuple[float, float]:
    """Cusp exponents (alpha, beta) = (-lam3/lam1, -lam2/lam1).

    Requires the saddle ordering lam2 < lam3 < 0 < -lam3 < lam1, which
    forces 0 < alpha < 1 < beta.
    """
    if not (lam2 < lam3 < 0.0 < -lam3 < lam1):
        raise NotLorenzLikeError(
            f"eigenvalues ({lam1}, {lam2}, {lam3}) violate lam2 < lam3 < 0 < -lam3 < lam1"
        )
    return -lam3 / lam1, -lam2 / lam1


@dataclass(frozen=True)
class ModelParams:
    """Constants of the geometric model.

    lam1, lam2, lam3 are the saddle eigenvalues (1/time); alpha and beta are
    always derived from them.  a_cusp is the cusp amplitude of the quotient
    map, B and D the fiber contraction amplitude and offset of the return
    map, r0 the roof floor (the constant outer flight time).
    """

    lam1: float
    lam2: float
    lam3: float
    a_cusp: float = 0.3
    B: float = 0.5
    D: float = 0.25
    r0: float = 1.0
    alpha: float = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self):
        alpha, beta = derive_exponents(self.lam1, self.lam2, self.lam3)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        if not self.a_cusp > 0.0:
            raise PreconditionError(f"a_cusp must be positive, got {self.a_cusp}")
        if self.a_cusp * 0.5**alpha + SQRT2 / 2.0 > 1.0:
            raise PreconditionError(
                "image bound violated: a_cusp*(1/2)^alpha + sqrt(2)/2 = "
                f"{self.a_cusp * 0.5 ** alpha + SQRT2 / 2.0:.6f} > 1"
            )
        if not 0.0 < self.B <= 0.5:
            raise PreconditionError(f"B must lie in (0, 1/2], got {self.B}")
        if self.B / 2.0 * 0.5**beta + self.D >= 0.5:
            raise PreconditionError(
                "2D image bound violated: B/2*(1/2)^beta + D = "
                f"{self.B / 2.0 * 0.5 ** beta + self.D:.6f} >= 1/2"
            )
        if self.D <= self.B * 0.5 ** (beta + 1.0):
            raise PreconditionError(
                "branch images not disjoint: need D > B*(1/2)^(beta+1)"
            )
        if not self.r0 > 0.0:
            raise PreconditionError(f"roof floor r0 must be positive, got {self.r0}")

    @classmethod
    def classical(cls, a: float = 10.0, r: float = 28.0, b: float = 8.0 / 3.0,
                  **kwargs) -> "ModelParams":
        """Model constants inherited from the saddle spectrum of the classical
        Lorenz coefficients: lam3 = -b, lam1/lam2 roots of t^2+(a+1)t-a(r-1)."""
        disc = math.sqrt((a + 1.0) ** 2 + 4.0 * a * (r - 1.0))
        lam1 = (-(a + 1.0) + disc) / 2.0
        lam2 = (-(a + 1.0) - disc) / 2.0
        return cls(lam1=lam1, lam2=lam2, lam3=-b, **kwargs)

    @property
    def fiber_contraction(self) -> float:
        """Uniform bound on |dg/dy| over S*: B * (1/2)^beta."""
        return self.B * 0.5**self.beta

    @property
    def min_roof(self) -> float:
        """Minimum of the roof over S: attained at |x| = 1/2."""
        return self.r0 + math.log(2.0) / self.lam1

    def invariant_report(self) -> list[tuple[str, bool, str]]:
        """(name, passed, detail) for every constructor invariant; used by
        the `validate` subcommand.  Construction already guarantees all pass,
        so this is invoked on candidate values via `check_model_values`."""
        return check_model_values(
            self.lam1, self.lam2, self.lam3, self.a_cusp, self.B, self.D, self.r0
        )


def check_model_values(lam1, lam2, lam3, a_cusp, B, D, r0) -> list[tuple[str, bool, str]]:
    """Evaluate every ModelParams invariant without raising.

    Returns a list of (invariant name, passed, human-readable detail).
    """
    rows = []
    ordered = lam2 < lam3 < 0.0 < -lam3 < lam1
    rows.append(("eigenvalue ordering lam2 < lam3 < 0 < -lam3 < lam1", ordered,
                 f"lam1={lam1:.6g} lam2={lam2:.6g} lam3={lam3:.6g}"))
    if ordered:
        alpha, beta = -lam3 / lam1, -lam2 / lam1
        rows.append(("alpha in (0,1)", 0.0 < alpha < 1.0, f"alpha={alpha:.6g}"))
        rows.append(("beta > 1", beta > 1.0, f"beta={beta:.6g}"))
        img = a_cusp * 0.5**alpha + SQRT2 / 2.0
        rows.append(("1D image bound a_cusp*(1/2)^alpha + sqrt2/2 <= 1",
                     a_cusp > 0.0 and img <= 1.0, f"value={img:.6g}"))
        img2 = B / 2.0 * 0.5**beta + D
        rows.append(("2D image bound B/2*(1/2)^beta + D < 1/2",
                     0.0 < B <= 0.5 and img2 < 0.5, f"value={img2:.6g}"))
        sep = D - B * 0.5 ** (beta + 1.0)
        rows.append(("branch separation D - B*(1/2)^(beta+1) > 0", sep > 0.0,
                     f"half-gap={sep:.6g}"))
        rows.append(("fiber contraction B*(1/2)^beta < 1",
                     B * 0.5**beta < 1.0, f"factor={B * 0.5 ** beta:.6g}"))
    rows.append(("roof floor r0 > 0", r0 > 0.0, f"r0={r0:.6g}"))
    return rows


@dataclass(frozen=True)
class SectionPoint:
    """Point of the cross-section square S, off the singular line x = 0."""

    x: float
    y: float

    def __post_init__(self):
        if not (abs(self.x) <= 0.5 and abs(self.y) <= 0.5):
            raise PreconditionError(f"({self.x}, {self.y}) outside S = [-1/2,1/2]^2")
        if abs(self.x) < SINGULAR_X:
            raise SingularLineError("section point on the singular line x = 0")


@dataclass(frozen=True)
class SuspensionPoint:
    """Base point plus height s in [0, roof(base)).

    `base_y` is None for the quotient (1D base) semiflow.
    """

    base_x: float
    s: float
    base_y: float | None = None

    def validate(self, m: ModelParams) -> "SuspensionPoint":
        if abs(self.base_x) < SINGULAR_X:
            raise SingularLineError("suspension base on the singular line")
        if not 0.0 <= self.s < roof(self.base_x, m):
            raise PreconditionError(
                f"height {self.s} outside [0, r({self.base_x}) = {roof(self.base_x, m)})"
            )
        return self


def _check_domain(x) -> np.ndarray:
    ax = np.abs(x)
    if np.any(ax > 0.5):
        raise PreconditionError("point outside the quotient interval [-1/2, 1/2]")
    if np.any(ax < SINGULAR_X):
        raise SingularLineError("evaluation on the singular line x = 0")
    return ax


def passage_time(x, m: ModelParams):
    """Time tau(x) = -log|x| / lam1 spent in the linear region before
    reaching the exit plane |x| = 1; diverges as x -> 0."""
    ax = _check_domain(x)
    return -np.log(ax) / m.lam1


def linear_passage(p: SectionPoint, m: ModelParams) -> tuple[np.ndarray, float]:
    """Flow a section point through the linearized saddle.

    Returns the exit point (sgn(x), y*|x|^beta, |x|^alpha) on the plane
    x = sgn(x) and the passage time tau = -log|x|/lam1.
    """
    ax = float(_check_domain(p.x))
    tau = -math.log(ax) / m.lam1
    exit_point = np.array([math.copysign(1.0, p.x),
                           p.y * ax**m.beta,
                           ax**m.alpha])
    return exit_point, tau


def one_d_map(x, m: ModelParams):
    """Quotient map f(x) = sgn(x) * (a_cusp*|x|^alpha + sqrt(2)*|x| - 1/2).

    Odd, with cusp limits f(0+-) = -+1/2 and each branch monotone onto a
    subinterval of [-1/2, 1/2].  Accepts scalars or arrays.
    """
    ax = _check_domain(x)
    return np.sign(x) * (m.a_cusp * ax**m.alpha + SQRT2 * ax - 0.5)


def one_d_derivative(x, m: ModelParams):
    """f'(x) = a_cusp*alpha*|x|^(alpha-1) + sqrt(2), always >= sqrt(2)."""
    ax = _check_domain(x)
    return m.a_cusp * m.alpha * ax ** (m.alpha - 1.0) + SQRT2


def return_map(p: SectionPoint, m: ModelParams) -> SectionPoint:
    """First-return map F(x,y) = (f(x), sgn(x)*(B*y*|x|^beta + D)).

    The first coordinate is computed from x alone, so vertical-leaf
    invariance holds exactly (bitwise), not merely to rounding.
    """
    fx, gy = return_map_arrays(np.asarray(p.x), np.asarray(p.y), m)
    return SectionPoint(float(fx), float(gy))


def return_map_arrays(x, y, m: ModelParams):
    """Vectorized return map on arrays of section coordinates."""
    ax = _check_domain(x)
    s = np.sign(x)
    fx = s * (m.a_cusp * ax**m.alpha + SQRT2 * ax - 0.5)
    gy = s * (m.B * y * ax**m.beta + m.D)
    return fx, gy


def roof(x, m: ModelParams):
    """Roof r(x) = r0 + tau(x): the linear passage time plus the constant
    outer flight time r0.  Even, >= r0, strictly decreasing in |x|, with
    logarithmic growth of constant 1/lam1 near the singular line."""
    return m.r0 + passage_time(x, m)


def lap_number_sequence(roofs, s0: float, t: float) -> int:
    """Lap count for an explicit roof sequence: the unique n >= 0 with
    S_n <= s0 + t < S_{n+1} (so a constant roof r = 1 gives floor(s0 + t)).

    `roofs` is an iterable of successive roof values along the base orbit.
    """
    if t < 0.0 or s0 < 0.0:
        raise PreconditionError("need t >= 0 and s0 >= 0")
    total = s0 + t
    acc = 0.0
    n = 0
    for r in roofs:
        if acc + r > total:
            return n
        acc += r
        n += 1
    raise PreconditionError("roof sequence exhausted before the horizon")


def suspension_evolve(q: SuspensionPoint, t: float, m: ModelParams
                      ) -> tuple[SuspensionPoint, int]:
    """Evolve a suspension point for time t >= 0.

    Returns the landed point and the lap count n: the unique n >= 0 with
    S_n r(x0) <= s0 + t < S_{n+1} r(x0), where S_n is the Birkhoff sum of
    the roof along the base orbit.  Works over either base; when base_y is
    given the fiber coordinate is carried along through the return map.
    """
    if t < 0.0:
        raise PreconditionError(f"evolution time must be >= 0, got {t}")
    q.validate(m)
    x, y = q.base_x, q.base_y
    remaining = q.s + t
    n = 0
    r = roof(x, m)
    while remaining >= r:
        remaining -= r
        if y is None:
            x = float(one_d_map(x, m))
        else:
            fx, gy = return_map_arrays(np.asarray(x), np.asarray(y), m)
            x, y = float(fx), float(gy)
        if abs(x) < SINGULAR_X:
            raise SingularLineError(f"base orbit hit the singular line after {n} laps")
        n += 1
        r = roof(x, m)
    return SuspensionPoint(base_x=x, s=remaining, base_y=y), n


# ---------------------------------------------------------------------------
# Compiled orbit kernels.  These carry no domain checks; public callers are
# expected to start from valid interior seeds.  An orbit is cut short only by
# the singular-line policy (|x| < SINGULAR_X), reported via the return value.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _f_scalar(x, alpha, a_cusp):
    ax = abs(x)
    v = a_cusp * ax**alpha + SQRT2 * ax - 0.5
    return v if x > 0.0 else -v


@njit(cache=True)
def _orbit_kernel(x0, n, alpha, a_cusp):
    """Quotient orbit x_0..x_n inclusive; returns (orbit, n_valid).

    n_valid < n+1 means the orbit was terminated at the singular line."""
    out = np.empty(n + 1)
    out[0] = x0
    x = x0
    for i in range(1, n + 1):
        x = _f_scalar(x, alpha, a_cusp)
        if abs(x) < SINGULAR_X:
            return out[:i], i
        out[i] = x
    return out, n + 1


@njit(cache=True)
def _orbit_2d_kernel(x0, y0, n, alpha, beta, a_cusp, B, D):
    """Return-map orbit (x_i, y_i), i = 0..n inclusive."""
    xs = np.empty(n + 1)
    ys = np.empty(n + 1)
    xs[0] = x0
    ys[0] = y0
    x, y = x0, y0
    for i in range(1, n + 1):
        ax = abs(x)
        s = 1.0 if x > 0.0 else -1.0
        fx = s * (a_cusp * ax**alpha + SQRT2 * ax - 0.5)
        gy = s * (B * y * ax**beta + D)
        x, y = fx, gy
        if abs(x) < SINGULAR_X:
            return xs[:i], ys[:i], i
        xs[i] = x
        ys[i] = y
    return xs, ys, n + 1


@njit(cache=True)
def _evolve_quotient_ensemble(xs, ss, t, alpha, a_cusp, lam1, r0):
    """Advance quotient-suspension points (xs[i], ss[i]) by time t.

    In-place on copies; returns (x, s, laps, ok) with ok[i] False when the
    orbit hit the singular line."""
    n = xs.shape[0]
    x = xs.copy()
    s = ss.copy()
    laps = np.zeros(n, dtype=np.int64)
    ok = np.ones(n, dtype=np.bool_)
    for i in range(n):
        xi = x[i]
        remaining = s[i] + t
        r = r0 - math.log(abs(xi)) / lam1
        while remaining >= r:
            remaining -= r
            xi = _f_scalar(xi, alpha, a_cusp)
            if abs(xi) < SINGULAR_X:
                ok[i] = False
                break
            laps[i] += 1
            r = r0 - math.log(abs(xi)) / lam1
        x[i] = xi
        s[i] = remaining
    return x, s, laps, ok


def map_orbit(x0: float, n: int, m: ModelParams) -> np.ndarray:
    """Orbit x_0, f(x_0), ..., f^n(x_0) of the quotient map.

    Raises SingularLineError if the orbit is terminated early.
    """
    _check_domain(x0)
    orbit, n_valid = _orbit_kernel(float(x0), int(n), m.alpha, m.a_cusp)
    if n_valid != n + 1:
        raise SingularLineError(f"orbit terminated at iterate {n_valid}")
    return orbit


def return_map_orbit(x0: float, y0: float, n: int, m: ModelParams
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Orbit of the 2D return map from (x0, y0), length n+1."""
    SectionPoint(x0, y0)
    xs, ys, n_valid = _orbit_2d_kernel(float(x0), float(y0), int(n),
                                       m.alpha, m.beta, m.a_cusp, m.B, m.D)
    if n_valid != n + 1:
        raise SingularLineError(f"orbit terminated at iterate {n_valid}")
    return xs, ys
