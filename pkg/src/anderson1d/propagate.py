"""Exact state propagation for -u'' + q u = 0 and overflow-safe 2x2 products.

Cell propagators for constant q are closed forms (trigonometric, hyperbolic,
or affine), so products over piecewise-constant profiles carry no integration
error.  Matrices are stored as unit-scale entries times exp(log_scale) so that
products over thousands of cells never overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfInterval, ZeroState
from .model import PotentialProfile, Realization

__all__ = [
    "DEFAULT_RENORM_BOUNDS",
    "State2",
    "ScaledMatrix2",
    "cell_propagator",
    "discrete_step",
    "transfer",
    "apply",
    "piece_l2",
    "piece_l2_ordered_cross",
    "mass_lower_envelope",
]

DEFAULT_RENORM_BOUNDS = (0.5, 2.0)


# ---------------------------------------------------------------------------
# Stable small-argument helpers
# ---------------------------------------------------------------------------

def _sinc(x: float) -> float:
    """sin(x)/x, stable at 0."""
    if abs(x) < 0.1:
        x2 = x * x
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 * x2 * x2 / 5040.0
    return math.sin(x) / x


def _sinhc(x: float) -> float:
    """sinh(x)/x, stable at 0."""
    if abs(x) < 0.1:
        x2 = x * x
        return 1.0 + x2 / 6.0 + x2 * x2 / 120.0 + x2 * x2 * x2 / 5040.0
    return math.sinh(x) / x


def _cosm1_over_x2(x: float) -> float:
    """(1 - cos x)/x^2 via the half-angle square, no cancellation."""
    s = _sinc(0.5 * x)
    return 0.5 * s * s


def _coshm1_over_x2(x: float) -> float:
    s = _sinhc(0.5 * x)
    return 0.5 * s * s


def _one_minus_sinc_over_x2(x: float) -> float:
    """(1 - sinc x)/x^2, limit 1/6."""
    if abs(x) < 0.1:
        x2 = x * x
        return 1.0 / 6.0 - x2 / 120.0 + x2 * x2 / 5040.0 - x2 * x2 * x2 / 362880.0
    return (1.0 - _sinc(x)) / (x * x)


def _sinhcm1_over_x2(x: float) -> float:
    """(sinhc x - 1)/x^2, limit 1/6."""
    if abs(x) < 0.1:
        x2 = x * x
        return 1.0 / 6.0 + x2 / 120.0 + x2 * x2 / 5040.0 + x2 * x2 * x2 / 362880.0
    return (_sinhc(x) - 1.0) / (x * x)


# ---------------------------------------------------------------------------
# Core types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class State2:
    """Solution state (u, u')."""

    u: float
    du: float

    def norm(self) -> float:
        return math.hypot(self.u, self.du)

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.du], dtype=float)


@dataclass(frozen=True)
class ScaledMatrix2:
    """Real 2x2 matrix exp(log_scale) * [[m11, m12], [m21, m22]].

    Transfer matrices are unimodular; det(entries) * exp(2 log_scale) stays 1
    up to roundoff, and renormalization keeps the entry block in a friendly
    floating range without changing the represented matrix.

    Once cumulative growth exceeds roughly exp(17), the determinant (and with
    it the contracting direction) is no longer resolvable in double precision
    entries; norm and leading-direction quantities remain accurate, which is
    all the estimators extract from long products.
    """

    m11: float
    m12: float
    m21: float
    m22: float
    log_scale: float = 0.0

    @staticmethod
    def identity() -> "ScaledMatrix2":
        return ScaledMatrix2(1.0, 0.0, 0.0, 1.0, 0.0)

    @property
    def entries(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]], dtype=float)

    def frobenius(self) -> float:
        return math.sqrt(
            self.m11 * self.m11
            + self.m12 * self.m12
            + self.m21 * self.m21
            + self.m22 * self.m22
        )

    def det_residual(self) -> float:
        """det(represented matrix) - 1."""
        det = self.m11 * self.m22 - self.m12 * self.m21
        return det * math.exp(2.0 * self.log_scale) - 1.0

    def normalized(self, bounds: tuple[float, float] = DEFAULT_RENORM_BOUNDS) -> "ScaledMatrix2":
        """Rescale the entry block to unit Frobenius norm if it left bounds."""
        f = self.frobenius()
        if bounds[0] <= f <= bounds[1]:
            return self
        return ScaledMatrix2(
            self.m11 / f,
            self.m12 / f,
            self.m21 / f,
            self.m22 / f,
            self.log_scale + math.log(f),
        )

    def matmul(
        self, other: "ScaledMatrix2", bounds: tuple[float, float] = DEFAULT_RENORM_BOUNDS
    ) -> "ScaledMatrix2":
        return ScaledMatrix2(
            self.m11 * other.m11 + self.m12 * other.m21,
            self.m11 * other.m12 + self.m12 * other.m22,
            self.m21 * other.m11 + self.m22 * other.m21,
            self.m21 * other.m12 + self.m22 * other.m22,
            self.log_scale + other.log_scale,
        ).normalized(bounds)

    def __matmul__(self, other: "ScaledMatrix2") -> "ScaledMatrix2":
        return self.matmul(other)

    def inverse(self) -> "ScaledMatrix2":
        # For a unimodular represented matrix T = e^L M, adj(T) = T^{-1} and
        # adj scales linearly, so the inverse is e^L adj(M): same log_scale,
        # same Frobenius norm.
        return ScaledMatrix2(self.m22, -self.m12, -self.m21, self.m11, self.log_scale)

    def trace(self) -> float:
        return math.exp(self.log_scale) * (self.m11 + self.m22)

    def column_action(self, u: float, du: float) -> tuple[float, float]:
        """Entry-block action only (scale excluded)."""
        return (self.m11 * u + self.m12 * du, self.m21 * u + self.m22 * du)


# ---------------------------------------------------------------------------
# Cell propagators
# ---------------------------------------------------------------------------

def cell_propagator(
    q: float, length: float, bounds: tuple[float, float] = DEFAULT_RENORM_BOUNDS
) -> ScaledMatrix2:
    """Exact propagator of (u, u') across a cell of constant q.

    q > 0 gives the hyperbolic form, q < 0 the rotational form, q = 0 the
    shear [[1, L], [0, 1]].  sin(kL)/k and sinh(kL)/k are evaluated through
    series-backed helpers so the q -> 0 crossover is smooth, and strongly
    hyperbolic cells are built pre-scaled so cosh never overflows.
    """
    if length <= 0:
        raise ValueError("cell length must be positive")
    if q == 0.0:
        return ScaledMatrix2(1.0, length, 0.0, 1.0, 0.0).normalized(bounds)
    if q > 0:
        k = math.sqrt(q)
        kl = k * length
        if kl > 20.0:
            # factor out e^{kl}: cosh/sinh times e^{-kl}
            e = math.exp(-2.0 * kl)
            return ScaledMatrix2(
                0.5 * (1.0 + e),
                0.5 * (1.0 - e) / k,
                0.5 * k * (1.0 - e),
                0.5 * (1.0 + e),
                kl,
            ).normalized(bounds)
        ch = math.cosh(kl)
        sh_over_k = length * _sinhc(kl)
        return ScaledMatrix2(ch, sh_over_k, q * sh_over_k, ch, 0.0).normalized(bounds)
    k = math.sqrt(-q)
    kl = k * length
    c = math.cos(kl)
    s_over_k = length * _sinc(kl)
    return ScaledMatrix2(c, s_over_k, q * length * _sinc(kl), c, 0.0).normalized(bounds)


def discrete_step(
    eta: float, energy: float, bounds: tuple[float, float] = DEFAULT_RENORM_BOUNDS
) -> ScaledMatrix2:
    """One-site update taking (u(n), u(n-1)) to (u(n+1), u(n))."""
    return ScaledMatrix2(eta - energy, -1.0, 1.0, 0.0, 0.0).normalized(bounds)


def transfer(
    obj: PotentialProfile | Realization,
    start: float,
    end: float,
    energy: float = 0.0,
    bounds: tuple[float, float] = DEFAULT_RENORM_BOUNDS,
) -> ScaledMatrix2:
    """Ordered propagator product from ``start`` to ``end``.

    For a profile the product runs over clipped constant pieces of
    q - energy; for a realization it runs over discrete site steps at the
    given energy.  ``start > end`` returns the backward matrix, the exact
    inverse of the forward one.  The product is renormalized after every
    multiplication.
    """
    if isinstance(obj, PotentialProfile):
        lo, hi = (start, end) if start <= end else (end, start)
        if lo < obj.start - 1e-9 or hi > obj.end + 1e-9:
            raise OutOfInterval(f"[{lo}, {hi}] outside profile [{obj.start}, {obj.end}]")
        acc = ScaledMatrix2.identity()
        if hi - lo > 1e-12:
            for _, length, value in obj.pieces(lo, hi):
                acc = cell_propagator(value - energy, length, bounds).matmul(acc, bounds)
        return acc if start <= end else acc.inverse()
    if isinstance(obj, Realization):
        a, b = obj.interval
        s, e = int(start), int(end)
        lo, hi = (s, e) if s <= e else (e, s)
        if lo < a or hi > b:
            raise OutOfInterval(f"[{lo}, {hi}] outside realization [{a}, {b}]")
        acc = ScaledMatrix2.identity()
        for n in range(lo, hi):
            acc = discrete_step(float(obj.couplings[n - a]), energy, bounds).matmul(acc, bounds)
        return acc if s <= e else acc.inverse()
    raise TypeError(f"cannot propagate through {type(obj).__name__}")


def apply(matrix: ScaledMatrix2, state: State2) -> tuple[State2, float]:
    """Apply a scaled matrix to a state.

    Returns the normalized image direction and the log of the norm gain, so
    Lyapunov sums can be accumulated without ever forming a huge vector.
    """
    norm_in = state.norm()
    if norm_in == 0.0:
        raise ZeroState("cannot propagate the zero state")
    u, du = matrix.column_action(state.u, state.du)
    norm_out = math.hypot(u, du)
    if norm_out == 0.0:
        raise ZeroState("matrix annihilated the state")
    gain = matrix.log_scale + math.log(norm_out) - math.log(norm_in)
    return State2(u / norm_out, du / norm_out), gain


# ---------------------------------------------------------------------------
# Exact solution functionals on a constant piece
# ---------------------------------------------------------------------------

def piece_l2(q: float, length: float, u0: float, du0: float) -> float:
    """Integral of u(t)^2 over [0, length] for -u'' + q u = 0, u(0)=u0, u'(0)=du0.

    Written in a form with no 1/k factors so the q -> 0 limit is exact.
    """
    ll = length
    if q < 0.0:
        x = 2.0 * math.sqrt(-q) * ll
        return (
            u0 * u0 * 0.5 * ll * (1.0 + _sinc(x))
            + 2.0 * u0 * du0 * ll * ll * _cosm1_over_x2(x)
            + 2.0 * du0 * du0 * ll * ll * ll * _one_minus_sinc_over_x2(x)
        )
    if q > 0.0:
        x = 2.0 * math.sqrt(q) * ll
        return (
            u0 * u0 * 0.5 * ll * (1.0 + _sinhc(x))
            + 2.0 * u0 * du0 * ll * ll * _coshm1_over_x2(x)
            + 2.0 * du0 * du0 * ll * ll * ll * _sinhcm1_over_x2(x)
        )
    return u0 * u0 * ll + u0 * du0 * ll * ll + du0 * du0 * ll * ll * ll / 3.0


def _trig_coeffs(q: float, u0: float, du0: float) -> tuple[float, float, float]:
    # u^2 = a0 + a1 cos(Wt) + a2 sin(Wt), W = 2 sqrt(-q)
    k = math.sqrt(-q)
    a = u0
    b = du0 / k
    return 0.5 * (a * a + b * b), 0.5 * (a * a - b * b), a * b


def _hyp_coeffs(q: float, u0: float, du0: float) -> tuple[float, float, float]:
    # u^2 = a0 + a1 cosh(Wt) + a2 sinh(Wt), W = 2 sqrt(q)
    k = math.sqrt(q)
    a = u0
    b = du0 / k
    return 0.5 * (a * a - b * b), 0.5 * (a * a + b * b), a * b


def _affine_ordered_cross(
    length: float, ua0: float, dua0: float, ub0: float, dub0: float
) -> float:
    # q = 0 limit of the ordered double integral
    ll = length
    a, bb = ua0, dua0
    c, d = ub0, dub0
    return (
        c * c * a * a * ll ** 2 / 2.0
        + (c * c * a * bb + 2.0 * c * d * a * a) * ll ** 3 / 3.0
        + (c * c * bb * bb / 3.0 + 2.0 * c * d * a * bb + d * d * a * a) * ll ** 4 / 4.0
        + (2.0 * c * d * bb * bb / 3.0 + d * d * a * bb) * ll ** 5 / 5.0
        + d * d * bb * bb * ll ** 6 / 18.0
    )


def piece_l2_ordered_cross(
    q: float, length: float, ua0: float, dua0: float, ub0: float, dub0: float
) -> float:
    """Double integral of ua(s)^2 ub(t)^2 over 0 <= s <= t <= length.

    Both solutions satisfy -u'' + q u = 0 on the piece with the given initial
    data at the left edge.  This is the same-piece term of the diagonal
    Hilbert-Schmidt block; cross-piece terms factorize through piece_l2.

    The closed form expands in a 1/k basis that cancels badly when |q| L^2 is
    small, so that regime is handled by exact substep propagation with the
    affine kernel on each substep (relative error below 1e-8 throughout).
    """
    ll = length
    qll = abs(q) * ll * ll
    if qll < 1e-8:
        return _affine_ordered_cross(ll, ua0, dua0, ub0, dub0)
    if qll < 1e-2:
        n = max(1, math.ceil(math.sqrt(qll / 1e-8)))
        h = ll / n
        step = cell_propagator(q, h)
        sstep = math.exp(step.log_scale)
        ua, dua, ub, dub = ua0, dua0, ub0, dub0
        total = 0.0
        mass_a = 0.0
        for _ in range(n):
            total += _affine_ordered_cross(h, ua, dua, ub, dub)
            total += mass_a * piece_l2(q, h, ub, dub)
            mass_a += piece_l2(q, h, ua, dua)
            ua, dua = step.column_action(ua, dua)
            ua, dua = ua * sstep, dua * sstep
            ub, dub = step.column_action(ub, dub)
            ub, dub = ub * sstep, dub * sstep
        return total
    if q < 0.0:
        w = 2.0 * math.sqrt(-q)
        a0, a1, a2 = _trig_coeffs(q, ua0, dua0)
        b0, b1, b2 = _trig_coeffs(q, ub0, dub0)
        wl = w * ll
        s = math.sin(wl)
        c = math.cos(wl)
        s2 = math.sin(2.0 * wl)
        c2 = math.cos(2.0 * wl)
        p_t = ll * ll / 2.0
        p_c = s / w
        p_s = (1.0 - c) / w
        p_tc = ll * s / w + (c - 1.0) / (w * w)
        p_ts = s / (w * w) - ll * c / w
        p_cc = ll / 2.0 + s2 / (4.0 * w)
        p_ss = ll / 2.0 - s2 / (4.0 * w)
        p_cs = (1.0 - c2) / (4.0 * w)
        return (
            b0 * a0 * p_t
            + b0 * a1 / w * p_s
            + b0 * a2 / w * (ll - p_c)
            + b1 * a0 * p_tc
            + b1 * a1 / w * p_cs
            + b1 * a2 / w * (p_c - p_cc)
            + b2 * a0 * p_ts
            + b2 * a1 / w * p_ss
            + b2 * a2 / w * (p_s - p_cs)
        )
    w = 2.0 * math.sqrt(q)
    a0, a1, a2 = _hyp_coeffs(q, ua0, dua0)
    b0, b1, b2 = _hyp_coeffs(q, ub0, dub0)
    wl = w * ll
    sh = math.sinh(wl)
    ch = math.cosh(wl)
    sh2 = math.sinh(2.0 * wl)
    ch2 = math.cosh(2.0 * wl)
    p_t = ll * ll / 2.0
    p_c = sh / w
    p_s = (ch - 1.0) / w
    p_tc = ll * sh / w - (ch - 1.0) / (w * w)
    p_ts = ll * ch / w - sh / (w * w)
    p_cc = ll / 2.0 + sh2 / (4.0 * w)
    p_ss = -ll / 2.0 + sh2 / (4.0 * w)
    p_cs = (ch2 - 1.0) / (4.0 * w)
    return (
        b0 * a0 * p_t
        + b0 * a1 / w * p_s
        + b0 * a2 / w * (p_c - ll)
        + b1 * a0 * p_tc
        + b1 * a1 / w * p_cs
        + b1 * a2 / w * (p_cc - p_c)
        + b2 * a0 * p_ts
        + b2 * a1 / w * p_ss
        + b2 * a2 / w * (p_cs - p_s)
    )


# ---------------------------------------------------------------------------
# Empirical lower envelope for the unit-cell solution mass
# ---------------------------------------------------------------------------

# For any solution with unit state norm at the left edge and any piecewise
# potential with integral of |q| at most M over a unit cell, the cell carries
# at least this much L2 mass.  Values are one quarter of the observed minimum
# over two independent 3e4-profile sweeps per budget plus constant-potential
# corner cases (generator mirrored in the test suite); only the existence of
# a positive constant is guaranteed analytically, so the table is empirical
# by construction.
_MASS_ENVELOPE = (
    (1.0, 1.1e-2),
    (2.0, 8.7e-3),
    (4.0, 3.5e-3),
    (8.0, 1.3e-3),
    (16.0, 9.0e-4),
    (32.0, 3.0e-4),
)


def mass_lower_envelope(budget: float) -> float:
    """Lower bound for the unit-cell L2 mass of a unit-state solution.

    ``budget`` bounds the integral of |q| over the cell.  Raises for budgets
    beyond the tabulated range.
    """
    for m, c in _MASS_ENVELOPE:
        if budget <= m:
            return c
    raise ValueError(f"no tabulated envelope beyond budget {_MASS_ENVELOPE[-1][0]}")
