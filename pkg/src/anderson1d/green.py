"""Finite-volume Dirichlet Green functions, continuum and discrete.

Continuum kernels are assembled from the two Dirichlet shooting solutions and
their Wronskian, carried in Pruefer log form so long intervals never
overflow.  Discrete resolvents come in three independent routes: a direct
symmetric tridiagonal solve with pivot monitoring, the two-solution Wronskian
form, and a rank-two Krein reduction; agreement across the routes is the main
cross-check of the module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    EigenvalueHit,
    FlavorMismatch,
    OutOfInterval,
    SingularReduction,
)
from .model import Flavor, ModelSpec, Realization, build_profile
from .prufer import _ScaledSum, cell_l2_masses, prufer_snapshots
from .propagate import piece_l2, piece_l2_ordered_cross

__all__ = [
    "GreenStatus",
    "GreenSample",
    "WRONSKIAN_TOL",
    "continuum_green",
    "hs_block_norm",
    "ContinuumGreenData",
    "continuum_green_data",
    "DiscreteGreen",
    "discrete_green_solve",
    "discrete_green_solution_form",
    "krein_entry",
]

# |W| below this multiple of the geometric mean of the two solution
# amplitudes at the matching point flags the sample.  Artifact constant: the
# representation degrades continuously as E approaches an eigenvalue and no
# sharper threshold is canonical.
WRONSKIAN_TOL = 1e-12

_WRONSKIAN_CONSTANCY_RTOL = 1e-8


class GreenStatus(Enum):
    OK = "ok"
    NEAR_EIGENVALUE = "near_eigenvalue"


@dataclass(frozen=True)
class GreenSample:
    """One kernel evaluation with its Wronskian diagnostic."""

    x: float
    y: float
    value: complex | float
    wronskian: complex | float
    status: GreenStatus


# ---------------------------------------------------------------------------
# Continuum kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuumGreenData:
    """Both Dirichlet shooting solutions of one realization at one energy.

    Snapshots at integer points and per-cell masses for the forward solution
    (anchored at a) and the backward solution (anchored at b), plus the
    Wronskian evaluated at a fixed interior matching point and its constancy
    diagnostic.  One instance serves every (x, y) request on the interval.
    """

    interval: tuple[int, int]
    energy: float
    log_r_fwd: dict[float, float]
    phase_fwd: dict[float, float]
    log_r_bwd: dict[float, float]
    phase_bwd: dict[float, float]
    cell_log_mass_fwd: dict[int, float]
    cell_log_mass_bwd: dict[int, float]
    match_point: float
    wronskian: float
    status: GreenStatus

    def log_w_abs(self) -> float:
        return (
            self.log_r_fwd[self.match_point]
            + self.log_r_bwd[self.match_point]
            + math.log(
                abs(
                    math.sin(
                        self.phase_bwd[self.match_point]
                        - self.phase_fwd[self.match_point]
                    )
                )
            )
        )


def continuum_green_data(
    spec: ModelSpec,
    realization: Realization,
    interval: tuple[int, int],
    energy: float,
    extra_positions=(),
) -> ContinuumGreenData:
    """Shooting-solution data shared by kernel and block-norm evaluations."""
    if spec.flavor is not Flavor.CONTINUUM:
        raise FlavorMismatch("continuum Green data needs a continuum model")
    a, b = int(interval[0]), int(interval[1])
    ra, rb = realization.interval
    if a < ra or b > rb or a >= b:
        raise OutOfInterval(f"[{a}, {b}] not inside realization [{ra}, {rb}]")
    profile = build_profile(spec, realization, energy)
    interior = [float(p) for p in range(a + 1, b)] or [0.5 * (a + b)]
    positions = sorted(
        {float(p) for p in extra_positions}
        | {float(n) for n in range(a, b + 1)}
        | set(interior)
    )
    snaps_f = prufer_snapshots(profile, a, b, 0.0, positions)
    snaps_b = prufer_snapshots(profile, b, a, 0.0, positions)
    _, mass_f = cell_l2_masses(profile, a, b, 0.0)
    _, mass_b = cell_l2_masses(profile, b, a, 0.0)

    # The kernel denominator is W(u_b, u_a) = R_a R_b sin(phi_b - phi_a),
    # the orientation that makes the below-spectrum kernel positive.  It is
    # constant in exact arithmetic, so its spread across interior points is
    # the health check.
    match = min(interior, key=lambda p: abs(p - 0.5 * (a + b)))
    w_vals = []
    for p in interior:
        w_vals.append(
            math.exp(snaps_f[p].log_amplitude + snaps_b[p].log_amplitude)
            * math.sin(snaps_b[p].phase - snaps_f[p].phase)
        )
    w_match = (
        math.exp(snaps_f[match].log_amplitude + snaps_b[match].log_amplitude)
        * math.sin(snaps_b[match].phase - snaps_f[match].phase)
    )
    scale = max(abs(w) for w in w_vals)
    spread = max(abs(w - w_match) for w in w_vals)
    geo_mean = math.exp(
        0.5 * (snaps_f[match].log_amplitude + snaps_b[match].log_amplitude)
    )
    status = GreenStatus.OK
    if abs(w_match) < WRONSKIAN_TOL * geo_mean:
        status = GreenStatus.NEAR_EIGENVALUE
    elif scale > 0 and spread > _WRONSKIAN_CONSTANCY_RTOL * scale:
        status = GreenStatus.NEAR_EIGENVALUE
    return ContinuumGreenData(
        (a, b),
        energy,
        {p: s.log_amplitude for p, s in snaps_f.items()},
        {p: s.phase for p, s in snaps_f.items()},
        {p: s.log_amplitude for p, s in snaps_b.items()},
        {p: s.phase for p, s in snaps_b.items()},
        mass_f,
        mass_b,
        float(match),
        w_match,
        status,
    )


def _kernel_value(data: ContinuumGreenData, s: float, t: float) -> float:
    lo, hi = (s, t) if s <= t else (t, s)
    p = data.match_point
    sf = math.sin(data.phase_fwd[lo])
    sb = math.sin(data.phase_bwd[hi])
    sw = math.sin(data.phase_bwd[p] - data.phase_fwd[p])
    mag = math.exp(
        data.log_r_fwd[lo]
        - data.log_r_fwd[p]
        + data.log_r_bwd[hi]
        - data.log_r_bwd[p]
    )
    return mag * sf * sb / sw


def continuum_green(
    spec: ModelSpec,
    realization: Realization,
    interval: tuple[int, int],
    energy: float,
    s: float,
    t: float,
) -> GreenSample:
    """Dirichlet kernel G(s, t; E) = u_a(min) u_b(max) / W(u_b, u_a).

    Symmetric in (s, t) by construction.  A failing Wronskian check is
    reported through the status field, not an exception.
    """
    a, b = int(interval[0]), int(interval[1])
    if not (a - 1e-9 <= s <= b + 1e-9 and a - 1e-9 <= t <= b + 1e-9):
        raise OutOfInterval(f"kernel arguments outside [{a}, {b}]")
    data = continuum_green_data(spec, realization, (a, b), energy, extra_positions=(s, t))
    return GreenSample(s, t, _kernel_value(data, s, t), data.wronskian, data.status)


def _cell_pieces(profile, cell: int):
    return list(profile.pieces(cell, cell + 1))


def hs_block_value(data: ContinuumGreenData, x: int, y: int) -> float:
    """Hilbert-Schmidt norm of the kernel block over [x, x+1] x [y, y+1].

    Off the diagonal the kernel factorizes on the two cells, so the norm is a
    product of per-cell masses over the Wronskian.
    """
    if x == y:
        raise ValueError("diagonal blocks need the ordered double integral")
    lo, hi = (x, y) if x < y else (y, x)
    log_val = (
        0.5 * (data.cell_log_mass_fwd[lo] + data.cell_log_mass_bwd[hi])
        - data.log_w_abs()
    )
    return math.exp(log_val)


def hs_block_norm(
    spec: ModelSpec,
    realization: Realization,
    interval: tuple[int, int],
    energy: float,
    x: int,
    y: int,
) -> GreenSample:
    """HS norm of chi_x G chi_y via exact piecewise antiderivatives.

    For x != y, (integral of u_a^2 over cell x)^(1/2) times the matching
    backward factor over |W|.  On the diagonal the double integral is split
    along s <= t and evaluated with per-piece closed forms.
    """
    a, b = int(interval[0]), int(interval[1])
    x, y = int(x), int(y)
    if not (a <= x < b and a <= y < b):
        raise OutOfInterval(f"cells ({x}, {y}) outside [{a}, {b})")
    data = continuum_green_data(spec, realization, (a, b), energy)
    if x != y:
        return GreenSample(x, y, hs_block_value(data, x, y), data.wronskian, data.status)

    # Diagonal: 2 * sum over ordered piece pairs inside the cell.
    profile = build_profile(spec, realization, energy)
    pieces = _cell_pieces(profile, x)
    edges = [p[0] for p in pieces] + [x + 1.0]
    snaps_f = prufer_snapshots(profile, a, b, 0.0, edges)
    snaps_b = prufer_snapshots(profile, b, a, 0.0, edges)
    acc = _ScaledSum()
    mass_f: list[tuple[float, float]] = []  # (2 log R at edge, unit-state mass)
    for left, length, q in pieces:
        fs = snaps_f[left]
        bs = snaps_b[left]
        ua, dua = math.sin(fs.phase), math.cos(fs.phase)
        ub, dub = math.sin(bs.phase), math.cos(bs.phase)
        for lw, unit_mass in mass_f:
            acc.add(
                lw + 2.0 * bs.log_amplitude,
                unit_mass * piece_l2(q, length, ub, dub),
            )
        acc.add(
            2.0 * (fs.log_amplitude + bs.log_amplitude),
            piece_l2_ordered_cross(q, length, ua, dua, ub, dub),
        )
        mass_f.append((2.0 * fs.log_amplitude, piece_l2(q, length, ua, dua)))
    log_sq = math.log(2.0) + acc.log_value() - 2.0 * data.log_w_abs()
    return GreenSample(x, y, math.exp(0.5 * log_sq), data.wronskian, data.status)


# ---------------------------------------------------------------------------
# Discrete resolvent: direct tridiagonal solve
# ---------------------------------------------------------------------------

class DiscreteGreen:
    """Resolvent (h_{[a,b]} - z)^{-1} behind a monitored LDL-type factorization.

    The pivot recursion d_i = (eta_i - z) - 1/d_{i-1} is the Sturm sequence of
    the symmetric tridiagonal matrix; at real energy a collapsing pivot means
    z sits numerically on an eigenvalue of a leading minor and the solve is
    refused with EigenvalueHit.
    """

    def __init__(self, realization: Realization, interval: tuple[int, int], z: complex):
        a, b = int(interval[0]), int(interval[1])
        ra, rb = realization.interval
        # volume sites a..b inclusive; the realization carries couplings on
        # [ra, rb), so site b needs b < rb
        if a < ra or b >= rb or a > b:
            raise OutOfInterval(f"sites [{a}, {b}] not covered by [{ra}, {rb})")
        self.interval = (a, b)
        self.z = z
        eta = realization.couplings[a - ra : b - ra + 1]
        real_case = (z.imag if isinstance(z, complex) else 0.0) == 0.0
        dtype = float if real_case else complex
        zz = z.real if real_case else complex(z)
        diag = eta.astype(dtype) - zz
        n = diag.size
        scale = float(np.max(np.abs(diag))) + 2.0
        piv = np.empty(n, dtype=dtype)
        piv[0] = diag[0]
        for i in range(1, n):
            if real_case and abs(piv[i - 1]) < 1e-13 * scale:
                raise EigenvalueHit(
                    f"pivot {i - 1} degenerated at energy {z}: eigenvalue hit"
                )
            piv[i] = diag[i] - 1.0 / piv[i - 1]
        if real_case and abs(piv[n - 1]) < 1e-13 * scale:
            raise EigenvalueHit(f"final pivot degenerated at energy {z}")
        self._pivots = piv
        self._n = n

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        piv = self._pivots
        n = self._n
        y = np.empty(n, dtype=piv.dtype)
        y[0] = rhs[0]
        for i in range(1, n):
            y[i] = rhs[i] + y[i - 1] / piv[i - 1]
        u = np.empty(n, dtype=piv.dtype)
        u[n - 1] = y[n - 1] / piv[n - 1]
        for i in range(n - 2, -1, -1):
            u[i] = (y[i] + u[i + 1]) / piv[i]
        return u

    def row(self, x: int) -> np.ndarray:
        """All entries G(x, y) for y in [a, b] (symmetric: also column x)."""
        a, b = self.interval
        if not a <= x <= b:
            raise OutOfInterval(f"site {x} outside [{a}, {b}]")
        rhs = np.zeros(self._n, dtype=self._pivots.dtype)
        rhs[x - a] = 1.0
        return self.solve(rhs)

    def entry(self, x: int, y: int):
        a, b = self.interval
        if not (a <= x <= b and a <= y <= b):
            raise OutOfInterval(f"({x}, {y}) outside [{a}, {b}]")
        val = self.row(x)[y - a]
        return complex(val) if np.iscomplexobj(val) else float(val)

    def matrix(self) -> np.ndarray:
        out = np.empty((self._n, self._n), dtype=self._pivots.dtype)
        a, b = self.interval
        for x in range(a, b + 1):
            out[x - a] = self.row(x)
        return out


def discrete_green_solve(
    realization: Realization,
    interval: tuple[int, int],
    energy: float,
    epsilon: float = 0.0,
) -> DiscreteGreen:
    """Resolvent of the restriction to [a, b] at z = energy + i epsilon.

    epsilon > 0 switches to complex arithmetic and needs no eigenvalue guard:
    the pivots stay uniformly dissipative.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    z = complex(energy, epsilon) if epsilon > 0 else float(energy)
    return DiscreteGreen(realization, interval, z)


# ---------------------------------------------------------------------------
# Discrete resolvent: two-solution Wronskian form
# ---------------------------------------------------------------------------

def _scaled_recursion(eta: np.ndarray, energy: float, u_prev: float, u_curr: float):
    """Normalized forward recursion values and per-step log scales.

    Returns arrays v (value at each site) and logs (cumulative log scale),
    with true u(n) = v[n] * exp(logs[n]).
    """
    n = eta.size
    v = np.empty(n + 1, dtype=float)
    logs = np.empty(n + 1, dtype=float)
    v[0] = u_curr
    logs[0] = 0.0
    prev, curr, log = u_prev, u_curr, 0.0
    for i in range(n):
        nxt = (eta[i] - energy) * curr - prev
        prev, curr = curr, nxt
        norm = max(abs(prev), abs(curr))
        if norm > 1e120:
            prev /= norm
            curr /= norm
            log += math.log(norm)
        v[i + 1] = curr
        logs[i + 1] = log
    return v, logs


def discrete_green_solution_form(
    realization: Realization,
    interval: tuple[int, int],
    energy: float,
    y: int,
) -> GreenSample:
    """G_{[x, b]}(x, y; E) from the two boundary solutions and their Wronskian.

    u_x grows from the left boundary condition u(x-1) = 0, u(x) = 1; u_b from
    the right condition u(b) = 1, u(b+1) = 0.  The discrete Wronskian
    u_x(n+1) u_b(n) - u_x(n) u_b(n+1) is constant in n; its drift across the
    interval is verified to 1e-9 relative and failures flag the sample.
    """
    x, b = int(interval[0]), int(interval[1])
    if not x <= y <= b:
        raise OutOfInterval(f"need x <= y <= b, got x={x}, y={y}, b={b}")
    ra, rb = realization.interval
    if x < ra or b >= rb:
        raise OutOfInterval(f"sites [{x}, {b}] not covered by [{ra}, {rb})")
    eta = realization.couplings[x - ra : b - ra + 1]
    n_sites = eta.size  # sites x .. b

    # forward recursion gives u_x at sites x .. b+1; prepend u_x(x-1) = 0
    vf, lf = _scaled_recursion(eta, energy, 0.0, 1.0)
    u_x_val = {x - 1: (0.0, 0.0)}
    for i in range(n_sites + 1):
        u_x_val[x + i] = (float(vf[i]), float(lf[i]))
    # the recursion is symmetric under reversal, so the backward solution is
    # the forward recursion on the reversed couplings: u_b at sites b .. x-1
    vb, lb = _scaled_recursion(eta[::-1], energy, 0.0, 1.0)
    u_b_val = {b + 1: (0.0, 0.0)}
    for j in range(n_sites + 1):
        u_b_val[b - j] = (float(vb[j]), float(lb[j]))

    def wronskian_at(n: int) -> tuple[float, float]:
        """W at n as value * exp(log_scale)."""
        v1, l1 = u_x_val[n + 1]
        v0, l0 = u_x_val[n]
        w1, m1 = u_b_val[n]
        w0, m0 = u_b_val[n + 1]
        e1 = l1 + m1
        e0 = l0 + m0
        ref = max(e1, e0)
        val = v1 * w1 * math.exp(e1 - ref) - v0 * w0 * math.exp(e0 - ref)
        return val, ref

    w_ref, w_log = wronskian_at(x)
    if w_ref == 0.0:
        return GreenSample(x, y, math.inf, 0.0, GreenStatus.NEAR_EIGENVALUE)
    status = GreenStatus.OK
    for n in range(x, b + 1):
        wn, ln = wronskian_at(n)
        if abs(wn * math.exp(ln - w_log) - w_ref) > 1e-9 * abs(w_ref):
            status = GreenStatus.NEAR_EIGENVALUE
            break

    def log_amp(vals: dict, n: int) -> float:
        v0, l0 = vals[n]
        v1, l1 = vals[n + 1]
        ref = max(l0, l1)
        return ref + math.log(math.hypot(v0 * math.exp(l0 - ref), v1 * math.exp(l1 - ref)))

    log_geo = 0.5 * (log_amp(u_x_val, x) + log_amp(u_b_val, x))
    log_w_abs = w_log + math.log(abs(w_ref))
    if log_w_abs < math.log(WRONSKIAN_TOL) + log_geo:
        status = GreenStatus.NEAR_EIGENVALUE

    vy, ly = u_b_val[y]
    value = (vy / w_ref) * math.exp(ly - w_log)
    wronskian = math.copysign(1.0, w_ref) * math.exp(min(log_w_abs, 700.0))
    return GreenSample(x, y, value, wronskian, status)


# ---------------------------------------------------------------------------
# Discrete resolvent: Krein rank-two reduction
# ---------------------------------------------------------------------------

_COND_LIMIT = 1e13


def krein_entry(
    realization: Realization,
    interval: tuple[int, int],
    energy: float,
    x: int,
    y: int,
) -> float:
    """G(x, y; E) through the resolvent of the coupling-stripped operator.

    With the couplings at x and y removed, A = P (h_hat - E)^{-1} P is a 2x2
    matrix and G(x, y) = [A^{-1} + diag(eta_x, eta_y)]^{-1}(x, y).  For x == y
    the rank-one version 1 / (1/G_hat(x,x) + eta_x) applies.  Ill-conditioned
    reductions raise SingularReduction.
    """
    a, b = int(interval[0]), int(interval[1])
    x, y = int(x), int(y)
    if not (a <= x <= b and a <= y <= b):
        raise OutOfInterval(f"({x}, {y}) outside [{a}, {b}]")
    eta_x = realization.coupling_at(x)
    if x == y:
        stripped = realization.with_coupling(x, 0.0)
        g_hat = discrete_green_solve(stripped, (a, b), energy).entry(x, x)
        if abs(g_hat) < 1.0 / _COND_LIMIT:
            raise SingularReduction("stripped diagonal entry is numerically zero")
        denom = 1.0 / g_hat + eta_x
        if abs(denom) * abs(g_hat) < 1.0 / _COND_LIMIT:
            raise SingularReduction("rank-one reduction is numerically singular")
        return 1.0 / denom
    eta_y = realization.coupling_at(y)
    stripped = realization.with_coupling(x, 0.0).with_coupling(y, 0.0)
    hat = discrete_green_solve(stripped, (a, b), energy)
    row_x = hat.row(x)
    row_y = hat.row(y)
    amat = np.array(
        [[row_x[x - a], row_x[y - a]], [row_y[x - a], row_y[y - a]]], dtype=float
    )
    if not np.all(np.isfinite(amat)) or np.linalg.cond(amat) > _COND_LIMIT:
        raise SingularReduction("stripped 2x2 resolvent block is ill-conditioned")
    bmat = np.linalg.inv(amat) + np.diag([eta_x, eta_y])
    if np.linalg.cond(bmat) > _COND_LIMIT:
        raise SingularReduction("reduced 2x2 matrix is numerically singular")
    return float(np.linalg.inv(bmat)[0, 1])
