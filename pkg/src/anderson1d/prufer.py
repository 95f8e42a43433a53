"""Pruefer amplitude and phase evolution, parameter derivatives, eigenvalues.

A nontrivial solution of -u'' + q u = 0 is written u = R sin(phi),
u' = R cos(phi) with R > 0 and a phase kept continuous in x.  The phase obeys

    phi' = 1 - (1 + q) sin^2(phi)

so |phi'| <= 1 + |1 + q| on a constant piece.  Evolution proceeds by exact
substep propagators with substeps short enough that the phase moves less than
pi/2, which pins the correct branch of the principal angle; the amplitude is
accumulated in log form.

Phase derivatives with respect to a coupling or the energy reduce to weighted
integrals of u^2, evaluated with exact per-piece antiderivatives rather than
quadrature.  Monotonicity of the phase in the energy turns Dirichlet shooting
into a bisection eigensolver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FlavorMismatch, OutOfInterval, ZeroState
from .model import Flavor, ModelSpec, PotentialProfile, Realization, build_profile
from .propagate import State2, cell_propagator, piece_l2, transfer

__all__ = [
    "PruferState",
    "to_prufer",
    "evolve_prufer",
    "prufer_snapshots",
    "cell_l2_masses",
    "phase_coupling_derivative",
    "phase_energy_derivative",
    "eigenvalue_count_below",
    "continuum_eigensystem_below",
    "Eigenpair",
    "phase_splitting_residual",
]

_TWO_PI = 2.0 * math.pi
# keep (1 + |1+q|) h below this fraction of pi/2
_PHASE_STEP_BUDGET = 0.49 * math.pi


@dataclass(frozen=True)
class PruferState:
    """Polar solution data at one position.

    ``log_amplitude`` is log R, ``phase`` the unwrapped phi, ``anchor`` the
    position where the initial phase ``theta`` was imposed.
    """

    log_amplitude: float
    phase: float
    anchor: float
    theta: float
    position: float

    def state(self) -> State2:
        r = math.exp(self.log_amplitude)
        return State2(r * math.sin(self.phase), r * math.cos(self.phase))


def to_prufer(state: State2) -> tuple[float, float]:
    """Log amplitude and principal phase in (-pi, pi] of a state."""
    r = state.norm()
    if r == 0.0:
        raise ZeroState("zero state has no polar form")
    return math.log(r), math.atan2(state.u, state.du)


# ---------------------------------------------------------------------------
# Evolution engine
# ---------------------------------------------------------------------------

class _ScaledSum:
    """Accumulates nonnegative terms v * exp(log_w) without overflow."""

    __slots__ = ("log_ref", "total")

    def __init__(self) -> None:
        self.log_ref = 0.0
        self.total = 0.0

    def add(self, log_w: float, v: float) -> None:
        if v == 0.0:
            return
        if self.total == 0.0:
            self.log_ref = log_w
            self.total = v
        elif log_w > self.log_ref:
            self.total = self.total * math.exp(self.log_ref - log_w) + v
            self.log_ref = log_w
        else:
            self.total += v * math.exp(log_w - self.log_ref)

    def log_value(self) -> float:
        if self.total == 0.0:
            return -math.inf
        return self.log_ref + math.log(self.total)


def _segment_list(
    profile: PotentialProfile,
    lo: float,
    hi: float,
    energy: float,
    cuts: tuple[float, ...] = (),
) -> list[tuple[float, float, float]]:
    """Constant-q segments of profile - energy over [lo, hi], split at cuts."""
    inner = sorted(p for p in cuts if lo + 1e-12 < p < hi - 1e-12)
    segments: list[tuple[float, float, float]] = []
    for left, length, value in profile.pieces(lo, hi):
        right = left + length
        edges = [left] + [p for p in inner if left + 1e-12 < p < right - 1e-12] + [right]
        for x0, x1 in zip(edges, edges[1:]):
            if x1 - x0 > 1e-12:
                segments.append((x0, x1 - x0, value - energy))
    return segments


def _walk(
    segments: list[tuple[float, float, float]],
    start: float,
    end: float,
    theta: float,
    record: tuple[float, ...] = (),
    hook=None,
    aux=None,
):
    """Propagate Pruefer data through constant segments from start to end.

    ``segments`` cover [min(start, end), max(start, end)] ascending.  The
    optional hook is called once per substep with
    (x_left, h, q, log_R_left, sin_left, cos_left, aux_value) where the state
    refers to the spatially left substep edge.  Records are snapshots taken at
    matching positions (which must be segment edges).
    """
    forward = end >= start
    log_r = 0.0
    phi = theta
    s = math.sin(theta)
    c = math.cos(theta)

    order = segments if forward else list(reversed(segments))
    rec = sorted(record, reverse=not forward)
    rec_idx = 0
    snapshots: dict[float, tuple[float, float]] = {}

    def maybe_record(pos: float) -> None:
        nonlocal rec_idx
        while rec_idx < len(rec) and abs(rec[rec_idx] - pos) <= 1e-9:
            snapshots[rec[rec_idx]] = (log_r, phi)
            rec_idx += 1

    maybe_record(start)
    for si, seg in enumerate(order):
        x0, length, q = seg
        rate = 1.0 + abs(1.0 + q)
        n_sub = max(1, math.ceil(rate * length / _PHASE_STEP_BUDGET))
        h = length / n_sub
        step = cell_propagator(q, h)
        if not forward:
            step = step.inverse()
        a_val = aux[si] if aux is not None else None
        for j in range(n_sub):
            if hook is not None:
                if forward:
                    hook(x0 + j * h, h, q, log_r, s, c, a_val)
            rate_here = 1.0 - (1.0 + q) * s * s
            pred = phi + (rate_here * h if forward else -rate_here * h)
            u, du = step.column_action(s, c)
            norm = math.hypot(u, du)
            log_r += step.log_scale + math.log(norm)
            s = u / norm
            c = du / norm
            princ = math.atan2(s, c)
            phi = princ + _TWO_PI * round((pred - princ) / _TWO_PI)
            if hook is not None and not forward:
                hook(x0 + length - (j + 1) * h, h, q, log_r, s, c, a_val)
        maybe_record(x0 + length if forward else x0)
    maybe_record(end)
    return log_r, phi, snapshots


def _check_range(profile: PotentialProfile, start: float, end: float) -> tuple[float, float]:
    lo, hi = (start, end) if start <= end else (end, start)
    if lo < profile.start - 1e-9 or hi > profile.end + 1e-9:
        raise OutOfInterval(
            f"[{lo}, {hi}] outside profile [{profile.start}, {profile.end}]"
        )
    return lo, hi


def evolve_prufer(
    profile: PotentialProfile,
    start: float,
    end: float,
    theta: float,
    energy: float = 0.0,
) -> PruferState:
    """Pruefer data at ``end`` for the solution with phase theta at ``start``.

    ``energy`` shifts the profile on the fly (q - energy), so a profile built
    at energy zero can be reused across trial energies.
    """
    lo, hi = _check_range(profile, start, end)
    if hi - lo <= 1e-12:
        return PruferState(0.0, theta, start, theta, end)
    segments = _segment_list(profile, lo, hi, energy)
    log_r, phi, _ = _walk(segments, start, end, theta)
    return PruferState(log_r, phi, start, theta, end)


def prufer_snapshots(
    profile: PotentialProfile,
    start: float,
    end: float,
    theta: float,
    positions,
    energy: float = 0.0,
) -> dict[float, PruferState]:
    """Pruefer data at each requested position along the sweep."""
    lo, hi = _check_range(profile, start, end)
    positions = tuple(float(p) for p in positions)
    for p in positions:
        if p < lo - 1e-9 or p > hi + 1e-9:
            raise OutOfInterval(f"record position {p} outside [{lo}, {hi}]")
    segments = _segment_list(profile, lo, hi, energy, cuts=positions)
    _, _, snaps = _walk(segments, start, end, theta, record=positions)
    return {
        p: PruferState(lr, ph, start, theta, p) for p, (lr, ph) in snaps.items()
    }


def cell_l2_masses(
    profile: PotentialProfile,
    start: float,
    end: float,
    theta: float,
    energy: float = 0.0,
) -> tuple[PruferState, dict[int, float]]:
    """Final Pruefer state plus log of the L2 mass of u on each unit cell.

    Masses use exact antiderivatives of u^2 on every substep, referenced to a
    unit starting amplitude at ``start``.
    """
    lo, hi = _check_range(profile, start, end)
    segments = _segment_list(profile, lo, hi, energy)
    sums: dict[int, _ScaledSum] = {}

    def hook(x_left, h, q, log_r, s, c, _aux):
        cell = math.floor(x_left + 0.5 * h)
        acc = sums.get(cell)
        if acc is None:
            acc = sums[cell] = _ScaledSum()
        acc.add(2.0 * log_r, piece_l2(q, h, s, c))

    log_r, phi, _ = _walk(segments, start, end, theta, hook=hook)
    state = PruferState(log_r, phi, start, theta, end)
    return state, {cell: acc.log_value() for cell, acc in sums.items()}


# ---------------------------------------------------------------------------
# Parameter derivatives of the phase
# ---------------------------------------------------------------------------

def _merged_segments(
    base: PotentialProfile,
    site: PotentialProfile,
    lam: float,
    lo: float,
    hi: float,
    energy: float,
) -> tuple[list[tuple[float, float, float]], list[float]]:
    """Segments of base + lam*site - energy with the site weight per segment."""
    edges = {lo, hi}
    edges.update(float(x) for x in base.boundaries() if lo < x < hi)
    edges.update(float(x) for x in site.boundaries() if lo < x < hi)
    sorted_edges = sorted(edges)
    merged: list[float] = []
    for x in sorted_edges:
        if not merged or x - merged[-1] > 1e-12:
            merged.append(x)
    segs: list[tuple[float, float, float]] = []
    weights: list[float] = []
    s_lo, s_hi = site.start, site.end
    for x0, x1 in zip(merged, merged[1:]):
        mid = 0.5 * (x0 + x1)
        v = site.value_at(mid) if s_lo - 1e-12 < mid < s_hi + 1e-12 else 0.0
        segs.append((x0, x1 - x0, base.value_at(mid) + lam * v - energy))
        weights.append(v)
    return segs, weights


def _signed_weighted_integral_over_rsq(
    segments, weights, start: float, end: float, theta: float
) -> float:
    """Oriented integral of w(t) u(t)^2 dt from start to end, divided by R(end)^2."""
    pos = _ScaledSum()
    neg = _ScaledSum()

    def hook(x_left, h, q, log_r, s, c, w):
        if w == 0.0:
            return
        v = piece_l2(q, h, s, c)
        if w > 0:
            pos.add(2.0 * log_r, w * v)
        else:
            neg.add(2.0 * log_r, -w * v)

    log_r_end, _, _ = _walk(segments, start, end, theta, hook=hook, aux=weights)
    lp, ln = pos.log_value(), neg.log_value()
    if lp == -math.inf and ln == -math.inf:
        return 0.0
    m = max(lp, ln)
    body = 0.0
    if lp > -math.inf:
        body += math.exp(lp - m)
    if ln > -math.inf:
        body -= math.exp(ln - m)
    oriented = 1.0 if end >= start else -1.0
    return oriented * body * math.exp(m - 2.0 * log_r_end)


def phase_coupling_derivative(
    base_profile: PotentialProfile,
    site_profile: PotentialProfile,
    lam: float,
    start: float,
    end: float,
    theta: float,
    energy: float = 0.0,
) -> float:
    """d phi / d lam at ``end`` for the potential base + lam * site.

    Equals -R(end)^{-2} times the oriented integral of site * u^2 from start
    to end, evaluated with exact per-piece antiderivatives.
    """
    lo, hi = _check_range(base_profile, start, end)
    if site_profile.start < lo - 1e-9 or site_profile.end > hi + 1e-9:
        raise OutOfInterval("site potential must be supported between start and end")
    segments, weights = _merged_segments(base_profile, site_profile, lam, lo, hi, energy)
    return -_signed_weighted_integral_over_rsq(segments, weights, start, end, theta)


def phase_energy_derivative(
    profile: PotentialProfile,
    start: float,
    end: float,
    theta: float,
    energy: float = 0.0,
) -> float:
    """d phi / d E at ``end``: R(end)^{-2} times the oriented integral of u^2."""
    lo, hi = _check_range(profile, start, end)
    if hi - lo <= 1e-12:
        return 0.0
    segments = _segment_list(profile, lo, hi, energy)
    weights = [1.0] * len(segments)
    return _signed_weighted_integral_over_rsq(segments, weights, start, end, theta)


# ---------------------------------------------------------------------------
# Dirichlet shooting eigensolver
# ---------------------------------------------------------------------------

def _shooting_phase(profile: PotentialProfile, a: float, b: float, energy: float) -> float:
    return evolve_prufer(profile, a, b, 0.0, energy=energy).phase


def eigenvalue_count_below(
    spec: ModelSpec,
    realization: Realization,
    interval: tuple[int, int],
    energy: float,
) -> int:
    """Number of Dirichlet eigenvalues of the restriction to [a, b] below energy.

    The count is the oscillation count floor(phi_a(b, E, 0) / pi) of the
    shooting solution, nondecreasing in E by phase monotonicity.
    """
    if spec.flavor is not Flavor.CONTINUUM:
        raise FlavorMismatch("oscillation counting is a continuum operation")
    a, b = interval
    profile = build_profile(spec, realization, 0.0)
    _check_range(profile, a, b)
    return math.floor(_shooting_phase(profile, a, b, energy) / math.pi)


@dataclass(frozen=True)
class Eigenpair:
    """One Dirichlet eigenvalue with a sampled, L2-normalized eigenfunction."""

    energy: float
    grid: np.ndarray
    values: np.ndarray
    cell_masses: np.ndarray
    first_cell: int
    norm_residual: float

    def cell_norm(self, cell: int) -> float:
        """L2 norm of the eigenfunction on [cell, cell + 1)."""
        idx = cell - self.first_cell
        if idx < 0 or idx >= self.cell_masses.size:
            return 0.0
        return math.sqrt(float(self.cell_masses[idx]))


def continuum_eigensystem_below(
    spec: ModelSpec,
    realization: Realization,
    interval: tuple[int, int],
    e_max: float,
    samples_per_unit: int = 64,
) -> list[Eigenpair]:
    """All Dirichlet eigenpairs below e_max on [a, b], by phase bisection.

    Eigenvalues solve phi_a(b, E, 0) = k pi; the phase is strictly increasing
    in E, so plain bisection brackets each one.  Eigenfunctions are the
    shooting solutions normalized to unit L2 norm, with per-cell masses from
    exact antiderivatives.
    """
    if spec.flavor is not Flavor.CONTINUUM:
        raise FlavorMismatch("shooting eigensolver is a continuum operation")
    a, b = int(interval[0]), int(interval[1])
    profile = build_profile(spec, realization, 0.0)
    _check_range(profile, a, b)
    n_states = math.floor(_shooting_phase(profile, a, b, e_max) / math.pi)
    pairs: list[Eigenpair] = []
    lo_base = profile.min_value() - 1.0
    bracket_lo = lo_base
    for k in range(1, n_states + 1):
        target = k * math.pi
        lo, hi = bracket_lo, e_max
        phim = None
        for _ in range(260):
            mid = 0.5 * (lo + hi)
            phim = _shooting_phase(profile, a, b, mid)
            if phim < target:
                lo = mid
            else:
                hi = mid
            width = hi - lo
            if width <= 1e-10 * (1.0 + abs(mid)) and (
                abs(phim - target) <= 5e-10
                or width <= 16.0 * np.spacing(max(1.0, abs(mid)))
            ):
                break
        e_k = 0.5 * (lo + hi)
        bracket_lo = hi
        pairs.append(_build_eigenpair(profile, a, b, e_k, samples_per_unit))
    return pairs


def _build_eigenpair(
    profile: PotentialProfile, a: int, b: int, energy: float, samples_per_unit: int
) -> Eigenpair:
    grid = a + np.arange((b - a) * samples_per_unit + 1) / samples_per_unit
    snaps = prufer_snapshots(profile, a, b, 0.0, grid, energy=energy)
    _, log_masses = cell_l2_masses(profile, a, b, 0.0, energy=energy)
    total = _ScaledSum()
    for lm in log_masses.values():
        total.add(lm, 1.0)
    log_norm = 0.5 * total.log_value()
    values = np.array(
        [
            math.exp(snaps[p].log_amplitude - log_norm) * math.sin(snaps[p].phase)
            for p in grid
        ]
    )
    cells = sorted(log_masses)
    masses = np.array([math.exp(log_masses[c] - 2.0 * log_norm) for c in cells])
    end_state = snaps[grid[-1]]
    residual = abs(math.sin(end_state.phase))
    return Eigenpair(energy, grid, values, masses, cells[0], residual)


# ---------------------------------------------------------------------------
# Phase splitting of backward amplitudes
# ---------------------------------------------------------------------------

def phase_splitting_residual(
    profile: PotentialProfile, x: float, y: float, energy: float = 0.0
) -> float:
    """Defect of the backward-amplitude factorization through transfer norms.

    With u anchored at the right endpoint b, the amplitude ratio between two
    interior points equals the reciprocal transfer-norm of the unit Pruefer
    direction:

        log R_b(y) - log R_b(x) = -log || T(x <- y) (sin phi_b(y), cos phi_b(y)) ||

    Returns the absolute difference of the two sides.
    """
    if not (profile.start - 1e-9 <= x < y <= profile.end + 1e-9):
        raise OutOfInterval("need start <= x < y <= end")
    bpos = profile.end
    snaps = prufer_snapshots(profile, bpos, x, 0.0, (x, y), energy=energy)
    lhs = snaps[y].log_amplitude - snaps[x].log_amplitude
    t_back = transfer(profile, y, x, energy=energy)
    u, du = t_back.column_action(math.sin(snaps[y].phase), math.cos(snaps[y].phase))
    rhs = -(t_back.log_scale + math.log(math.hypot(u, du)))
    return abs(lhs - rhs)
