"""Monte Carlo fractional moments, decay fits, bound scans, correlators.

Disorder averages of |G|^s (discrete) or of Hilbert-Schmidt kernel blocks
raised to the s-th power (continuum) are estimated over independent
realizations keyed by index, so results are a pure function of
(spec, parameters, master_seed) no matter how many workers run the sweep.
Samples whose Green representation degenerates are excluded and counted,
never resampled: resampling would condition on the neighborhood of a
zero-probability event and bias the heavy tail.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import (
    DegenerateFit,
    EigenvalueHit,
    FlavorMismatch,
    InsufficientSamples,
)
from .fitting import loglinear_fit
from .green import (
    GreenStatus,
    continuum_green_data,
    discrete_green_solve,
    hs_block_value,
)
from .model import Flavor, ModelSpec, sample_realization
from .prufer import continuum_eigensystem_below

__all__ = [
    "MomentCurve",
    "DecayFit",
    "CorrelatorCurve",
    "AprioriScan",
    "fractional_moment_curve",
    "fit_decay",
    "apriori_bound_scan",
    "correlator_curve",
    "default_apriori_energies",
    "centered_anchor",
]

# median-of-means kicks in at this many usable samples
_MOM_THRESHOLD = 200
_MOM_GROUPS = 20
# asymptotic std factor of a median relative to the mean, sqrt(pi/2)
_MEDIAN_FACTOR = 1.2533141373155003

_UNRELIABLE_FLAG_FRACTION = 1e-3


def centered_anchor(volume: tuple[int, int], max_distance: int) -> int:
    """Anchor placed so the farthest probe still fits inside the volume."""
    a, b = volume
    return a + ((b - a) - max_distance) // 2


# ---------------------------------------------------------------------------
# Result containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentCurve:
    """Distance-indexed fractional-moment estimates for one energy."""

    s: float
    energy: float
    epsilon: float
    volume: tuple[int, int]
    anchor: int
    distances: tuple[int, ...]
    means: tuple[float, ...]
    std_errors: tuple[float, ...]
    flagged_count: int
    n_realizations: int
    master_seed: int

    @property
    def reliable(self) -> bool:
        return self.flagged_count <= _UNRELIABLE_FLAG_FRACTION * self.n_realizations

    @property
    def n_used(self) -> int:
        return self.n_realizations - self.flagged_count


@dataclass(frozen=True)
class DecayFit:
    """Fitted C exp(-eta d) of a positive decay curve."""

    eta_hat: float
    c_hat: float
    r_squared: float
    fit_window: tuple[float, float]
    covariance: np.ndarray  # of (log C, eta)

    @property
    def eta_std_error(self) -> float:
        return math.sqrt(float(self.covariance[1, 1]))

    @property
    def log_c_std_error(self) -> float:
        return math.sqrt(float(self.covariance[0, 0]))


@dataclass(frozen=True)
class CorrelatorCurve:
    """Disorder-averaged eigenfunction correlator below an energy cutoff."""

    energy_cutoff: float
    volume: tuple[int, int]
    anchor: int
    distances: tuple[int, ...]
    means: tuple[float, ...]
    std_errors: tuple[float, ...]
    n_realizations: int
    master_seed: int


@dataclass(frozen=True)
class AprioriScan:
    """Grid of moment means at coincident and adjacent probes."""

    s: float
    volume: tuple[int, int]
    energies: tuple[float, ...]
    diag_means: tuple[float, ...]
    diag_std_errors: tuple[float, ...]
    offdiag_means: tuple[float, ...]
    offdiag_std_errors: tuple[float, ...]
    flagged_count: int
    n_realizations: int
    master_seed: int

    @property
    def max_mean(self) -> float:
        return max(max(self.diag_means), max(self.offdiag_means))


# ---------------------------------------------------------------------------
# Estimation core
# ---------------------------------------------------------------------------

def _estimate_columns(values: np.ndarray, flags: np.ndarray):
    """Per-column means and errors over unflagged rows.

    From 200 requested realizations upward the estimator is median-of-means
    over 20 index-ordered groups (robust near resonant energies); the error
    bar is the group-mean spread scaled by the asymptotic median factor
    sqrt(pi/2).
    """
    usable = values[~flags]
    n = usable.shape[0]
    if n == 0:
        raise InsufficientSamples("every sample was flagged")
    if values.shape[0] >= _MOM_THRESHOLD and n >= _MOM_GROUPS:
        groups = np.array_split(usable, _MOM_GROUPS, axis=0)
        group_means = np.stack([g.mean(axis=0) for g in groups])
        means = np.median(group_means, axis=0)
        std_errors = _MEDIAN_FACTOR * group_means.std(axis=0, ddof=1) / math.sqrt(
            _MOM_GROUPS
        )
    else:
        means = usable.mean(axis=0)
        if n > 1:
            std_errors = usable.std(axis=0, ddof=1) / math.sqrt(n)
        else:
            std_errors = np.zeros_like(means)
    return means, std_errors, n


def _chunks(n: int, workers: int) -> list[tuple[int, int]]:
    if workers <= 1:
        return [(0, n)]
    size = max(1, math.ceil(n / (workers * 4)))
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _run_indexed(worker, args: tuple, n: int, workers: int):
    tasks = [args + (lo, hi) for lo, hi in _chunks(n, workers)]
    if workers <= 1:
        parts = [worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(worker, tasks))
    values = np.concatenate([p[0] for p in parts], axis=0)
    flags = np.concatenate([p[1] for p in parts], axis=0)
    return values, flags


# ---------------------------------------------------------------------------
# Fractional moment curves
# ---------------------------------------------------------------------------

def _discrete_moment_worker(task):
    (spec, volume, energy, epsilon, s, anchor, distances, seed, lo, hi) = task
    a, b = volume
    dists = np.asarray(distances, dtype=int)
    values = np.zeros((hi - lo, dists.size), dtype=float)
    flags = np.zeros(hi - lo, dtype=bool)
    for r in range(lo, hi):
        realization = sample_realization(spec, (a, b + 1), seed, r)
        try:
            solver = discrete_green_solve(realization, (a, b), energy, epsilon)
            row = solver.row(anchor)
        except EigenvalueHit:
            flags[r - lo] = True
            continue
        g = np.abs(row[dists + (anchor - a)])
        values[r - lo] = g**s
    return values, flags


def _continuum_moment_worker(task):
    (spec, volume, energy, s, anchor, distances, seed, lo, hi) = task
    a, b = volume
    dists = np.asarray(distances, dtype=int)
    values = np.zeros((hi - lo, dists.size), dtype=float)
    flags = np.zeros(hi - lo, dtype=bool)
    for r in range(lo, hi):
        realization = sample_realization(spec, (a, b), seed, r)
        data = continuum_green_data(spec, realization, (a, b), energy)
        if data.status is not GreenStatus.OK:
            flags[r - lo] = True
            continue
        for j, d in enumerate(dists):
            values[r - lo, j] = hs_block_value(data, anchor, anchor + int(d)) ** s
    return values, flags


def fractional_moment_curve(
    spec: ModelSpec,
    volume: tuple[int, int],
    energy: float,
    s: float,
    anchor: int,
    distances,
    n_realizations: int,
    master_seed: int,
    epsilon: float = 0.0,
    workers: int = 1,
) -> MomentCurve:
    """Sample means of the s-th Green moment at each probe distance.

    Discrete flavor: |G_{[a,b]}(x, x+d; E + i eps)|^s via the direct solve.
    Continuum flavor: the Hilbert-Schmidt block norm ||chi_x G chi_{x+d}||^s
    from the factorized shooting representation.  Flagged realizations are
    excluded from every column and counted once.
    """
    if not 0.0 < s <= 0.5:
        raise ValueError("s must lie in (0, 0.5] for finite sample variance")
    if n_realizations < 20:
        raise InsufficientSamples("need at least 20 realizations")
    a, b = int(volume[0]), int(volume[1])
    distances = tuple(int(d) for d in distances)
    if not distances or any(d < 0 for d in distances):
        raise ValueError("distances must be nonnegative")
    if anchor < a or anchor + max(distances) > b:
        raise ValueError("anchor and farthest distance must stay inside the volume")
    if spec.flavor is Flavor.DISCRETE:
        args = (spec, (a, b), float(energy), float(epsilon), float(s), int(anchor), distances, int(master_seed))
        values, flags = _run_indexed(_discrete_moment_worker, args, n_realizations, workers)
    else:
        if epsilon != 0.0:
            raise FlavorMismatch("complex energy is supported for the discrete flavor only")
        if any(d == 0 for d in distances):
            raise ValueError("continuum moment curves use off-diagonal blocks (d >= 1)")
        args = (spec, (a, b), float(energy), float(s), int(anchor), distances, int(master_seed))
        values, flags = _run_indexed(_continuum_moment_worker, args, n_realizations, workers)
    means, std_errors, _ = _estimate_columns(values, flags)
    return MomentCurve(
        float(s),
        float(energy),
        float(epsilon),
        (a, b),
        int(anchor),
        distances,
        tuple(float(v) for v in means),
        tuple(float(v) for v in std_errors),
        int(flags.sum()),
        n_realizations,
        int(master_seed),
    )


# ---------------------------------------------------------------------------
# Decay fitting
# ---------------------------------------------------------------------------

def fit_decay(curve, window: tuple[float, float] | None = None) -> DecayFit:
    """Weighted log-linear fit of a decay curve; eta_hat is minus the slope.

    Works on any object exposing distances / means / std_errors.  Raises
    DegenerateFit when fewer than five usable distances remain or any mean in
    the window is consistent with zero at two standard errors.
    """
    dists = np.asarray(curve.distances, dtype=float)
    means = np.asarray(curve.means, dtype=float)
    errors = np.asarray(curve.std_errors, dtype=float)
    if window is None:
        window = (float(dists.min()), float(dists.max()))
    mask = (dists >= window[0]) & (dists <= window[1])
    if int(mask.sum()) < 5:
        raise DegenerateFit("need at least five distances inside the window")
    dists, means, errors = dists[mask], means[mask], errors[mask]
    if np.any(means <= 0):
        raise DegenerateFit("window contains nonpositive means")
    if np.any(means <= 2.0 * errors):
        raise DegenerateFit("window contains means within two errors of zero")
    slope, intercept, r_squared, cov, _ = loglinear_fit(dists, means, errors)
    cov_lc_eta = np.array(
        [[cov[0, 0], -cov[0, 1]], [-cov[1, 0], cov[1, 1]]], dtype=float
    )
    return DecayFit(-slope, math.exp(intercept), r_squared, window, cov_lc_eta)


# ---------------------------------------------------------------------------
# A-priori bound scan
# ---------------------------------------------------------------------------

def default_apriori_energies(spec: ModelSpec, count: int = 25) -> tuple[float, ...]:
    """Grid spanning [-3 + eta_min, 3 + eta_max], the spectral hull."""
    lo, hi = spec.coupling_support
    return tuple(float(e) for e in np.linspace(-3.0 + lo, 3.0 + hi, count))


def _apriori_worker(task):
    (spec, volume, s, anchor, energies, seed, lo, hi) = task
    a, b = volume
    n_e = len(energies)
    values = np.zeros((hi - lo, 2 * n_e), dtype=float)
    flags = np.zeros(hi - lo, dtype=bool)
    for r in range(lo, hi):
        realization = sample_realization(spec, (a, b + 1), seed, r)
        row_vals = np.zeros(2 * n_e)
        for j, energy in enumerate(energies):
            try:
                row = discrete_green_solve(realization, (a, b), energy).row(anchor)
            except EigenvalueHit:
                flags[r - lo] = True
                break
            row_vals[2 * j] = abs(row[anchor - a]) ** s
            row_vals[2 * j + 1] = abs(row[anchor + 1 - a]) ** s
        else:
            values[r - lo] = row_vals
    return values, flags


def apriori_bound_scan(
    spec: ModelSpec,
    volume: tuple[int, int],
    s: float,
    energies,
    n_realizations: int,
    master_seed: int,
    workers: int = 1,
) -> AprioriScan:
    """Moment means at x = y and |x - y| = 1 across an energy grid.

    The interesting output is the maximum over the grid: boundedness uniform
    in the energy and the volume is the a-priori input to every decay
    argument, so the scan is rerun at a doubled volume for stability checks.
    """
    if spec.flavor is not Flavor.DISCRETE:
        raise FlavorMismatch("the a-priori scan probes the discrete resolvent")
    if not 0.0 < s <= 0.5:
        raise ValueError("s must lie in (0, 0.5]")
    if n_realizations < 20:
        raise InsufficientSamples("need at least 20 realizations")
    a, b = int(volume[0]), int(volume[1])
    anchor = centered_anchor((a, b), 1)
    energies = tuple(float(e) for e in energies)
    args = (spec, (a, b), float(s), anchor, energies, int(master_seed))
    values, flags = _run_indexed(_apriori_worker, args, n_realizations, workers)
    means, std_errors, _ = _estimate_columns(values, flags)
    return AprioriScan(
        float(s),
        (a, b),
        energies,
        tuple(float(v) for v in means[0::2]),
        tuple(float(v) for v in std_errors[0::2]),
        tuple(float(v) for v in means[1::2]),
        tuple(float(v) for v in std_errors[1::2]),
        int(flags.sum()),
        n_realizations,
        int(master_seed),
    )


# ---------------------------------------------------------------------------
# Eigenfunction correlator
# ---------------------------------------------------------------------------

def _correlator_worker(task):
    (spec, volume, e_cut, anchor, distances, seed, lo, hi) = task
    a, b = volume
    dists = np.asarray(distances, dtype=int)
    values = np.zeros((hi - lo, dists.size), dtype=float)
    flags = np.zeros(hi - lo, dtype=bool)
    for r in range(lo, hi):
        if spec.flavor is Flavor.DISCRETE:
            realization = sample_realization(spec, (a, b + 1), seed, r)
            eta = realization.couplings[: b - a + 1]
            evals, evecs = eigh_tridiagonal(eta, -np.ones(eta.size - 1))
            keep = evals <= e_cut
            if not np.any(keep):
                continue
            amp = np.abs(evecs[:, keep])
            q = amp[anchor - a] @ amp[dists + (anchor - a)].T
            values[r - lo] = q
        else:
            realization = sample_realization(spec, (a, b), seed, r)
            pairs = continuum_eigensystem_below(spec, realization, (a, b), e_cut)
            q = np.zeros(dists.size)
            for pair in pairs:
                nx = pair.cell_norm(anchor)
                q += nx * np.array(
                    [pair.cell_norm(anchor + int(d)) for d in dists]
                )
            values[r - lo] = q
    return values, flags


def correlator_curve(
    spec: ModelSpec,
    volume: tuple[int, int],
    energy_cutoff: float,
    distances,
    n_realizations: int,
    master_seed: int,
    workers: int = 1,
) -> CorrelatorCurve:
    """Disorder mean of Q(x, y) = sum over eigenpairs below the cutoff.

    Discrete: sum of |psi_n(x)| |psi_n(y)|; continuum: sum of the cell norms
    ||chi_x psi_n|| ||chi_y psi_n||.  Q dominates every normalized spectral
    smoothing of the propagator restricted below the cutoff, so its decay is
    the finite-volume certificate of dynamical localization.
    """
    a, b = int(volume[0]), int(volume[1])
    if b - a > 512:
        raise ValueError("correlator volumes are capped at 512 (dense eigensolve)")
    if n_realizations < 20:
        raise InsufficientSamples("need at least 20 realizations")
    distances = tuple(int(d) for d in distances)
    anchor = centered_anchor((a, b), max(distances))
    if anchor < a or anchor + max(distances) > b:
        raise ValueError("distance grid does not fit inside the volume")
    args = (spec, (a, b), float(energy_cutoff), anchor, distances, int(master_seed))
    values, flags = _run_indexed(_correlator_worker, args, n_realizations, workers)
    means, std_errors, _ = _estimate_columns(values, flags)
    return CorrelatorCurve(
        float(energy_cutoff),
        (a, b),
        anchor,
        distances,
        tuple(float(v) for v in means),
        tuple(float(v) for v in std_errors),
        n_realizations,
        int(master_seed),
    )
