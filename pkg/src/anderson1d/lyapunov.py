"""Floquet discriminant analysis and Lyapunov-type growth estimators.

The discriminant D(E) of the periodic background classifies energies into
bands (|D| < 2) and gaps (|D| > 2); its matrix eigenvalues are the Floquet
multipliers.  The Lyapunov exponent is estimated as the ergodic average of
log norm gains of a single long product of i.i.d. cell propagators, with
batch-means error bars.  Inverse-moment decay of transfer norms over disorder
is the quantitative fingerprint of non-compact, strongly irreducible products
and is estimated by direct Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FlavorMismatch
from .fitting import loglinear_fit
from .model import Flavor, ModelSpec, coupling_stream
from .propagate import (
    DEFAULT_RENORM_BOUNDS,
    ScaledMatrix2,
    State2,
    apply,
    cell_propagator,
    discrete_step,
)

__all__ = [
    "SpectralClass",
    "FloquetData",
    "floquet",
    "LyapunovEstimate",
    "lyapunov_estimate",
    "InverseMomentTable",
    "furstenberg_inverse_moment",
]

_SPECIAL_TOL = 1e-9


class SpectralClass(Enum):
    BAND = "band"
    GAP = "gap"
    EDGE = "edge"
    SPECIAL = "special"


@dataclass(frozen=True)
class FloquetData:
    """Discriminant data of the period-one background at one energy."""

    energy: float
    discriminant: float
    classification: SpectralClass
    multipliers: tuple[complex, complex]


def _classify(d: float) -> SpectralClass:
    # D in {-2, 0, 2} marks quasi-periodic eigenvalues of the background
    # (anti-periodic, quarter-period, periodic); these take precedence.
    if min(abs(d), abs(d - 2.0), abs(d + 2.0)) <= _SPECIAL_TOL:
        return SpectralClass.SPECIAL
    if abs(d) < 2.0:
        return SpectralClass.BAND
    if abs(d) > 2.0:
        return SpectralClass.GAP
    return SpectralClass.EDGE


def unit_cell_matrices(
    spec: ModelSpec,
    energy: float,
    eta: float,
    bounds: tuple[float, float] = DEFAULT_RENORM_BOUNDS,
) -> list[ScaledMatrix2]:
    """Subcell propagators of one unit cell at fixed coupling, left to right."""
    if spec.flavor is Flavor.DISCRETE:
        return [discrete_step(eta, energy, bounds)]
    m = spec.subcells_per_unit
    h = 1.0 / m
    return [
        cell_propagator(spec.background[k] + eta * spec.single_site[k] - energy, h, bounds)
        for k in range(m)
    ]


def floquet(spec: ModelSpec, energy: float, coupling: float = 0.0) -> FloquetData:
    """Discriminant and Floquet multipliers of the one-period transfer matrix.

    ``coupling`` fills every unit cell with the same value, turning the model
    into the periodic operator whose band structure is being probed.
    """
    if spec.flavor is not Flavor.CONTINUUM:
        raise FlavorMismatch("Floquet analysis applies to the continuum flavor")
    acc = ScaledMatrix2.identity()
    for mat in unit_cell_matrices(spec, energy, coupling):
        acc = mat.matmul(acc)
    d = acc.trace()
    if abs(d) < 2.0:
        rho = complex(d / 2.0, math.sqrt(max(1.0 - d * d / 4.0, 0.0)))
        pair = (rho, rho.conjugate())
    else:
        root = math.sqrt(max(d * d / 4.0 - 1.0, 0.0))
        rho_mag = abs(d) / 2.0 + root
        rho = complex(math.copysign(rho_mag, d), 0.0)
        pair = (rho, 1.0 / rho)
    return FloquetData(energy, d, _classify(d), pair)


@dataclass(frozen=True)
class LyapunovEstimate:
    """Ergodic-average growth rate with batch-means error."""

    energy: float
    gamma: float
    std_error: float
    steps: int
    master_seed: int
    batch_size: int


def lyapunov_estimate(
    spec: ModelSpec,
    energy: float,
    n_steps: int,
    master_seed: int,
    batch_size: int = 100,
    bounds: tuple[float, float] = DEFAULT_RENORM_BOUNDS,
    burn_in: int = 0,
) -> LyapunovEstimate:
    """Lyapunov exponent per unit length from one long disordered product.

    The direction is renormalized every step and the log gains are averaged;
    the standard error comes from means over consecutive batches (default
    100 steps).  Couplings are drawn from the stream at realization index 0,
    so the estimate is a pure function of (spec, energy, n_steps, seed).

    ``burn_in`` steps are propagated but excluded from the average; this
    removes the O(1/n) direction-alignment transient, which matters when
    comparing against exact deterministic rates.
    """
    if n_steps < 1000:
        raise ValueError("need at least 1000 steps for a batch-means error")
    n_batches = n_steps // batch_size
    steps = n_batches * batch_size
    etas = coupling_stream(
        spec, master_seed, 0, np.arange(burn_in + steps, dtype=np.int64)
    )
    state = State2(1.0, 0.0)
    gains = np.empty(steps, dtype=float)
    for i in range(burn_in + steps):
        total = 0.0
        for mat in unit_cell_matrices(spec, energy, float(etas[i]), bounds):
            state, g = apply(mat, state)
            total += g
        if i >= burn_in:
            gains[i - burn_in] = total
    gamma = float(gains.mean())
    batch_means = gains.reshape(n_batches, batch_size).mean(axis=1)
    std_error = float(batch_means.std(ddof=1) / math.sqrt(n_batches))
    return LyapunovEstimate(energy, gamma, std_error, steps, int(master_seed), batch_size)


@dataclass(frozen=True)
class InverseMomentTable:
    """Monte Carlo decay table of E ||T(n, 0, E) x||^{-delta} over n."""

    energy: float
    delta: float
    lengths: tuple[int, ...]
    means: tuple[float, ...]
    std_errors: tuple[float, ...]
    alpha_hat: float
    n_realizations: int
    master_seed: int
    start_direction: tuple[float, float]


def furstenberg_inverse_moment(
    spec: ModelSpec,
    energy: float,
    delta: float,
    lengths,
    n_realizations: int,
    master_seed: int,
    direction: tuple[float, float] = (1.0, 0.0),
) -> InverseMomentTable:
    """Inverse fractional moments of transfer norms over fresh disorder.

    For each realization the unit start direction is pushed through n cells
    and exp(-delta * log||T x||) is recorded on the length grid.  The fitted
    log-linear slope alpha_hat is reported alongside the raw table.
    """
    if not 0.0 < delta <= 0.2:
        raise ValueError("delta must lie in (0, 0.2]")
    lengths = tuple(int(n) for n in lengths)
    if not lengths or any(n <= 0 for n in lengths) or sorted(lengths) != list(lengths):
        raise ValueError("lengths must be a positive increasing grid")
    norm0 = math.hypot(*direction)
    if norm0 == 0.0:
        raise ValueError("start direction must be a unit vector")
    x0 = State2(direction[0] / norm0, direction[1] / norm0)
    n_max = lengths[-1]
    marks = {n: i for i, n in enumerate(lengths)}
    values = np.empty((n_realizations, len(lengths)), dtype=float)
    for r in range(n_realizations):
        etas = coupling_stream(spec, master_seed, r, np.arange(n_max, dtype=np.int64))
        state = x0
        log_norm = 0.0
        for n in range(1, n_max + 1):
            for mat in unit_cell_matrices(spec, energy, float(etas[n - 1])):
                state, g = apply(mat, state)
                log_norm += g
            idx = marks.get(n)
            if idx is not None:
                values[r, idx] = math.exp(-delta * log_norm)
    means = values.mean(axis=0)
    if n_realizations > 1:
        std_errors = values.std(axis=0, ddof=1) / math.sqrt(n_realizations)
    else:
        std_errors = np.zeros_like(means)
    slope, _, _, _, _ = loglinear_fit(np.array(lengths, float), means, std_errors)
    return InverseMomentTable(
        energy,
        delta,
        lengths,
        tuple(float(v) for v in means),
        tuple(float(v) for v in std_errors),
        -slope,
        n_realizations,
        int(master_seed),
        (x0.u, x0.du),
    )
