"""Operator families, reproducible disorder sampling, and potential profiles.

A model is either a continuum operator

    H = -d^2/dx^2 + W + sum_n eta_n f(. - n)

with a 1-periodic piecewise-constant background W and a piecewise-constant
single-site bump f supported on [0, 1], or the discrete hopping operator

    (h u)(n) = -u(n+1) - u(n-1) + eta_n u(n)

on an integer interval.  The couplings eta_n are i.i.d. draws from a bounded,
compactly supported law.  Both W and f live on a uniform grid of
``subcells_per_unit`` cells per unit interval, so that every later propagation
step has an exact closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Union

import numpy as np

from .errors import ConfigError, FlavorMismatch, OutOfInterval

__all__ = [
    "Flavor",
    "Uniform",
    "PiecewiseConstantDensity",
    "CouplingDistribution",
    "ModelSpec",
    "Realization",
    "PotentialProfile",
    "default_continuum_spec",
    "default_discrete_spec",
    "coupling_stream",
    "sample_realization",
    "build_profile",
]


class Flavor(Enum):
    CONTINUUM = "continuum"
    DISCRETE = "discrete"


# ---------------------------------------------------------------------------
# Coupling distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Uniform:
    """Uniform law on [low, high].  ``low == high`` is the point mass."""

    low: float
    high: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ConfigError("uniform support must be finite")
        if self.low > self.high:
            raise ConfigError("uniform law needs low <= high")

    @property
    def support(self) -> tuple[float, float]:
        return (self.low, self.high)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        return self.low + np.asarray(u, dtype=float) * (self.high - self.low)

    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    def variance(self) -> float:
        return (self.high - self.low) ** 2 / 12.0


@dataclass(frozen=True)
class PiecewiseConstantDensity:
    """Bounded density that is constant between consecutive breakpoints.

    ``densities[i]`` is the value on [breakpoints[i], breakpoints[i+1]); the
    total mass must equal one to within 1e-12.
    """

    breakpoints: tuple[float, ...]
    densities: tuple[float, ...]

    def __post_init__(self) -> None:
        b = np.asarray(self.breakpoints, dtype=float)
        d = np.asarray(self.densities, dtype=float)
        if b.size != d.size + 1 or d.size == 0:
            raise ConfigError("need len(breakpoints) == len(densities) + 1 >= 2")
        if not np.all(np.isfinite(b)) or not np.all(np.isfinite(d)):
            raise ConfigError("density description must be finite")
        if np.any(np.diff(b) <= 0):
            raise ConfigError("breakpoints must be strictly increasing")
        if np.any(d < 0):
            raise ConfigError("density values must be nonnegative")
        mass = float(np.sum(d * np.diff(b)))
        if abs(mass - 1.0) > 1e-12:
            raise ConfigError(f"density integrates to {mass!r}, not 1")

    @property
    def support(self) -> tuple[float, float]:
        return (self.breakpoints[0], self.breakpoints[-1])

    def _cumulative(self) -> np.ndarray:
        b = np.asarray(self.breakpoints, dtype=float)
        d = np.asarray(self.densities, dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(d * np.diff(b))))
        cum[-1] = 1.0
        return cum

    def ppf(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        b = np.asarray(self.breakpoints, dtype=float)
        d = np.asarray(self.densities, dtype=float)
        cum = self._cumulative()
        seg = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, d.size - 1)
        # u == cum[seg] can land on a zero-density segment boundary; that case
        # contributes offset 0, so a unit denominator is safe.
        dens = np.where(d[seg] > 0, d[seg], 1.0)
        return b[seg] + (u - cum[seg]) / dens

    def mean(self) -> float:
        b = np.asarray(self.breakpoints, dtype=float)
        d = np.asarray(self.densities, dtype=float)
        return float(np.sum(d * (b[1:] ** 2 - b[:-1] ** 2) / 2.0))

    def variance(self) -> float:
        b = np.asarray(self.breakpoints, dtype=float)
        d = np.asarray(self.densities, dtype=float)
        second = float(np.sum(d * (b[1:] ** 3 - b[:-1] ** 3) / 3.0))
        return second - self.mean() ** 2


CouplingDistribution = Union[Uniform, PiecewiseConstantDensity]


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """One random operator family.

    For the continuum flavor, ``background`` and ``single_site`` hold the
    values of W and f on the m subcells of the unit interval; the discrete
    flavor carries neither.
    """

    flavor: Flavor
    coupling_dist: CouplingDistribution
    background: tuple[float, ...] = ()
    single_site: tuple[float, ...] = ()
    subcells_per_unit: int = 1

    def __post_init__(self) -> None:
        m = self.subcells_per_unit
        if m < 1:
            raise ConfigError("subcells_per_unit must be a positive integer")
        object.__setattr__(self, "background", tuple(float(v) for v in self.background))
        object.__setattr__(self, "single_site", tuple(float(v) for v in self.single_site))
        if self.flavor is Flavor.CONTINUUM:
            if len(self.background) != m:
                raise ConfigError("background needs exactly one value per subcell")
            if len(self.single_site) != m:
                raise ConfigError("single_site needs exactly one value per subcell")
            if any(v < 0 for v in self.single_site):
                raise ConfigError("single_site values must be nonnegative")
            if not any(v > 0 for v in self.single_site):
                raise ConfigError("single_site must be positive somewhere")
        else:
            if self.background or self.single_site:
                raise ConfigError("discrete flavor carries no background or single site")

    @property
    def coupling_support(self) -> tuple[float, float]:
        return self.coupling_dist.support

    @property
    def single_site_floor(self) -> float:
        """Smallest strictly positive value of f (continuum only)."""
        return min(v for v in self.single_site if v > 0)

    @property
    def single_site_cap(self) -> float:
        return max(self.single_site)

    # -- config round trip ---------------------------------------------------

    def to_config(self) -> dict:
        dist = self.coupling_dist
        if isinstance(dist, Uniform):
            coupling = {"type": "uniform", "low": dist.low, "high": dist.high}
        else:
            coupling = {
                "type": "piecewise",
                "breakpoints": list(dist.breakpoints),
                "densities": list(dist.densities),
            }
        cfg = {"flavor": self.flavor.value, "coupling": coupling}
        if self.flavor is Flavor.CONTINUUM:
            cfg["background"] = list(self.background)
            cfg["single_site"] = list(self.single_site)
            cfg["subcells_per_unit"] = self.subcells_per_unit
        return cfg

    @staticmethod
    def from_config(cfg: dict) -> "ModelSpec":
        try:
            flavor = Flavor(cfg["flavor"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad or missing model flavor: {exc}") from exc
        raw = cfg.get("coupling", {"type": "uniform", "low": 0.0, "high": 1.0})
        kind = raw.get("type")
        if kind == "uniform":
            dist: CouplingDistribution = Uniform(float(raw["low"]), float(raw["high"]))
        elif kind == "piecewise":
            dist = PiecewiseConstantDensity(
                tuple(float(v) for v in raw["breakpoints"]),
                tuple(float(v) for v in raw["densities"]),
            )
        else:
            raise ConfigError(f"unknown coupling type {kind!r}")
        if flavor is Flavor.DISCRETE:
            return ModelSpec(flavor=flavor, coupling_dist=dist)
        m = int(cfg.get("subcells_per_unit", 1))
        background = tuple(float(v) for v in cfg.get("background", [0.0] * m))
        single_site = tuple(float(v) for v in cfg.get("single_site", [1.0] * m))
        return ModelSpec(
            flavor=flavor,
            coupling_dist=dist,
            background=background,
            single_site=single_site,
            subcells_per_unit=m,
        )

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_config(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def from_json(path) -> "ModelSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return ModelSpec.from_config(json.load(fh))


def default_continuum_spec(coupling: CouplingDistribution | None = None) -> ModelSpec:
    """W = 0, f = indicator of [0, 1], uniform couplings on [0, 1].

    These defaults are artifact choices; any bounded density and any
    nonnegative piecewise-constant bump are accepted.
    """
    return ModelSpec(
        flavor=Flavor.CONTINUUM,
        coupling_dist=coupling or Uniform(0.0, 1.0),
        background=(0.0,),
        single_site=(1.0,),
        subcells_per_unit=1,
    )


def default_discrete_spec(coupling: CouplingDistribution | None = None) -> ModelSpec:
    return ModelSpec(
        flavor=Flavor.DISCRETE,
        coupling_dist=coupling or Uniform(0.0, 1.0),
    )


# ---------------------------------------------------------------------------
# Counter-based sampling
# ---------------------------------------------------------------------------

def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer applied elementwise to a uint64 array."""
    with np.errstate(over="ignore"):
        z = (z + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _site_uniforms(master_seed: int, index: int, sites: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) variates keyed by (master_seed, index, site).

    The stream value is h = mix(mix(mix(seed) ^ index) ^ site) with mix the
    SplitMix64 finalizer, mapped to a double via the top 53 bits.  The value
    at a site depends only on the key triple, so realizations with different
    indices are independent streams and overlapping intervals agree on shared
    sites.
    """
    seed = np.uint64(int(master_seed) & 0xFFFFFFFFFFFFFFFF)
    idx = np.uint64(int(index) & 0xFFFFFFFFFFFFFFFF)
    n = np.asarray(sites, dtype=np.int64).astype(np.uint64)
    h = _mix64(np.full(n.shape, seed, dtype=np.uint64))
    h = _mix64(h ^ idx)
    h = _mix64(h ^ n)
    return (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def coupling_stream(
    spec: ModelSpec, master_seed: int, index: int, sites: np.ndarray
) -> np.ndarray:
    """Couplings for the given sites, via the counter-based stream."""
    return spec.coupling_dist.ppf(_site_uniforms(master_seed, index, sites))


# ---------------------------------------------------------------------------
# Realizations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Realization:
    """One sampled disorder configuration on the integer interval [a, b)."""

    interval: tuple[int, int]
    couplings: np.ndarray
    seed_lineage: tuple[int, int]

    def __post_init__(self) -> None:
        a, b = self.interval
        if a >= b:
            raise ConfigError("realization interval must be nondegenerate")
        arr = np.asarray(self.couplings, dtype=float)
        if arr.shape != (b - a,):
            raise ConfigError("need one coupling per unit cell of the interval")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "couplings", arr)

    @property
    def start(self) -> int:
        return self.interval[0]

    @property
    def end(self) -> int:
        return self.interval[1]

    def coupling_at(self, n: int) -> float:
        a, b = self.interval
        if not a <= n < b:
            raise OutOfInterval(f"site {n} outside [{a}, {b})")
        return float(self.couplings[n - a])

    def with_coupling(self, n: int, value: float) -> "Realization":
        """Copy with one coupling replaced (used by derivative probes)."""
        a, b = self.interval
        if not a <= n < b:
            raise OutOfInterval(f"site {n} outside [{a}, {b})")
        arr = self.couplings.copy()
        arr[n - a] = value
        return Realization(self.interval, arr, self.seed_lineage)


def sample_realization(
    spec: ModelSpec, interval: tuple[int, int], master_seed: int, index: int
) -> Realization:
    """Draw i.i.d. couplings for every unit cell of the interval.

    Reproducible: the couplings are a pure function of
    (master_seed, index, site), bit for bit.
    """
    a, b = int(interval[0]), int(interval[1])
    if a >= b:
        raise ConfigError("interval must be nondegenerate")
    sites = np.arange(a, b, dtype=np.int64)
    couplings = coupling_stream(spec, master_seed, index, sites)
    return Realization((a, b), couplings, (int(master_seed), int(index)))


# ---------------------------------------------------------------------------
# Piecewise-constant potential profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialProfile:
    """Piecewise-constant q(x) = W(x) + V_omega(x) - E on [start, end].

    Piece lengths are integer counts of subcells of width 1/m, so the lengths
    sum to the interval length exactly.
    """

    start: int
    subcells_per_unit: int
    counts: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.counts) != len(self.values) or not self.counts:
            raise ConfigError("profile needs matching piece counts and values")
        if any(c <= 0 for c in self.counts):
            raise ConfigError("piece lengths must be positive")

    @property
    def total_subcells(self) -> int:
        return sum(self.counts)

    @property
    def end(self) -> float:
        return self.start + self.total_subcells / self.subcells_per_unit

    @property
    def length(self) -> float:
        return self.total_subcells / self.subcells_per_unit

    def min_value(self) -> float:
        return min(self.values)

    def max_value(self) -> float:
        return max(self.values)

    def shifted(self, denergy: float) -> "PotentialProfile":
        """Profile for q - denergy (absorbs an energy shift)."""
        return PotentialProfile(
            self.start,
            self.subcells_per_unit,
            self.counts,
            tuple(v - denergy for v in self.values),
        )

    def boundaries(self) -> np.ndarray:
        cum = np.concatenate(([0], np.cumsum(self.counts)))
        return self.start + cum / self.subcells_per_unit

    def value_at(self, x: float) -> float:
        """Right-continuous evaluation; the right endpoint takes the last piece."""
        bounds = self.boundaries()
        if x < bounds[0] - 1e-12 or x > bounds[-1] + 1e-12:
            raise OutOfInterval(f"{x} outside [{bounds[0]}, {bounds[-1]}]")
        i = int(np.searchsorted(bounds, x, side="right") - 1)
        i = min(max(i, 0), len(self.values) - 1)
        return self.values[i]

    def pieces(self, lo: float | None = None, hi: float | None = None) -> Iterator[tuple[float, float, float]]:
        """Yield (left_edge, length, value) clipped to [lo, hi]."""
        bounds = self.boundaries()
        lo = bounds[0] if lo is None else lo
        hi = bounds[-1] if hi is None else hi
        if lo < bounds[0] - 1e-9 or hi > bounds[-1] + 1e-9:
            raise OutOfInterval(f"[{lo}, {hi}] outside profile range")
        for i, value in enumerate(self.values):
            left = max(float(bounds[i]), lo)
            right = min(float(bounds[i + 1]), hi)
            if right - left > 1e-12:
                yield left, right - left, value

    def integrate_abs_one_plus(self, lo: float | None = None, hi: float | None = None) -> float:
        """Integral of |1 + q| over [lo, hi]; controls amplitude growth."""
        return sum(length * abs(1.0 + value) for _, length, value in self.pieces(lo, hi))

    def integrate_abs(self, lo: float | None = None, hi: float | None = None) -> float:
        return sum(length * abs(value) for _, length, value in self.pieces(lo, hi))


def build_profile(spec: ModelSpec, realization: Realization, energy: float) -> PotentialProfile:
    """Evaluate W + eta_n f(. - n) - E on the subcell grid of [a, b].

    At most one single-site bump is active at any point because f is
    supported on one unit cell, so each subcell value is a single sum with no
    accumulation across sites.  Adjacent equal values are merged.
    """
    if spec.flavor is not Flavor.CONTINUUM:
        raise FlavorMismatch("potential profiles exist for the continuum flavor only")
    a, b = realization.interval
    m = spec.subcells_per_unit
    counts: list[int] = []
    values: list[float] = []
    for n in range(a, b):
        eta = float(realization.couplings[n - a])
        for k in range(m):
            v = spec.background[k] + eta * spec.single_site[k] - energy
            if values and v == values[-1]:
                counts[-1] += 1
            else:
                counts.append(1)
                values.append(v)
    return PotentialProfile(a, m, tuple(counts), tuple(values))
