import math

import numpy as np
import pytest

from anderson1d import model
from anderson1d.errors import ConfigError, FlavorMismatch


def test_degenerate_uniform_gives_zero_couplings():
    spec = model.default_discrete_spec(model.Uniform(0.0, 0.0))
    r = model.sample_realization(spec, (0, 50), 123, 0)
    assert np.all(r.couplings == 0.0)


def test_same_lineage_reproduces_bit_for_bit():
    spec = model.default_discrete_spec()
    r1 = model.sample_realization(spec, (-7, 33), 99, 4)
    r2 = model.sample_realization(spec, (-7, 33), 99, 4)
    assert np.array_equal(r1.couplings, r2.couplings)


def test_uniform_law_moments():
    spec = model.default_discrete_spec(model.Uniform(0.0, 1.0))
    r = model.sample_realization(spec, (0, 100000), 2024, 0)
    assert abs(r.couplings.mean() - 0.5) < 0.01
    assert abs(r.couplings.var() - 1.0 / 12.0) < 0.01


def test_piecewise_density_moments():
    # density 1.5 on [0, 0.5), 0.5 on [0.5, 1); mean and variance computed
    # from the closed-form first and second moments of the density
    dist = model.PiecewiseConstantDensity((0.0, 0.5, 1.0), (1.5, 0.5))
    spec = model.default_discrete_spec(dist)
    mean = dist.mean()
    var = dist.variance()
    assert abs(mean - (1.5 * 0.125 + 0.5 * 0.375)) < 1e-15
    r = model.sample_realization(spec, (0, 100000), 7, 0)
    assert abs(r.couplings.mean() - mean) < 0.01
    assert abs(r.couplings.var() - var) < 0.01
    assert r.couplings.min() >= 0.0 and r.couplings.max() <= 1.0


def test_piecewise_density_must_normalize():
    with pytest.raises(ConfigError):
        model.PiecewiseConstantDensity((0.0, 1.0), (0.9,))


def test_single_site_must_be_nonnegative_and_somewhere_positive():
    with pytest.raises(ConfigError):
        model.ModelSpec(
            model.Flavor.CONTINUUM, model.Uniform(0, 1), (0.0,), (-1.0,), 1
        )
    with pytest.raises(ConfigError):
        model.ModelSpec(
            model.Flavor.CONTINUUM, model.Uniform(0, 1), (0.0, 0.0), (0.0, 0.0), 2
        )


def test_overlapping_intervals_share_sites():
    spec = model.default_discrete_spec()
    wide = model.sample_realization(spec, (-10, 40), 5, 9)
    narrow = model.sample_realization(spec, (3, 21), 5, 9)
    assert np.array_equal(wide.couplings[13:31], narrow.couplings)


def test_distinct_indices_are_distinct_streams():
    spec = model.default_discrete_spec()
    r0 = model.sample_realization(spec, (0, 30), 5, 0)
    r1 = model.sample_realization(spec, (0, 30), 5, 1)
    assert not np.array_equal(r0.couplings, r1.couplings)


def test_couplings_stay_in_support():
    dist = model.Uniform(-0.25, 1.75)
    spec = model.default_discrete_spec(dist)
    r = model.sample_realization(spec, (0, 10000), 11, 2)
    assert r.couplings.min() >= dist.low
    assert r.couplings.max() <= dist.high


def test_build_profile_trivial_cases():
    spec = model.ModelSpec(
        model.Flavor.CONTINUUM, model.Uniform(0.0, 0.0), (0.0,), (1.0,), 1
    )
    r = model.sample_realization(spec, (0, 5), 0, 0)
    prof = model.build_profile(spec, r, 2.0)
    assert prof.values == (-2.0,)
    assert prof.total_subcells == 5

    spec2 = model.ModelSpec(
        model.Flavor.CONTINUUM, model.Uniform(3.0, 3.0), (1.0,), (1.0,), 1
    )
    r2 = model.sample_realization(spec2, (0, 1), 0, 0)
    prof2 = model.build_profile(spec2, r2, 0.0)
    assert prof2.values == (4.0,)


def test_profile_matches_pointwise_evaluation():
    spec = model.ModelSpec(
        model.Flavor.CONTINUUM,
        model.Uniform(0.0, 2.0),
        (0.3, -1.0, 0.0, 2.5),
        (0.0, 1.5, 0.25, 0.0),
        4,
    )
    r = model.sample_realization(spec, (-2, 3), 17, 1)
    energy = 0.75
    prof = model.build_profile(spec, r, energy)
    for n in range(-2, 3):
        eta = r.coupling_at(n)
        for k in range(4):
            x = n + (k + 0.5) / 4.0
            want = spec.background[k] + eta * spec.single_site[k] - energy
            assert prof.value_at(x) == want


def test_profile_lengths_are_exact():
    spec = model.ModelSpec(
        model.Flavor.CONTINUUM, model.Uniform(0.0, 1.0), (0.0, 1.0, 0.0), (1.0, 0.5, 0.25), 3
    )
    r = model.sample_realization(spec, (0, 7), 3, 0)
    prof = model.build_profile(spec, r, 0.3)
    assert prof.total_subcells == 7 * 3
    assert all(c >= 1 for c in prof.counts)


def test_build_profile_rejects_discrete():
    spec = model.default_discrete_spec()
    r = model.sample_realization(spec, (0, 4), 0, 0)
    with pytest.raises(FlavorMismatch):
        model.build_profile(spec, r, 0.0)


def test_spec_config_round_trip(tmp_path):
    spec = model.ModelSpec(
        model.Flavor.CONTINUUM,
        model.PiecewiseConstantDensity((0.0, 0.25, 1.0), (2.0, 2.0 / 3.0)),
        (0.5, -0.5),
        (1.0, 0.0),
        2,
    )
    path = tmp_path / "model.json"
    spec.to_json(path)
    assert model.ModelSpec.from_json(path) == spec

    dspec = model.default_discrete_spec()
    assert model.ModelSpec.from_config(dspec.to_config()) == dspec


def test_with_coupling_replaces_one_site():
    spec = model.default_discrete_spec()
    r = model.sample_realization(spec, (0, 10), 1, 0)
    r2 = r.with_coupling(4, 9.0)
    assert r2.coupling_at(4) == 9.0
    assert r.coupling_at(4) != 9.0
    mask = np.arange(10) != 4
    assert np.array_equal(r2.couplings[mask], r.couplings[mask])
