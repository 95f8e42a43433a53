import math

import numpy as np
import pytest

from _support import budgeted_cell, random_profile, rk4_system_propagator
from anderson1d import model, propagate
from anderson1d.errors import OutOfInterval, ZeroState
from anderson1d.prufer import cell_l2_masses


def full_matrix(m: propagate.ScaledMatrix2) -> np.ndarray:
    return m.entries * math.exp(m.log_scale)


class TestCellPropagator:
    def test_free_cell_is_a_shear(self):
        m = propagate.cell_propagator(0.0, 1.0)
        assert np.array_equal(full_matrix(m), [[1.0, 1.0], [0.0, 1.0]])

    def test_half_period_rotation(self):
        m = full_matrix(propagate.cell_propagator(-math.pi**2, 1.0))
        assert np.allclose(m, [[-1.0, 0.0], [0.0, -1.0]], atol=1e-12)

    @pytest.mark.parametrize("q", [1.0, -3.7, 0.004, -0.004, 9.0, -25.0, 1e-9])
    def test_matches_rk4_oracle(self, q):
        mine = full_matrix(propagate.cell_propagator(q, 1.0))
        oracle = rk4_system_propagator(q, 1.0)
        assert np.abs(mine - oracle).max() < 1e-6

    def test_hyperbolic_unit_cell_values(self):
        m = full_matrix(propagate.cell_propagator(1.0, 1.0))
        assert abs(m[0, 0] - 1.5430806) < 1e-6
        assert abs(m[0, 1] - 1.1752012) < 1e-6

    def test_strongly_hyperbolic_cell_does_not_overflow(self):
        m = propagate.cell_propagator(16.0, 30.0)
        assert np.isfinite(m.entries).all()
        assert 0.5 <= m.frobenius() <= 2.0
        assert m.log_scale > 100.0


class TestDiscreteStep:
    def test_zero_energy_zero_coupling(self):
        m = full_matrix(propagate.discrete_step(0.0, 0.0))
        assert np.array_equal(m, [[0.0, -1.0], [1.0, 0.0]])

    @pytest.mark.parametrize("eta,energy", [(0.0, 0.0), (2.0, 0.5), (-3.0, 1.7), (40.0, -3.0)])
    def test_unimodular(self, eta, energy):
        m = propagate.discrete_step(eta, energy)
        assert abs(m.det_residual()) < 1e-12

    def test_recursion_action(self):
        m = propagate.discrete_step(2.0, 0.5)
        state, gain = propagate.apply(m, propagate.State2(1.0, 0.0))
        vec = np.array([state.u, state.du]) * math.exp(gain)
        assert np.allclose(vec, [1.5, 1.0], rtol=1e-14)


class TestTransfer:
    def test_empty_range_is_identity(self):
        prof = model.PotentialProfile(0, 1, (3,), (0.5,))
        t = propagate.transfer(prof, 1.0, 1.0)
        assert np.array_equal(full_matrix(t), np.eye(2))
        assert t.log_scale == 0.0

    def test_free_quarter_period_trace(self):
        prof = model.PotentialProfile(0, 1, (1,), (-math.pi**2 / 4.0,))
        assert abs(propagate.transfer(prof, 0, 1).trace()) < 1e-12

    def test_product_matches_merged_profile(self):
        # ten cells of the same value against a single merged piece
        prof_split = model.PotentialProfile(0, 1, (1,) * 10, (0.8,) * 10)
        prof_merged = model.PotentialProfile(0, 1, (10,), (0.8,))
        a = full_matrix(propagate.transfer(prof_split, 0, 10))
        b = full_matrix(propagate.transfer(prof_merged, 0, 10))
        assert np.abs(a - b).max() / np.abs(b).max() < 1e-10

    def test_composition_property(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            prof = random_profile(rng)
            end = prof.end
            mid = float(rng.uniform(0.3, end - 0.3))
            whole = propagate.transfer(prof, 0.0, end)
            comp = propagate.transfer(prof, mid, end) @ propagate.transfer(prof, 0.0, mid)
            ref = full_matrix(whole)
            assert np.abs(full_matrix(comp) - ref).max() <= 1e-8 * np.abs(ref).max()

    def test_forward_backward_identity(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            prof = random_profile(rng)
            fwd = propagate.transfer(prof, 0.0, prof.end)
            bwd = propagate.transfer(prof, prof.end, 0.0)
            assert np.abs(full_matrix(bwd @ fwd) - np.eye(2)).max() < 1e-8

    def test_discrete_transfer_and_backward(self):
        spec = model.default_discrete_spec()
        r = model.sample_realization(spec, (0, 20), 3, 0)
        fwd = propagate.transfer(r, 2, 15, energy=0.5)
        bwd = propagate.transfer(r, 15, 2, energy=0.5)
        assert np.abs(full_matrix(bwd @ fwd) - np.eye(2)).max() < 1e-8

    def test_out_of_interval(self):
        prof = model.PotentialProfile(0, 1, (2,), (1.0,))
        with pytest.raises(OutOfInterval):
            propagate.transfer(prof, 0.0, 3.0)
        spec = model.default_discrete_spec()
        r = model.sample_realization(spec, (0, 5), 0, 0)
        with pytest.raises(OutOfInterval):
            propagate.transfer(r, 0, 9, energy=0.0)

    def test_unimodularity_preserved_at_moderate_growth(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            prof = random_profile(rng, max_cells=3, q_scale=3.0)
            t = propagate.transfer(prof, 0.0, prof.end)
            assert abs(t.det_residual()) < 1e-9

    def test_entries_stay_in_frobenius_bounds(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            prof = random_profile(rng)
            theta = 0.0
            acc = propagate.ScaledMatrix2.identity()
            for _, length, q in prof.pieces():
                acc = propagate.cell_propagator(q, length) @ acc
                assert 0.5 <= acc.frobenius() <= 2.0

    def test_renormalization_bounds_do_not_change_the_product(self):
        rng = np.random.default_rng(13)
        prof = random_profile(rng, max_cells=4)
        t1 = propagate.transfer(prof, 0.0, prof.end, bounds=(0.5, 2.0))
        t2 = propagate.transfer(prof, 0.0, prof.end, bounds=(0.25, 4.0))
        assert np.abs(full_matrix(t1) - full_matrix(t2)).max() < 1e-10 * max(
            1.0, np.abs(full_matrix(t1)).max()
        )


class TestApply:
    def test_identity_gain_zero(self):
        state, gain = propagate.apply(
            propagate.ScaledMatrix2.identity(), propagate.State2(1.0, 0.0)
        )
        assert (state.u, state.du, gain) == (1.0, 0.0, 0.0)

    def test_diagonal_gain(self):
        m = propagate.ScaledMatrix2(2.0, 0.0, 0.0, 0.5, 0.0)
        state, gain = propagate.apply(m, propagate.State2(1.0, 0.0))
        assert (state.u, state.du) == (1.0, 0.0)
        assert abs(gain - math.log(2.0)) < 1e-15

    def test_zero_state_rejected(self):
        with pytest.raises(ZeroState):
            propagate.apply(propagate.ScaledMatrix2.identity(), propagate.State2(0.0, 0.0))

    def test_gain_matches_extended_precision_product(self):
        rng = np.random.default_rng(3)
        prof = random_profile(rng, max_cells=4, q_scale=3.0)
        pieces = list(prof.pieces())
        # plain longdouble product of raw closed-form cells, no rescaling
        acc = np.eye(2, dtype=np.longdouble)
        for _, length, q in pieces:
            cell = propagate.cell_propagator(q, length)
            acc = (cell.entries.astype(np.longdouble) * np.exp(np.longdouble(cell.log_scale))) @ acc
        want = np.log(float(np.hypot(*(acc @ np.array([0.0, 1.0], dtype=np.longdouble)))))
        t = propagate.transfer(prof, 0.0, prof.end)
        _, gain = propagate.apply(t, propagate.State2(0.0, 1.0))
        assert abs(gain - want) < 1e-9 * max(1.0, abs(want))


class TestGrowthBounds:
    def test_amplitude_growth_within_l1_budget(self):
        # squared state norm ratio is bounded by exp of the integral of |1+q|
        rng = np.random.default_rng(101)
        for _ in range(200):
            prof = random_profile(rng)
            theta = float(rng.uniform(0, 2 * math.pi))
            budget = prof.integrate_abs_one_plus()
            t = propagate.transfer(prof, 0.0, prof.end)
            _, gain = propagate.apply(
                t, propagate.State2(math.sin(theta), math.cos(theta))
            )
            assert 2.0 * gain <= budget + 1e-9
            assert 2.0 * gain >= -budget - 1e-9


class TestMassEnvelope:
    def test_unit_cell_mass_respects_the_table(self):
        rng = np.random.default_rng(555)
        for budget in (1.0, 4.0, 16.0):
            floor = propagate.mass_lower_envelope(budget)
            for _ in range(300):
                prof, theta = budgeted_cell(rng, budget)
                _, masses = cell_l2_masses(prof, 0.0, 1.0, theta)
                assert math.exp(masses[0]) >= floor

    def test_envelope_is_monotone(self):
        values = [propagate.mass_lower_envelope(m) for m in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)]
        assert values == sorted(values, reverse=True)
        with pytest.raises(ValueError):
            propagate.mass_lower_envelope(64.0)


class TestPieceL2:
    def test_sine_arch(self):
        got = propagate.piece_l2(-1.0, math.pi / 2.0, 0.0, 1.0)
        assert abs(got - math.pi / 4.0) < 1e-14

    def test_cosh_cell(self):
        got = propagate.piece_l2(1.0, 1.0, 1.0, 0.0)
        assert abs(got - (0.5 + math.sinh(2.0) / 4.0)) < 1e-14

    def test_continuous_through_zero(self):
        base = propagate.piece_l2(0.0, 1.0, 0.3, 0.7)
        for q in (1e-13, -1e-13):
            assert abs(propagate.piece_l2(q, 1.0, 0.3, 0.7) - base) < 1e-12

    @pytest.mark.parametrize("q", [-3.7, 2.4, 1e-10, -1e-5, 0.015, -0.015, 25.0])
    def test_ordered_cross_against_quadrature(self, q):
        from scipy import integrate as sint

        def u(t, u0, du0):
            if q > 0:
                k = math.sqrt(q)
                return u0 * math.cosh(k * t) + du0 * math.sinh(k * t) / k
            if q < 0:
                k = math.sqrt(-q)
                return u0 * math.cos(k * t) + du0 * math.sin(k * t) / k
            return u0 + du0 * t

        got = propagate.piece_l2_ordered_cross(q, 0.8, 0.4, -1.1, 0.9, 0.2)
        want, _ = sint.dblquad(
            lambda s, t: u(s, 0.4, -1.1) ** 2 * u(t, 0.9, 0.2) ** 2,
            0.0,
            0.8,
            0.0,
            lambda t: t,
            epsabs=1e-13,
            epsrel=1e-12,
        )
        assert abs(got - want) <= 2e-8 * abs(want)
