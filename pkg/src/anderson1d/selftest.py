"""Built-in invariant suite behind the ``selftest`` subcommand.

Each check is a fast, deterministic cross-validation of one structural
identity.  The CLI renders the results as a CSV and fails the run if any
check fails; the pytest suite covers the same ground (and more) at higher
sample counts.
"""

from __future__ import annotations

import math

import numpy as np

from . import green, lyapunov, model, moments, prufer, propagate


def _random_profile(rng) -> model.PotentialProfile:
    m = int(rng.integers(1, 5))
    cells = int(rng.integers(2, 5))
    values = tuple(float(v) for v in rng.uniform(-4.0, 4.0, size=m * cells))
    counts = (1,) * (m * cells)
    return model.PotentialProfile(0, m, counts, values)


def check_unimodularity(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(40):
        prof = _random_profile(rng)
        t = propagate.transfer(prof, 0.0, prof.end)
        worst = max(worst, abs(t.det_residual()))
    return worst < 1e-9, f"max |det - 1| = {worst:.2e}"


def check_composition(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(25):
        prof = _random_profile(rng)
        mid = 0.5 * prof.end
        full = propagate.transfer(prof, 0.0, prof.end)
        comp = propagate.transfer(prof, mid, prof.end).matmul(
            propagate.transfer(prof, 0.0, mid)
        )
        scale = math.exp(full.log_scale)
        diff = np.abs(full.entries * scale - comp.entries * math.exp(comp.log_scale)).max()
        worst = max(worst, diff / max(np.abs(full.entries * scale).max(), 1e-30))
    return worst < 1e-8, f"max composition defect = {worst:.2e}"


def check_forward_backward(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(25):
        prof = _random_profile(rng)
        fwd = propagate.transfer(prof, 0.0, prof.end)
        bwd = propagate.transfer(prof, prof.end, 0.0)
        prod = bwd.matmul(fwd)
        ident = prod.entries * math.exp(prod.log_scale)
        worst = max(worst, np.abs(ident - np.eye(2)).max())
    return worst < 1e-8, f"max |T_back T_fwd - 1| = {worst:.2e}"


def check_growth_bounds(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(40):
        prof = _random_profile(rng)
        theta = float(rng.uniform(0, 2 * math.pi))
        budget = prof.integrate_abs_one_plus()
        t = propagate.transfer(prof, 0.0, prof.end)
        _, gain = propagate.apply(t, propagate.State2(math.sin(theta), math.cos(theta)))
        worst = max(worst, abs(2.0 * gain) - budget)
    return worst <= 1e-9, f"max excess over the L1 budget = {worst:.2e}"


def check_prufer_round_trip(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(25):
        prof = _random_profile(rng)
        theta = float(rng.uniform(0, 2 * math.pi))
        st = prufer.evolve_prufer(prof, 0.0, prof.end, theta)
        t = propagate.transfer(prof, 0.0, prof.end)
        u, du = t.column_action(math.sin(theta), math.cos(theta))
        norm = math.hypot(u, du)
        worst = max(worst, abs(st.log_amplitude - (t.log_scale + math.log(norm))))
        phase_gap = (st.phase - math.atan2(u, du)) % (2 * math.pi)
        worst = max(worst, min(phase_gap, 2 * math.pi - phase_gap))
    return worst < 1e-8, f"max round-trip defect = {worst:.2e}"


def check_phase_splitting(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(20):
        prof = _random_profile(rng)
        if prof.end < 2.0:
            continue
        worst = max(worst, prufer.phase_splitting_residual(prof, 0.5, prof.end - 0.5))
    return worst < 1e-7, f"max splitting residual = {worst:.2e}"


def check_energy_derivative(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(15):
        prof = _random_profile(rng)
        theta = float(rng.uniform(0, 2 * math.pi))
        d = prufer.phase_energy_derivative(prof, 0.0, prof.end, theta)
        h = 1e-5
        pp = prufer.evolve_prufer(prof, 0.0, prof.end, theta, energy=h).phase
        pm = prufer.evolve_prufer(prof, 0.0, prof.end, theta, energy=-h).phase
        worst = max(worst, abs(d - (pp - pm) / (2 * h)))
    return worst < 1e-5, f"max derivative defect = {worst:.2e}"


def check_discrete_green_routes(rng) -> tuple[bool, str]:
    spec = model.default_discrete_spec(model.Uniform(0.0, 2.0))
    worst = 0.0
    checked = 0
    for trial in range(30):
        length = int(rng.integers(6, 30))
        realization = model.sample_realization(spec, (0, length + 1), 2024, trial)
        energy = float(rng.uniform(-2.0, 4.0))
        try:
            solver = green.discrete_green_solve(realization, (0, length), energy)
        except green.EigenvalueHit:
            continue
        x = int(rng.integers(0, length - 1))
        y = int(rng.integers(x + 1, length + 1))
        direct = solver.entry(x, y)
        kre = green.krein_entry(realization, (0, length), energy, x, y)
        sol = green.discrete_green_solution_form(realization, (x, length), energy, y)
        ident = (1.0 + (solver.entry(x, x - 1) if x > 0 else 0.0)) * sol.value
        scale = max(abs(direct), 1e-300)
        worst = max(worst, abs(direct - kre) / scale, abs(direct - ident) / scale)
        checked += 1
    return worst < 1e-8, f"{checked} instances, max route spread = {worst:.2e}"


def check_wronskian_constancy(rng) -> tuple[bool, str]:
    spec = model.default_continuum_spec()
    ok = True
    for trial in range(10):
        realization = model.sample_realization(spec, (0, 6), 99, trial)
        data = green.continuum_green_data(spec, realization, (0, 6), 1.7)
        ok = ok and data.status is green.GreenStatus.OK
    return ok, "interior Wronskian spread within 1e-8 on 10 instances"


def check_sampling_determinism(rng) -> tuple[bool, str]:
    spec = model.default_discrete_spec()
    r1 = model.sample_realization(spec, (-5, 30), 7, 3)
    r2 = model.sample_realization(spec, (-5, 30), 7, 3)
    r3 = model.sample_realization(spec, (10, 50), 7, 3)
    same = bool(np.array_equal(r1.couplings, r2.couplings))
    overlap = bool(np.array_equal(r1.couplings[15:], r3.couplings[:20]))
    return same and overlap, "bitwise reproducible, overlap-consistent"


def check_fit_recovery(rng) -> tuple[bool, str]:
    dists = tuple(range(2, 22, 3))

    class Curve:
        distances = dists
        means = tuple(2.0 * math.exp(-0.3 * d) for d in dists)
        std_errors = (0.0,) * len(dists)

    fit = moments.fit_decay(Curve())
    err = max(abs(fit.c_hat - 2.0), abs(fit.eta_hat - 0.3))
    return err < 1e-10, f"recovered (C, eta) to {err:.2e}"


def check_floquet_free(rng) -> tuple[bool, str]:
    spec = model.default_continuum_spec()
    d0 = lyapunov.floquet(spec, math.pi**2 / 4.0).discriminant
    dgap = lyapunov.floquet(spec, -1.0).discriminant
    err = max(abs(d0), abs(dgap - 2.0 * math.cosh(1.0)))
    return err < 1e-9, f"free discriminants reproduced to {err:.2e}"


ALL_CHECKS = [
    ("unimodularity", check_unimodularity),
    ("transfer_composition", check_composition),
    ("forward_backward_identity", check_forward_backward),
    ("amplitude_growth_bounds", check_growth_bounds),
    ("prufer_round_trip", check_prufer_round_trip),
    ("phase_splitting", check_phase_splitting),
    ("phase_energy_derivative", check_energy_derivative),
    ("discrete_green_routes", check_discrete_green_routes),
    ("continuum_wronskian_constancy", check_wronskian_constancy),
    ("sampling_determinism", check_sampling_determinism),
    ("decay_fit_recovery", check_fit_recovery),
    ("floquet_free_forms", check_floquet_free),
]


def run_all(seed: int = 0) -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in ALL_CHECKS:
        rng = np.random.default_rng(seed ^ hash(name) & 0xFFFFFFFF)
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
