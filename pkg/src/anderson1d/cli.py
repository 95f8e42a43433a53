"""Batch experiment runner.

Subcommands parse one JSON config file, run the requested estimator over a
worker pool, and write ``<name>.csv`` (plus ``<name>.fit.csv`` where a decay
fit applies), ``<name>.png``, and ``<name>.manifest.json`` into the output
directory.  Standard output carries exactly one machine-readable JSON
summary; progress and diagnostics go to standard error.  For a fixed config
and master seed all numeric outputs are byte-identical regardless of the
worker count.

Config schema (defaults shown by ``--print-config``)::

    {
      "model": {
        "flavor": "discrete" | "continuum",
        "coupling": {"type": "uniform", "low": 0.0, "high": 1.0}
                    | {"type": "piecewise", "breakpoints": [...], "densities": [...]},
        "background": [...],        # continuum only, one value per subcell
        "single_site": [...],       # continuum only
        "subcells_per_unit": 1
      },
      "seed": 1, "workers": 1, "out": "results", "plot": true,
      "<subcommand>": { ... }       # per-subcommand parameters
    }

Grids are either explicit lists or {"start", "stop", "count"} (energies) /
{"start", "stop", "step"} (integer distances, stop inclusive).
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import lyapunov as lyap
from . import moments as mom
from . import report, selftest
from .errors import (
    Anderson1dError,
    ConfigError,
    DegenerateFit,
    InsufficientSamples,
)
from .green import (
    continuum_green,
    discrete_green_solution_form,
    discrete_green_solve,
    hs_block_norm,
    krein_entry,
)
from .model import Flavor, ModelSpec, sample_realization

SUBCOMMANDS = (
    "lyapunov",
    "floquet",
    "moments",
    "apriori",
    "correlator",
    "green-probe",
    "selftest",
)

_DEFAULTS: dict = {
    "model": {
        "flavor": "discrete",
        "coupling": {"type": "uniform", "low": 0.0, "high": 1.0},
    },
    "seed": 1,
    "workers": 1,
    "out": "results",
    "plot": True,
    "lyapunov": {
        "energies": {"start": -1.0, "stop": 5.0, "count": 13},
        "n_steps": 20000,
    },
    "floquet": {
        "energies": {"start": -3.0, "stop": 12.0, "count": 241},
        "coupling": 0.0,
    },
    "moments": {
        "volume": [0, 100],
        "energy": 0.5,
        "epsilon": 0.0,
        "s": 0.3,
        "anchor": None,
        "distances": {"start": 5, "stop": 40, "step": 1},
        "n_realizations": 1000,
        "fit_window": None,
    },
    "apriori": {
        "volume": [0, 50],
        "s": 0.3,
        "energies": None,
        "energy_count": 25,
        "n_realizations": 1000,
    },
    "correlator": {
        "volume": [0, 200],
        "energy_cutoff": 0.0,
        "distances": {"start": 4, "stop": 80, "step": 4},
        "n_realizations": 200,
    },
    "green-probe": {
        "volume": [0, 40],
        "energy": 0.5,
        "anchor": None,
        "distances": {"start": 1, "stop": 25, "step": 2},
        "realization_index": 0,
    },
    "selftest": {},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(raw: dict) -> dict:
    unknown = set(raw) - set(_DEFAULTS) - {"green_probe"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "green_probe" in raw:
        raw = dict(raw)
        raw["green-probe"] = raw.pop("green_probe")
    return _deep_merge(_DEFAULTS, raw)


def _energy_grid(node) -> tuple[float, ...]:
    if isinstance(node, (list, tuple)):
        return tuple(float(v) for v in node)
    if isinstance(node, dict):
        try:
            return tuple(
                float(e)
                for e in np.linspace(node["start"], node["stop"], int(node["count"]))
            )
        except KeyError as exc:
            raise ConfigError(f"energy grid needs start/stop/count: missing {exc}")
    raise ConfigError(f"bad energy grid: {node!r}")


def _distance_grid(node) -> tuple[int, ...]:
    if isinstance(node, (list, tuple)):
        return tuple(int(v) for v in node)
    if isinstance(node, dict):
        try:
            return tuple(
                range(int(node["start"]), int(node["stop"]) + 1, int(node.get("step", 1)))
            )
        except KeyError as exc:
            raise ConfigError(f"distance grid needs start/stop: missing {exc}")
    raise ConfigError(f"bad distance grid: {node!r}")


def _volume(node) -> tuple[int, int]:
    if not (isinstance(node, (list, tuple)) and len(node) == 2):
        raise ConfigError(f"volume must be a pair: {node!r}")
    a, b = int(node[0]), int(node[1])
    if a >= b:
        raise ConfigError("volume must be nondegenerate")
    return a, b


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _run_lyapunov(spec, cfg, writer, workers):
    params = cfg["lyapunov"]
    energies = _energy_grid(params["energies"])
    n_steps = int(params["n_steps"])
    rows = []
    for i, energy in enumerate(energies):
        est = lyap.lyapunov_estimate(spec, energy, n_steps, cfg["seed"])
        rows.append((est.energy, est.gamma, est.std_error, est.steps))
        print(f"lyapunov {i + 1}/{len(energies)} E={energy:g}", file=sys.stderr)
    report.write_csv(writer.path(".csv"), ["E", "gamma", "stderr", "steps"], rows)
    if cfg["plot"]:
        report.render_lyapunov(
            writer.path(".png"),
            [r[0] for r in rows],
            [r[1] for r in rows],
            [r[2] for r in rows],
        )
    return {"n_energies": len(rows)}, {
        "gamma_min": min(r[1] for r in rows),
        "gamma_max": max(r[1] for r in rows),
    }


def _run_floquet(spec, cfg, writer, workers):
    params = cfg["floquet"]
    energies = _energy_grid(params["energies"])
    eta = float(params["coupling"])
    rows = []
    for energy in energies:
        data = lyap.floquet(spec, energy, eta)
        rho, rho_inv = data.multipliers
        rows.append(
            (
                data.energy,
                data.discriminant,
                data.classification.value,
                rho.real,
                rho.imag,
                rho_inv.real,
                rho_inv.imag,
            )
        )
    report.write_csv(
        writer.path(".csv"),
        [
            "E",
            "discriminant",
            "classification",
            "multiplier_re",
            "multiplier_im",
            "inverse_multiplier_re",
            "inverse_multiplier_im",
        ],
        rows,
    )
    if cfg["plot"]:
        report.render_floquet(writer.path(".png"), [r[0] for r in rows], [r[1] for r in rows])
    kinds = {r[2] for r in rows}
    return {"n_energies": len(rows)}, {"classes_seen": sorted(kinds)}


def _write_fit_csv(writer, fit) -> None:
    report.write_csv(
        writer.path(".fit.csv"),
        [
            "eta_hat",
            "eta_stderr",
            "c_hat",
            "r_squared",
            "window_lo",
            "window_hi",
            "cov_logc_logc",
            "cov_logc_eta",
            "cov_eta_eta",
        ],
        [
            (
                fit.eta_hat,
                fit.eta_std_error,
                fit.c_hat,
                fit.r_squared,
                fit.fit_window[0],
                fit.fit_window[1],
                fit.covariance[0, 0],
                fit.covariance[0, 1],
                fit.covariance[1, 1],
            )
        ],
    )


def _run_moments(spec, cfg, writer, workers):
    params = cfg["moments"]
    volume = _volume(params["volume"])
    distances = _distance_grid(params["distances"])
    anchor = params["anchor"]
    if anchor is None:
        anchor = mom.centered_anchor(volume, max(distances))
    curve = mom.fractional_moment_curve(
        spec,
        volume,
        float(params["energy"]),
        float(params["s"]),
        int(anchor),
        distances,
        int(params["n_realizations"]),
        cfg["seed"],
        epsilon=float(params["epsilon"]),
        workers=workers,
    )
    rows = [
        (d, m, e, curve.n_used)
        for d, m, e in zip(curve.distances, curve.means, curve.std_errors)
    ]
    report.write_csv(writer.path(".csv"), ["distance", "mean", "std_error", "n_used"], rows)
    window = params["fit_window"]
    fit = mom.fit_decay(curve, tuple(window) if window else None)
    _write_fit_csv(writer, fit)
    if cfg["plot"]:
        report.render_decay(
            writer.path(".png"),
            curve.distances,
            curve.means,
            curve.std_errors,
            f"fractional moments s={curve.s:g} E={curve.energy:g}",
            fit=fit,
        )
    counts = {
        "n_realizations": curve.n_realizations,
        "flagged": curve.flagged_count,
        "used": curve.n_used,
    }
    summary = {
        "eta_hat": fit.eta_hat,
        "eta_stderr": fit.eta_std_error,
        "r_squared": fit.r_squared,
        "reliable": curve.reliable,
        "anchor": curve.anchor,
    }
    return counts, summary


def _run_apriori(spec, cfg, writer, workers):
    params = cfg["apriori"]
    volume = _volume(params["volume"])
    energies = (
        _energy_grid(params["energies"])
        if params["energies"]
        else mom.default_apriori_energies(spec, int(params["energy_count"]))
    )
    scan = mom.apriori_bound_scan(
        spec,
        volume,
        float(params["s"]),
        energies,
        int(params["n_realizations"]),
        cfg["seed"],
        workers=workers,
    )
    rows = list(
        zip(
            scan.energies,
            scan.diag_means,
            scan.diag_std_errors,
            scan.offdiag_means,
            scan.offdiag_std_errors,
        )
    )
    report.write_csv(
        writer.path(".csv"),
        ["E", "mean_diag", "stderr_diag", "mean_offdiag", "stderr_offdiag"],
        rows,
    )
    if cfg["plot"]:
        report.render_apriori(
            writer.path(".png"), scan.energies, scan.diag_means, scan.offdiag_means
        )
    counts = {
        "n_realizations": scan.n_realizations,
        "flagged": scan.flagged_count,
        "used": scan.n_realizations - scan.flagged_count,
    }
    return counts, {"max_mean": scan.max_mean, "n_energies": len(scan.energies)}


def _run_correlator(spec, cfg, writer, workers):
    params = cfg["correlator"]
    volume = _volume(params["volume"])
    distances = _distance_grid(params["distances"])
    curve = mom.correlator_curve(
        spec,
        volume,
        float(params["energy_cutoff"]),
        distances,
        int(params["n_realizations"]),
        cfg["seed"],
        workers=workers,
    )
    rows = list(zip(curve.distances, curve.means, curve.std_errors))
    report.write_csv(writer.path(".csv"), ["distance", "mean", "std_error"], rows)
    fit = None
    try:
        fit = mom.fit_decay(curve, (min(d for d in curve.distances if d > 0), max(curve.distances)))
        _write_fit_csv(writer, fit)
    except (DegenerateFit, ValueError):
        pass
    if cfg["plot"]:
        report.render_decay(
            writer.path(".png"),
            curve.distances,
            curve.means,
            curve.std_errors,
            f"eigenfunction correlator below E={curve.energy_cutoff:g}",
            fit=fit,
            ylabel="mean Q",
        )
    counts = {"n_realizations": curve.n_realizations, "flagged": 0, "used": curve.n_realizations}
    summary = {"anchor": curve.anchor}
    if fit is not None:
        summary.update({"eta_hat": fit.eta_hat, "eta_stderr": fit.eta_std_error})
    return counts, summary


def _run_green_probe(spec, cfg, writer, workers):
    params = cfg["green-probe"]
    volume = _volume(params["volume"])
    a, b = volume
    distances = _distance_grid(params["distances"])
    anchor = params["anchor"]
    energy = float(params["energy"])
    index = int(params["realization_index"])
    rows = []
    spread = 0.0
    if spec.flavor is Flavor.DISCRETE:
        # the solution form builds half-line volumes [x, b], so all three
        # routes are compared on the volume anchored at x
        anchor = a if anchor is None else int(anchor)
        realization = sample_realization(spec, (a, b + 1), cfg["seed"], index)
        solver = discrete_green_solve(realization, (anchor, b), energy)
        for d in distances:
            y = anchor + d
            direct = solver.entry(anchor, y)
            sol = discrete_green_solution_form(realization, (anchor, b), energy, y)
            kre = (
                krein_entry(realization, (anchor, b), energy, anchor, y)
                if d > 0
                else direct
            )
            rows.append(("direct_solve", anchor, y, direct, 0.0, "ok"))
            rows.append(("solution_form", anchor, y, sol.value, 0.0, sol.status.value))
            rows.append(("krein", anchor, y, kre, 0.0, "ok"))
            scale = max(abs(direct), 1e-300)
            spread = max(
                spread, abs(direct - sol.value) / scale, abs(direct - kre) / scale
            )
    else:
        anchor = mom.centered_anchor(volume, max(distances)) if anchor is None else int(anchor)
        realization = sample_realization(spec, (a, b), cfg["seed"], index)
        for d in distances:
            y = anchor + d
            sample = continuum_green(spec, realization, (a, b), energy, anchor, y)
            rows.append(
                ("kernel", anchor, y, sample.value, 0.0, sample.status.value)
            )
            if y < b:
                hs = hs_block_norm(spec, realization, (a, b), energy, anchor, y)
                rows.append(("hs_block", anchor, y, hs.value, 0.0, hs.status.value))
    report.write_csv(
        writer.path(".csv"),
        ["method", "x", "y", "value_re", "value_im", "status"],
        rows,
    )
    if cfg["plot"]:
        report.render_green_probe(writer.path(".png"), rows)
    flagged = sum(1 for r in rows if r[5] != "ok")
    return (
        {"n_pairs": len(distances), "flagged": flagged},
        {"max_rel_spread": spread},
    )


def _run_selftest(spec, cfg, writer, workers):
    results = selftest.run_all(cfg["seed"])
    rows = [(name, ok, detail) for name, ok, detail in results]
    report.write_csv(writer.path(".csv"), ["check", "passed", "detail"], rows)
    n_failed = sum(1 for _, ok, _ in results if not ok)
    for name, ok, detail in results:
        print(f"selftest {name}: {'pass' if ok else 'FAIL'} ({detail})", file=sys.stderr)
    if n_failed:
        raise Anderson1dError(f"{n_failed} selftest check(s) failed")
    return {"n_checks": len(results), "failed": n_failed}, {"all_passed": True}


_HANDLERS = {
    "lyapunov": _run_lyapunov,
    "floquet": _run_floquet,
    "moments": _run_moments,
    "apriori": _run_apriori,
    "correlator": _run_correlator,
    "green-probe": _run_green_probe,
    "selftest": _run_selftest,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _error_record(kind: str, message: str) -> str:
    return json.dumps({"error": {"type": kind, "message": message}})


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="anderson1d",
        description="Transfer-matrix and fractional-moment experiments for 1D random operators",
    )
    parser.add_argument("subcommand_pos", nargs="?", choices=SUBCOMMANDS, metavar="SUBCOMMAND")
    parser.add_argument("--subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="master seed override (u64)")
    parser.add_argument("--workers", type=int, help="worker process count override")
    parser.add_argument("--out", type=Path, help="output directory override")
    parser.add_argument("--name", help="output file stem (default: subcommand)")
    parser.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    parser.add_argument(
        "--print-config", action="store_true", help="print the resolved config and exit"
    )
    args = parser.parse_args(argv)

    subcommand = args.subcommand or args.subcommand_pos
    if subcommand is None:
        print(_error_record("usage", "no subcommand given"))
        return 2

    try:
        raw = {}
        if args.config is not None:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        cfg = resolve_config(raw)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.workers is not None:
            cfg["workers"] = args.workers
        if args.out is not None:
            cfg["out"] = str(args.out)
        if args.no_plot:
            cfg["plot"] = False
        cfg["seed"] = int(cfg["seed"]) & 0xFFFFFFFFFFFFFFFF
        if args.print_config:
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return 0
        spec = ModelSpec.from_config(cfg["model"])
    except (ConfigError, json.JSONDecodeError, OSError) as exc:
        print(_error_record("config", str(exc)))
        return 2

    writer = report.RunWriter(Path(cfg["out"]), args.name or subcommand)
    workers = max(1, int(cfg["workers"]))
    try:
        counts, summary = _HANDLERS[subcommand](spec, cfg, writer, workers)
    except ConfigError as exc:
        print(_error_record("config", str(exc)))
        return 2
    except InsufficientSamples as exc:
        print(_error_record("insufficient_samples", str(exc)))
        return 3
    except DegenerateFit as exc:
        print(_error_record("degenerate_fit", str(exc)))
        return 4
    except Anderson1dError as exc:
        print(_error_record(type(exc).__name__, str(exc)))
        return 5
    writer.finish(subcommand, cfg, cfg["seed"], workers, counts, summary)
    print(
        json.dumps(
            {"subcommand": subcommand, "outputs": writer.outputs, "counts": counts, "summary": summary},
            sort_keys=True,
            default=report._json_default,
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
