"""CSV, manifest, and figure output for experiment runs.

CSV files are UTF-8 with LF line endings and 17-significant-digit floats, so
byte-identical reruns certify determinism.  Each run also writes a JSON
manifest with the fully resolved configuration and sample accounting, and a
PNG rendering of the curve next to the delimited data.
"""

from __future__ import annotations

import json
import math
import subprocess
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SCHEMA_VERSION = 1


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=10,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_manifest(
    path: Path,
    subcommand: str,
    config: dict,
    master_seed: int,
    workers: int,
    wall_time: float,
    outputs: list[str],
    counts: dict,
    summary: dict,
) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": subcommand,
        "config": config,
        "master_seed": master_seed,
        "workers": workers,
        "wall_time_seconds": wall_time,
        "git_describe": git_describe(),
        "outputs": outputs,
        "counts": counts,
        "summary": summary,
    }
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n",
        encoding="utf-8",
    )


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def _new_axes(xlabel: str, ylabel: str, title: str):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def render_lyapunov(path: Path, energies, gammas, errors) -> None:
    fig, ax = _new_axes("energy", "Lyapunov exponent", "Lyapunov sweep")
    ax.errorbar(energies, gammas, yerr=3.0 * np.asarray(errors), fmt="o-", ms=3, lw=1, capsize=2)
    ax.axhline(0.0, color="k", lw=0.8)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_floquet(path: Path, energies, discriminants) -> None:
    fig, ax = _new_axes("energy", "discriminant", "Floquet discriminant")
    energies = np.asarray(energies)
    d = np.asarray(discriminants)
    ax.plot(energies, d, lw=1.2)
    ax.axhline(2.0, color="r", lw=0.8, ls="--")
    ax.axhline(-2.0, color="r", lw=0.8, ls="--")
    band = np.abs(d) < 2.0
    ax.fill_between(energies, -2, 2, where=band, alpha=0.15, color="g", step="mid")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_decay(
    path: Path, distances, means, errors, title: str, fit=None, ylabel: str = "mean"
) -> None:
    fig, ax = _new_axes("distance", ylabel, title)
    distances = np.asarray(distances, dtype=float)
    means = np.asarray(means, dtype=float)
    ax.errorbar(distances, means, yerr=3.0 * np.asarray(errors), fmt="o", ms=3, capsize=2)
    if fit is not None:
        xs = np.linspace(distances.min(), distances.max(), 200)
        ax.plot(xs, fit.c_hat * np.exp(-fit.eta_hat * xs), "r-", lw=1,
                label=f"decay rate {fit.eta_hat:.4g}")
        ax.legend()
    if np.all(means > 0):
        ax.set_yscale("log")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_apriori(path: Path, energies, diag, offdiag) -> None:
    fig, ax = _new_axes("energy", "moment mean", "A-priori moment scan")
    ax.plot(energies, diag, "o-", ms=3, lw=1, label="coincident")
    ax.plot(energies, offdiag, "s-", ms=3, lw=1, label="adjacent")
    ax.legend()
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_green_probe(path: Path, rows) -> None:
    """rows: (method, x, y, value_re, value_im, status)."""
    fig, ax = _new_axes("|x - y|", "|G|", "Green cross-check")
    methods = sorted({r[0] for r in rows})
    for marker, method in zip("osd^v", methods):
        pts = [(abs(r[2] - r[1]), math.hypot(r[3], r[4])) for r in rows if r[0] == method]
        if pts:
            xs, ys = zip(*sorted(pts))
            ax.plot(xs, ys, marker, ms=4, label=method, alpha=0.7)
    if all(math.hypot(r[3], r[4]) > 0 for r in rows):
        ax.set_yscale("log")
    ax.legend()
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


class RunWriter:
    """Collects the artifacts of one subcommand run under a common stem."""

    def __init__(self, out_dir: Path, name: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.name = name
        self.outputs: list[str] = []
        self._t0 = time.monotonic()

    def path(self, suffix: str) -> Path:
        p = self.out_dir / f"{self.name}{suffix}"
        self.outputs.append(p.name)
        return p

    def finish(self, subcommand, config, master_seed, workers, counts, summary):
        write_manifest(
            self.out_dir / f"{self.name}.manifest.json",
            subcommand,
            config,
            master_seed,
            workers,
            time.monotonic() - self._t0,
            self.outputs,
            counts,
            summary,
        )
