"""Result export: deterministic JSON/CSV tables and report figures.

JSON floats serialize through Python's shortest-roundtrip repr and keys are
sorted, so identical runs produce byte-identical files.  CSV mirrors use 17
significant digits.  Figures are rendered with matplotlib on the Agg
backend, only from this module: the numerical core has no plotting imports.
"""

from __future__ import annotations

import json
import os

import numpy as np


def sanitize(obj):
    """Recursively convert numpy scalars/arrays into plain Python values."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(sanitize(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: str, obj) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(dumps_json(obj))


def format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def spectrum_rows(spectrum) -> tuple[list[str], list[list]]:
    header = ["word", "action", "length", "period", "el_residual", "crit_dp"]
    rows = []
    for e in spectrum.entries:
        rows.append([e["word"], float(e["action"]), float(e["length"]),
                     float(e["period"]), float(e["el_residual"]),
                     float(e["crit_dp"])])
    return header, rows


def write_spectrum(path: str, spectrum) -> list[str]:
    """Spectrum JSON plus a CSV mirror with identical columns."""
    payload = {"system": spectrum.system_id, "entries": spectrum.entries}
    write_json(path, payload)
    header, rows = spectrum_rows(spectrum)
    csv_path = os.path.splitext(path)[0] + ".csv"
    write_csv(csv_path, header, rows)
    return [path, csv_path]


# ---------------------------------------------------------------------------
# Figures (report path only)
# ---------------------------------------------------------------------------


def _pyplot():
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt
    return plt


def figure_spectrum(spectrum, path: str) -> str:
    plt = _pyplot()
    lengths = [e["length"] for e in spectrum.entries]
    actions = [e["action"] for e in spectrum.entries]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(lengths, actions, "o", ms=5)
    ax.set_xlabel("orbit length")
    ax.set_ylabel("minimal action")
    ax.set_title("marked action spectrum")
    ax.grid(True, ls=":", alpha=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def figure_linearization(report: dict, path: str) -> str:
    plt = _pyplot()
    eps = [r["epsilon"] for r in report["rows"]]
    rem = [r["remainder"] for r in report["rows"]]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.loglog(eps, rem, "o-", label="remainder")
    slope = report.get("slope")
    if slope == slope and rem[0] > 0:  # not NaN
        ref = [rem[0] * (e / eps[0]) ** 2 for e in eps]
        ax.loglog(eps, ref, "--", label="slope 2 reference")
    ax.set_xlabel("perturbation size")
    ax.set_ylabel("max Taylor remainder")
    ax.set_title(f"action linearization order (fitted slope {slope:.3f})")
    ax.legend()
    ax.grid(True, which="both", ls=":", alpha=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def figure_conformal(report: dict, path: str) -> str:
    plt = _pyplot()
    words = list(report["per_word_gap"])
    gaps = [report["per_word_gap"][w] for w in words]
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.0))
    axes[0].bar(range(len(words)), gaps)
    axes[0].set_xticks(range(len(words)))
    axes[0].set_xticklabels(words, rotation=60, fontsize=7)
    axes[0].set_ylabel("|action gap|")
    axes[0].set_title("marked-action gap per class")
    rows = report.get("birkhoff", [])
    if rows:
        axes[1].plot([r["length"] for r in rows],
                     [r["orbit_average"] for r in rows], "o-",
                     label="orbit average")
        axes[1].axhline(report["space_average"], color="k", ls="--",
                        label="space average")
        axes[1].set_xlabel("orbit length")
        axes[1].legend()
    axes[1].set_title("conformal weight averages")
    for ax in axes:
        ax.grid(True, ls=":", alpha=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def figure_averages(report: dict, path: str) -> str:
    plt = _pyplot()
    rows = report["rows"]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogy([r["length"] for r in rows],
                [max(abs(r["average"]), 1e-18) for r in rows], "o-")
    ax.set_xlabel("orbit length")
    ax.set_ylabel("|1-form average|")
    trend = "decreasing" if report["trend_decreasing"] else "not decreasing"
    ax.set_title(f"1-form orbit averages ({trend})")
    ax.grid(True, which="both", ls=":", alpha=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def figure_criteria(report: dict, path: str) -> str:
    plt = _pyplot()
    rows = report["orbit_rows"]
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    ax.bar(range(len(rows)), [r["crit_dp"] for r in rows])
    ax.axhline(4.0, color="r", ls="--", label="criterion bound")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([r["word"] for r in rows], rotation=60, fontsize=7)
    ax.set_ylabel("period-weighted criterion value")
    ax.set_title(f"injectivity criteria (margin {report['sectional_margin']:.4f}, "
                 f"verdict {report['verdict']})")
    ax.legend()
    ax.grid(True, ls=":", alpha=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
