"""Machine-readable experiment outputs plus optional rendered figures.

The delimited outputs are the contract: ``summary.json`` holds every
estimate, tolerance, and verdict; ``detail.csv`` holds the per-point
rows.  PNG figures are an additive convenience rendered from the same
data and can be switched off wholesale.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .mc import McEstimate
from .tails import TailReport


def config_hash(config: dict) -> str:
    """Stable short hash of a JSON-serializable configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"),
                      default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _jsonable(obj):
    if isinstance(obj, McEstimate):
        return obj.as_dict()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


@dataclass
class ExperimentResult:
    """One experiment's outputs: verdicted summary, rows, figure makers.

    ``figures`` holds (filename, callable) pairs; the callable returns a
    matplotlib Figure and runs only when figures are requested.
    """

    name: str
    config: dict
    summary: dict
    detail_rows: list = field(default_factory=list)
    figures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.summary.get("passed", False))


def write_results(results, out_dir, no_figures: bool = False) -> dict:
    """Write summary.json, detail.csv, and figures for a result list.

    Returns a manifest dict with the file paths and the overall verdict.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "experiments": {r.name: r.summary for r in results},
        "passed": all(r.passed for r in results),
        "config_hash": config_hash({r.name: r.config for r in results}),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    summary_path = out / "summary.json"
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")

    detail_path = out / "detail.csv"
    rows = []
    for r in results:
        for row in r.detail_rows:
            rows.append({"experiment": r.name, **row})
    fieldnames = ["experiment"]
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    with open(detail_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, restval="")
        writer.writeheader()
        writer.writerows(rows)

    figure_paths = []
    if not no_figures:
        for r in results:
            for filename, make in r.figures:
                fig = make()
                path = out / filename
                fig.savefig(path, dpi=110)
                plt.close(fig)
                figure_paths.append(str(path))
    return {
        "summary": str(summary_path),
        "detail": str(detail_path),
        "figures": figure_paths,
        "passed": summary["passed"],
    }


# ---------------------------------------------------------------------------
# Figure builders (data in, Figure out; no file IO here)
# ---------------------------------------------------------------------------


def tail_figure(report: TailReport, xlabel: str = "threshold"):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    thr = report.thresholds
    ax.fill_between(thr, np.maximum(report.ci_low, 1e-12),
                    np.maximum(report.ci_high, 1e-12),
                    alpha=0.25, label="3-sigma band")
    ax.plot(thr, np.maximum(report.p_hat, 1e-12), "o-", ms=3,
            label="empirical")
    if report.bound_value is not None:
        ax.plot(thr, report.bound_value, "--", label="envelope")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("probability")
    ax.set_title(report.label)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def profile_figure(x, series: dict, xlabel: str, ylabel: str,
                   title: str = "", bands: dict | None = None):
    """Overlayed line plot; ``bands`` maps a label to (low, high) arrays."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    bands = bands or {}
    for label, (low, high) in bands.items():
        ax.fill_between(x, low, high, alpha=0.25, label=label)
    for label, y in series.items():
        ax.plot(x, y, "o-" if len(np.atleast_1d(x)) < 60 else "-",
                ms=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def ladder_figure(eps, errors: dict, title: str = "finite-difference ladder"):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for label, err in errors.items():
        ax.loglog(eps, np.maximum(err, 1e-17), "o-", ms=3, label=label)
    ref = np.asarray(eps, dtype=float) ** 2
    first = next(iter(errors.values()))
    if np.max(first) > 0:
        ref = ref * (np.max(first) / np.max(ref))
        ax.loglog(eps, ref, "--", label="slope 2 reference")
    ax.set_xlabel("step")
    ax.set_ylabel("abs error")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig
