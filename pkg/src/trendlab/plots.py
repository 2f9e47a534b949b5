"""Figure rendering for fit, refinement, and rate reports.

Every report-producing CLI path can render its delimited output to PNG as
well; the library functions here take the in-memory objects directly.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .changepoint import ChangePointReport
from .dual import DualPath
from .experiments import RateTable, ReproductionBundle
from .refine import RefinementTrace
from .signal import TimeSeries, mean_from_spec
from .solver import TrendEstimate

_DATA_KW = dict(color="c", lw=0.4, alpha=0.8)
_FIT_KW = dict(color="b", lw=1.4)
_TRUTH_KW = dict(color="k", ls="--", lw=1.0)


def _trend_panel(ax, series, estimate, report=None, truth_mean=None, truth_points=None):
    t = np.arange(1, series.n + 1)
    ax.plot(t, series.values, label="data", **_DATA_KW)
    if truth_mean is not None:
        ax.plot(t, truth_mean, label="true mean", **_TRUTH_KW)
    ax.plot(t, estimate.m, label="estimate", **_FIT_KW)
    if truth_points:
        for i, tp in enumerate(truth_points):
            ax.axvline(tp, color="r", ls="--", lw=0.8,
                       label="true change point" if i == 0 else None)
    if report is not None:
        for i, p in enumerate(report.points):
            ax.axvline(p.location, color="b", lw=0.8, alpha=0.7,
                       label="estimated change point" if i == 0 else None)
    ax.set_ylabel("y")
    ax.legend(loc="upper right", fontsize=7)


def _dual_panel(ax, z: DualPath, lam: float):
    ax.plot(np.arange(z.z.size), z.z, color="b", lw=0.9)
    ax.axhline(lam, color="k", ls=":", lw=0.8)
    ax.axhline(-lam, color="k", ls=":", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("z")


def fit_figure(series: TimeSeries, estimate: TrendEstimate, z: DualPath,
               report: Optional[ChangePointReport] = None,
               truth_mean: Optional[np.ndarray] = None,
               truth_points: Optional[list[int]] = None) -> plt.Figure:
    """Two panels: data/trend/change points on top, dual path in its tube below."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 5.5), sharex=True,
                                   height_ratios=[2, 1])
    _trend_panel(ax1, series, estimate, report, truth_mean, truth_points)
    _dual_panel(ax2, z, estimate.lam)
    fig.tight_layout()
    return fig


def refine_figure(series: TimeSeries, trace: RefinementTrace,
                  truth_mean: Optional[np.ndarray] = None,
                  truth_points: Optional[list[int]] = None) -> plt.Figure:
    """Before/after comparison: round-0 fit versus the refined trend."""
    fig, axes = plt.subplots(2, 1, figsize=(8, 5.5), sharex=True)
    t = np.arange(1, series.n + 1)
    first = trace.rounds[0] if trace.rounds else None

    ax = axes[0]
    ax.plot(t, series.values, **_DATA_KW)
    if truth_mean is not None:
        ax.plot(t, truth_mean, **_TRUTH_KW)
    if first is not None:
        ax.plot(t, first.estimate.m, **_FIT_KW)
        for p in first.report.points:
            ax.axvline(p.location, color="b", lw=0.8, alpha=0.7)
    ax.set_ylabel("round 0")

    ax = axes[1]
    ax.plot(t, series.values, **_DATA_KW)
    if truth_mean is not None:
        ax.plot(t, truth_mean, **_TRUTH_KW)
    ax.plot(t, trace.final_estimate, **_FIT_KW)
    for p in trace.final_points:
        ax.axvline(p.location, color="b", lw=0.8, alpha=0.7)
    if truth_points:
        for tp in truth_points:
            for a in axes:
                a.axvline(tp, color="r", ls="--", lw=0.8)
    ax.set_ylabel("refined")
    ax.set_xlabel("t")
    fig.tight_layout()
    return fig


def rates_figure(tables: dict[str, RateTable]) -> plt.Figure:
    """Exact-recovery rate against N, one line per scenario."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, table in tables.items():
        ns = [r.n for r in table.rows]
        rates = [r.exact_rate for r in table.rows]
        ax.plot(ns, rates, marker="o", label=label)
    ax.set_xscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("exact recovery rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def save_bundle_figures(bundle: ReproductionBundle, out_dir: str | Path) -> list[Path]:
    """Render the reproduction bundle's panels to PNG files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth_mean = mean_from_spec(bundle.spec, bundle.spec.n)
    truth_points = bundle.spec.change_points
    written = []

    name = f"example{bundle.which}.png"
    fig = fit_figure(bundle.series, bundle.estimate, bundle.z, bundle.report,
                     truth_mean, truth_points)
    fig.savefig(out / name, dpi=150)
    plt.close(fig)
    written.append(out / name)

    if bundle.trace is not None:
        fig = refine_figure(bundle.series, bundle.trace, truth_mean, truth_points)
        name = f"example{bundle.which}_refined.png"
        fig.savefig(out / name, dpi=150)
        plt.close(fig)
        written.append(out / name)
    return written
