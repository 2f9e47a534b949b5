"""Iterative refinement that removes staircase-induced fake change points.

Spurious detections can only appear between other detected change points,
so the first and last detections of any segment are trustworthy. The
scheme exploits that: fit the full series, accept the outermost detected
points, re-fit the open interval strictly between them with a penalty
rescaled to the shorter segment, and repeat inward until a round reports at
most two points. Points accepted along the way are the genuine change
points; anything a later round fails to reproduce was an artifact of the
staircase effect.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .changepoint import (
    ChangePoint,
    ChangePointReport,
    default_cluster_radius,
    extract,
)
from .dual import DualPath, dual_path, tube_margin
from .signal import TimeSeries
from .solver import SolverConfig, TrendEstimate, solve


@dataclass(frozen=True)
class PowerLawLambda:
    """Penalty rule lam(n) = kappa * n**c with 1 < c < 2."""

    kappa: float
    c: float = 1.3

    def __post_init__(self) -> None:
        if not 1.0 < self.c < 2.0:
            raise ValueError(f"consistency requires 1 < c < 2, got c={self.c}")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")

    @classmethod
    def anchored(cls, n0: int, lam0: float, c: float = 1.3) -> "PowerLawLambda":
        """Calibrate kappa so lam(n0) = lam0."""
        return cls(kappa=lam0 / n0**c, c=c)

    def __call__(self, n: int) -> float:
        return self.kappa * n**self.c


@dataclass(eq=False)
class RefineConfig:
    lambda_rule: Callable[[int], float]
    min_segment: int = 20
    max_depth: int = 12
    cluster_radius: Optional[int] = None  # None: scale with each segment
    solver: Optional[SolverConfig] = None  # template; lam is overridden per round

    def solver_config(self, lam: float) -> SolverConfig:
        base = self.solver
        if base is None:
            return SolverConfig(lam=lam)
        return SolverConfig(
            lam=lam,
            order=base.order,
            max_iterations=base.max_iterations,
            primal_tolerance=base.primal_tolerance,
            dual_tolerance=base.dual_tolerance,
            penalty_parameter=base.penalty_parameter,
        )


@dataclass(eq=False)
class RefineRound:
    segment: tuple[int, int]          # 1-based inclusive sample range fitted
    lambda_used: float
    report: ChangePointReport         # locations in absolute coordinates
    accepted: list[ChangePoint]
    estimate: TrendEstimate
    z: DualPath

    def to_dict(self) -> dict:
        return {
            "segment": list(self.segment),
            "lambda": self.lambda_used,
            "report": self.report.to_dict(),
            "accepted": [p.to_dict() for p in self.accepted],
        }


@dataclass(eq=False)
class RefinementTrace:
    rounds: list[RefineRound]
    final_points: list[ChangePoint]
    final_estimate: np.ndarray

    def to_dict(self) -> dict:
        return {
            "rounds": [r.to_dict() for r in self.rounds],
            "final_points": [p.to_dict() for p in self.final_points],
        }


@dataclass(eq=False)
class MonitorEntry:
    """Dual margin of a removed round-0 detection, in the deepest round covering it."""

    location: int
    margin: float
    lambda_used: float
    round_index: int

    def to_dict(self) -> dict:
        return {
            "t": self.location,
            "margin": self.margin,
            "lambda": self.lambda_used,
            "round": self.round_index,
        }


class RefinementError(RuntimeError):
    """An inner solve failed to converge; carries the partial trace."""

    def __init__(self, message: str, trace: RefinementTrace):
        super().__init__(message)
        self.trace = trace


def _shift_report(report: ChangePointReport, offset: int) -> ChangePointReport:
    points = [
        ChangePoint(
            location=p.location + offset,
            slope_change=p.slope_change,
            sign=p.sign,
            cluster_size=p.cluster_size,
            dual_margin=p.dual_margin,
        )
        for p in report.points
    ]
    return ChangePointReport(
        points=points,
        sign_pattern=report.sign_pattern,
        alternating=report.alternating,
        staircase_segments=report.staircase_segments,
    )


def _cluster_accepted(points: list[ChangePoint], radius: int) -> list[ChangePoint]:
    """Merge accepted points that land within the radius with equal sign."""
    pts = sorted(points, key=lambda p: p.location)
    merged: list[ChangePoint] = []
    i = 0
    while i < len(pts):
        j = i
        while (
            j + 1 < len(pts)
            and pts[j + 1].location - pts[j].location <= radius
            and pts[j + 1].sign == pts[j].sign
        ):
            j += 1
        group = pts[i: j + 1]
        weights = np.array([abs(p.slope_change) for p in group])
        locs = np.array([p.location for p in group], dtype=float)
        merged.append(ChangePoint(
            location=int(round(float(np.sum(weights * locs) / np.sum(weights)))),
            slope_change=float(sum(p.slope_change for p in group)),
            sign=group[0].sign,
            cluster_size=sum(p.cluster_size for p in group),
            dual_margin=min(p.dual_margin for p in group),
        ))
        i = j + 1
    return merged


def _piecewise_refit(v: np.ndarray, locations: list[int]) -> np.ndarray:
    """Independent least-squares line per segment between change points.

    Segment boundaries fall after each change-point sample; continuity
    across change points is deliberately not enforced.
    """
    n = v.size
    bounds = [0] + [loc for loc in locations if 0 < loc < n] + [n]
    out = np.empty(n)
    for a, b in zip(bounds, bounds[1:]):
        seg = v[a:b]
        if seg.size == 1:
            out[a:b] = seg
            continue
        t = np.arange(seg.size, dtype=float)
        tc = t - t.mean()
        slope = (tc @ seg) / (tc @ tc)
        out[a:b] = seg.mean() + slope * tc
    return out


def refine(y: TimeSeries | np.ndarray, config: RefineConfig) -> RefinementTrace:
    """Run the inward refinement chain and return its full trace.

    Each round keeps only the first and last detected points of the current
    segment, then re-fits the open interval strictly between them (minus a
    guard band of one cluster radius, so an accepted kink cannot bleed into
    the next fit). A round reporting two points or fewer accepts them all
    and terminates; so does a segment shorter than ``min_segment`` or
    reaching ``max_depth``.
    """
    v = y.values if isinstance(y, TimeSeries) else np.asarray(y, dtype=float)
    n = v.size
    if n < config.min_segment:
        raise ValueError(f"series of length {n} is shorter than min_segment={config.min_segment}")

    rounds: list[RefineRound] = []
    accepted: list[ChangePoint] = []
    start, end = 1, n

    for _ in range(config.max_depth):
        seg_len = end - start + 1
        if seg_len < config.min_segment:
            break
        lam = float(config.lambda_rule(seg_len))
        radius = (config.cluster_radius if config.cluster_radius is not None
                  else default_cluster_radius(seg_len))
        seg = v[start - 1: end]
        est = solve(seg, config.solver_config(lam))
        if not est.converged:
            raise RefinementError(
                f"inner solve on segment ({start}, {end}) at lam={lam:g} did not converge",
                RefinementTrace(rounds=rounds, final_points=_cluster_accepted(
                    accepted, radius), final_estimate=_piecewise_refit(
                    v, [p.location for p in _cluster_accepted(accepted, radius)])),
            )
        z = dual_path(seg, est.m, est.order)
        report = _shift_report(extract(est, z, cluster_radius=radius), start - 1)
        pts = report.points

        if len(pts) <= 2:
            rounds.append(RefineRound((start, end), lam, report, list(pts), est, z))
            accepted.extend(pts)
            break

        took = [pts[0], pts[-1]]
        rounds.append(RefineRound((start, end), lam, report, took, est, z))
        accepted.extend(took)
        new_start = pts[0].location + radius + 1
        new_end = pts[-1].location - radius - 1
        if new_start <= start or new_end >= end or new_start >= new_end:
            break
        start, end = new_start, new_end

    final_radius = (config.cluster_radius if config.cluster_radius is not None
                    else default_cluster_radius(n))
    final_points = _cluster_accepted(accepted, final_radius)
    return RefinementTrace(
        rounds=rounds,
        final_points=final_points,
        final_estimate=_piecewise_refit(v, [p.location for p in final_points]),
    )


def monitor(trace: RefinementTrace, y: TimeSeries | np.ndarray) -> list[MonitorEntry]:
    """Dual margins at the locations of removed round-0 detections.

    For each round-0 point that did not survive to the final set, report
    lam - |z| from the deepest round whose fitted segment still covers the
    location. Genuine points show near-zero margins; removed staircase
    fakes sit far inside the tube.
    """
    if not trace.rounds:
        return []
    final_locs = [p.location for p in trace.final_points]
    first = trace.rounds[0]
    radius = default_cluster_radius(first.estimate.m.size)

    entries: list[MonitorEntry] = []
    for p in first.report.points:
        if any(abs(p.location - f) <= radius for f in final_locs):
            continue
        for idx in range(len(trace.rounds) - 1, -1, -1):
            rnd = trace.rounds[idx]
            start, end = rnd.segment
            lo = start + rnd.z.order  # constrained dual range within the segment
            hi = end - 1
            if lo <= p.location <= hi:
                local = p.location - (start - 1)
                margin = tube_margin(rnd.z, rnd.lambda_used, [local])[0]
                entries.append(MonitorEntry(
                    location=p.location,
                    margin=margin,
                    lambda_used=rnd.lambda_used,
                    round_index=idx,
                ))
                break
    return entries
