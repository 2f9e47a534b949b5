"""Dual-path reconstruction and optimality diagnostics.

The dual variables of the trend-filtering problem are recovered from any
primal candidate m by repeated cumulative summation of the residual y - m:
for order 2 the path is

    z_t = sum_{i=1}^{t-1} (t - i) (y_i - m_i),   t = 0..N+1,

with z_0 = z_1 = 0 by construction. At any optimum the path stays inside
the tube [-lam, lam], its two trailing entries z_N and z_{N+1} vanish
(equivalently: the residual has zero sum and zero first moment), and it
touches a boundary exactly where the fitted slope changes, with the sign of
the slope change: +lam where the slope increases, -lam where it decreases.

Orientation note: the path is integrated from y - m (not m - y) so that the
boundary it touches carries the sign of the curvature change. Both
orientations produce the same tube geometry; only this one makes the sign
coupling come out right.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .signal import TimeSeries
from .solver import _dual_path_raw, _values


@dataclass(eq=False)
class DualPath:
    """Dual sequence on extended indices 0..N+order-1 (order 2: 0..N+1)."""

    z: np.ndarray
    order: int = 2

    @property
    def n(self) -> int:
        return self.z.size - self.order

    def value_at(self, t: int) -> float:
        """Path value at extended index t (0-based paper indexing)."""
        if not 0 <= t < self.z.size:
            raise IndexError(f"t={t} outside extended range 0..{self.z.size - 1}")
        return float(self.z[t])

    @property
    def interior(self) -> np.ndarray:
        """Entries constrained to the tube: t = order..N-1."""
        return self.z[self.order: self.n]

    @property
    def boundary_residuals(self) -> tuple[float, float]:
        """|z| at the trailing indices that vanish at any optimum."""
        tail = np.abs(self.z[self.n:])
        if tail.size == 1:
            return float(tail[0]), 0.0
        return float(tail[0]), float(tail[1])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "z"])
            for t, z in enumerate(self.z):
                writer.writerow([t, repr(float(z))])


@dataclass(frozen=True)
class KktTolerances:
    """Diagnostic bands, relative to lam unless noted."""

    tube_rel: float = 1e-6
    boundary_rel: float = 1e-6
    # |z| within this band of lam counts as touching the boundary
    boundary_band_rel: float = 1e-5
    # kink activity threshold = activity_scale * max|y| / N
    activity_scale: float = 1e-6


@dataclass(eq=False)
class KktReport:
    """Outcome of the optimality check; diagnostic, never raises."""

    max_tube_violation: float
    boundary_residuals: tuple[float, float]
    sign_violations: list[int]
    interior_active: list[int]
    passed: bool
    lam: float
    order: int = 2

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "lambda": self.lam,
            "order": self.order,
            "max_tube_violation": self.max_tube_violation,
            "boundary_residuals": list(self.boundary_residuals),
            "sign_violations": self.sign_violations,
            "interior_active": self.interior_active,
        }


def dual_path(y: TimeSeries | np.ndarray, m: np.ndarray, order: int = 2) -> DualPath:
    """Reconstruct the dual path from a primal candidate in O(N).

    ``order``-fold cumulative sum of y - m, prefixed with the ``order``
    structurally-zero entries. For odd orders the sum is taken of m - y so
    the boundary-contact sign convention is the same at every order.
    """
    v = _values(y)
    m = np.asarray(m, dtype=float)
    if v.shape != m.shape:
        raise ValueError(f"length mismatch: y has {v.size} samples, m has {m.size}")
    return DualPath(
        z=np.concatenate([np.zeros(order), _dual_path_raw(v, m, order)]),
        order=order,
    )


def check_kkt(
    y: TimeSeries | np.ndarray,
    m: np.ndarray,
    lam: float,
    tolerances: KktTolerances | None = None,
    order: int = 2,
) -> KktReport:
    """Evaluate the optimality conditions of a candidate fit.

    Checks, in dual units: the tube |z_t| <= lam on the interior, the
    vanishing endpoint residuals, sign agreement between boundary contacts
    and the curvature change they license, and complementary slackness
    (active kinks must sit on the boundary).
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    tol = tolerances or KktTolerances()
    v = _values(y)
    n = v.size
    path = dual_path(v, m, order)
    w = np.diff(m, order)

    # lam = 0 degenerates: the tube has zero width and the subgradient
    # condition is vacuous, so only m == y (z identically zero) passes.
    lam_scale = lam if lam > 0 else 1e-9 * (1.0 + float(np.max(np.abs(v))))

    interior = path.interior
    tube = float(np.max(np.abs(interior) - lam, initial=0.0))
    boundary = path.boundary_residuals

    activity = tol.activity_scale * max(1.0, float(np.max(np.abs(v)))) / n
    band = tol.boundary_band_rel * lam_scale
    active = np.abs(w) > activity
    on_boundary = np.abs(interior) >= lam - band

    sign_violations: list[int] = []
    interior_active: list[int] = []
    if lam > 0:
        rows = np.flatnonzero(active)
        for j in rows:
            t = j + order  # boundary contact paired with kink row j
            if on_boundary[j]:
                if np.sign(w[j]) != np.sign(interior[j]):
                    sign_violations.append(int(t))
            else:
                interior_active.append(int(t))

    passed = (
        tube <= tol.tube_rel * lam_scale
        and boundary[0] <= tol.boundary_rel * lam_scale
        and boundary[1] <= tol.boundary_rel * lam_scale
        and not sign_violations
        and not interior_active
    )
    return KktReport(
        max_tube_violation=tube,
        boundary_residuals=boundary,
        sign_violations=sign_violations,
        interior_active=interior_active,
        passed=passed,
        lam=lam,
        order=order,
    )


def tube_margin(z: DualPath, lam: float, locations: list[int]) -> list[float]:
    """lam - |z_t| at each queried location.

    Near zero at genuine boundary contacts, a large fraction of lam at
    locations the optimum does not actually use. Locations follow the
    1-based sample convention (order 2: valid range 2..N-1).
    """
    lo, hi = z.order, z.n - 1
    margins = []
    for t in locations:
        if not lo <= t <= hi:
            raise IndexError(f"location {t} outside constrained range {lo}..{hi}")
        margins.append(lam - abs(float(z.z[t])))
    return margins
