"""Time-series containers and piecewise-linear synthetic data generation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Identity of the seeded noise stream, echoed into output metadata so that
# generated datasets can be reproduced bit for bit.
GENERATOR_ID = "numpy-pcg64"


class InvalidSpecError(ValueError):
    """A piecewise-linear spec violates its knot contract."""


class CsvFormatError(ValueError):
    """A series CSV failed to parse; message carries the offending line number."""


@dataclass(eq=False)
class TimeSeries:
    """Observed sequence y_1..y_N (1-based externally, 0-based array storage)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("time series must be one-dimensional")
        if v.size < 3:
            raise ValueError(f"time series needs at least 3 samples, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("time series contains non-finite values")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(eq=False)
class PiecewiseLinearSpec:
    """Ground-truth mean as knots ``(index, value)`` with 1-based indices.

    The mean interpolates linearly between knots; interior knots are the true
    change points. The first knot must sit at index 1 and knot indices must
    be strictly increasing.
    """

    knots: list[tuple[int, float]]

    def __post_init__(self) -> None:
        if len(self.knots) < 2:
            raise InvalidSpecError("need at least 2 knots")
        knots = [(int(i), float(v)) for i, v in self.knots]
        indices = [i for i, _ in knots]
        if indices[0] != 1:
            raise InvalidSpecError(f"first knot index must be 1, got {indices[0]}")
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise InvalidSpecError(f"knot indices must be strictly increasing: {indices}")
        if any(not np.isfinite(v) for _, v in knots):
            raise InvalidSpecError("knot values must be finite")
        self.knots = knots

    @property
    def n(self) -> int:
        return self.knots[-1][0]

    @property
    def change_points(self) -> list[int]:
        """Indices of the interior knots (the true change points)."""
        return [i for i, _ in self.knots[1:-1]]

    def scaled_to(self, n: int) -> "PiecewiseLinearSpec":
        """Rescale knot positions to length ``n``, preserving relative locations."""
        if n < len(self.knots):
            raise InvalidSpecError(f"cannot scale a {len(self.knots)}-knot spec to n={n}")
        old_n = self.n
        new_knots = []
        for i, v in self.knots:
            frac = (i - 1) / (old_n - 1)
            new_knots.append((1 + round(frac * (n - 1)), v))
        indices = [i for i, _ in new_knots]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise InvalidSpecError(f"scaling to n={n} collapses adjacent knots")
        return PiecewiseLinearSpec(new_knots)


@dataclass(frozen=True)
class NoiseConfig:
    """Additive i.i.d. Gaussian noise: standard deviation and stream seed."""

    sigma: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be a nonnegative real, got {self.sigma}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


def mean_from_spec(spec: PiecewiseLinearSpec, n: int) -> np.ndarray:
    """Evaluate the piecewise-linear mean at t = 1..n.

    Exact at the knots, linear in between. ``n`` must equal the last knot
    index.
    """
    if n != spec.n:
        raise InvalidSpecError(f"n={n} does not match last knot index {spec.n}")
    xs = np.array([i for i, _ in spec.knots], dtype=float)
    ys = np.array([v for _, v in spec.knots], dtype=float)
    return np.interp(np.arange(1, n + 1, dtype=float), xs, ys)


def generate(spec: PiecewiseLinearSpec, noise: NoiseConfig) -> TimeSeries:
    """Draw y_t = m_t + e_t with e_t ~ N(0, sigma^2) from the seeded stream.

    The same (spec, sigma, seed) triple always produces a bit-identical
    series.
    """
    mean = mean_from_spec(spec, spec.n)
    rng = np.random.default_rng(noise.seed)
    return TimeSeries(mean + noise.sigma * rng.standard_normal(spec.n))


# --- file formats -----------------------------------------------------------

def save_spec_json(path: str | Path, spec: PiecewiseLinearSpec, noise: NoiseConfig) -> None:
    payload = {
        "n": spec.n,
        "knots": [[i, v] for i, v in spec.knots],
        "sigma": noise.sigma,
        "seed": noise.seed,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_spec_json(path: str | Path) -> tuple[PiecewiseLinearSpec, NoiseConfig]:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"{path}: not valid JSON: {exc}") from exc
    try:
        knots = [(int(i), float(v)) for i, v in payload["knots"]]
        spec = PiecewiseLinearSpec(knots)
        noise = NoiseConfig(sigma=float(payload["sigma"]), seed=int(payload["seed"]))
        n = int(payload["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpecError(f"{path}: malformed spec file: {exc}") from exc
    if n != spec.n:
        raise InvalidSpecError(f"{path}: n={n} does not match last knot index {spec.n}")
    return spec, noise


def write_series_csv(path: str | Path, series: TimeSeries) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"])
        for t, y in enumerate(series.values, start=1):
            writer.writerow([t, repr(y)])


def read_series_csv(path: str | Path) -> TimeSeries:
    """Parse a ``t,y`` CSV with contiguous 1-based t; errors carry line numbers."""
    values: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError(f"{path}: line 1: empty file")
        if [c.strip().lower() for c in header[:2]] != ["t", "y"]:
            raise CsvFormatError(f"{path}: line 1: expected header 't,y', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise CsvFormatError(f"{path}: line {lineno}: expected 2 columns, got {len(row)}")
            try:
                t = int(row[0])
                y = float(row[1])
            except ValueError as exc:
                raise CsvFormatError(f"{path}: line {lineno}: {exc}") from exc
            if t != len(values) + 1:
                raise CsvFormatError(
                    f"{path}: line {lineno}: t must be contiguous from 1, got t={t}"
                )
            if not np.isfinite(y):
                raise CsvFormatError(f"{path}: line {lineno}: non-finite value {row[1]!r}")
            values.append(y)
    if len(values) < 3:
        raise CsvFormatError(f"{path}: need at least 3 samples, got {len(values)}")
    return TimeSeries(np.asarray(values))
