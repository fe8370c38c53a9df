"""Box-counting (Minkowski) dimension of the order-to-chaos boundary.

Pipeline: threshold the landscape into a sub-threshold region, extract
its inner 4-connected boundary, count occupied dyadic boxes at scales
2^-j of the grid side, and regress log2 N_j against j. A threshold
sweep reports the maximizing estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .landscape import LandscapeGrid

__all__ = ["BinaryField", "BoundarySet", "FractalReport", "binarize",
           "extract_boundary", "box_count", "fit_dimension",
           "dimension_sweep", "EmptyBoundaryError"]

_MIN_SCALES = 4


class EmptyBoundaryError(ValueError):
    pass


@dataclass(frozen=True)
class BinaryField:
    """Boolean membership mask of the sub-threshold region (values < tau)."""

    mask: np.ndarray
    tau: float
    source: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BoundarySet:
    """Pixels of the mask that touch the opposite phase (4-connectivity)."""

    rows: np.ndarray
    cols: np.ndarray
    shape: tuple[int, int]

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class ThresholdRecord:
    tau: float
    box_counts: list[tuple[int, int]]
    slope: float | None
    residual: float | None
    failure: str | None = None


@dataclass
class FractalReport:
    records: list[ThresholdRecord]
    best_tau: float
    best_dimension: float
    j_range: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "j_range": list(self.j_range),
            "best": {"tau": self.best_tau,
                     "dimension": self.best_dimension},
            "thresholds": [
                {"tau": r.tau, "box_counts": r.box_counts,
                 "slope": r.slope, "residual": r.residual,
                 "failure": r.failure}
                for r in self.records],
        }


def binarize(grid: LandscapeGrid, tau: float) -> BinaryField:
    """Membership mask of the sub-threshold region: values < tau."""
    values = np.asarray(grid.values)
    if values.size == 0:
        raise ValueError("grid is empty")
    return BinaryField(mask=values < tau, tau=float(tau),
                       source=dict(grid.metadata))


def extract_boundary(field: BinaryField | np.ndarray) -> BoundarySet:
    """Inner boundary: mask pixels with at least one 4-neighbor outside
    the mask. Image-border pixels consider only in-grid neighbors."""
    mask = field.mask if isinstance(field, BinaryField) else np.asarray(field)
    mask = mask.astype(bool)
    differs = np.zeros(mask.shape, dtype=bool)
    differs[1:, :] |= mask[1:, :] != mask[:-1, :]
    differs[:-1, :] |= mask[:-1, :] != mask[1:, :]
    differs[:, 1:] |= mask[:, 1:] != mask[:, :-1]
    differs[:, :-1] |= mask[:, :-1] != mask[:, 1:]
    rows, cols = np.nonzero(mask & differs)
    return BoundarySet(rows=rows, cols=cols, shape=mask.shape)


def box_count(boundary: BoundarySet, grid_size: int, j: int) -> int:
    """Number of boxes of side grid_size / 2^j (anchored at the origin)
    containing at least one boundary pixel."""
    if len(boundary) == 0:
        raise EmptyBoundaryError("no boundary at this threshold")
    k = 1 << j
    if k > grid_size:
        raise ValueError(f"2^{j} exceeds grid size {grid_size}")
    bi = (boundary.rows.astype(np.int64) * k) // grid_size
    bj = (boundary.cols.astype(np.int64) * k) // grid_size
    return int(np.unique(bi * k + bj).size)


def fit_dimension(counts) -> tuple[float, float]:
    """OLS of log2 N_j on the scale index j.

    Returns (slope, rms residual); the slope is the dimension estimate
    because box side halves per unit j.
    """
    counts = list(counts)
    if len(counts) < _MIN_SCALES:
        raise ValueError(
            f"insufficient scales: need >= {_MIN_SCALES}, got {len(counts)}")
    js = np.array([j for j, _ in counts], dtype=np.float64)
    ns = np.array([n for _, n in counts], dtype=np.float64)
    if np.any(ns < 1):
        raise ValueError("all box counts must be >= 1")
    logs = np.log2(ns)
    slope, intercept = np.polyfit(js, logs, 1)
    resid = logs - (slope * js + intercept)
    return float(slope), float(np.sqrt(np.mean(resid**2)))


def default_j_range(grid_size: int) -> tuple[int, int]:
    """Drop the two coarsest and two finest dyadic scales."""
    j_max = int(np.floor(np.log2(grid_size))) - 2
    return 2, j_max


def default_thresholds(values: np.ndarray, count: int = 64) -> np.ndarray:
    """Evenly spaced quantiles of the value distribution, excluding the
    1st/99th percentile tails so masks stay non-degenerate."""
    qs = np.linspace(0.01, 0.99, count)
    return np.unique(np.quantile(np.asarray(values, dtype=np.float64), qs))


def dimension_sweep(grid: LandscapeGrid, thresholds=None,
                    j_range: tuple[int, int] | None = None) -> FractalReport:
    """Box dimension estimate maximized over a threshold grid."""
    values = np.asarray(grid.values)
    size = max(values.shape)
    if j_range is None:
        j_range = default_j_range(size)
    j1, j_max = int(j_range[0]), int(j_range[1])
    if (1 << j_max) > size:
        raise ValueError(f"j_max={j_max} exceeds log2(grid size)")
    if thresholds is None:
        thresholds = default_thresholds(values)
    records: list[ThresholdRecord] = []
    best: ThresholdRecord | None = None
    for tau in np.asarray(thresholds, dtype=np.float64):
        boundary = extract_boundary(binarize(grid, float(tau)))
        if len(boundary) == 0:
            records.append(ThresholdRecord(float(tau), [], None, None,
                                           failure="empty boundary"))
            continue
        counts = [(j, box_count(boundary, size, j))
                  for j in range(j1, j_max + 1)]
        try:
            slope, resid = fit_dimension(counts)
        except ValueError as exc:
            records.append(ThresholdRecord(float(tau), counts, None, None,
                                           failure=str(exc)))
            continue
        rec = ThresholdRecord(float(tau), counts, slope, resid)
        records.append(rec)
        if best is None or slope > best.slope:
            best = rec
    if best is None:
        reasons = "; ".join(f"tau={r.tau}: {r.failure}" for r in records)
        raise EmptyBoundaryError(
            f"all thresholds degenerate ({reasons})")
    return FractalReport(records=records, best_tau=best.tau,
                         best_dimension=best.slope, j_range=(j1, j_max))
