"""Distance-threshold weighting fitted from the trip-distance distribution.

The threshold is the smallest observed inter-cell distance theta such that
at least a given fraction (default 0.99) of total trip volume occurs at
distances <= theta. Each trip contributes its pair's centroid distance,
weighted by its count; intra-cell trips carry no pairwise information and
are excluded. The fitted rule then assigns binary weights: by default pairs
at or below theta are kept (trips at distances where mobility is rarely
observed are excluded), and the complementary reading (keep pairs beyond
theta) stays selectable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NoTrips
from .grid import DistanceMatrix, ODSnapshot, _check_same_grid
from .hodge import WeightRule


class WeightingMode(enum.Enum):
    include_below_theta = "include_below_theta"
    include_above_theta = "include_above_theta"


@dataclass(frozen=True)
class ThresholdRule:
    """Fitted distance threshold plus the bookkeeping the report needs."""

    percentile: float
    theta_km: float
    weighting: WeightingMode = WeightingMode.include_below_theta
    n_trips: float = 0.0
    n_pairs: int = 0
    scenario: str | None = None

    def __post_init__(self):
        if not 0.0 < self.percentile <= 1.0:
            raise DimensionMismatch(f"percentile must be in (0, 1], got {self.percentile}")
        if self.theta_km <= 0.0:
            raise DimensionMismatch(f"theta_km must be positive, got {self.theta_km}")


def fit_threshold(
    snapshots: Sequence[ODSnapshot],
    d: DistanceMatrix,
    percentile: float = 0.99,
    weighting: WeightingMode = WeightingMode.include_below_theta,
    scenario: str | None = None,
) -> ThresholdRule:
    """Fit theta from the trip-count-weighted empirical distance CDF.

    Directed pairs (i != j) with positive pooled volume contribute their
    distance, weighted by total trips over all snapshots. theta is the
    smallest observed distance whose CDF value reaches ``percentile``.
    """
    if not 0.0 < percentile <= 1.0:
        raise DimensionMismatch(f"percentile must be in (0, 1], got {percentile}")
    grid = _check_same_grid(snapshots)
    if d.n != grid.n:
        raise DimensionMismatch(f"distance matrix n={d.n} != grid n={grid.n}")
    volume = np.zeros((grid.n, grid.n))
    for snap in snapshots:
        volume += snap.M
    np.fill_diagonal(volume, 0.0)
    sel = volume > 0.0
    if not sel.any():
        raise NoTrips("no positive inter-cell trip counts in the selection")
    dist = d.d[sel]
    vols = volume[sel]
    order = np.argsort(dist, kind="stable")
    dist = dist[order]
    vols = vols[order]
    cum = np.cumsum(vols)
    # Taking the total from the same sequential sum keeps cdf[-1] == 1.0
    # exactly, so the selection below cannot fall off the end.
    total = float(cum[-1])
    # CDF evaluated at each distance must include every trip tied at that
    # distance, so read the cumulative sum at the last index of each tie group.
    last = np.searchsorted(dist, dist, side="right") - 1
    cdf = cum[last] / total
    theta = float(dist[int(np.argmax(cdf >= percentile))])
    return ThresholdRule(
        percentile=percentile,
        theta_km=theta,
        weighting=weighting,
        n_trips=total,
        n_pairs=int(sel.sum()),
        scenario=scenario,
    )


def binary_weights(rule: ThresholdRule) -> WeightRule:
    """Per-pair weighting function for build_edge_system.

    include_below_theta: W = 1 iff d_ij <= theta (boundary included).
    include_above_theta: W = 1 iff d_ij > theta.
    """
    theta = rule.theta_km
    if rule.weighting is WeightingMode.include_below_theta:
        return lambda i, j, d_ij: 1.0 if d_ij <= theta else 0.0
    return lambda i, j, d_ij: 1.0 if d_ij > theta else 0.0


def threshold_report(rule: ThresholdRule) -> dict:
    """JSON-ready summary of one fitted threshold."""
    return {
        "scenario": rule.scenario,
        "percentile": rule.percentile,
        "theta_km": rule.theta_km,
        "n_trips": rule.n_trips,
        "n_pairs": rule.n_pairs,
    }
