import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowscape import (
    CoordinateSystem,
    DimensionMismatch,
    DistanceMatrix,
    NoTrips,
    ODSnapshot,
    SliceLabel,
    SpatialGrid,
    ThresholdRule,
    WeightingMode,
    binary_weights,
    fit_threshold,
    threshold_report,
)


def exact_line_dataset(pairs):
    """Distances exactly as given: a hand-built DistanceMatrix on a star
    where only pair (0, k) carries volume."""
    n = len(pairs) + 1
    d = np.zeros((n, n))
    for k, (dist_km, _) in enumerate(pairs):
        d[0, k + 1] = d[k + 1, 0] = dist_km
    # fill leaf-to-leaf distances with anything positive and symmetric
    for a in range(1, n):
        for b in range(a + 1, n):
            d[a, b] = d[b, a] = d[0, a] + d[0, b]
    dm = DistanceMatrix(d)
    xy = [(1000.0 * k, 0.0) for k in range(n)]
    grid = SpatialGrid([f"c{k}" for k in range(n)], np.array(xy), CoordinateSystem.planar_meters)
    M = np.zeros((n, n))
    for k, (_, volume) in enumerate(pairs):
        M[0, k + 1] = volume
    return [ODSnapshot(grid, SliceLabel("s", 0), M)], dm


class TestFitThreshold:
    def test_degenerate_single_distance(self):
        snaps, d = exact_line_dataset([(10.0, 7.0)])
        rule = fit_threshold(snaps, d, 0.99)
        assert rule.theta_km == 10.0

    def test_weighted_cdf_by_hand(self):
        # 99 trips at 1 km and 1 trip at 100 km: 1 km already covers 99%
        snaps, d = exact_line_dataset([(1.0, 99.0), (100.0, 1.0)])
        rule = fit_threshold(snaps, d, 0.99)
        assert rule.theta_km == 1.0

    def test_order_statistic_of_equal_volumes(self):
        snaps, d = exact_line_dataset([(float(k), 1.0) for k in range(1, 101)])
        rule = fit_threshold(snaps, d, 0.99)
        assert rule.theta_km == 99.0

    def test_no_trips(self):
        snaps, d = exact_line_dataset([(1.0, 0.0)])
        with pytest.raises(NoTrips):
            fit_threshold(snaps, d, 0.99)

    def test_percentile_validation(self):
        snaps, d = exact_line_dataset([(1.0, 1.0)])
        with pytest.raises(DimensionMismatch):
            fit_threshold(snaps, d, 0.0)
        with pytest.raises(DimensionMismatch):
            fit_threshold(snaps, d, 1.2)

    def test_percentile_one_takes_largest_distance(self):
        snaps, d = exact_line_dataset([(1.0, 99.0), (100.0, 1.0)])
        assert fit_threshold(snaps, d, 1.0).theta_km == 100.0

    def test_intra_cell_trips_ignored(self):
        snaps, d = exact_line_dataset([(5.0, 10.0)])
        M = snaps[0].M.copy()
        np.fill_diagonal(M, 1e9)
        spiked = ODSnapshot(snaps[0].grid, snaps[0].label, M)
        assert fit_threshold([spiked], d, 0.99).theta_km == 5.0

    def test_pooled_over_snapshots(self):
        snaps_a, d = exact_line_dataset([(1.0, 50.0), (9.0, 0.0)])
        grid = snaps_a[0].grid
        M2 = np.zeros((3, 3))
        M2[0, 2] = 50.0  # second snapshot puts equal volume at 9 km
        snap_b = ODSnapshot(grid, SliceLabel("s", 1), M2)
        rule = fit_threshold([snaps_a[0], snap_b], d, 0.99)
        assert rule.theta_km == 9.0
        assert rule.n_trips == 100.0
        assert rule.n_pairs == 2

    @given(st.integers(min_value=-8, max_value=8), st.integers(min_value=0, max_value=2 ** 32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_distance_scale_equivariance(self, log2_c, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 8))
        pairs = [(float(dist), float(vol)) for dist, vol in
                 zip(rng.uniform(0.5, 50.0, size=k), rng.integers(1, 100, size=k))]
        snaps, d = exact_line_dataset(pairs)
        c = 2.0 ** log2_c
        scaled = DistanceMatrix(d.d * c)
        theta = fit_threshold(snaps, d, 0.99).theta_km
        assert fit_threshold(snaps, scaled, 0.99).theta_km == c * theta

    @given(st.integers(min_value=-6, max_value=6), st.integers(min_value=0, max_value=2 ** 32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_count_scale_invariance(self, log2_c, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 8))
        pairs = [(float(dist), float(vol)) for dist, vol in
                 zip(rng.uniform(0.5, 50.0, size=k), rng.integers(1, 100, size=k))]
        snaps, d = exact_line_dataset(pairs)
        c = 2.0 ** log2_c
        scaled_snap = ODSnapshot(snaps[0].grid, snaps[0].label, snaps[0].M * c)
        assert fit_threshold([scaled_snap], d, 0.99).theta_km == fit_threshold(snaps, d, 0.99).theta_km


class TestBinaryWeights:
    def rule(self, theta, mode):
        return ThresholdRule(percentile=0.99, theta_km=theta, weighting=mode)

    def test_below_mode_keeps_short_distances(self):
        w = binary_weights(self.rule(5.0, WeightingMode.include_below_theta))
        assert w(0, 1, 3.0) == 1.0
        assert w(0, 1, 7.0) == 0.0
        assert w(0, 1, 5.0) == 1.0  # boundary included

    def test_above_mode_is_the_literal_complement(self):
        w = binary_weights(self.rule(5.0, WeightingMode.include_above_theta))
        assert w(0, 1, 3.0) == 0.0
        assert w(0, 1, 7.0) == 1.0

    @given(st.floats(min_value=0.01, max_value=100.0), st.floats(min_value=0.01, max_value=100.0))
    @settings(max_examples=50, deadline=None)
    def test_modes_complement_off_boundary(self, theta, d_ij):
        below = binary_weights(self.rule(theta, WeightingMode.include_below_theta))
        above = binary_weights(self.rule(theta, WeightingMode.include_above_theta))
        if d_ij != theta:
            assert below(0, 1, d_ij) + above(0, 1, d_ij) == 1.0


def test_threshold_report_fields():
    rule = ThresholdRule(percentile=0.99, theta_km=12.0, n_trips=1e4, n_pairs=55, scenario="wd")
    report = threshold_report(rule)
    assert report == {
        "scenario": "wd",
        "percentile": 0.99,
        "theta_km": 12.0,
        "n_trips": 1e4,
        "n_pairs": 55,
    }


def test_rule_validation():
    with pytest.raises(DimensionMismatch):
        ThresholdRule(percentile=0.99, theta_km=0.0)
    with pytest.raises(DimensionMismatch):
        ThresholdRule(percentile=0.0, theta_km=1.0)
