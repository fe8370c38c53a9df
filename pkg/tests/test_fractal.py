import math

import numpy as np
import pytest

from phasefront.fractal import (EmptyBoundaryError, binarize, box_count,
                                default_j_range, dimension_sweep,
                                extract_boundary, fit_dimension)
from phasefront.landscape import LandscapeGrid


def make_grid(values):
    values = np.asarray(values, dtype=np.float32)
    rows, cols = values.shape
    meta = {"region": {"sw_min": 0.0, "sw_max": 1.0, "sb_min": 0.0,
                       "sb_max": 1.0, "resolution": max(rows, cols)}}
    return LandscapeGrid(np.linspace(0, 1, cols), np.linspace(0, 1, rows),
                         values, meta)


def sierpinski_carpet(levels):
    """Boolean mask of the carpet at side 3**levels: a pixel survives iff
    no base-3 digit pair of its coordinates is (1, 1)."""
    n = 3**levels
    r, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    keep = np.ones((n, n), dtype=bool)
    for _ in range(levels):
        keep &= ~((r % 3 == 1) & (c % 3 == 1))
        r //= 3
        c //= 3
    return keep


def carpet_dimension():
    # recomputed from the construction: 8 surviving cells per 3x scale
    return math.log(8) / math.log(3)


class TestBinarize:
    def test_below_min_all_false(self):
        grid = make_grid(np.arange(64, dtype=float).reshape(8, 8) + 1.0)
        assert not binarize(grid, 0.5).mask.any()

    def test_above_max_all_true(self):
        grid = make_grid(np.arange(64, dtype=float).reshape(8, 8))
        assert binarize(grid, 1e9).mask.all()

    def test_hand_example(self):
        grid = make_grid(np.tile([[0.0, 1.0], [1.0, 0.0]], (4, 4)))
        mask = binarize(grid, 0.5).mask
        assert mask[0, 0] and not mask[0, 1]
        assert not mask[1, 0] and mask[1, 1]


class TestExtractBoundary:
    def test_uniform_masks_empty(self):
        assert len(extract_boundary(np.ones((16, 16), bool))) == 0
        assert len(extract_boundary(np.zeros((16, 16), bool))) == 0

    def test_half_plane_single_column(self):
        mask = np.zeros((64, 64), bool)
        mask[:, :32] = True
        b = extract_boundary(mask)
        assert len(b) == 64
        assert np.all(b.cols == 31)

    def test_disk_perimeter_count(self):
        r, c = np.meshgrid(np.arange(64), np.arange(64), indexing="ij")
        disk = (r - 32.0) ** 2 + (c - 32.0) ** 2 <= 20.0**2
        assert 110 <= len(extract_boundary(disk)) <= 140


class TestBoxCount:
    def test_single_pixel(self):
        mask = np.zeros((64, 64), bool)
        mask[10, 17] = True
        b = extract_boundary(mask)
        for j in range(0, 6):
            assert box_count(b, 64, j) == 1

    def test_straight_column(self):
        mask = np.zeros((1024, 1024), bool)
        mask[:, :100] = True
        b = extract_boundary(mask)
        for j in range(0, 9):
            assert box_count(b, 1024, j) == 2**j

    def test_counts_monotone_and_bounded(self):
        rng = np.random.default_rng(0)
        mask = rng.random((256, 256)) < 0.4
        b = extract_boundary(mask)
        prev = None
        for j in range(0, 8):
            n = box_count(b, 256, j)
            if prev is not None:
                assert prev <= n <= 4 * prev
            prev = n

    def test_empty_boundary_raises(self):
        b = extract_boundary(np.ones((32, 32), bool))
        with pytest.raises(EmptyBoundaryError):
            box_count(b, 32, 2)

    def test_scale_exceeding_grid_raises(self):
        mask = np.zeros((32, 32), bool)
        mask[1, 1] = True
        with pytest.raises(ValueError):
            box_count(extract_boundary(mask), 32, 6)


class TestFitDimension:
    def test_exact_power_of_two(self):
        counts = [(j, 2**j) for j in range(2, 8)]
        slope, resid = fit_dimension(counts)
        assert abs(slope - 1.0) < 1e-12
        assert resid < 1e-12

    def test_exact_power_of_four(self):
        counts = [(j, 4**j) for j in range(1, 6)]
        slope, _ = fit_dimension(counts)
        assert abs(slope - 2.0) < 1e-12

    def test_insufficient_scales(self):
        with pytest.raises(ValueError, match="insufficient"):
            fit_dimension([(1, 2), (2, 4), (3, 8)])

    def test_carpet_dimension(self):
        carpet = sierpinski_carpet(6)
        b = extract_boundary(carpet)
        counts = [(j, box_count(b, 729, j)) for j in range(2, 8)]
        slope, _ = fit_dimension(counts)
        assert 1.84 <= slope <= 1.94
        assert abs(slope - carpet_dimension()) <= 0.06

    def test_carpet_complement_invariance(self):
        carpet = sierpinski_carpet(6)
        slopes = []
        for mask in (carpet, ~carpet):
            b = extract_boundary(mask)
            counts = [(j, box_count(b, 729, j)) for j in range(2, 8)]
            slopes.append(fit_dimension(counts)[0])
        assert abs(slopes[0] - slopes[1]) <= 0.02


class TestDimensionSweep:
    def test_smooth_ramp_near_one(self):
        ramp = np.tile(np.linspace(0.0, 1.0, 512), (512, 1))
        ramp = ramp + 1e-4 * np.linspace(0, 1, 512)[:, None]  # break ties
        report = dimension_sweep(make_grid(ramp))
        assert abs(report.best_dimension - 1.0) <= 0.05

    def test_white_noise_near_two(self):
        noise = np.random.default_rng(3).random((512, 512))
        report = dimension_sweep(make_grid(noise))
        assert abs(report.best_dimension - 2.0) <= 0.1

    def test_degenerate_thresholds_raise(self):
        grid = make_grid(np.full((64, 64), 3.0))
        with pytest.raises(EmptyBoundaryError, match="degenerate"):
            dimension_sweep(grid, thresholds=[0.0, 10.0])

    def test_default_j_range(self):
        assert default_j_range(1024) == (2, 8)
        assert default_j_range(729) == (2, 7)

    def test_report_structure(self):
        noise = np.random.default_rng(4).random((256, 256))
        report = dimension_sweep(make_grid(noise), thresholds=[0.3, 0.5])
        d = report.to_dict()
        assert len(d["thresholds"]) == 2
        assert d["best"]["dimension"] == report.best_dimension
        for rec in d["thresholds"]:
            assert len(rec["box_counts"]) >= 4
