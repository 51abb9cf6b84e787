import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ball_segment
from pitchtrace.errors import EmptyReport, GridMismatch, HorizonUnderrun, RangeError
from pitchtrace.metrics import (
    STANDARD_GRIDS,
    STANDARD_PROPORTIONS,
    EvalRow,
    GridConfig,
    OccupancyGrid,
    adaptive_cell_size,
    aggregate,
    build_occupancy,
    cell_aspect,
    composite_score,
    evaluate_dataset,
    evaluate_segment,
    grid_from_cell_size,
    horizon_frames,
    motion_vector,
    movement_similarity,
    spatial_occupancy_similarity,
)

RULE = GridConfig.adaptive_rule(2.0, 0.5, 5.0)


def occ(cells, shape=(3, 3)):
    counts = np.zeros(shape, dtype=np.int64)
    for c in cells:
        counts[c] += 1
    return OccupancyGrid(counts, int(counts.sum()))


def bin_oracle(points, cells_l, cells_w):
    """Brute force: scan cell boundaries for each point; the far edge joins the last cell."""
    counts = np.zeros((cells_w, cells_l), dtype=np.int64)
    for x, y in points:
        col = next(j for j in range(cells_l) if x < -1.0 + (j + 1) * 2.0 / cells_l or j == cells_l - 1)
        row = next(i for i in range(cells_w) if y < -0.42 + (i + 1) * 0.84 / cells_w or i == cells_w - 1)
        counts[row, col] += 1
    return counts


# --- Eq. 2 and grid geometry ---


def test_adaptive_cell_size_clamp_regions():
    assert adaptive_cell_size(10.0, RULE) == 0.5
    assert adaptive_cell_size(0.1, RULE) == 5.0
    assert adaptive_cell_size(1.0, RULE) == 2.0
    assert adaptive_cell_size(0.0, RULE) == 5.0


@given(st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_adaptive_cell_size_monotone(a, b):
    lo, hi = sorted((a, b))
    assert adaptive_cell_size(hi, RULE) <= adaptive_cell_size(lo, RULE)


@pytest.mark.parametrize("delta,expected", [(2.0, (1, 1)), (0.2, (10, 5)), (0.0667, (30, 13))])
def test_grid_from_cell_size(delta, expected):
    assert grid_from_cell_size(delta) == expected
    assert expected == (math.ceil(2 / delta), math.ceil(0.84 / delta))


@pytest.mark.parametrize("cells", STANDARD_GRIDS)
def test_standard_proportions(cells):
    assert abs(cell_aspect(GridConfig.fixed(*cells)) - STANDARD_PROPORTIONS[cells]) < 1e-3


def test_grid_parse_and_labels():
    assert GridConfig.parse("15x10") == GridConfig.fixed(15, 10)
    g = GridConfig.parse("adaptive:2,0.5,5")
    assert g.adaptive and g.label == "adaptive:2,0.5,5"
    with pytest.raises(ValueError):
        GridConfig.parse("15by10")


# --- occupancy ---


def test_stationary_occupancy():
    for cells in STANDARD_GRIDS:
        o = build_occupancy(np.zeros((75, 2)), GridConfig.fixed(*cells))
        assert np.count_nonzero(o.counts) == 1 and o.counts.max() == 75


def test_edge_to_edge_run():
    traj = np.column_stack([np.linspace(-1, 1, 200), np.zeros(200)])
    o = build_occupancy(traj, GridConfig.fixed(10, 6))
    assert np.count_nonzero(o.counts) == 10
    assert o.counts.sum() == 200


def test_diagonal_run_matches_oracle():
    traj = np.column_stack([np.linspace(-0.95, 0.97, 150), np.linspace(-0.4, 0.42, 150)])
    o = build_occupancy(traj, GridConfig.fixed(15, 10))
    assert np.array_equal(o.counts, bin_oracle(traj, 15, 10))
    assert np.array_equal(motion_vector(o), bin_oracle(traj, 15, 10).ravel().astype(float))


def off_boundary(p, cells):
    # rounding may legitimately move points lying on a cell edge to either side
    fx = (p[0] + 1.0) / 2.0 * cells[0]
    fy = (p[1] + 0.42) / 0.84 * cells[1]
    return abs(fx - round(fx)) > 1e-9 and abs(fy - round(fy)) > 1e-9


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-0.42, 0.42)), min_size=1, max_size=60),
       st.sampled_from(STANDARD_GRIDS))
def test_binning_matches_oracle(points, cells):
    points = [p for p in points if off_boundary(p, cells)]
    if not points:
        return
    o = build_occupancy(np.array(points), GridConfig.fixed(*cells))
    assert np.array_equal(o.counts, bin_oracle(points, *cells))


def test_motion_vector_cases():
    assert not motion_vector(occ([], (2, 2))).any()
    o = build_occupancy(np.zeros((75, 2)), GridConfig.fixed(15, 10))
    v = motion_vector(o)
    assert v.max() == 75 and np.count_nonzero(v) == 1


# --- Eq. 3 / 4 / 5 ---


def test_jaccard_cases():
    a = occ([(0, 0), (1, 1)])
    assert spatial_occupancy_similarity(a, a) == 1.0
    assert spatial_occupancy_similarity(a, occ([(2, 2)])) == 0.0
    assert spatial_occupancy_similarity(occ([(0, 0), (0, 1)]), occ([(0, 1), (0, 2)])) == pytest.approx(1 / 3, abs=1e-15)
    assert spatial_occupancy_similarity(occ([]), occ([])) == 1.0
    with pytest.raises(GridMismatch):
        spatial_occupancy_similarity(occ([], (2, 2)), occ([], (3, 3)))


def test_movement_similarity_cases():
    v = np.array([1.0, 2.0, 0.0])
    assert movement_similarity(v, v) == 1.0
    assert movement_similarity(v, -v) == 0.0
    assert movement_similarity([1, 0], [0, 1]) == 0.5
    assert movement_similarity([0, 0], [0, 0]) == 1.0
    assert movement_similarity([0, 0], [0, 3]) == 0.0


def test_composite_cases():
    assert composite_score(1, 1) == 1.0
    assert composite_score(0.4, 0.6) == 0.5
    assert composite_score(0, 1) == 0.5
    assert composite_score(0, 1, harmonic=True) == 0.0
    assert composite_score(0.4, 0.6, harmonic=True) == pytest.approx(0.48, abs=1e-15)
    with pytest.raises(RangeError):
        composite_score(1.2, 0.5)


counts_strategy = st.lists(st.integers(0, 5), min_size=6, max_size=6)


@given(counts_strategy, counts_strategy)
def test_similarities_in_unit_interval_and_symmetric(a, b):
    ga, gb = OccupancyGrid(np.array(a).reshape(2, 3), sum(a)), OccupancyGrid(np.array(b).reshape(2, 3), sum(b))
    s_ab = spatial_occupancy_similarity(ga, gb)
    assert s_ab == spatial_occupancy_similarity(gb, ga)
    s_v = movement_similarity(a, b)
    for v in (s_ab, s_v, composite_score(s_ab, s_v)):
        assert 0.0 <= v <= 1.0
    if composite_score(s_ab, s_v) == 1.0:
        assert s_ab == 1.0 and s_v == 1.0


@given(st.lists(st.floats(0.1, 10), min_size=4, max_size=4), st.lists(st.floats(0.1, 10), min_size=4, max_size=4),
       st.floats(0.01, 100))
def test_movement_scale_invariance(a, b, k):
    assert movement_similarity(np.array(a) * k, b) == pytest.approx(movement_similarity(a, b), abs=1e-12)


def test_movement_permutation(rng):
    a, b = rng.random(12), rng.random(12)
    perm = rng.permutation(12)
    assert movement_similarity(a[perm], b[perm]) == pytest.approx(movement_similarity(a, b), abs=1e-12)
    assert movement_similarity(a[perm], b) != pytest.approx(movement_similarity(a, b), abs=1e-12)


# --- segment evaluation ---


def curved_ball(n=250):
    t = np.arange(n) / n
    return np.column_stack([-0.6 + 1.2 * t, 0.013 + 0.3 * np.sin(3 * t)])


def test_perfect_replay():
    gt = ball_segment(curved_ball())
    rows = evaluate_segment(gt, gt, [GridConfig.fixed(*c) for c in STANDARD_GRIDS] + [RULE])
    assert len(rows) == 18
    assert all(r.s_t == 1.0 and r.s_v == 1.0 and r.score == 1.0 for r in rows)


def test_reflected_prediction_is_disjoint():
    ball = np.column_stack([np.linspace(-0.9, -0.2, 250), np.full(250, 0.1)])
    gt, pred = ball_segment(ball), ball_segment(ball * [-1, 1])
    rows = evaluate_segment(gt, pred, [GridConfig.fixed(15, 10)])
    assert all(r.s_t == 0.0 for r in rows)


def test_constant_velocity_vs_curve_matches_composed_oracle():
    gt_ball = curved_ball()
    v = gt_ball[1] - gt_ball[0]
    pred_ball = gt_ball[0] + np.arange(250)[:, None] * v
    rows = evaluate_segment(ball_segment(gt_ball), ball_segment(pred_ball), [GridConfig.fixed(15, 10)], (3,))
    a, b = bin_oracle(gt_ball[:75], 15, 10), bin_oracle(pred_ball[:75], 15, 10)
    s_t = np.count_nonzero((a > 0) & (b > 0)) / np.count_nonzero((a > 0) | (b > 0))
    cos = float(a.ravel() @ b.ravel()) / (np.linalg.norm(a) * np.linalg.norm(b))
    s_v = (cos + 1) / 2
    assert rows[0].horizon_frames == 75
    assert rows[0].s_t == pytest.approx(s_t, abs=1e-12)
    assert rows[0].s_v == pytest.approx(s_v, abs=1e-12)
    assert rows[0].score == pytest.approx((s_t + s_v) / 2, abs=1e-12)


def test_horizon_conversion_and_underrun():
    assert horizon_frames(3, 25) == 75 and horizon_frames(10, 25) == 250
    gt = ball_segment(curved_ball(100))
    with pytest.raises(HorizonUnderrun):
        evaluate_segment(gt, gt, [GridConfig.fixed(15, 10)], (10,))


def test_adaptive_grid_resolves_from_motion():
    gt = ball_segment(curved_ball())
    rows = evaluate_segment(gt, gt, [GridConfig.adaptive_rule(0.002, 0.05, 0.5)], (3,))
    assert rows[0].cells_l > 1 and rows[0].grid.startswith("adaptive")


# --- aggregation ---


def row(score, seg="a"):
    return EvalRow(seg, "15x10", 15, 10, 3.0, 75, score, score, score)


def test_aggregate_cases():
    single = aggregate([row(0.7)])[("15x10", 3.0)]
    assert single["score"] == (0.7, 0.0) and single["n"] == 1
    two = aggregate([row(0.2), row(0.4, "b")])[("15x10", 3.0)]
    assert two["score"][0] == pytest.approx(0.3, abs=1e-15)
    assert two["score"][1] == pytest.approx(0.1, abs=1e-15)
    with pytest.raises(EmptyReport):
        aggregate([])


def test_aggregate_matches_streaming_oracle(rng):
    vals = rng.random(100)
    n, mean, m2 = 0, 0.0, 0.0
    for x in vals:  # Welford
        n += 1
        d = x - mean
        mean += d / n
        m2 += d * (x - mean)
    got = aggregate([row(v, str(i)) for i, v in enumerate(vals)])[("15x10", 3.0)]["score"]
    assert got[0] == pytest.approx(mean, abs=1e-12)
    assert got[1] == pytest.approx(math.sqrt(m2 / n), abs=1e-12)


def test_evaluate_dataset_orders_by_segment():
    a = ball_segment(curved_ball(), "b-seg")
    b = ball_segment(curved_ball(), "a-seg")
    rep = evaluate_dataset([(a, a), (b, b)], [GridConfig.fixed(15, 10)], (3, 5, 10))
    assert [r.segment_id for r in rep.rows][:3] == ["a-seg"] * 3
    assert rep.heatmaps["15x10"][0].sum() == 500
