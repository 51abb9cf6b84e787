"""Occupancy-grid similarity scoring of predicted against ground-truth play.

Trajectories are binned onto a uniform grid over the normalized pitch. Two
similarities compare the resulting occupancy: a Jaccard index over occupied
cells and a cosine similarity over per-cell visit counts mapped to [0, 1].
Their mean is the composite score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from pitchtrace.errors import (
    DimensionError,
    EmptyReport,
    GridMismatch,
    HorizonUnderrun,
    RangeError,
)
from pitchtrace.geometry import (
    BALL,
    DEFAULT_PITCH,
    X_EXTENT,
    X_MIN,
    Y_EXTENT,
    Y_MIN,
    MotionStats,
    PitchSpec,
    Segment,
    displacement_stats,
)

STANDARD_GRIDS = ((10, 6), (15, 10), (20, 12), (30, 20), (105, 68))
STANDARD_PROPORTIONS = {(10, 6): 0.9259, (15, 10): 1.0294, (20, 12): 0.9259, (30, 20): 1.0294, (105, 68): 1.0005}
DEFAULT_HORIZONS_S = (3.0, 5.0, 10.0)


@dataclass(frozen=True)
class GridConfig:
    """Either a fixed ``cells_l x cells_w`` grid or an adaptive cell-size rule."""

    cells_l: int | None = None
    cells_w: int | None = None
    alpha: float | None = None
    delta_min: float | None = None
    delta_max: float | None = None

    def __post_init__(self):
        if self.adaptive:
            if not (self.alpha > 0 and self.delta_min > 0 and self.delta_max >= self.delta_min):
                raise ValueError(f"invalid adaptive grid parameters: {self}")
        else:
            if self.cells_l is None or self.cells_w is None or self.cells_l < 1 or self.cells_w < 1:
                raise ValueError(f"fixed grid needs cells_l, cells_w >= 1: {self}")

    @classmethod
    def fixed(cls, cells_l: int, cells_w: int) -> "GridConfig":
        return cls(cells_l=int(cells_l), cells_w=int(cells_w))

    @classmethod
    def adaptive_rule(cls, alpha: float, delta_min: float, delta_max: float) -> "GridConfig":
        return cls(alpha=float(alpha), delta_min=float(delta_min), delta_max=float(delta_max))

    @classmethod
    def parse(cls, text: str) -> "GridConfig":
        """Parse ``"15x10"`` or ``"adaptive:alpha,dmin,dmax"``."""
        text = text.strip()
        if text.startswith("adaptive:"):
            a, lo, hi = (float(v) for v in text[len("adaptive:"):].split(","))
            return cls.adaptive_rule(a, lo, hi)
        l, _, w = text.lower().partition("x")
        return cls.fixed(int(l), int(w))

    @property
    def adaptive(self) -> bool:
        return self.alpha is not None

    @property
    def label(self) -> str:
        if self.adaptive:
            return f"adaptive:{self.alpha:g},{self.delta_min:g},{self.delta_max:g}"
        return f"{self.cells_l}x{self.cells_w}"


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    counts: np.ndarray  # (H, W) = (cells_w, cells_l), row index along the width
    frame_count: int

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape


@dataclass(frozen=True)
class SimilarityResult:
    s_t_occupancy: float
    s_v_movement: float
    score: float


@dataclass(frozen=True)
class EvalRow:
    segment_id: str
    grid: str
    cells_l: int
    cells_w: int
    horizon_s: float
    horizon_frames: int
    s_t: float
    s_v: float
    score: float


@dataclass
class EvalReport:
    rows: list[EvalRow]
    summary: dict = field(default_factory=dict)
    # grid label -> (gt counts, pred counts) summed over segments at the longest horizon
    heatmaps: dict = field(default_factory=dict)
    method: str = "model"


def adaptive_cell_size(stats: MotionStats | float, g: GridConfig) -> float:
    """Cell size ``min(delta_max, max(delta_min, alpha / s_t))``; ``s_t = 0`` gives ``delta_max``."""
    s = stats.s_t if isinstance(stats, MotionStats) else float(stats)
    if s < 0:
        raise ValueError(f"s_t must be non-negative, got {s}")
    if s == 0:
        return g.delta_max
    return min(g.delta_max, max(g.delta_min, g.alpha / s))


def grid_from_cell_size(delta: float) -> tuple[int, int]:
    if not delta > 0:
        raise ValueError(f"cell size must be positive, got {delta}")
    return max(1, math.ceil(X_EXTENT / delta)), max(1, math.ceil(Y_EXTENT / delta))


def cell_aspect(g: GridConfig, spec: PitchSpec = DEFAULT_PITCH) -> float:
    """Length/width ratio of one metric cell."""
    if g.adaptive:
        raise ValueError("cell_aspect requires a fixed grid")
    return (spec.length_m / g.cells_l) / (spec.width_m / g.cells_w)


def cell_indices(points, cells_l: int, cells_w: int) -> tuple[np.ndarray, np.ndarray]:
    """Row (width axis) and column (length axis) bin of each normalized point."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    col = np.floor((p[:, 0] - X_MIN) / X_EXTENT * cells_l).astype(np.int64)
    row = np.floor((p[:, 1] - Y_MIN) / Y_EXTENT * cells_w).astype(np.int64)
    # points on the far edge go to the last cell
    return np.clip(row, 0, cells_w - 1), np.clip(col, 0, cells_l - 1)


def build_occupancy(traj, g: GridConfig, horizon_frames: int | None = None) -> OccupancyGrid:
    traj = np.asarray(traj, dtype=np.float64)
    if horizon_frames is None:
        horizon_frames = len(traj)
    if horizon_frames > len(traj):
        raise ValueError(f"horizon {horizon_frames} exceeds trajectory length {len(traj)}")
    row, col = cell_indices(traj[:horizon_frames], g.cells_l, g.cells_w)
    counts = np.zeros((g.cells_w, g.cells_l), dtype=np.int64)
    np.add.at(counts, (row, col), 1)
    return OccupancyGrid(counts=counts, frame_count=int(horizon_frames))


def spatial_occupancy_similarity(gt: OccupancyGrid, pred: OccupancyGrid) -> float:
    """Jaccard index of occupied cells. Two empty grids count as full agreement."""
    if gt.shape != pred.shape:
        raise GridMismatch(f"grid shapes differ: {gt.shape} vs {pred.shape}")
    a, b = gt.occupied, pred.occupied
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def motion_vector(grid: OccupancyGrid) -> np.ndarray:
    return grid.counts.astype(np.float64).ravel()


def movement_similarity(v_gt, v_pred) -> float:
    """Cosine similarity mapped to [0, 1]; both-zero gives 1, one zero gives 0."""
    a = np.asarray(v_gt, dtype=np.float64).ravel()
    b = np.asarray(v_pred, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"vector lengths differ: {a.size} vs {b.size}")
    aa, bb = float(a @ a), float(b @ b)
    if aa == 0 or bb == 0:
        return 1.0 if aa == bb else 0.0
    # sqrt of the product (not the product of norms) makes cos(v, v) exactly 1
    cos = float(a @ b) / np.sqrt(aa * bb)
    return min(1.0, max(0.0, 0.5 * (cos + 1.0)))


def composite_score(s_t: float, s_v: float, harmonic: bool = False) -> float:
    """Arithmetic mean of the two similarities; ``harmonic=True`` for the harmonic mean."""
    for name, v in (("s_t", s_t), ("s_v", s_v)):
        if not 0.0 <= v <= 1.0:
            raise RangeError(f"{name} must lie in [0, 1], got {v}")
    if harmonic:
        return 0.0 if s_t + s_v == 0 else 2.0 * s_t * s_v / (s_t + s_v)
    return 0.5 * (s_t + s_v)


def similarity(gt: OccupancyGrid, pred: OccupancyGrid, harmonic: bool = False) -> SimilarityResult:
    s_t = spatial_occupancy_similarity(gt, pred)
    s_v = movement_similarity(motion_vector(gt), motion_vector(pred))
    return SimilarityResult(s_t, s_v, composite_score(s_t, s_v, harmonic))


def horizon_frames(seconds: float, fps: float) -> int:
    return int(round(seconds * fps))


def resolve_grid(g: GridConfig, gt_traj: np.ndarray, window_frames: int | None = None) -> GridConfig:
    """Turn an adaptive rule into a fixed grid using the ground-truth motion."""
    if not g.adaptive:
        return g
    delta = adaptive_cell_size(displacement_stats(gt_traj, window_frames), g)
    return GridConfig.fixed(*grid_from_cell_size(delta))


def evaluate_segment(
    gt: Segment,
    pred: Segment,
    grids,
    horizons=DEFAULT_HORIZONS_S,
    target: int = BALL,
    harmonic: bool = False,
    occupancy_sink: dict | None = None,
) -> list[EvalRow]:
    """Score ``pred`` against ``gt`` for every (grid, horizon) pair.

    Both segments start at the same frame. Adaptive grids are resolved from
    the ground-truth target motion over each horizon. When ``occupancy_sink``
    is given, the occupancy grids are stored in it under
    ``(grid label, horizon_s)``.
    """
    rows: list[EvalRow] = []
    gt_traj = gt.agent(target)
    pred_traj = pred.agent(target)
    for h_s in horizons:
        n = horizon_frames(h_s, gt.fps)
        if pred.n_frames < n:
            raise HorizonUnderrun(h_s, n, pred.n_frames)
        if gt.n_frames < n:
            raise HorizonUnderrun(h_s, n, gt.n_frames)
        for g in grids:
            fixed = resolve_grid(g, gt_traj[:n]) if g.adaptive else g
            occ_gt = build_occupancy(gt_traj, fixed, n)
            occ_pred = build_occupancy(pred_traj, fixed, n)
            res = similarity(occ_gt, occ_pred, harmonic)
            if occupancy_sink is not None:
                occupancy_sink[(g.label, float(h_s))] = (occ_gt, occ_pred)
            rows.append(
                EvalRow(
                    segment_id=gt.segment_id,
                    grid=g.label,
                    cells_l=fixed.cells_l,
                    cells_w=fixed.cells_w,
                    horizon_s=float(h_s),
                    horizon_frames=n,
                    s_t=res.s_t_occupancy,
                    s_v=res.s_v_movement,
                    score=res.score,
                )
            )
    return rows


def aggregate(rows) -> dict:
    """Population mean and standard deviation per (grid, horizon).

    Returns ``{(grid, horizon_s): {"n": k, "s_t": (mean, std), "s_v": ..., "score": ...}}``
    with keys in first-seen order.
    """
    rows = list(rows)
    if not rows:
        raise EmptyReport("no rows to aggregate")
    groups: dict[tuple[str, float], list[EvalRow]] = {}
    for r in rows:
        groups.setdefault((r.grid, r.horizon_s), []).append(r)
    summary = {}
    for key, members in groups.items():
        entry = {"n": len(members)}
        for metric in ("s_t", "s_v", "score"):
            vals = np.array([getattr(r, metric) for r in members])
            entry[metric] = (float(vals.mean()), float(vals.std()))
        summary[key] = entry
    return summary


def evaluate_dataset(
    pairs,
    grids,
    horizons=DEFAULT_HORIZONS_S,
    target: int = BALL,
    harmonic: bool = False,
    method: str = "model",
) -> EvalReport:
    """Evaluate ``(gt, pred)`` pairs, ordered by segment id, into a report."""
    pairs = sorted(pairs, key=lambda p: p[0].segment_id)
    rows: list[EvalRow] = []
    heat: dict = {}
    max_h = max(horizons)
    for gt, pred in pairs:
        sink: dict = {}
        rows.extend(evaluate_segment(gt, pred, grids, horizons, target, harmonic, sink))
        for g in grids:
            if g.adaptive:
                continue
            occ_gt, occ_pred = sink[(g.label, float(max_h))]
            acc = heat.setdefault(g.label, [np.zeros_like(occ_gt.counts), np.zeros_like(occ_pred.counts)])
            acc[0] += occ_gt.counts
            acc[1] += occ_pred.counts
    report = EvalReport(rows=rows, summary=aggregate(rows), method=method)
    report.heatmaps = {k: (v[0], v[1]) for k, v in heat.items()}
    return report
