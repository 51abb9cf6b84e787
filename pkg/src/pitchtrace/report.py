"""Writers for evaluation reports and their occupancy heatmaps."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from pitchtrace.errors import EmptyReport, ParseError
from pitchtrace.metrics import EvalReport, EvalRow, GridConfig, aggregate, cell_aspect

CSV_FIELDS = ("method", "segment_id", "grid", "cells_l", "cells_w", "horizon_s", "horizon_frames", "s_t", "s_v", "score")
HEATMAP_CELL_PX = 8

# fixed ramp from low to high relative visit frequency; empty cells use the background
_RAMP_STOPS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_RAMP_RGB = np.array(
    [
        [48, 18, 59],
        [40, 120, 230],
        [60, 200, 120],
        [245, 200, 40],
        [200, 30, 20],
    ],
    dtype=np.float64,
)
_BACKGROUND = (235, 235, 235)


def _fmt(v: float) -> str:
    return f"{v:.10f}"


def rows_to_csv(rows, method: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow(
            [method, r.segment_id, r.grid, r.cells_l, r.cells_w, f"{r.horizon_s:g}", r.horizon_frames, _fmt(r.s_t), _fmt(r.s_v), _fmt(r.score)]
        )
    return buf.getvalue()


def read_report_csv(path) -> list[tuple[str, EvalRow]]:
    """Parse a per-segment CSV back into ``(method, row)`` pairs."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_FIELDS:
            raise ParseError(1, f"expected header {','.join(CSV_FIELDS)}", path)
        out = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_FIELDS):
                raise ParseError(lineno, f"expected {len(CSV_FIELDS)} fields, got {len(rec)}", path)
            try:
                row = EvalRow(
                    segment_id=rec[1],
                    grid=rec[2],
                    cells_l=int(rec[3]),
                    cells_w=int(rec[4]),
                    horizon_s=float(rec[5]),
                    horizon_frames=int(rec[6]),
                    s_t=float(rec[7]),
                    s_v=float(rec[8]),
                    score=float(rec[9]),
                )
            except ValueError as exc:
                raise ParseError(lineno, str(exc), path) from None
            out.append((rec[0], row))
    return out


def _proportion(grid_label: str) -> str:
    try:
        g = GridConfig.parse(grid_label)
    except ValueError:
        return "-"
    return "adaptive" if g.adaptive else f"{cell_aspect(g):.4f}"


def summary_markdown(method_rows: list[tuple[str, EvalRow]]) -> str:
    """Grid x method rows, horizon x {Score, S_t, S_v} columns, values in percent."""
    if not method_rows:
        raise EmptyReport("no rows to summarize")
    methods: dict[str, list[EvalRow]] = {}
    for m, r in method_rows:
        methods.setdefault(m, []).append(r)
    horizons = sorted({r.horizon_s for _, r in method_rows})
    grids: list[str] = []
    for _, r in method_rows:
        if r.grid not in grids:
            grids.append(r.grid)

    head = ["Grid", "Proportion", "Method"]
    for h in horizons:
        head += [f"Score {h:g}s", f"S_t {h:g}s", f"S_v {h:g}s"]
    lines = ["| " + " | ".join(head) + " |", "|" + "|".join("---" for _ in head) + "|"]
    summaries = {m: aggregate(rows) for m, rows in methods.items()}
    for grid in grids:
        for m in sorted(summaries):
            cells = [grid, _proportion(grid), m]
            for h in horizons:
                entry = summaries[m].get((grid, h))
                if entry is None:
                    cells += ["-"] * 3
                else:
                    cells += [f"{100 * entry[k][0]:.2f}" for k in ("score", "s_t", "s_v")]
            lines.append("| " + " | ".join(cells) + " |")
    counts = ", ".join(f"{m}: {len({r.segment_id for r in rows})}" for m, rows in sorted(methods.items()))
    return "\n".join(["# Imitation fidelity", "", *lines, "", f"Segments per method: {counts}. Values are means in percent.", ""])


def heatmap_ppm(counts: np.ndarray, cell_px: int = HEATMAP_CELL_PX) -> bytes:
    """Binary PPM of an (H, W) count grid, +y at the top, scaled by the grid maximum."""
    counts = np.asarray(counts, dtype=np.float64)
    peak = counts.max() if counts.size else 0.0
    rel = counts / peak if peak > 0 else np.zeros_like(counts)
    rgb = np.stack([np.interp(rel, _RAMP_STOPS, _RAMP_RGB[:, c]) for c in range(3)], axis=-1)
    rgb[counts <= 0] = _BACKGROUND
    img = np.rint(rgb[::-1]).astype(np.uint8)
    img = np.repeat(np.repeat(img, cell_px, axis=0), cell_px, axis=1)
    h, w = img.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def _safe(label: str) -> str:
    return label.replace(":", "-").replace(",", "_")


def emit_report(report: EvalReport, out_dir) -> list[Path]:
    """Write ``<method>.csv``, ``<method>.md`` and per-grid gt/pred heatmaps into ``out_dir``."""
    if not report.rows:
        raise EmptyReport("report has no rows")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out / f"{report.method}.csv"
    csv_path.write_text(rows_to_csv(report.rows, report.method), encoding="utf-8")
    md_path = out / f"{report.method}.md"
    md_path.write_text(summary_markdown([(report.method, r) for r in report.rows]), encoding="utf-8")
    written += [csv_path, md_path]
    for label, (gt, pred) in sorted(report.heatmaps.items()):
        for tag, counts in (("gt", gt), ("pred", pred)):
            p = out / f"{report.method}_{_safe(label)}_{tag}.ppm"
            p.write_bytes(heatmap_ppm(counts))
            written.append(p)
    return written
