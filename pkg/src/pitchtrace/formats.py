"""Plain-text file formats: segments, calibrations, correspondences, detections.

Segment file::

    # pitchtrace segment v1
    # segment_id: WingAttack-0007
    # match_id: M003
    # fps: 25.0
    # phase: Attack
    # outcome: Successful
    frame_idx,agent_id,x,y,observed
    0,0,-0.712345,0.103000,1
    ...

Rows are sorted by (frame_idx, agent_id) and every frame lists all 23
agents. Coordinates carry 6 fractional digits, so segments whose positions
are already on that grid (see :func:`quantize`) round-trip exactly.
"""

from __future__ import annotations

import math
import os
from pathlib import Path

import numpy as np

from pitchtrace.errors import ParseError
from pitchtrace.geometry import N_AGENTS, Outcome, Phase, PhaseLabel, Segment
from pitchtrace.projection import Correspondence, Detection, Homography

DECIMALS = 6
SEGMENT_MAGIC = "# pitchtrace segment v1"
SEGMENT_COLUMNS = "frame_idx,agent_id,x,y,observed"
SEGMENT_SUFFIX = ".seg.csv"
_HEADER_KEYS = ("segment_id", "match_id", "fps", "phase", "outcome")


def quantize(a) -> np.ndarray:
    """Snap values to the 6-decimal grid used by the segment format."""
    return np.rint(np.asarray(a, dtype=np.float64) * 10**DECIMALS) / 10**DECIMALS


def _fmt(v: float) -> str:
    return f"{v:.{DECIMALS}f}"


def segment_to_text(s: Segment) -> str:
    for key in ("segment_id", "match_id"):
        value = getattr(s, key)
        if not value or any(c in value for c in "\r\n"):
            raise ValueError(f"{key} must be a non-empty single-line string, got {value!r}")
    outcome = s.phase.outcome.value if s.phase.outcome is not None else "none"
    lines = [
        SEGMENT_MAGIC,
        f"# segment_id: {s.segment_id}",
        f"# match_id: {s.match_id}",
        f"# fps: {float(s.fps)!r}",
        f"# phase: {s.phase.phase.value}",
        f"# outcome: {outcome}",
        SEGMENT_COLUMNS,
    ]
    pos, obs = s.positions, s.observed
    for t, f in enumerate(s.frame_idx):
        for a in range(pos.shape[1]):
            x, y = pos[t, a]
            lines.append(f"{int(f)},{a},{_fmt(x)},{_fmt(y)},{int(obs[t, a])}")
    return "\n".join(lines) + "\n"


def write_segment(path, s: Segment) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(segment_to_text(s), encoding="utf-8")
    return path


def _parse_int(tok: str, line: int, what: str, path) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(line, f"{what} is not an integer: {tok!r}", path) from None


def _parse_float(tok: str, line: int, what: str, path) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(line, f"{what} is not a number: {tok!r}", path) from None
    if not math.isfinite(v):
        raise ParseError(line, f"{what} is not finite: {tok!r}", path)
    return v


def parse_segment(text: str, path=None) -> Segment:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SEGMENT_MAGIC:
        raise ParseError(1, f"missing header line {SEGMENT_MAGIC!r}", path)
    header: dict[str, str] = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        key, sep, value = lines[i][1:].partition(":")
        if not sep:
            raise ParseError(i + 1, f"malformed header line {lines[i]!r}", path)
        header[key.strip()] = value.strip()
        i += 1
    for key in _HEADER_KEYS:
        if key not in header:
            raise ParseError(i, f"header field '{key}' missing", path)
    if i >= len(lines) or lines[i].strip() != SEGMENT_COLUMNS:
        raise ParseError(i + 1, f"expected column header {SEGMENT_COLUMNS!r}", path)
    try:
        fps = float(header["fps"])
        phase = Phase(header["phase"])
        outcome = None if header["outcome"] == "none" else Outcome(header["outcome"])
        label = PhaseLabel(phase, outcome)
    except ValueError as exc:
        raise ParseError(i, f"bad header: {exc}", path) from None
    if not (math.isfinite(fps) and fps > 0):
        raise ParseError(i, f"fps must be positive, got {header['fps']!r}", path)

    frames: list[int] = []
    xy: list[list[tuple[float, float]]] = []
    obs: list[list[bool]] = []
    prev: tuple[int, int] | None = None
    for j in range(i + 1, len(lines)):
        ln = j + 1
        raw = lines[j].strip()
        if not raw:
            continue
        tok = raw.split(",")
        if len(tok) != 5:
            raise ParseError(ln, f"expected 5 fields, got {len(tok)}", path)
        f = _parse_int(tok[0], ln, "frame_idx", path)
        a = _parse_int(tok[1], ln, "agent_id", path)
        if not 0 <= a < N_AGENTS:
            raise ParseError(ln, f"agent_id {a} outside 0..{N_AGENTS - 1}", path)
        x = _parse_float(tok[2], ln, "x", path)
        y = _parse_float(tok[3], ln, "y", path)
        if tok[4] not in ("0", "1"):
            raise ParseError(ln, f"observed flag must be 0 or 1, got {tok[4]!r}", path)
        key = (f, a)
        if prev is not None:
            if key == prev:
                raise ParseError(ln, "duplicate record", path)
            if key < prev:
                raise ParseError(ln, f"rows not sorted by (frame_idx, agent_id): {key} after {prev}", path)
        if a == 0:
            if frames and len(xy[-1]) != N_AGENTS:
                raise ParseError(ln, f"frame {frames[-1]} has {len(xy[-1])} agents, expected {N_AGENTS}", path)
            frames.append(f)
            xy.append([])
            obs.append([])
        elif not frames or frames[-1] != f or len(xy[-1]) != a:
            raise ParseError(ln, f"frame {f} is missing agent {len(xy[-1]) if frames and frames[-1] == f else 0}", path)
        xy[-1].append((x, y))
        obs[-1].append(tok[4] == "1")
        prev = key
    if not frames:
        raise ParseError(len(lines), "segment has no rows", path)
    if len(xy[-1]) != N_AGENTS:
        raise ParseError(len(lines), f"frame {frames[-1]} has {len(xy[-1])} agents, expected {N_AGENTS}", path)
    return Segment(
        segment_id=header["segment_id"],
        match_id=header["match_id"],
        fps=fps,
        phase=label,
        positions=np.array(xy, dtype=np.float64),
        frame_idx=np.array(frames, dtype=np.int64),
        observed=np.array(obs, dtype=bool),
    )


def read_segment(path) -> Segment:
    path = Path(path)
    return parse_segment(path.read_text(encoding="utf-8"), path)


def segment_filename(segment_id: str) -> str:
    return f"{segment_id}{SEGMENT_SUFFIX}"


def list_segment_files(directory) -> list[Path]:
    return sorted(Path(directory).glob(f"*{SEGMENT_SUFFIX}"))


def read_segment_dir(directory) -> list[Segment]:
    return [read_segment(p) for p in list_segment_files(directory)]


def write_segment_dir(directory, segments) -> list[Path]:
    return [write_segment(Path(directory) / segment_filename(s.segment_id), s) for s in segments]


def _rows(path):
    path = Path(path)
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        s = line.strip()
        if s and not s.startswith("#"):
            yield n, s.split(",")


def read_correspondences(path) -> dict[int, list[Correspondence]]:
    """Keypoint rows ``frame,u,v,X,Y`` grouped by frame (pixels -> metres)."""
    out: dict[int, list[Correspondence]] = {}
    for n, tok in _rows(path):
        if tok[0] == "frame":
            continue
        if len(tok) != 5:
            raise ParseError(n, f"expected 5 fields (frame,u,v,X,Y), got {len(tok)}", path)
        f = _parse_int(tok[0], n, "frame", path)
        u, v, x, y = (_parse_float(t, n, name, path) for t, name in zip(tok[1:], "uvXY"))
        out.setdefault(f, []).append(Correspondence((u, v), (x, y)))
    return out


def write_calibration(path, calib: dict[int, Homography]) -> Path:
    """One line per frame: ``frame,h00,h01,...,h22`` (row-major)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["frame,h00,h01,h02,h10,h11,h12,h20,h21,h22"]
    for f in sorted(calib):
        lines.append(",".join([str(f)] + [repr(float(v)) for v in calib[f].h.ravel()]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_calibration(path) -> dict[int, Homography]:
    out: dict[int, Homography] = {}
    for n, tok in _rows(path):
        if tok[0] == "frame":
            continue
        if len(tok) != 10:
            raise ParseError(n, f"expected 10 fields (frame + 9 matrix entries), got {len(tok)}", path)
        f = _parse_int(tok[0], n, "frame", path)
        vals = [_parse_float(t, n, "matrix entry", path) for t in tok[1:]]
        try:
            out[f] = Homography(np.array(vals).reshape(3, 3))
        except Exception as exc:
            raise ParseError(n, f"invalid homography: {exc}", path) from None
    return out


def read_detections(path) -> list[Detection]:
    """Rows ``frame,agent,x_min,y_min,x_max,y_max``; agent may be empty or -1 when unknown."""
    out: list[Detection] = []
    for n, tok in _rows(path):
        if tok[0] == "frame":
            continue
        if len(tok) != 6:
            raise ParseError(n, f"expected 6 fields, got {len(tok)}", path)
        f = _parse_int(tok[0], n, "frame", path)
        agent = None if tok[1] in ("", "-1") else _parse_int(tok[1], n, "agent", path)
        if agent is not None and not 0 <= agent < N_AGENTS:
            raise ParseError(n, f"agent {agent} outside 0..{N_AGENTS - 1}", path)
        box = tuple(_parse_float(t, n, "bbox", path) for t in tok[2:])
        try:
            out.append(Detection(f, box, agent))
        except ValueError as exc:
            raise ParseError(n, str(exc), path) from None
    return out


def default_output_dir() -> Path:
    return Path(os.environ.get("PITCHTRACE_OUTPUT_DIR", "pitchtrace-out"))
