"""Pitch coordinate conventions and the segment data model, plus displacement statistics.

Normalized pitch coordinates put the centre spot at the origin with
``x`` in [-1, 1] along the touchlines and ``y`` in [-0.42, 0.42] along the
goal lines. Metric coordinates have the origin at a corner flag, ``x`` in
[0, length_m] and ``y`` in [0, width_m].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from pitchtrace.errors import InsufficientFrames, OutOfBounds

X_MIN, X_MAX = -1.0, 1.0
Y_MIN, Y_MAX = -0.42, 0.42
X_EXTENT = X_MAX - X_MIN
Y_EXTENT = 0.84

N_PLAYERS = 22
N_AGENTS = 23
BALL = 22
TEAM_A = tuple(range(0, 11))
TEAM_B = tuple(range(11, 22))

# absorbs decimal round-off when a file stores 0.42 or 1.0
BOUNDS_EPS = 1e-9


@dataclass(frozen=True)
class PitchSpec:
    length_m: float = 105.0
    width_m: float = 68.0

    def __post_init__(self):
        if not (self.length_m > 0 and self.width_m > 0):
            raise ValueError(f"pitch dimensions must be positive, got {self.length_m}x{self.width_m}")


DEFAULT_PITCH = PitchSpec()


class Phase(str, enum.Enum):
    ATTACK = "Attack"
    DEFENSE = "Defense"
    TRANSITION = "Transition"


class Outcome(str, enum.Enum):
    SUCCESSFUL = "Successful"
    FAILED = "Failed"


@dataclass(frozen=True)
class PhaseLabel:
    phase: Phase
    outcome: Outcome | None = None

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase(self.phase))
        if self.outcome is not None:
            object.__setattr__(self, "outcome", Outcome(self.outcome))
        needs_outcome = self.phase in (Phase.ATTACK, Phase.DEFENSE)
        if needs_outcome != (self.outcome is not None):
            raise ValueError(f"outcome must be set iff phase is Attack/Defense: {self.phase}, {self.outcome}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Segment:
    """A possession clip.

    ``positions`` has shape (T, 23, 2) in normalized units; ``observed`` is a
    (T, 23) boolean mask and defaults to fully observed. ``frame_idx`` holds
    the source frame numbers and defaults to ``0..T-1``.

    The constructor only coerces types; use :func:`validate_segment` to check
    the invariants.
    """

    segment_id: str
    match_id: str
    fps: float
    phase: PhaseLabel
    positions: np.ndarray
    frame_idx: np.ndarray | None = None
    observed: np.ndarray | None = None

    def __post_init__(self):
        pos = _frozen(np.array(self.positions, dtype=np.float64))
        object.__setattr__(self, "positions", pos)
        n_frames = pos.shape[0] if pos.ndim >= 1 else 0
        fidx = np.arange(n_frames) if self.frame_idx is None else np.array(self.frame_idx, dtype=np.int64)
        object.__setattr__(self, "frame_idx", _frozen(fidx))
        if self.observed is None:
            obs = np.ones(pos.shape[:2], dtype=bool) if pos.ndim == 3 else np.ones((n_frames, 0), dtype=bool)
        else:
            obs = np.array(self.observed, dtype=bool)
        object.__setattr__(self, "observed", _frozen(obs))

    @property
    def n_frames(self) -> int:
        return int(self.positions.shape[0])

    @property
    def ball(self) -> np.ndarray:
        return self.positions[:, BALL, :]

    def agent(self, index: int) -> np.ndarray:
        return self.positions[:, index, :]

    def head(self, n_frames: int) -> "Segment":
        return self.replace(
            positions=self.positions[:n_frames],
            frame_idx=self.frame_idx[:n_frames],
            observed=self.observed[:n_frames],
        )

    def replace(self, **changes) -> "Segment":
        fields = dict(
            segment_id=self.segment_id,
            match_id=self.match_id,
            fps=self.fps,
            phase=self.phase,
            positions=self.positions,
            frame_idx=self.frame_idx,
            observed=self.observed,
        )
        fields.update(changes)
        return Segment(**fields)

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return (
            self.segment_id == other.segment_id
            and self.match_id == other.match_id
            and self.fps == other.fps
            and self.phase == other.phase
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.frame_idx, other.frame_idx)
            and np.array_equal(self.observed, other.observed)
        )

    __hash__ = None


@dataclass(frozen=True)
class MotionStats:
    s_t: float
    window_frames: int


def _check_normalized(q: np.ndarray) -> None:
    bad = (
        ~np.isfinite(q).all(axis=-1)
        | (q[..., 0] < X_MIN - BOUNDS_EPS)
        | (q[..., 0] > X_MAX + BOUNDS_EPS)
        | (q[..., 1] < Y_MIN - BOUNDS_EPS)
        | (q[..., 1] > Y_MAX + BOUNDS_EPS)
    )
    if np.any(bad):
        raise OutOfBounds(tuple(q[bad][0]), f"normalized point {tuple(q[bad][0])} outside [-1,1]x[-0.42,0.42]")


def pitch_to_normalized(p, spec: PitchSpec = DEFAULT_PITCH) -> np.ndarray:
    """Map metric point(s) of shape (..., 2) to normalized coordinates."""
    p = np.asarray(p, dtype=np.float64)
    bad = (
        ~np.isfinite(p).all(axis=-1)
        | (p[..., 0] < 0)
        | (p[..., 0] > spec.length_m)
        | (p[..., 1] < 0)
        | (p[..., 1] > spec.width_m)
    )
    if np.any(bad):
        c = tuple(p[bad][0])
        raise OutOfBounds(c, f"pitch point {c} outside [0,{spec.length_m}]x[0,{spec.width_m}]")
    out = np.empty_like(p)
    out[..., 0] = 2.0 * (p[..., 0] / spec.length_m) - 1.0
    out[..., 1] = Y_EXTENT * (p[..., 1] / spec.width_m) - 0.42
    return out


def normalized_to_pitch(q, spec: PitchSpec = DEFAULT_PITCH) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    _check_normalized(q)
    out = np.empty_like(q)
    out[..., 0] = (q[..., 0] + 1.0) / 2.0 * spec.length_m
    out[..., 1] = (q[..., 1] + 0.42) / Y_EXTENT * spec.width_m
    return out


def in_bounds(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return (
        np.isfinite(q).all(axis=-1)
        & (q[..., 0] >= X_MIN - BOUNDS_EPS)
        & (q[..., 0] <= X_MAX + BOUNDS_EPS)
        & (q[..., 1] >= Y_MIN - BOUNDS_EPS)
        & (q[..., 1] <= Y_MAX + BOUNDS_EPS)
    )


def clamp_normalized(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    out = np.empty_like(q)
    out[..., 0] = np.clip(q[..., 0], X_MIN, X_MAX)
    out[..., 1] = np.clip(q[..., 1], Y_MIN, Y_MAX)
    return out


def validate_segment(s: Segment) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems: list[str] = []
    pos = s.positions
    if not (np.isfinite(s.fps) and s.fps > 0):
        problems.append(f"fps must be positive, got {s.fps}")
    if pos.ndim != 3 or pos.shape[-1] != 2:
        problems.append(f"positions must have shape (T, 23, 2), got {pos.shape}")
        return problems
    n_frames, n_agents = pos.shape[:2]
    if n_frames == 0:
        problems.append("segment has no frames")
        return problems
    if n_agents != N_AGENTS:
        kind = "missing agent" if n_agents < N_AGENTS else "extra agent"
        problems.append(f"{kind}: frames hold {n_agents} entries, expected {N_AGENTS}")
    if s.frame_idx.shape != (n_frames,):
        problems.append(f"frame index count {s.frame_idx.shape} does not match {n_frames} frames")
    elif n_frames > 1 and np.any(np.diff(s.frame_idx) <= 0):
        t = int(np.argmax(np.diff(s.frame_idx) <= 0)) + 1
        problems.append(f"non-monotonic time at frame position {t}")
    if s.observed.shape != (n_frames, n_agents):
        problems.append(f"observation mask shape {s.observed.shape} does not match {(n_frames, n_agents)}")
    nan = np.isnan(pos).any(axis=-1)
    if nan.any():
        t, a = np.argwhere(nan)[0]
        problems.append(f"NaN coordinate at frame {t}, agent {a}")
    oob = ~in_bounds(pos) & ~nan
    if oob.any():
        t, a = np.argwhere(oob)[0]
        problems.append(
            f"bounds violation: {int(oob.sum())} points, first at frame {t}, agent {a}: {tuple(pos[t, a])}"
        )
    return problems


def displacement_stats(traj, window_frames: int | None = None) -> MotionStats:
    """Average per-frame displacement over the trailing ``window_frames`` frames.

    ``window_frames`` defaults to the full trajectory. A window of one frame
    contains no displacement and is widened to the last step.
    """
    traj = np.asarray(traj, dtype=np.float64)
    if traj.ndim != 2 or traj.shape[0] < 2:
        raise InsufficientFrames(f"need at least 2 frames, got {traj.shape[0] if traj.ndim else 0}")
    if window_frames is None:
        window_frames = traj.shape[0]
    if window_frames < 1 or window_frames > traj.shape[0]:
        raise ValueError(f"window_frames must be in [1, {traj.shape[0]}], got {window_frames}")
    tail = traj[-max(window_frames, 2):]
    steps = np.linalg.norm(np.diff(tail, axis=0), axis=1)
    return MotionStats(s_t=float(steps.mean()), window_frames=int(window_frames))
