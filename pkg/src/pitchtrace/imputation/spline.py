"""Short-gap filling with cubic Hermite segments."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from pitchtrace.errors import DimensionError, InsufficientObservations
from pitchtrace.geometry import BOUNDS_EPS, X_MAX, Y_MAX

SPLINE_MAX_GAP = 4


class Provenance(enum.IntEnum):
    OBSERVED = 0
    SPLINE = 1
    MODEL = 2
    UNRESOLVED = 3


@dataclass(frozen=True, eq=False)
class ObservedSequence:
    """Partially observed trajectories: ``x_obs`` is (N, T, 2), ``mask`` is (N, T)."""

    x_obs: np.ndarray
    mask: np.ndarray
    fps: float = 25.0

    def __post_init__(self):
        x = np.array(self.x_obs, dtype=np.float64)
        m = np.array(self.mask, dtype=bool)
        if x.ndim != 3 or x.shape[-1] != 2 or m.shape != x.shape[:2] or x.shape[0] < 1:
            raise DimensionError(f"x_obs must be (N, T, 2) with mask (N, T); got {x.shape} and {m.shape}")
        x = np.where(m[..., None], x, 0.0)
        seen = x[m]
        if seen.size and (
            not np.isfinite(seen).all()
            or np.any(np.abs(seen[:, 0]) > X_MAX + BOUNDS_EPS)
            or np.any(np.abs(seen[:, 1]) > Y_MAX + BOUNDS_EPS)
        ):
            raise ValueError("observed entries must be finite and inside normalized bounds")
        x.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "x_obs", x)
        object.__setattr__(self, "mask", m)

    @property
    def n_agents(self) -> int:
        return self.x_obs.shape[0]

    @property
    def n_frames(self) -> int:
        return self.x_obs.shape[1]

    @classmethod
    def from_segment(cls, segment) -> "ObservedSequence":
        return cls(np.swapaxes(segment.positions, 0, 1), segment.observed.T, segment.fps)

    @classmethod
    def from_truth(cls, x_true, mask, fps: float = 25.0) -> "ObservedSequence":
        return cls(x_true, mask, fps)


@dataclass(frozen=True, eq=False)
class CompletedSequence:
    x_full: np.ndarray
    provenance: np.ndarray

    @property
    def resolved(self) -> np.ndarray:
        return self.provenance != Provenance.UNRESOLVED


def internal_gaps(mask_row: np.ndarray) -> list[tuple[int, int]]:
    """``(a, b)`` observed knot pairs enclosing each interior run of missing frames."""
    idx = np.flatnonzero(mask_row)
    return [(int(a), int(b)) for a, b in zip(idx[:-1], idx[1:]) if b - a > 1]


def knot_velocities(t: np.ndarray, x: np.ndarray, a: int, b: int, prev: int | None, nxt: int | None):
    """Velocity estimates at knots ``a`` and ``b`` from neighbouring observed frames.

    Each is the derivative of the quadratic through three consecutive observed
    frames (previous/knot/other knot); without a previous or next observation
    the chord slope is used. Linear and quadratic motion are reproduced exactly.
    """
    chord = (x[b] - x[a]) / (t[b] - t[a])
    if prev is None:
        v_a = chord
    else:
        h1, h2 = t[a] - t[prev], t[b] - t[a]
        back = (x[a] - x[prev]) / h1
        v_a = (h2 * back + h1 * chord) / (h1 + h2)
    if nxt is None:
        v_b = chord
    else:
        h1, h2 = t[b] - t[a], t[nxt] - t[b]
        fwd = (x[nxt] - x[b]) / h2
        v_b = (h2 * chord + h1 * fwd) / (h1 + h2)
    return v_a, v_b


def hermite(s: np.ndarray, p0, p1, m0, m1, h: float) -> np.ndarray:
    """Cubic Hermite at unit parameter ``s``; ``m0``/``m1`` are per-frame velocities over span ``h``."""
    s = np.asarray(s, dtype=np.float64)[:, None]
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1


def spline_impute(seq: ObservedSequence, max_gap: int = SPLINE_MAX_GAP) -> CompletedSequence:
    """Fill interior gaps of at most ``max_gap`` frames; longer gaps stay unresolved."""
    x = np.array(seq.x_obs)
    mask = seq.mask
    prov = np.where(mask, Provenance.OBSERVED, Provenance.UNRESOLVED).astype(np.int8)
    short = [i for i in range(seq.n_agents) if mask[i].sum() < 2]
    if short:
        raise InsufficientObservations(short)
    t = np.arange(seq.n_frames, dtype=np.float64)
    for i in range(seq.n_agents):
        idx = np.flatnonzero(mask[i])
        for k in range(len(idx) - 1):
            a, b = int(idx[k]), int(idx[k + 1])
            gap = b - a - 1
            if gap < 1 or gap > max_gap:
                continue
            prev = int(idx[k - 1]) if k > 0 else None
            nxt = int(idx[k + 2]) if k + 2 < len(idx) else None
            v_a, v_b = knot_velocities(t, x[i], a, b, prev, nxt)
            s = (t[a + 1 : b] - a) / (b - a)
            x[i, a + 1 : b] = hermite(s, x[i, a], x[i, b], v_a, v_b, b - a)
            prov[i, a + 1 : b] = Provenance.SPLINE
    return CompletedSequence(x, prov)
