"""Image-to-pitch homographies and ground-contact projection of detections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pitchtrace.errors import (
    DegenerateConfiguration,
    DegenerateInterpolation,
    InsufficientCorrespondences,
    OutOfBounds,
    ProjectionAtInfinity,
)
from pitchtrace.geometry import DEFAULT_PITCH, PitchSpec, pitch_to_normalized

SINGULAR_TOL = 1e-12
INFINITY_TOL = 1e-12
CLAMP_MARGIN_M = 0.5
MAX_CALIBRATION_GAP = 12


def _normalize_matrix(h: np.ndarray) -> np.ndarray:
    if abs(h[2, 2]) > SINGULAR_TOL:
        return h / h[2, 2]
    return h / np.linalg.norm(h)


@dataclass(frozen=True, eq=False)
class Homography:
    """A 3x3 projective map, stored with h[2,2] = 1 when possible."""

    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64)
        if h.shape != (3, 3) or not np.isfinite(h).all():
            raise DegenerateConfiguration(f"homography must be a finite 3x3 matrix, got shape {h.shape}")
        h = _normalize_matrix(h)
        if abs(np.linalg.det(h)) <= SINGULAR_TOL:
            raise DegenerateConfiguration("homography is singular")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]]))

    def __call__(self, p) -> np.ndarray:
        return project_point(self, p)


@dataclass(frozen=True)
class Correspondence:
    image_pt: tuple[float, float]
    pitch_pt: tuple[float, float]


@dataclass(frozen=True)
class Detection:
    frame_idx: int
    bbox: tuple[float, float, float, float]
    agent: int | None = None

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"malformed bounding box {self.bbox}")

    @property
    def ground_contact(self) -> tuple[float, float]:
        x0, _, x1, y1 = self.bbox
        return ((x0 + x1) / 2.0, y1)


def _pairs_to_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    src = np.array([c.image_pt for c in pairs], dtype=np.float64).reshape(-1, 2)
    dst = np.array([c.pitch_pt for c in pairs], dtype=np.float64).reshape(-1, 2)
    if not (np.isfinite(src).all() and np.isfinite(dst).all()):
        raise DegenerateConfiguration("non-finite correspondence coordinates")
    return src, dst


def _similarity_normalizer(pts: np.ndarray) -> np.ndarray:
    # Hartley: centroid to origin, mean distance sqrt(2)
    centroid = pts.mean(axis=0)
    mean_dist = np.linalg.norm(pts - centroid, axis=1).mean()
    if mean_dist <= 0:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def _apply(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ph = np.hstack([pts, np.ones((len(pts), 1))]) @ h.T
    return ph[:, :2] / ph[:, 2:3]


def estimate_homography(pairs) -> Homography:
    """Normalized direct linear transform from >= 4 image/pitch correspondences."""
    pairs = list(pairs)
    if len(pairs) < 4:
        raise InsufficientCorrespondences(f"need at least 4 correspondences, got {len(pairs)}")
    src, dst = _pairs_to_arrays(pairs)
    t_src = _similarity_normalizer(src)
    t_dst = _similarity_normalizer(dst)
    a = _apply(t_src, src)
    b = _apply(t_dst, dst)

    n = len(a)
    design = np.zeros((2 * n, 9))
    ones = np.ones(n)
    zeros = np.zeros((n, 3))
    ah = np.column_stack([a, ones])
    design[0::2] = np.hstack([ah, zeros, -b[:, :1] * ah])
    design[1::2] = np.hstack([zeros, ah, -b[:, 1:2] * ah])

    _, sv, vt = np.linalg.svd(design)
    # a valid configuration leaves exactly one null direction
    if sv[7] <= 1e-10 * sv[0]:
        raise DegenerateConfiguration("rank-deficient design matrix (collinear or repeated points)")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src
    try:
        return Homography(h)
    except DegenerateConfiguration as exc:
        raise DegenerateConfiguration(f"estimated homography is singular: {exc}") from exc


def project_point(hom: Homography, p) -> np.ndarray:
    """Apply ``hom`` to pixel point(s) of shape (..., 2)."""
    p = np.asarray(p, dtype=np.float64)
    flat = p.reshape(-1, 2)
    ph = np.hstack([flat, np.ones((len(flat), 1))]) @ hom.h.T
    w = ph[:, 2]
    if np.any(np.abs(w) <= INFINITY_TOL):
        raise ProjectionAtInfinity(f"point {tuple(flat[np.abs(w) <= INFINITY_TOL][0])} maps to infinity")
    return (ph[:, :2] / w[:, None]).reshape(p.shape)


def clamp_to_pitch(m, spec: PitchSpec = DEFAULT_PITCH, margin: float = CLAMP_MARGIN_M) -> np.ndarray:
    """Clamp metric points lying at most ``margin`` outside the pitch; raise beyond that."""
    m = np.array(m, dtype=np.float64)
    lo = np.array([0.0, 0.0])
    hi = np.array([spec.length_m, spec.width_m])
    if np.any(m < lo - margin) or np.any(m > hi + margin):
        raise OutOfBounds(tuple(m.reshape(-1, 2)[0]), f"projected point {tuple(m)} is more than {margin} m off the pitch")
    return np.clip(m, lo, hi)


def project_detection(hom: Homography, d: Detection, spec: PitchSpec = DEFAULT_PITCH) -> np.ndarray:
    metric = project_point(hom, d.ground_contact)
    return pitch_to_normalized(clamp_to_pitch(metric, spec), spec)


def interpolate_homography(ha: Homography, hb: Homography, t: float) -> Homography:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation fraction must be in [0, 1], got {t}")
    if t == 0.0:
        return ha
    if t == 1.0:
        return hb
    h = (1.0 - t) * ha.h + t * hb.h
    try:
        return Homography(h)
    except DegenerateConfiguration as exc:
        raise DegenerateInterpolation(f"interpolated homography at t={t} is singular") from exc


def reprojection_error(hom: Homography, pairs) -> float:
    """Root-mean-square distance between projected image points and their pitch points."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("reprojection_error needs at least one correspondence")
    src, dst = _pairs_to_arrays(pairs)
    diff = project_point(hom, src) - dst
    return float(np.sqrt(np.mean(np.sum(diff**2, axis=1))))


def fill_calibration_gaps(
    frames: dict[int, Homography], n_frames: int, max_gap: int = MAX_CALIBRATION_GAP
) -> list[Homography | None]:
    """Per-frame calibration for ``0..n_frames-1`` from the frames that have one.

    Interior gaps up to ``max_gap`` frames are interpolated between the
    bracketing calibrations; leading and trailing gaps up to ``max_gap`` reuse
    the nearest calibration. Longer gaps stay ``None`` so their detections can
    be marked unobserved.
    """
    out: list[Homography | None] = [frames.get(i) for i in range(n_frames)]
    known = sorted(i for i in frames if 0 <= i < n_frames)
    if not known:
        return out
    for a, b in zip(known, known[1:]):
        gap = b - a - 1
        if 0 < gap <= max_gap:
            for i in range(a + 1, b):
                out[i] = interpolate_homography(frames[a], frames[b], (i - a) / (b - a))
    first, last = known[0], known[-1]
    if first <= max_gap:
        for i in range(first):
            out[i] = frames[first]
    if n_frames - 1 - last <= max_gap:
        for i in range(last + 1, n_frames):
            out[i] = frames[last]
    return out
