"""Closed-loop rollout of displacement policies and policy evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from pitchtrace.errors import DataError, HorizonUnderrun, PolicyFault
from pitchtrace.formats import quantize
from pitchtrace.geometry import N_AGENTS, Phase, PhaseLabel, Segment, clamp_normalized, in_bounds
from pitchtrace.metrics import DEFAULT_HORIZONS_S, EvalReport, evaluate_dataset, horizon_frames


@dataclass(frozen=True, eq=False)
class Context:
    """Observed history handed to a policy: ``frames`` is (K, 23, 2), oldest first.

    ``step`` counts frames predicted so far in the current rollout.
    """

    frames: np.ndarray
    fps: float = 25.0
    step: int = 0

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim == 2:
            f = f[None]
        if f.ndim != 3 or f.shape[0] < 1 or f.shape[1:] != (N_AGENTS, 2):
            raise DataError(f"context frames must be (K>=1, {N_AGENTS}, 2), got {f.shape}")
        if not in_bounds(f).all():
            raise DataError("context frames contain out-of-bounds or non-finite points")
        object.__setattr__(self, "frames", f)

    @property
    def last(self) -> np.ndarray:
        return self.frames[-1]

    @classmethod
    def _unchecked(cls, frames: np.ndarray, fps: float, step: int) -> "Context":
        # rollout-internal: frames are already clamped to the pitch
        ctx = object.__new__(cls)
        object.__setattr__(ctx, "frames", frames)
        object.__setattr__(ctx, "fps", fps)
        object.__setattr__(ctx, "step", step)
        return ctx

    @classmethod
    def from_segment(cls, s: Segment, k: int = 1, start: int = 0) -> "Context":
        lo = max(0, start - k + 1)
        return cls(s.positions[lo : start + 1], s.fps)


@runtime_checkable
class Policy(Protocol):
    def step(self, ctx: Context) -> np.ndarray:
        """Per-agent displacement (23, 2) for the next frame, in normalized units."""
        ...


@dataclass(frozen=True)
class RolloutConfig:
    horizon_frames: int = 250
    context_lengths: tuple[int, ...] = (1, 10, 25, 50)
    predict_frames: int = 25
    closed_loop_steps: int = 5

    def __post_init__(self):
        if self.horizon_frames < 1 or self.predict_frames < 1:
            raise ValueError("horizon_frames and predict_frames must be >= 1")
        if not self.context_lengths or min(self.context_lengths) < 1:
            raise ValueError("context lengths must be >= 1")
        if self.closed_loop_steps < 0:
            raise ValueError("closed_loop_steps must be >= 0")

    @property
    def context_max(self) -> int:
        return max(self.context_lengths)


def rollout(
    policy: Policy,
    ctx: Context,
    horizon_frames: int,
    segment_id: str = "rollout",
    match_id: str = "rollout",
    phase: PhaseLabel = PhaseLabel(Phase.TRANSITION),
    first_frame_idx: int | None = None,
) -> Segment:
    """Autoregressively apply ``policy`` for ``horizon_frames`` steps.

    Each predicted frame is clamped to the pitch, snapped to the 6-decimal
    file grid and appended to the context. The returned segment holds only
    the predicted frames.
    """
    if horizon_frames < 1:
        raise ValueError("horizon_frames must be >= 1")
    k0 = ctx.frames.shape[0]
    history = np.empty((k0 + horizon_frames, N_AGENTS, 2))
    history[:k0] = ctx.frames
    if hasattr(policy, "reset"):
        policy.reset()
    for t in range(horizon_frames):
        view = Context._unchecked(history[: k0 + t], ctx.fps, t)
        disp = np.asarray(policy.step(view), dtype=np.float64)
        if disp.shape != (N_AGENTS, 2) or not np.isfinite(disp).all():
            raise PolicyFault(t)
        history[k0 + t] = quantize(clamp_normalized(history[k0 + t - 1] + disp))
    start = k0 if first_frame_idx is None else first_frame_idx
    return Segment(
        segment_id=segment_id,
        match_id=match_id,
        fps=ctx.fps,
        phase=phase,
        positions=history[k0:],
        frame_idx=np.arange(start, start + horizon_frames),
    )


class ZeroPolicy:
    name = "zero"

    def step(self, ctx: Context) -> np.ndarray:
        return np.zeros((N_AGENTS, 2))


class ConstantVelocityPolicy:
    """Repeat the last observed frame-to-frame displacement (zero with a single frame)."""

    name = "constant-velocity"

    def step(self, ctx: Context) -> np.ndarray:
        return constant_velocity_policy(ctx)


def constant_velocity_policy(ctx: Context) -> np.ndarray:
    if ctx.frames.shape[0] < 2:
        return np.zeros((N_AGENTS, 2))
    return ctx.frames[-1] - ctx.frames[-2]


class ReplayPolicy:
    """Re-emit recorded motion: steers each agent onto ``gt`` frame ``start + step + 1``."""

    name = "replay"

    def __init__(self, gt: Segment, start: int = 0):
        self.gt = gt
        self.start = start

    def step(self, ctx: Context) -> np.ndarray:
        i = self.start + ctx.step + 1
        if i >= self.gt.n_frames:
            return np.zeros((N_AGENTS, 2))
        return self.gt.positions[i] - ctx.last


class RandomWalkPolicy:
    """Isotropic Gaussian steps; restarts its stream on every rollout."""

    name = "random-walk"

    def __init__(self, sigma: float = 0.01, seed: int = 0):
        self.sigma = sigma
        self.seed = seed
        self._episode = 0
        self.reset()

    def reset(self) -> None:
        self._rng = np.random.default_rng([self.seed, self._episode])
        self._episode += 1

    def step(self, ctx: Context) -> np.ndarray:
        return self._rng.normal(0.0, self.sigma, (N_AGENTS, 2))


def predict_segment(policy_for, gt: Segment, n_frames: int) -> Segment:
    """First-frame protocol: context = frame 0 of ``gt``; prediction covers frames 0..n-1.

    ``policy_for(gt)`` returns the policy for this segment so oracle
    policies can bind to it.
    """
    ctx = Context.from_segment(gt, k=1)
    pred = rollout(
        policy_for(gt),
        ctx,
        n_frames - 1,
        segment_id=gt.segment_id,
        match_id=gt.match_id,
        phase=gt.phase,
        first_frame_idx=int(gt.frame_idx[0]) + 1,
    )
    return Segment(
        segment_id=gt.segment_id,
        match_id=gt.match_id,
        fps=gt.fps,
        phase=gt.phase,
        positions=np.concatenate([gt.positions[:1], pred.positions]),
        frame_idx=np.concatenate([gt.frame_idx[:1], pred.frame_idx]),
    )


def _policy_factory(policy):
    if isinstance(policy, type) or not hasattr(policy, "step"):
        return policy  # already a factory: gt -> policy
    return lambda gt: policy


def evaluate_policy(
    policy,
    testset,
    grids,
    horizons=DEFAULT_HORIZONS_S,
    method: str | None = None,
    harmonic: bool = False,
) -> EvalReport:
    """Roll out from each segment's first frame to the longest horizon and score.

    ``policy`` is either a policy instance or a callable mapping a
    ground-truth segment to a policy (used by :class:`ReplayPolicy`).
    """
    factory = _policy_factory(policy)
    pairs = []
    for gt in testset:
        n = max(horizon_frames(h, gt.fps) for h in horizons)
        if gt.n_frames < n:
            raise HorizonUnderrun(max(horizons), n, gt.n_frames)
        pairs.append((gt, predict_segment(factory, gt, n)))
    name = method or getattr(policy, "name", "policy")
    return evaluate_dataset(pairs, grids, horizons, harmonic=harmonic, method=name)
