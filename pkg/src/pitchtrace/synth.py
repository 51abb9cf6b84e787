"""Scripted synthetic possession clips for desk-scale experiments.

Team A (agents 0-10) always attacks towards +x; team B (11-21) defends the
right-hand goal. The ball follows a scenario-specific chain of waypoints,
easing in and out of each one like a pass being received, and both teams
shift with the ball around a 4-4-2 shape.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from pitchtrace.formats import quantize
from pitchtrace.geometry import (
    BALL,
    N_AGENTS,
    X_MAX,
    X_MIN,
    Y_MAX,
    Y_MIN,
    Outcome,
    Phase,
    PhaseLabel,
    Segment,
    clamp_normalized,
)


class Scenario(str, enum.Enum):
    WING_ATTACK = "WingAttack"
    CENTRAL_BUILDUP = "CentralBuildup"
    COUNTER_ATTACK = "CounterAttack"
    SET_PIECE = "SetPiece"
    RANDOM_WALK = "RandomWalk"


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: Scenario
    duration_s: float = 10.0
    noise_sigma: float = 0.002
    seed: int = 0
    fps: float = 25.0

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if not self.duration_s > 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if not self.noise_sigma >= 0:
            raise ValueError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")


# 4-4-2 for the left-to-right attacking side: GK, back four, midfield four, two forwards
_BASE_A = np.array(
    [
        [-0.92, 0.00],
        [-0.62, -0.28], [-0.66, -0.10], [-0.66, 0.10], [-0.62, 0.28],
        [-0.32, -0.30], [-0.36, -0.10], [-0.36, 0.10], [-0.32, 0.30],
        [-0.06, -0.10], [-0.06, 0.10],
    ]
)
_BASE_B = _BASE_A * np.array([-1.0, 1.0])

_PHASE = {
    Scenario.WING_ATTACK: Phase.ATTACK,
    Scenario.CENTRAL_BUILDUP: Phase.ATTACK,
    Scenario.COUNTER_ATTACK: Phase.TRANSITION,
    Scenario.SET_PIECE: Phase.ATTACK,
}


def _waypoints(scenario: Scenario, rng: np.random.Generator) -> tuple[np.ndarray, tuple[float, float]]:
    """Ball waypoints and the (min, max) ball speed in normalized units per frame."""
    u = rng.uniform
    side = rng.choice([-1.0, 1.0])
    if scenario is Scenario.WING_ATTACK:
        pts = [
            (u(-0.35, -0.1), side * u(0.05, 0.2)),
            (u(-0.05, 0.15), side * u(0.28, 0.36)),
            (u(0.4, 0.6), side * u(0.3, 0.38)),
            (u(0.7, 0.85), side * u(0.25, 0.35)),
            (u(0.75, 0.88), -side * u(0.0, 0.12)),
        ]
        speed = (0.008, 0.014)
    elif scenario is Scenario.CENTRAL_BUILDUP:
        pts = [(u(-0.7, -0.55), u(-0.05, 0.05))]
        x = pts[0][0]
        for _ in range(5):
            x += u(0.1, 0.2)
            pts.append((x, u(-0.18, 0.18)))
        speed = (0.004, 0.008)
    elif scenario is Scenario.COUNTER_ATTACK:
        pts = [
            (u(-0.5, -0.3), side * u(0.0, 0.25)),
            (u(-0.1, 0.1), side * u(0.05, 0.3)),
            (u(0.35, 0.55), -side * u(0.0, 0.2)),
            (u(0.7, 0.85), u(-0.12, 0.12)),
        ]
        speed = (0.012, 0.02)
    elif scenario is Scenario.SET_PIECE:
        corner = (0.99, side * 0.41)
        pts = [
            corner,
            corner,  # ball held while players set up
            (u(0.72, 0.85), side * u(-0.1, 0.1)),
            (u(0.45, 0.6), u(-0.2, 0.2)),
        ]
        speed = (0.006, 0.012)
    else:
        raise ValueError(f"no waypoint template for {scenario}")
    return np.array(pts, dtype=np.float64), speed


def _ease(u: np.ndarray) -> np.ndarray:
    return u * u * (3.0 - 2.0 * u)


def _scripted_ball(scenario: Scenario, n: int, rng: np.random.Generator) -> np.ndarray:
    pts, (vmin, vmax) = _waypoints(scenario, rng)
    ball = np.empty((n, 2))
    t = 0
    ball[0] = pts[0]
    for a, b in zip(pts[:-1], pts[1:]):
        dist = np.linalg.norm(b - a)
        frames = int(max(12, round(dist / rng.uniform(vmin, vmax))))
        if dist == 0:
            frames = int(rng.integers(25, 50))
        k = np.arange(1, frames + 1) / frames
        leg = a + _ease(k)[:, None] * (b - a)
        take = min(frames, n - 1 - t)
        ball[t + 1 : t + 1 + take] = leg[:take]
        t += take
        if t >= n - 1:
            break
    if t < n - 1:
        # slow dribble towards goal for the remainder
        rest = n - 1 - t
        target = np.array([0.9, 0.0])
        step = (target - ball[t]) / max(rest, 1) * 0.3
        ball[t + 1 :] = ball[t] + np.arange(1, rest + 1)[:, None] * step
    return ball


def _random_walk_ball(n: int, rng: np.random.Generator) -> np.ndarray:
    ball = np.empty((n, 2))
    ball[0] = (rng.uniform(-0.6, 0.6), rng.uniform(-0.3, 0.3))
    vel = rng.normal(0.0, 0.006, 2)
    for t in range(1, n):
        vel = 0.95 * vel + rng.normal(0.0, 0.0015, 2)
        nxt = ball[t - 1] + vel
        # reflect off the touchlines
        for d, (lo, hi) in enumerate(((X_MIN + 0.02, X_MAX - 0.02), (Y_MIN + 0.02, Y_MAX - 0.02))):
            if not lo <= nxt[d] <= hi:
                vel[d] = -vel[d]
                nxt[d] = np.clip(nxt[d], lo, hi)
        ball[t] = nxt
    return ball


def _players(ball: np.ndarray, rng: np.random.Generator, fps: float) -> np.ndarray:
    n = len(ball)
    t = np.arange(n) / fps
    pos = np.empty((n, 22, 2))
    shift_x = 0.55 * ball[:, 0:1]
    shift_y = 0.35 * ball[:, 1:2]
    for team, base in ((0, _BASE_A), (1, _BASE_B)):
        for k in range(11):
            i = team * 11 + k
            freq = rng.uniform(0.05, 0.25, 2)
            phase = rng.uniform(0, 2 * np.pi, 2)
            amp = rng.uniform(0.005, 0.025, 2)
            wobble = amp * np.sin(2 * np.pi * freq * t[:, None] + phase)
            gk_damp = 0.2 if k == 0 else 1.0
            pos[:, i, 0] = base[k, 0] + gk_damp * shift_x[:, 0] + wobble[:, 0]
            pos[:, i, 1] = base[k, 1] + gk_damp * shift_y[:, 0] + wobble[:, 1]
    # the nearest attacker shadows the ball (possession)
    for tt in range(n):
        d = np.linalg.norm(pos[tt, 1:11] - ball[tt], axis=1)
        j = 1 + int(np.argmin(d))
        pos[tt, j] = 0.4 * pos[tt, j] + 0.6 * (ball[tt] + np.array([-0.01, 0.0]))
    return pos


def generate_synthetic(
    spec: ScenarioSpec, match_id: str = "synthetic", segment_id: str | None = None
) -> Segment:
    """Build one clip deterministically from ``spec.seed``."""
    rng = np.random.default_rng([spec.seed, list(Scenario).index(spec.scenario)])
    n = max(2, int(round(spec.duration_s * spec.fps)))
    if spec.scenario is Scenario.RANDOM_WALK:
        ball = _random_walk_ball(n, rng)
        label = PhaseLabel(Phase.TRANSITION) if rng.random() < 0.5 else PhaseLabel(Phase.DEFENSE, Outcome.FAILED)
    else:
        ball = _scripted_ball(spec.scenario, n, rng)
        phase = _PHASE[spec.scenario]
        outcome = Outcome.SUCCESSFUL if rng.random() < 0.5 else Outcome.FAILED
        label = PhaseLabel(phase, outcome if phase is not Phase.TRANSITION else None)
    positions = np.empty((n, N_AGENTS, 2))
    positions[:, :22] = _players(ball, rng, spec.fps)
    positions[:, BALL] = ball
    if spec.noise_sigma > 0:
        positions += rng.normal(0.0, spec.noise_sigma, positions.shape)
    positions = quantize(clamp_normalized(positions))
    return Segment(
        segment_id=segment_id or f"{spec.scenario.value}-{spec.seed:05d}",
        match_id=match_id,
        fps=spec.fps,
        phase=label,
        positions=positions,
    )


def generate_corpus(
    n_matches: int,
    segments_per_match: int,
    duration_s: float = 10.0,
    noise_sigma: float = 0.002,
    seed: int = 0,
    scenarios=tuple(Scenario),
    fps: float = 25.0,
) -> list[Segment]:
    """Clips grouped into ``n_matches`` synthetic matches, scenarios cycled in order."""
    scenarios = [Scenario(s) for s in scenarios]
    out = []
    k = 0
    for m in range(n_matches):
        for _ in range(segments_per_match):
            sc = scenarios[k % len(scenarios)]
            spec = ScenarioSpec(sc, duration_s, noise_sigma, seed * 1_000_003 + k, fps)
            out.append(generate_synthetic(spec, match_id=f"M{m:03d}", segment_id=f"M{m:03d}-{k:05d}-{sc.value}"))
            k += 1
    return out
