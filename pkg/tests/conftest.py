import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pitchtrace.geometry import N_AGENTS, Phase, PhaseLabel, Segment

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_segment(positions, segment_id="s0", match_id="m0", fps=25.0, observed=None, phase=None):
    positions = np.asarray(positions, dtype=np.float64)
    return Segment(
        segment_id=segment_id,
        match_id=match_id,
        fps=fps,
        phase=phase or PhaseLabel(Phase.TRANSITION),
        positions=positions,
        observed=observed,
    )


def ball_segment(ball, segment_id="s0", others=0.0):
    """Segment whose ball follows ``ball`` (T, 2) while every player stands at ``others``."""
    ball = np.asarray(ball, dtype=np.float64)
    pos = np.full((len(ball), N_AGENTS, 2), others, dtype=np.float64)
    pos[:, -1] = ball
    return make_segment(pos, segment_id=segment_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def arc_tracks(rng, n_seq, n_agents=3, n_frames=60):
    """Agents circling at constant angular speed: curved, smooth motion."""
    t = np.arange(n_frames)
    out = []
    for _ in range(n_seq):
        tracks = []
        for _ in range(n_agents):
            r = rng.uniform(0.08, 0.2)
            w = rng.uniform(0.02, 0.05) * rng.choice([-1, 1])
            phi = rng.uniform(0, 2 * np.pi)
            c = np.array([rng.uniform(-0.6, 0.6), rng.uniform(-0.15, 0.15)])
            tracks.append(c + r * np.stack([np.cos(w * t + phi), np.sin(w * t + phi)], -1))
        out.append(np.array(tracks))
    return out


def central_difference_check(loss_fn, params, step=1e-5):
    """Max-norm relative error between autograd and central differences over every parameter.

    ``loss_fn()`` returns ``(loss, grads)`` for the current parameter values.
    """
    import torch

    _, grads = loss_fn()
    analytic, numeric = [], []
    for name, p in params.named_parameters():
        flat = p.data.view(-1)
        for k in range(flat.numel()):
            orig = flat[k].item()
            flat[k] = orig + step
            up = loss_fn()[0]
            flat[k] = orig - step
            down = loss_fn()[0]
            flat[k] = orig
            numeric.append((up - down) / (2 * step))
        analytic.append(grads[name].ravel())
    a, f = np.concatenate(analytic), np.array(numeric)
    return np.max(np.abs(a - f)) / max(np.max(np.abs(a)), np.max(np.abs(f)), 1e-300)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
