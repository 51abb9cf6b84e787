import numpy as np
import pytest
import torch

from conftest import central_difference_check, make_segment
from pitchtrace.geometry import N_AGENTS
from pitchtrace.rollout import (
    BCConfig,
    BCNet,
    BCPolicy,
    Context,
    RolloutConfig,
    bc_loss_and_grad,
    bc_train,
    closed_loop_refine,
    load_bc,
    rollout,
    rollout_rmse,
    save_bc,
)
from pitchtrace.rollout.bc import pad_window, sample_windows

CFG = RolloutConfig(horizon_frames=20, context_lengths=(1, 5), predict_frames=8, closed_loop_steps=3)
SMALL = BCConfig(hidden_dim=16, iterations=150, batch_size=8, refine_iterations=60)
VEL = np.array([0.004, 0.002])


def linear_segments(rng, n, n_frames=60, vel=None):
    out = []
    t = np.arange(n_frames)[:, None, None]
    for i in range(n):
        p0 = rng.uniform([-0.6, -0.25], [0.2, 0.1], (1, N_AGENTS, 2))
        v = VEL if vel is None else rng.uniform([-0.004, -0.002], [0.004, 0.002], (1, N_AGENTS, 2))
        out.append(make_segment(np.round(p0 + t * v, 6), segment_id=f"lin{i:03d}"))
    return out


def same_params(a, b):
    return all(torch.equal(a.state_dict()[k], b.state_dict()[k]) for k in a.state_dict())


def test_pad_window_repeats_earliest():
    frames = np.arange(3 * N_AGENTS * 2, dtype=float).reshape(3, N_AGENTS, 2)
    w = pad_window(frames, 5)
    assert w.shape == (5, N_AGENTS, 2)
    assert np.array_equal(w[:3], np.repeat(frames[:1], 3, axis=0)) and np.array_equal(w[2:], frames)
    assert np.array_equal(pad_window(frames, 2), frames[1:])


def test_fresh_network_is_zero_policy():
    net = BCNet(5, 8, seed=0)
    ctx = Context(np.zeros((2, N_AGENTS, 2)))
    assert np.array_equal(BCPolicy(net).step(ctx), np.zeros((N_AGENTS, 2)))


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    cfg = RolloutConfig(context_lengths=(1, 3), predict_frames=3)
    net = BCNet(cfg.context_max, 4, seed=seed)
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in net.parameters():
            p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * 0.3)
    tracks = [np.cumsum(rng.normal(0, 0.01, (8, N_AGENTS, 2)), axis=0) for _ in range(2)]
    w, f, lengths = sample_windows(tracks, cfg, rng, 2)
    err = central_difference_check(lambda: bc_loss_and_grad(net, w, f, lengths), net)
    assert err < 1e-4


def test_seed_determinism():
    data = linear_segments(np.random.default_rng(0), 6, vel="random")
    a = bc_train(data, CFG, SMALL, seed=4)
    b = bc_train(data, CFG, SMALL, seed=4)
    c = bc_train(data, CFG, SMALL, seed=5)
    assert same_params(a, b) and not same_params(a, c)


def test_refine_without_feedback_is_identity():
    data = linear_segments(np.random.default_rng(1), 4)
    net = BCNet(CFG.context_max, 8, seed=0)
    before = {k: v.clone() for k, v in net.state_dict().items()}
    out = closed_loop_refine(net, data, RolloutConfig(context_lengths=(1, 5), predict_frames=8, closed_loop_steps=0), SMALL)
    assert out is net and all(torch.equal(before[k], out.state_dict()[k]) for k in before)


def test_refine_determinism():
    data = linear_segments(np.random.default_rng(2), 6, vel="random")
    base = bc_train(data, CFG, SMALL, seed=0)
    a = closed_loop_refine(base, data, CFG, SMALL, seed=3)
    b = closed_loop_refine(base, data, CFG, SMALL, seed=3)
    assert same_params(a, b) and a.refine_rejected == b.refine_rejected


def test_stationary_experts_learn_zero_motion():
    rng = np.random.default_rng(3)
    data = [make_segment(np.repeat(rng.uniform(-0.4, 0.4, (1, N_AGENTS, 2)), 40, axis=0) * [1, 0.8], f"st{i}") for i in range(20)]
    net = bc_train(data, CFG, SMALL, seed=0)
    for s in data[:5]:
        assert np.linalg.norm(BCPolicy(net).step(Context(s.positions[:3]))) < 1e-3


def test_constant_velocity_experts():
    rng = np.random.default_rng(4)
    train, held = linear_segments(rng, 100), linear_segments(rng, 10)
    net = bc_train(train, CFG, BCConfig(hidden_dim=32, iterations=400, batch_size=8, learning_rate=3e-3), seed=0)
    for s in held:
        out = rollout(BCPolicy(net), Context.from_segment(s), 20)
        disp = np.diff(np.concatenate([s.positions[:1], out.positions]), axis=0).mean(axis=(0, 1))
        assert np.linalg.norm(disp - VEL) <= 0.1 * np.linalg.norm(VEL)


@pytest.mark.slow
def test_refinement_does_not_hurt_linear_rollouts():
    cfg = RolloutConfig(horizon_frames=25, context_lengths=(1, 5), predict_frames=25, closed_loop_steps=5)
    before, after = [], []
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        train, held = linear_segments(rng, 60), linear_segments(rng, 10)
        net = bc_train(train, cfg, BCConfig(hidden_dim=32, iterations=300, batch_size=8, learning_rate=3e-3), seed=seed)
        tracks = [s.positions for s in held]
        before.append(rollout_rmse(net, tracks, cfg))
        refined = closed_loop_refine(net, train, cfg, BCConfig(hidden_dim=32, refine_iterations=100, batch_size=8), seed, held)
        after.append(rollout_rmse(refined, tracks, cfg))
    assert np.mean(after) <= np.mean(before)


def test_checkpoint_round_trip(tmp_path):
    net = BCNet(5, 8, seed=2)
    with torch.no_grad():
        net.net[-1].weight.normal_()
    net.refine_rejected = True
    save_bc(tmp_path / "bc.ckpt", net)
    back = load_bc(tmp_path / "bc.ckpt")
    assert same_params(net, back) and back.refine_rejected and back.context_max == 5
