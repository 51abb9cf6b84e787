"""Behavior cloning: a feed-forward map from a context window to next-frame displacements."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from pitchtrace.checkpoint import read_checkpoint, write_checkpoint
from pitchtrace.errors import DataError, TrainingDiverged
from pitchtrace.geometry import N_AGENTS
from pitchtrace.rollout.harness import Context, RolloutConfig

log = logging.getLogger(__name__)

DTYPE = torch.float64
STATE_DIM = N_AGENTS * 2
# typical per-frame displacement (~0.5 m); network outputs are in these units
DISP_SCALE = 0.01


@dataclass(frozen=True)
class BCConfig:
    hidden_dim: int = 128
    iterations: int = 1500
    batch_size: int = 16
    learning_rate: float = 1e-3
    refine_iterations: int = 200
    refine_learning_rate: float = 3e-4
    max_regression: float = 0.05  # refinement may worsen held-out rollout error by at most 5%
    start_fraction: float = 0.25  # share of windows anchored at frame 0, matching the first-frame test protocol


class BCNet(nn.Module):
    """MLP over ``[last frame, offsets of earlier frames from the last]``."""

    def __init__(self, context_max: int, hidden_dim: int = 128, seed: int = 0):
        super().__init__()
        self.context_max = int(context_max)
        self.hidden_dim = int(hidden_dim)
        self.net = nn.Sequential(
            nn.Linear(STATE_DIM * self.context_max, hidden_dim, dtype=DTYPE),
            nn.Tanh(),
            nn.Linear(hidden_dim, hidden_dim, dtype=DTYPE),
            nn.Tanh(),
            nn.Linear(hidden_dim, STATE_DIM, dtype=DTYPE),
        )
        self.refine_rejected = False
        g = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for name, p in self.net.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
                else:
                    bound = 1.0 / np.sqrt(p.shape[1])
                    p.copy_((torch.rand(p.shape, generator=g, dtype=DTYPE) * 2 - 1) * bound)
            # start from the zero-displacement policy
            self.net[-1].weight.zero_()

    def features(self, window: torch.Tensor) -> torch.Tensor:
        """``window`` (R, K, 23, 2), front-padded to ``context_max`` -> (R, K*46)."""
        last = window[:, -1]
        offsets = window[:, :-1] - last[:, None]
        return torch.cat([last.reshape(len(window), -1), offsets.reshape(len(window), -1)], dim=1)

    def forward(self, window: torch.Tensor) -> torch.Tensor:
        return DISP_SCALE * self.net(self.features(window)).reshape(-1, N_AGENTS, 2)


BCParams = BCNet


def pad_window(frames: np.ndarray, context_max: int) -> np.ndarray:
    """Last ``context_max`` frames, front-padded by repeating the earliest one."""
    frames = frames[-context_max:]
    if len(frames) < context_max:
        pad = np.repeat(frames[:1], context_max - len(frames), axis=0)
        frames = np.concatenate([pad, frames])
    return frames


class BCPolicy:
    name = "bc"

    def __init__(self, params: BCNet):
        self.params = params

    def step(self, ctx: Context) -> np.ndarray:
        w = torch.as_tensor(pad_window(ctx.frames, self.params.context_max)[None], dtype=DTYPE)
        with torch.no_grad():
            return self.params(w)[0].numpy()


def _stack(dataset, min_len: int) -> list[np.ndarray]:
    tracks = [np.asarray(s.positions, dtype=np.float64) for s in dataset]
    if not tracks:
        raise DataError("training dataset is empty")
    short = [s.segment_id for s, t in zip(dataset, tracks) if len(t) < min_len]
    if short:
        raise DataError(f"segments shorter than {min_len} frames: {short[:5]}")
    return tracks


def sample_windows(tracks, cfg: RolloutConfig, rng: np.random.Generator, batch_size: int, start_fraction: float = 0.0):
    """Random (segment, anchor) pairs crossed with every context length.

    Returns initial windows (R, K, 23, 2) and ground-truth futures
    (R, P + 1, 23, 2) whose first frame is the anchor, plus the context length
    of each row.
    """
    k, p = cfg.context_max, cfg.predict_frames
    windows, futures, lengths = [], [], []
    for _ in range(batch_size):
        seg = tracks[int(rng.integers(len(tracks)))]
        anchor = 0 if rng.random() < start_fraction else int(rng.integers(0, len(seg) - p))
        for length in cfg.context_lengths:
            lo = max(0, anchor - length + 1)
            windows.append(pad_window(seg[lo : anchor + 1], k))
            futures.append(seg[anchor : anchor + p + 1])
            lengths.append(length)
    return np.stack(windows), np.stack(futures), np.array(lengths)


def unroll_loss(
    params: BCNet,
    windows: torch.Tensor,
    futures: torch.Tensor,
    lengths: np.ndarray,
    closed_loop_steps: int = 0,
) -> torch.Tensor:
    """Mean squared displacement error over ``P`` steps, averaged per context length.

    The first ``closed_loop_steps`` predicted frames are fed back as context
    (the target is then the displacement that would land on ground truth);
    later steps are teacher-forced.
    """
    ctx = windows
    per_row = torch.zeros(len(windows), dtype=DTYPE)
    steps = futures.shape[1] - 1
    for j in range(steps):
        disp = params(ctx)
        target = futures[:, j + 1] - ctx[:, -1]
        per_row = per_row + torch.sum(((disp - target) / DISP_SCALE) ** 2, dim=(1, 2))
        nxt = ctx[:, -1] + disp.detach() if j < closed_loop_steps else futures[:, j + 1]
        ctx = torch.cat([ctx[:, 1:], nxt[:, None]], dim=1)
    per_row = per_row / (steps * STATE_DIM)
    groups = [per_row[torch.as_tensor(lengths == L)].mean() for L in np.unique(lengths)]
    return torch.stack(groups).mean()


def bc_loss_and_grad(params: BCNet, windows, futures, lengths, closed_loop_steps: int = 0):
    params.zero_grad(set_to_none=True)
    loss = unroll_loss(
        params, torch.as_tensor(windows, dtype=DTYPE), torch.as_tensor(futures, dtype=DTYPE), lengths, closed_loop_steps
    )
    loss.backward()
    grads = {n: p.grad.detach().numpy().copy() for n, p in params.named_parameters()}
    params.zero_grad(set_to_none=True)
    return float(loss.detach()), grads


def _fit(params: BCNet, tracks, cfg: RolloutConfig, model: BCConfig, iterations: int, lr: float, seed: int, closed: int):
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    opt = torch.optim.Adam(params.parameters(), lr=lr)
    for it in range(iterations):
        w, f, lengths = sample_windows(tracks, cfg, rng, model.batch_size, model.start_fraction)
        opt.zero_grad(set_to_none=True)
        loss = unroll_loss(params, torch.as_tensor(w, dtype=DTYPE), torch.as_tensor(f, dtype=DTYPE), lengths, closed)
        if not torch.isfinite(loss):
            raise TrainingDiverged(it)
        loss.backward()
        opt.step()
        if it % 100 == 0:
            log.debug("bc iteration %d loss %.6g", it, float(loss.detach()))
    return params


def bc_train(dataset, cfg: RolloutConfig = RolloutConfig(), model: BCConfig = BCConfig(), seed: int = 0) -> BCNet:
    """Teacher-forced multi-window behavior cloning. Deterministic per seed."""
    tracks = _stack(dataset, cfg.predict_frames + 1)
    params = BCNet(cfg.context_max, model.hidden_dim, seed=seed)
    return _fit(params, tracks, cfg, model, model.iterations, model.learning_rate, seed, closed=0)


def rollout_rmse(params: BCNet, tracks, cfg: RolloutConfig, seed: int = 12345, n_windows: int = 32) -> float:
    """Closed-loop RMSE over ``predict_frames`` steps from fixed held-out windows."""
    rng = np.random.default_rng(seed)
    w, f, _ = sample_windows(tracks, cfg, rng, n_windows)
    ctx = torch.as_tensor(w, dtype=DTYPE)
    fut = torch.as_tensor(f, dtype=DTYPE)
    err = 0.0
    with torch.no_grad():
        for j in range(fut.shape[1] - 1):
            nxt = ctx[:, -1] + params(ctx)
            err += float(torch.sum((nxt - fut[:, j + 1]) ** 2))
            ctx = torch.cat([ctx[:, 1:], nxt[:, None]], dim=1)
    return float(np.sqrt(err / (len(w) * (fut.shape[1] - 1) * N_AGENTS)))


def closed_loop_refine(
    params: BCNet,
    dataset,
    cfg: RolloutConfig = RolloutConfig(),
    model: BCConfig = BCConfig(),
    seed: int = 0,
    validation=None,
) -> BCNet:
    """Fine-tune with the first ``closed_loop_steps`` predictions fed back as context.

    If held-out rollout RMSE (``validation``, default ``dataset``) worsens by
    more than ``model.max_regression``, the input parameters are returned with
    ``refine_rejected`` set.
    """
    if cfg.closed_loop_steps == 0:
        return params
    tracks = _stack(dataset, cfg.predict_frames + 1)
    held = _stack(validation, cfg.predict_frames + 1) if validation is not None else tracks
    before = rollout_rmse(params, held, cfg)
    refined = copy.deepcopy(params)
    _fit(refined, tracks, cfg, model, model.refine_iterations, model.refine_learning_rate, seed + 1, cfg.closed_loop_steps)
    after = rollout_rmse(refined, held, cfg)
    log.info("closed-loop refinement: rollout RMSE %.6g -> %.6g", before, after)
    if after > before * (1.0 + model.max_regression):
        params.refine_rejected = True
        return params
    refined.refine_rejected = False
    return refined


def save_bc(path, params: BCNet, extra: dict | None = None) -> None:
    meta = {"context_max": params.context_max, "hidden_dim": params.hidden_dim, "refine_rejected": params.refine_rejected}
    meta.update(extra or {})
    write_checkpoint(path, "bc", meta, {k: v.detach().numpy() for k, v in params.state_dict().items()})


def load_bc(path) -> BCNet:
    kind, meta, tensors = read_checkpoint(path)
    if kind != "bc":
        raise DataError(f"{path}: expected a bc checkpoint, found {kind!r}")
    params = BCNet(meta["context_max"], meta["hidden_dim"])
    params.load_state_dict({k: torch.as_tensor(v, dtype=DTYPE) for k, v in tensors.items()})
    params.refine_rejected = bool(meta.get("refine_rejected", False))
    return params
