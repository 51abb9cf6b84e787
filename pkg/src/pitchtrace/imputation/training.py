"""Training recipe and inference routing for the imputer."""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, replace

import numpy as np
import torch

from pitchtrace.checkpoint import read_checkpoint, write_checkpoint
from pitchtrace.errors import DataError, TrainingDiverged
from pitchtrace.formats import quantize
from pitchtrace.geometry import Segment, clamp_normalized
from pitchtrace.imputation.model import (
    DTYPE,
    Imputer,
    LatentConfig,
    _tensors,
    loss_terms,
    make_batch,
    posterior_mean_decode,
    sample_eps,
    total_loss,
)
from pitchtrace.imputation.spline import (
    SPLINE_MAX_GAP,
    CompletedSequence,
    ObservedSequence,
    Provenance,
    spline_impute,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 1e-3
    mask_rate: float = 0.3
    batch_size: int = 16
    seed: int = 0
    optimizer: str = "sgd"  # or "adam"
    min_gap: int = 1
    max_gap: int = 20
    window: int | None = 60  # random temporal crop length; None keeps full sequences
    augment_reverse: bool = True
    augment_mirror: bool = True
    velocity_noise: float = 0.0  # input noise std as a fraction of per-frame speed
    recon_on: str = "unobserved"
    distill_weight: float = 0.0


def random_gap_mask(
    rng: np.random.Generator, n_agents: int, n_frames: int, rate: float, min_gap: int = 1, max_gap: int = 20
) -> np.ndarray:
    """Boolean (N, T) mask with contiguous interior gaps covering about ``rate`` of each track.

    First and last frames stay observed.
    """
    mask = np.ones((n_agents, n_frames), dtype=bool)
    if rate <= 0 or n_frames < 3:
        return mask
    interior = n_frames - 2
    target = int(round(rate * n_frames))
    for i in range(n_agents):
        attempts = 0
        while (~mask[i]).sum() < target and attempts < 100:
            attempts += 1
            length = int(rng.integers(min_gap, max(min_gap, max_gap) + 1))
            length = min(length, interior)
            start = int(rng.integers(1, n_frames - length))
            mask[i, start : start + length] = False
    return mask


def _as_tracks(dataset) -> list[np.ndarray]:
    """Normalize a dataset to a list of (N, T, 2) arrays."""
    out = []
    for item in dataset:
        if isinstance(item, Segment):
            out.append(np.swapaxes(item.positions, 0, 1).astype(np.float64))
        else:
            arr = np.asarray(item, dtype=np.float64)
            if arr.ndim != 3 or arr.shape[-1] != 2:
                raise DataError(f"trajectory arrays must be (N, T, 2), got {arr.shape}")
            out.append(arr)
    if not out:
        raise DataError("training dataset is empty")
    shapes = {a.shape[0] for a in out}
    if len(shapes) != 1:
        raise DataError(f"all sequences must have the same agent count, got {sorted(shapes)}")
    return out


def _augment(x: np.ndarray, rng: np.random.Generator, tc: TrainConfig) -> np.ndarray:
    if tc.window is not None and x.shape[1] > tc.window:
        start = int(rng.integers(0, x.shape[1] - tc.window + 1))
        x = x[:, start : start + tc.window]
    if tc.augment_reverse and rng.random() < 0.5:
        x = x[:, ::-1]
    if tc.augment_mirror and rng.random() < 0.5:
        x = x * np.array([1.0, -1.0])
    return np.ascontiguousarray(x)


def _velocity_noise(x: np.ndarray, rng: np.random.Generator, scale: float) -> np.ndarray:
    if scale <= 0:
        return x
    speed = np.linalg.norm(np.gradient(x, axis=-2), axis=-1, keepdims=True)
    return x + rng.normal(0.0, 1.0, x.shape) * scale * speed


def _fixed_eval_batch(tracks, tc: TrainConfig, seed: int):
    rng = np.random.default_rng([seed, 7])
    xs, ms = [], []
    window = tc.window
    for x in tracks:
        if window is not None and x.shape[1] > window:
            x = x[:, :window]
        xs.append(x)
        ms.append(random_gap_mask(rng, x.shape[0], x.shape[1], tc.mask_rate, tc.min_gap, tc.max_gap))
    lengths = {x.shape[1] for x in xs}
    if len(lengths) != 1:
        t = min(lengths)
        xs = [x[:, :t] for x in xs]
        ms = [m[:, :t] for m in ms]
    return make_batch(np.stack(xs), np.stack(ms))


def _eval_loss(model: Imputer, batch, tc: TrainConfig, demonstrator=None) -> float:
    with torch.no_grad():
        eps = torch.zeros(batch.x_obs.shape[0], model.cfg.latent_dim, dtype=DTYPE)
        return float(_objective(model, batch, eps, tc, demonstrator)) / batch.x_obs.shape[0]


def _objective(model: Imputer, batch, eps, tc: TrainConfig, demonstrator=None, full_batch=None) -> torch.Tensor:
    terms = loss_terms(model, batch, eps, tc.recon_on)
    if demonstrator is not None and tc.distill_weight > 0:
        fb = full_batch if full_batch is not None else make_batch(batch.x_true.numpy(), np.ones(batch.mask.shape, bool))
        with torch.no_grad():
            target = posterior_mean_decode(demonstrator, fb.x_obs, fb.mask, fb.fill)
        pred = posterior_mean_decode(model, batch.x_obs, batch.mask, batch.fill)
        terms["distill"] = tc.distill_weight * torch.sum((pred - target) ** 2)
    return total_loss(terms)


def train_imputer(
    dataset,
    cfg: LatentConfig = LatentConfig(),
    tc: TrainConfig = TrainConfig(),
    demonstrator: Imputer | None = None,
) -> Imputer:
    """Fit an imputer on randomly masked copies of ``dataset``.

    ``dataset`` holds :class:`Segment` objects or (N, T, 2) arrays with a
    common agent count. Training is deterministic given ``tc.seed``. The
    parameters with the lowest loss on a fixed masked evaluation batch are
    returned, so the final loss never exceeds the initial one.
    """
    tracks = _as_tracks(dataset)
    torch.manual_seed(tc.seed)
    rng = np.random.default_rng(tc.seed)
    model = Imputer(cfg, seed=tc.seed)
    if tc.optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=tc.learning_rate)
    elif tc.optimizer == "sgd":
        opt = torch.optim.SGD(model.parameters(), lr=tc.learning_rate)
    else:
        raise ValueError(f"unknown optimizer {tc.optimizer!r}")

    eval_batch = _fixed_eval_batch(tracks, tc, tc.seed)
    best = _eval_loss(model, eval_batch, tc, demonstrator)
    if not np.isfinite(best):
        raise TrainingDiverged(0)
    best_state = copy.deepcopy(model.state_dict())
    history = [best]
    eps_seed = tc.seed * 100_003
    for epoch in range(1, tc.epochs + 1):
        order = rng.permutation(len(tracks))
        for start in range(0, len(order), tc.batch_size):
            chunk = [_augment(tracks[k], rng, tc) for k in order[start : start + tc.batch_size]]
            t = min(x.shape[1] for x in chunk)
            xs = np.stack([x[:, :t] for x in chunk])
            ms = np.stack([random_gap_mask(rng, xs.shape[1], t, tc.mask_rate, tc.min_gap, tc.max_gap) for _ in chunk])
            noisy = _velocity_noise(xs, rng, tc.velocity_noise)
            batch = make_batch(xs, ms, noisy)
            eps_seed += 1
            eps = sample_eps(len(chunk), cfg.latent_dim, eps_seed)
            opt.zero_grad(set_to_none=True)
            try:
                loss = _objective(model, batch, eps, tc, demonstrator) / len(chunk)
            except DataError:
                raise TrainingDiverged(epoch) from None
            loss.backward()
            opt.step()
        current = _eval_loss(model, eval_batch, tc, demonstrator)
        if not np.isfinite(current):
            raise TrainingDiverged(epoch)
        history.append(current)
        if current < best:
            best = current
            best_state = copy.deepcopy(model.state_dict())
        log.debug("imputer epoch %d loss %.6g", epoch, current)
    model.load_state_dict(best_state)
    model.history = history
    return model


def train_demonstrator(dataset, cfg: LatentConfig = LatentConfig(), tc: TrainConfig = TrainConfig()) -> Imputer:
    """Autoencoder on complete sequences: no masking, reconstruction on every entry."""
    return train_imputer(dataset, cfg, replace(tc, mask_rate=0.0, recon_on="all", distill_weight=0.0))


def impute(params: Imputer, seq: ObservedSequence, max_gap: int = SPLINE_MAX_GAP) -> CompletedSequence:
    """Spline-fill short interior gaps, then fill everything else from the decoder mean."""
    partial = spline_impute(seq, max_gap)
    if partial.resolved.all():
        return partial
    x, m, fill = _tensors(seq)
    with torch.no_grad():
        recon = posterior_mean_decode(params, x, m, fill)[0].numpy()
    todo = ~partial.resolved
    x_full = np.array(partial.x_full)
    x_full[todo] = recon[todo]
    prov = np.array(partial.provenance)
    prov[todo] = Provenance.MODEL
    return CompletedSequence(x_full, prov)


def impute_segment(params: Imputer | None, segment: Segment, max_gap: int = SPLINE_MAX_GAP) -> tuple[Segment, np.ndarray]:
    """Complete a segment; returns it fully observed plus the (T, 23) provenance.

    With ``params=None`` only short gaps are filled and longer ones raise.
    """
    seq = ObservedSequence.from_segment(segment)
    if params is None:
        done = spline_impute(seq, max_gap)
        if not done.resolved.all():
            raise DataError(f"segment {segment.segment_id} has gaps longer than {max_gap} frames; a model checkpoint is required")
    else:
        done = impute(params, seq, max_gap)
    positions = np.swapaxes(done.x_full, 0, 1)
    observed = segment.observed
    filled = quantize(clamp_normalized(positions))
    positions = np.where(observed[..., None], segment.positions, filled)
    return segment.replace(positions=positions, observed=np.ones_like(observed)), done.provenance.T


def save_imputer(path, model: Imputer) -> None:
    tensors = {k: v.detach().numpy() for k, v in model.state_dict().items()}
    write_checkpoint(path, "imputer", {"config": asdict(model.cfg)}, tensors)


def load_imputer(path) -> Imputer:
    kind, meta, tensors = read_checkpoint(path)
    if kind != "imputer":
        raise DataError(f"{path}: expected an imputer checkpoint, found {kind!r}")
    model = Imputer(LatentConfig(**meta["config"]), seed=None)
    model.load_state_dict({k: torch.as_tensor(v, dtype=DTYPE) for k, v in tensors.items()})
    return model
