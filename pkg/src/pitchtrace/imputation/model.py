"""Masked conditional latent-variable imputer.

The encoder runs a bidirectional GRU over each agent's masked track, pools
the final states over agents and emits a diagonal Gaussian posterior over a
single sequence-level latent ``z``. The decoder runs a second bidirectional
GRU per agent over ``[masked position, mask, linear gap fill, fill velocity, z]``
and reads positions off its states plus a linear skip path.

All computation is float64 so gradients can be checked by finite
differences.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from pitchtrace.errors import DimensionError, NumericalInstability
from pitchtrace.imputation.spline import ObservedSequence

DTYPE = torch.float64
ENC_FEATURES = 5  # x*m, y*m, m, fill velocity x, y
DEC_FEATURES = 7  # x*m, y*m, m, linear fill x, y, fill velocity x, y
# per-frame displacements are ~1e-2 normalized units; bring them to O(1)
VELOCITY_SCALE = 100.0
# the recurrent read-out predicts corrections to the skip path of this order
READOUT_SCALE = 0.05


@dataclass(frozen=True)
class LatentConfig:
    latent_dim: int = 8
    hidden_dim: int = 64
    beta: float = 1.0
    lambda_smooth: float = 0.1
    lambda_form: float = 0.1
    lambda_coll: float = 0.1
    collision_radius: float = 0.01

    def __post_init__(self):
        if self.latent_dim < 1 or self.hidden_dim < 1:
            raise ValueError("latent_dim and hidden_dim must be >= 1")
        for name in ("beta", "lambda_smooth", "lambda_form", "lambda_coll"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.collision_radius > 0:
            raise ValueError("collision_radius must be positive")


class Imputer(nn.Module):
    def __init__(self, cfg: LatentConfig, seed: int | None = 0):
        super().__init__()
        self.cfg = cfg
        h, l = cfg.hidden_dim, cfg.latent_dim
        self.enc_rnn = nn.GRU(ENC_FEATURES, h, batch_first=True, bidirectional=True, dtype=DTYPE)
        self.enc_head = nn.Linear(2 * h, 2 * l, dtype=DTYPE)
        self.dec_rnn = nn.GRU(DEC_FEATURES + l, h, batch_first=True, bidirectional=True, dtype=DTYPE)
        self.dec_out = nn.Linear(2 * h, 2, dtype=DTYPE)
        self.dec_skip = nn.Linear(DEC_FEATURES + l, 2, bias=False, dtype=DTYPE)
        if seed is not None:
            self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        """Uniform(-1/sqrt(h), 1/sqrt(h)) weights and zero biases from ``seed``.

        The skip path starts as a pass-through of the linear gap fill and the
        recurrent read-out starts small, so an untrained decoder already
        reproduces linear interpolation.
        """
        g = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for name, p in self.named_parameters():
                if "bias" in name:
                    p.zero_()
                else:
                    bound = 1.0 / np.sqrt(self.cfg.hidden_dim)
                    p.copy_((torch.rand(p.shape, generator=g, dtype=DTYPE) * 2 - 1) * bound)
            self.dec_out.weight.mul_(0.1)
            self.dec_skip.weight.zero_()
            self.dec_skip.weight[0, 3] = 1.0
            self.dec_skip.weight[1, 4] = 1.0

    def zero_(self) -> "Imputer":
        with torch.no_grad():
            for p in self.parameters():
                p.zero_()
        return self

    def encode_tensors(self, x_obs: torch.Tensor, mask: torch.Tensor, fill: torch.Tensor):
        """``x_obs``, ``fill`` (B, N, T, 2), ``mask`` (B, N, T) -> (mu, logvar) each (B, latent)."""
        b, n, t, _ = x_obs.shape
        m = mask.unsqueeze(-1)
        feats = torch.cat([x_obs * m, m, fill_velocity(fill)], dim=-1).reshape(b * n, t, ENC_FEATURES)
        _, h_n = self.enc_rnn(feats)  # (2, B*N, H): forward last step, backward first step
        summary = torch.cat([h_n[0], h_n[1]], dim=-1).reshape(b, n, -1).mean(dim=1)
        mu, logvar = self.enc_head(summary).chunk(2, dim=-1)
        return mu, logvar

    def decode_tensors(self, z: torch.Tensor, x_obs: torch.Tensor, mask: torch.Tensor, fill: torch.Tensor):
        """Reconstruction (B, N, T, 2) from latent (B, latent) and the conditioning inputs."""
        b, n, t, _ = x_obs.shape
        m = mask.unsqueeze(-1)
        zz = z[:, None, None, :].expand(b, n, t, z.shape[-1])
        feats = torch.cat([x_obs * m, m, fill, fill_velocity(fill), zz], dim=-1).reshape(b * n, t, -1)
        out, _ = self.dec_rnn(feats)
        recon = READOUT_SCALE * self.dec_out(out) + self.dec_skip(feats)
        return recon.reshape(b, n, t, 2)


ImputerParams = Imputer


def fill_velocity(fill: torch.Tensor) -> torch.Tensor:
    """Scaled backward differences along time; the first frame repeats the second."""
    d = fill[..., 1:, :] - fill[..., :-1, :]
    if d.shape[-2] == 0:
        return torch.zeros_like(fill)
    return VELOCITY_SCALE * torch.cat([d[..., :1, :], d], dim=-2)


def linear_fill(x_obs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-agent linear interpolation across gaps, holding the nearest value at the ends."""
    out = np.zeros(x_obs.shape, dtype=np.float64)
    t = np.arange(x_obs.shape[-2])
    lead = x_obs.reshape(-1, x_obs.shape[-2], 2)
    mrow = mask.reshape(-1, mask.shape[-1])
    flat = out.reshape(-1, x_obs.shape[-2], 2)
    for i in range(lead.shape[0]):
        idx = np.flatnonzero(mrow[i])
        if idx.size == 0:
            continue
        for d in range(2):
            flat[i, :, d] = np.interp(t, idx, lead[i, idx, d])
    return out


def _check(params: Imputer, seq: ObservedSequence) -> None:
    if not isinstance(seq, ObservedSequence):
        raise DimensionError(f"expected an ObservedSequence, got {type(seq).__name__}")


def _tensors(seq: ObservedSequence):
    x = torch.tensor(seq.x_obs, dtype=DTYPE)[None]
    m = torch.tensor(seq.mask, dtype=DTYPE)[None]
    fill = torch.as_tensor(linear_fill(seq.x_obs, seq.mask), dtype=DTYPE)[None]
    return x, m, fill


def encode(params: Imputer, seq: ObservedSequence) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and log-variance of the latent for one sequence."""
    _check(params, seq)
    x, m, fill = _tensors(seq)
    with torch.no_grad():
        mu, logvar = params.encode_tensors(x, m, fill)
    return mu[0].numpy(), logvar[0].numpy()


def decode(params: Imputer, z, seq: ObservedSequence) -> np.ndarray:
    _check(params, seq)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (params.cfg.latent_dim,):
        raise DimensionError(f"latent must have shape ({params.cfg.latent_dim},), got {z.shape}")
    x, m, fill = _tensors(seq)
    with torch.no_grad():
        out = params.decode_tensors(torch.as_tensor(z, dtype=DTYPE)[None], x, m, fill)
    return out[0].numpy()


def kl_standard_normal(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over latent dims, per batch row."""
    return 0.5 * torch.sum(torch.exp(logvar) + mu * mu - 1.0 - logvar, dim=-1)


def nearest_full_frame(mask: np.ndarray) -> np.ndarray:
    """For (..., N, T) masks: index of the nearest fully observed frame per t, or -1 if none."""
    full = mask.all(axis=-2)  # (..., T)
    t = np.arange(full.shape[-1])
    out = np.full(full.shape, -1, dtype=np.int64)
    for idx in np.ndindex(full.shape[:-1]):
        cand = np.flatnonzero(full[idx])
        if cand.size:
            pos = np.searchsorted(cand, t)
            left = cand[np.clip(pos - 1, 0, cand.size - 1)]
            right = cand[np.clip(pos, 0, cand.size - 1)]
            out[idx] = np.where(np.abs(t - left) <= np.abs(right - t), left, right)
    return out


def _pairwise(x: torch.Tensor) -> torch.Tensor:
    """Distances (..., T, N, N) from positions (..., N, T, 2), smoothed at zero."""
    p = x.transpose(-3, -2)  # (..., T, N, 2)
    diff = p.unsqueeze(-2) - p.unsqueeze(-3)
    return torch.sqrt(torch.sum(diff * diff, dim=-1) + 1e-12)


@dataclass
class Batch:
    x_true: torch.Tensor  # (B, N, T, 2)
    x_obs: torch.Tensor
    mask: torch.Tensor
    fill: torch.Tensor
    ref_dist: torch.Tensor  # (B, T, N, N) reference pairwise distances
    ref_valid: torch.Tensor  # (B, T) 1 where a fully observed reference frame exists


def make_batch(x_true: np.ndarray, mask: np.ndarray, x_input: np.ndarray | None = None) -> Batch:
    """Assemble tensors for arrays ``x_true`` (B, N, T, 2) and ``mask`` (B, N, T).

    ``x_input`` overrides the positions fed to the model (e.g. noise-augmented).
    """
    x_true = np.asarray(x_true, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if x_true.ndim != 4 or mask.shape != x_true.shape[:3]:
        raise DimensionError(f"expected (B, N, T, 2) truth and (B, N, T) mask, got {x_true.shape}, {mask.shape}")
    src = x_true if x_input is None else np.asarray(x_input, dtype=np.float64)
    x_obs = np.where(mask[..., None], src, 0.0)
    fill = linear_fill(x_obs, mask)
    near = nearest_full_frame(mask)  # (B, T)
    b_idx = np.arange(x_true.shape[0])[:, None]
    ref_frames = x_obs[b_idx, :, np.maximum(near, 0)]  # (B, T, N, 2)
    ref = np.linalg.norm(ref_frames[:, :, :, None, :] - ref_frames[:, :, None, :, :], axis=-1)
    t = lambda a: torch.tensor(a, dtype=DTYPE)
    return Batch(t(x_true), t(x_obs), t(mask), t(fill), t(ref), t(near >= 0))


def loss_terms(model: Imputer, batch: Batch, eps: torch.Tensor, recon_on: str = "unobserved") -> dict:
    """Per-term losses summed over the batch, using the reparameterized sample ``mu + sigma*eps``."""
    cfg = model.cfg
    mu, logvar = model.encode_tensors(batch.x_obs, batch.mask, batch.fill)
    z = mu + torch.exp(0.5 * logvar) * eps
    x_hat = model.decode_tensors(z, batch.x_obs, batch.mask, batch.fill)
    m = batch.mask.unsqueeze(-1)
    sel = (1.0 - m) if recon_on == "unobserved" else torch.ones_like(m)
    recon = torch.sum(sel * (batch.x_true - x_hat) ** 2)
    kl = torch.sum(kl_standard_normal(mu, logvar))
    # regularizers act on the completed sequence (observed entries kept)
    comp = m * batch.x_obs + (1.0 - m) * x_hat
    terms = {"recon": recon, "kl": cfg.beta * kl}
    if cfg.lambda_smooth:
        d2 = comp[..., 2:, :] - 2 * comp[..., 1:-1, :] + comp[..., :-2, :]
        terms["smooth"] = cfg.lambda_smooth * torch.sum(d2 * d2)
    n = comp.shape[1]
    if n > 1 and (cfg.lambda_form or cfg.lambda_coll):
        dist = _pairwise(comp)  # (B, T, N, N)
        upper = torch.triu(torch.ones(n, n, dtype=DTYPE), diagonal=1)
        if cfg.lambda_form:
            dev = (dist - batch.ref_dist) * upper * batch.ref_valid[..., None, None]
            terms["form"] = cfg.lambda_form * torch.sum(dev * dev)
        if cfg.lambda_coll:
            hinge = torch.clamp(cfg.collision_radius - dist, min=0.0) * upper
            terms["coll"] = cfg.lambda_coll * torch.sum(hinge * hinge)
    terms["_kl_raw"] = kl
    terms["_x_hat"] = x_hat
    return terms


def total_loss(terms: dict) -> torch.Tensor:
    for name, v in terms.items():
        if not name.startswith("_") and not torch.isfinite(v):
            raise NumericalInstability(name)
    return sum(v for k, v in terms.items() if not k.startswith("_"))


def sample_eps(batch_size: int, latent_dim: int, seed: int) -> torch.Tensor:
    g = torch.Generator().manual_seed(int(seed))
    return torch.randn(batch_size, latent_dim, generator=g, dtype=DTYPE)


def elbo_loss(
    params: Imputer,
    seq: ObservedSequence,
    x_true,
    cfg: LatentConfig | None = None,
    seed: int = 0,
    recon_on: str = "unobserved",
) -> tuple[float, dict[str, np.ndarray]]:
    """Single-sample loss and its exact gradient with respect to every parameter.

    ``cfg`` overrides the weights stored on ``params`` when given.
    """
    _check(params, seq)
    x_true = np.asarray(x_true, dtype=np.float64)
    if x_true.shape != seq.x_obs.shape:
        raise DimensionError(f"x_true shape {x_true.shape} does not match {seq.x_obs.shape}")
    if not np.isfinite(x_true).all():
        raise NumericalInstability("x_true")
    saved = params.cfg
    if cfg is not None:
        params.cfg = cfg
    try:
        batch = make_batch(x_true[None], seq.mask[None], seq.x_obs[None])
        params.zero_grad(set_to_none=True)
        loss = total_loss(loss_terms(params, batch, sample_eps(1, params.cfg.latent_dim, seed), recon_on))
        loss.backward()
    finally:
        params.cfg = saved
    grads = {
        name: (p.grad.detach().numpy().copy() if p.grad is not None else np.zeros(tuple(p.shape)))
        for name, p in params.named_parameters()
    }
    params.zero_grad(set_to_none=True)
    return float(loss.detach()), grads


def kl_term(params: Imputer, seq: ObservedSequence) -> float:
    mu, logvar = encode(params, seq)
    return float(kl_standard_normal(torch.as_tensor(mu), torch.as_tensor(logvar)))


def posterior_mean_decode(params: Imputer, x_obs: torch.Tensor, mask: torch.Tensor, fill: torch.Tensor):
    mu, _ = params.encode_tensors(x_obs, mask, fill)
    return params.decode_tensors(mu, x_obs, mask, fill)


def distill_step(
    learner: Imputer,
    demonstrator: Imputer,
    seq_full: ObservedSequence,
    seq_masked: ObservedSequence,
    weight: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """``weight * ||learner(masked) - demonstrator(full)||^2`` and its gradient for the learner.

    Both models decode at their posterior-mean latent. The demonstrator is
    treated as a constant target.
    """
    if seq_full.x_obs.shape != seq_masked.x_obs.shape:
        raise DimensionError(f"sequence shapes differ: {seq_full.x_obs.shape} vs {seq_masked.x_obs.shape}")
    xf, mf, ff = _tensors(seq_full)
    xm, mm, fm = _tensors(seq_masked)
    with torch.no_grad():
        target = posterior_mean_decode(demonstrator, xf, mf, ff)
    learner.zero_grad(set_to_none=True)
    pred = posterior_mean_decode(learner, xm, mm, fm)
    term = weight * torch.sum((pred - target) ** 2)
    term.backward()
    grads = {
        name: (p.grad.detach().numpy().copy() if p.grad is not None else np.zeros(tuple(p.shape)))
        for name, p in learner.named_parameters()
    }
    learner.zero_grad(set_to_none=True)
    return float(term.detach()), grads


def config_dict(cfg: LatentConfig) -> dict:
    return asdict(cfg)
