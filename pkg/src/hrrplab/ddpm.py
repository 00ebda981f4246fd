"""Conditional denoising diffusion model for range profiles.

Cosine noise schedule, forward noising, noise-prediction loss with
classifier-free condition dropout, ancestral sampling with optional guidance,
and a small training loop. The denoiser is a 1-D U-Net of ResBlocks with the
time and condition embeddings injected additively at every block.

Profiles are max-normalized in [0, 1] at rest; the model works in [-1, 1]
(x = 2p - 1) and sampling maps back, clamps negatives, and re-normalizes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hrrplab.core import RangeProfile
from hrrplab.nn import autodiff as ad
from hrrplab.nn.autodiff import Tensor
from hrrplab.nn.checkpoint import (load_checkpoint, restore_parameters,
                                   save_checkpoint)
from hrrplab.nn.layers import (ConditionEmbedding, Conv1d, GroupNorm, Linear,
                               Module, NetworkConfig, ResBlock, embed_angles)
from hrrplab.nn.optim import Adam

DEFAULT_T = 800
DESK_T = 200
COSINE_OFFSET = 0.008
DEFAULT_COND_DROPOUT = 0.1
TIME_ANGLE_DIM = 16


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-timestep noise quantities; index 0 is the clean signal."""

    T: int
    alpha_bar: np.ndarray  # length T+1, alpha_bar[0] == 1
    alpha: np.ndarray      # length T, alpha[t-1] pairs with step t
    beta: np.ndarray       # length T

    def __post_init__(self):
        ab = self.alpha_bar
        if len(ab) != self.T + 1 or len(self.beta) != self.T:
            raise ValueError("schedule length mismatch")
        if not (0.999 < ab[0] <= 1.0):
            raise ValueError("alpha_bar[0] must be 1")
        if not np.all(np.diff(ab) < 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if ab[-1] >= 0.01:
            raise ValueError("alpha_bar[T] must be < 0.01")
        if np.any(self.beta <= 0) or np.any(self.beta >= 1):
            raise ValueError("betas must lie in (0, 1)")


def cosine_alpha_bar(T: int, offset: float = COSINE_OFFSET) -> DiffusionSchedule:
    """Cosine schedule: squared-cosine decay normalized to start at 1.

    Per-step betas are clipped at 0.999 and alpha_bar is recomputed as the
    cumulative product, so the published invariants hold exactly.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    t = np.arange(T + 1) / T
    f = np.cos(((t + offset) / (1.0 + offset)) * math.pi / 2.0) ** 2
    ab = f / f[0]
    beta = np.clip(1.0 - ab[1:] / ab[:-1], 1e-8, 0.999)
    alpha = 1.0 - beta
    ab = np.concatenate([[1.0], np.cumprod(alpha)])
    return DiffusionSchedule(T=T, alpha_bar=ab, alpha=alpha, beta=beta)


def q_sample(x0: np.ndarray, t, noise: np.ndarray,
             schedule: DiffusionSchedule) -> np.ndarray:
    """Forward process: sqrt(ab_t) x0 + sqrt(1 - ab_t) noise.

    ``t`` may be a scalar or one timestep per leading-axis row of ``x0``.
    """
    t_arr = np.asarray(t)
    if np.any(t_arr < 0) or np.any(t_arr > schedule.T):
        raise ValueError(f"timestep out of [0, {schedule.T}]")
    ab = schedule.alpha_bar[t_arr]
    if t_arr.ndim == 1 and np.ndim(x0) > 1:
        ab = ab.reshape(-1, *([1] * (np.ndim(x0) - 1)))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


class DenoiserNet(Module):
    """1-D U-Net epsilon-predictor with additive embedding injection.

    Channels grow linearly per downsampling stage; skips are additive; the
    output convolution starts at zero so the initial prediction is zero.

    The signal enters alongside a fixed ramp channel (-1 to 1 across the
    bins). Profiles are laid out around the center bin, so the envelope a
    condition implies lives at absolute positions; without the ramp the
    all-convolutional stack is shift-equivariant and cannot express it.

    A scale/shift gate applies the embedding to the bottleneck map directly:
    the residual blocks' final convolutions start at zero, so on their own
    the embedding would only pick up gradient second-hand; the gate makes
    the condition pathway first-order from the start.
    """

    def __init__(self, config: NetworkConfig, rng: np.random.Generator,
                 mode: str = "both"):
        ch = [config.base_channels * (i + 1) for i in range(config.n_stages + 1)]
        k = config.n_resblocks_per_stage
        self.cond = ConditionEmbedding(config.embed_dim, rng, mode=mode)
        self.time_lin1 = Linear(TIME_ANGLE_DIM, config.embed_dim, rng)
        self.time_lin2 = Linear(config.embed_dim, config.embed_dim, rng)
        self.in_conv = Conv1d(2, ch[0], 3, rng)
        self.gate_scale = Linear(config.embed_dim, ch[-1], rng)
        self.gate_shift = Linear(config.embed_dim, ch[-1], rng)
        self._coords = np.linspace(-1.0, 1.0, config.n_bins)
        self.down_blocks = [ResBlock(ch[i], config.embed_dim, rng)
                            for i in range(config.n_stages) for _ in range(k)]
        self.down_convs = [Conv1d(ch[i], ch[i + 1], 3, rng, stride=2)
                           for i in range(config.n_stages)]
        self.mid_blocks = [ResBlock(ch[-1], config.embed_dim, rng)
                           for _ in range(k)]
        self.up_convs = [Conv1d(ch[i + 1], ch[i], 3, rng)
                         for i in reversed(range(config.n_stages))]
        self.up_blocks = [ResBlock(ch[i], config.embed_dim, rng)
                          for i in reversed(range(config.n_stages))
                          for _ in range(k)]
        self.out_norm = GroupNorm(ch[0])
        self.out_conv = Conv1d(ch[0], 1, 3, rng, zero_init=True)
        self.config = config
        self.mode = mode
        self._k = k
        self._ch_top = ch[-1]

    def __call__(self, x: np.ndarray, time_angle: np.ndarray,
                 feats: np.ndarray, dropped: np.ndarray) -> Tensor:
        """Predict the injected noise for a batch.

        ``x``: [batch, n_bins] in model space; ``time_angle``: per-sample
        timestep mapped to [0, 180] degrees; ``feats``: condition feature
        rows; ``dropped``: rows to embed with the null token.
        """
        n, k = x.shape[0], self._k
        temb_in = Tensor(embed_angles(time_angle, TIME_ANGLE_DIM))
        temb = self.time_lin2(ad.silu(self.time_lin1(temb_in)))
        emb = temb + self.cond(feats, dropped)

        coords = np.broadcast_to(self._coords, x.shape)
        h = self.in_conv(Tensor(np.stack([x, coords], axis=1)))
        skips = []
        for i, down in enumerate(self.down_convs):
            for block in self.down_blocks[i * k:(i + 1) * k]:
                h = block(h, emb)
            skips.append(h)
            h = down(h)
        scale = self.gate_scale(emb).reshape(n, self._ch_top, 1)
        shift = self.gate_shift(emb).reshape(n, self._ch_top, 1)
        h = h * (scale + 1.0) + shift
        for block in self.mid_blocks:
            h = block(h, emb)
        for i, up in enumerate(self.up_convs):
            h = up(ad.upsample_nearest(h)) + skips[-(i + 1)]
            for block in self.up_blocks[i * k:(i + 1) * k]:
                h = block(h, emb)
        out = self.out_conv(ad.silu(self.out_norm(h)))
        return out.reshape(n, x.shape[1])


def ddpm_loss(model: DenoiserNet, schedule: DiffusionSchedule,
              x0: np.ndarray, feats: np.ndarray, seed: int,
              cond_dropout_p: float = DEFAULT_COND_DROPOUT) -> Tensor:
    """Noise-prediction loss on one batch; deterministic for a fixed seed.

    Per sample: a uniform timestep in [1, T], fresh Gaussian noise, and with
    probability ``cond_dropout_p`` the condition is replaced by the null
    token. Returns mean squared prediction error over the whole batch.
    """
    if len(x0) == 0:
        raise ValueError("empty batch")
    if not (0.0 <= cond_dropout_p < 1.0):
        raise ValueError("cond_dropout_p must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    n = len(x0)
    t = rng.integers(1, schedule.T + 1, size=n)
    noise = rng.standard_normal(x0.shape)
    dropped = rng.random(n) < cond_dropout_p
    x_t = q_sample(x0, t, noise, schedule)
    pred = model(x_t, 180.0 * t / schedule.T, feats, dropped)
    return ((pred - Tensor(noise)) ** 2.0).mean()


def sample_dropout_mask(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """The dropout decision rule used by ddpm_loss, exposed for rate checks."""
    return rng.random(n) < p


def ddpm_sample(model: DenoiserNet, schedule: DiffusionSchedule,
                feats: np.ndarray, seed,
                guidance_scale: float = 1.0) -> np.ndarray:
    """Ancestral reverse chain for a batch of condition feature rows.

    Returns profiles in [0, 1], max-normalized, one row per condition. With
    ``guidance_scale`` g != 1 the blended prediction
    eps_uncond + g (eps_cond - eps_uncond) is used; g == 1 needs only the
    conditional pass.

    Each step forms the implied clean signal, clamps it to the model-space
    range [-1, 1], and takes the posterior mean from the clamped value; the
    clamp keeps early steps (where the implied signal is a near-singular
    division) from drifting far outside the signal range and is a no-op
    whenever the prediction already lands inside it.

    ``seed`` is either one integer (one noise stream for the whole batch) or
    a sequence of per-row integers; in the per-row form each row's noise
    chain is reproducible on its own, so sampling a row alone or inside any
    batch yields the same profile up to the rounding of batched kernels.
    """
    if guidance_scale < 0:
        raise ValueError("guidance_scale must be >= 0")
    n, n_bins = len(feats), model.config.n_bins
    if np.ndim(seed) == 0:
        rngs = [np.random.default_rng(int(seed))]
    else:
        if len(seed) != n:
            raise ValueError("need one seed per condition row")
        rngs = [np.random.default_rng(int(s)) for s in seed]

    def draw(shape):
        if len(rngs) == 1:
            return rngs[0].standard_normal(shape)
        return np.stack([r.standard_normal(shape[1:]) for r in rngs])

    no_drop = np.zeros(n, dtype=bool)
    all_drop = np.ones(n, dtype=bool)
    x = draw((n, n_bins))
    with ad.no_grad():
        for t in range(schedule.T, 0, -1):
            angle = np.full(n, 180.0 * t / schedule.T)
            eps = model(x, angle, feats, no_drop).data
            if guidance_scale != 1.0:
                eps_u = model(x, angle, feats, all_drop).data
                eps = eps_u + guidance_scale * (eps - eps_u)
            ab_t, ab_prev = schedule.alpha_bar[t], schedule.alpha_bar[t - 1]
            beta_t, alpha_t = schedule.beta[t - 1], schedule.alpha[t - 1]
            x0_hat = (x - math.sqrt(1.0 - ab_t) * eps) / math.sqrt(ab_t)
            np.clip(x0_hat, -1.0, 1.0, out=x0_hat)
            coef_x0 = math.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
            coef_xt = math.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)
            mean = coef_x0 * x0_hat + coef_xt * x
            if t > 1:
                sigma = math.sqrt(beta_t * (1.0 - ab_prev) / (1.0 - ab_t))
                x = mean + sigma * draw(x.shape)
            else:
                x = mean
    out = np.maximum((x + 1.0) / 2.0, 0.0)
    peaks = out.max(axis=1, keepdims=True)
    np.divide(out, peaks, out=out, where=peaks > 0)
    return out


@dataclass(frozen=True)
class DdpmTrainConfig:
    network: NetworkConfig = NetworkConfig()
    T: int = DESK_T
    steps: int = 2000
    batch_size: int = 32
    lr: float = 2e-4
    cond_dropout_p: float = DEFAULT_COND_DROPOUT
    mode: str = "both"


def train_ddpm(profiles: np.ndarray, lengths: np.ndarray, widths: np.ndarray,
               aspects: np.ndarray, cfg: DdpmTrainConfig, seed: int,
               checkpoint_path: str | Path,
               loss_csv_path: str | Path | None = None) -> DenoiserNet:
    """Train a denoiser on normalized profiles; writes checkpoint + loss CSV."""
    rng = np.random.default_rng(seed)
    model = DenoiserNet(cfg.network, rng, mode=cfg.mode)
    schedule = cosine_alpha_bar(cfg.T)
    opt = Adam(model.parameters(), lr=cfg.lr)
    x_all = 2.0 * profiles - 1.0
    feats_all = model.cond.features(lengths, widths, aspects)
    losses: list[float] = []
    step_seeds = rng.integers(0, 2 ** 31, size=cfg.steps)
    for step in range(cfg.steps):
        idx = rng.integers(0, len(x_all), size=cfg.batch_size)
        opt.zero_grad()
        loss = ddpm_loss(model, schedule, x_all[idx], feats_all[idx],
                         seed=int(step_seeds[step]),
                         cond_dropout_p=cfg.cond_dropout_p)
        loss.backward()
        opt.step()
        losses.append(loss.item())
    if loss_csv_path is not None:
        with open(loss_csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "loss"])
            w.writerows((i, f"{v:.8f}") for i, v in enumerate(losses))
    save_checkpoint(checkpoint_path, "ddpm", model.named_parameters(),
                    config={**cfg.network.as_dict(), "T": cfg.T,
                            "mode": cfg.mode},
                    seed=seed, step=cfg.steps, loss_tail=losses[-20:],
                    extra={"conditioning": cfg.mode})
    return model


def load_ddpm(path: str | Path) -> tuple[DenoiserNet, DiffusionSchedule, dict]:
    """Rebuild a denoiser and its schedule from a checkpoint."""
    header, arrays = load_checkpoint(path)
    if header.get("model") != "ddpm":
        raise ValueError(f"not a ddpm checkpoint: {path}")
    c = header["config"]
    net_cfg = NetworkConfig(
        n_bins=c["n_bins"], base_channels=c["base_channels"],
        n_resblocks_per_stage=c["n_resblocks_per_stage"],
        n_stages=c["n_stages"], embed_dim=c["embed_dim"],
        parameter_budget=c.get("parameter_budget", 0))
    model = DenoiserNet(net_cfg, np.random.default_rng(0), mode=c["mode"])
    restore_parameters(model.named_parameters(), header, arrays)
    return model, cosine_alpha_bar(c["T"]), header


def profiles_from_samples(samples: np.ndarray,
                          delta_r: float) -> list[RangeProfile]:
    return [RangeProfile(row, delta_r) for row in samples]
