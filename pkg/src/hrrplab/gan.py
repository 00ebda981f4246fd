"""Conditional Wasserstein GAN with weight clipping and an MSE-augmented
generator objective.

The generator maps a latent vector through a linear layer onto the coarsest
feature map and decodes it with the same ResBlock/upsample stages as the
diffusion denoiser, conditions injected additively. The critic is a plain
strided convolution stack — no normalization layers, which interact badly
with weight clipping — with the condition embedding added after every
downsampling stage and a global mean pool before the score.

Training alternates ``n_critic`` critic updates (each followed immediately by
a hard clip of every critic parameter) with one generator update on
adv + lambda * MSE. The MSE term pairs each real sample with a fresh latent
every step, so it acts as a conditional-mean regularizer (smoother outputs),
not a reconstruction oracle.

Models work in [-1, 1] signal space like the diffusion module.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from hrrplab.nn import autodiff as ad
from hrrplab.nn.autodiff import Tensor
from hrrplab.nn.checkpoint import (load_checkpoint, restore_parameters,
                                   save_checkpoint)
from hrrplab.nn.layers import (ConditionEmbedding, Conv1d, Linear, Module,
                               NetworkConfig, ResBlock)
from hrrplab.nn.optim import Adam, clip_parameters

DEFAULT_LAMBDA_MSE = 50.0
DEFAULT_CLIP_BOUND = 0.05
DEFAULT_N_CRITIC = 5
DEFAULT_LATENT_DIM = 64
DEFAULT_GAN_LR = 5e-5


@dataclass(frozen=True)
class GanTrainConfig:
    network: NetworkConfig = NetworkConfig()
    lambda_mse: float = DEFAULT_LAMBDA_MSE
    clip_bound: float = DEFAULT_CLIP_BOUND
    n_critic: int = DEFAULT_N_CRITIC
    latent_dim: int = DEFAULT_LATENT_DIM
    batch_size: int = 24
    steps: int = 800
    lr: float = DEFAULT_GAN_LR
    mode: str = "both"

    def __post_init__(self):
        if self.lambda_mse < 0:
            raise ValueError("lambda_mse must be >= 0")
        if self.clip_bound <= 0:
            raise ValueError("clip_bound must be positive")
        if self.n_critic < 1:
            raise ValueError("n_critic must be >= 1")


class Generator(Module):
    """Latent-to-profile decoder with a scale/shift condition gate.

    The condition embedding multiplies and shifts the coarse latent map
    channel-wise before decoding. The residual blocks also receive the
    embedding, but their final convolutions start at zero, so without the
    gate the condition pathway would only pick up gradient second-hand and
    crawls; the gate makes it first-order from step one.
    """

    def __init__(self, config: NetworkConfig, rng: np.random.Generator,
                 mode: str = "both", latent_dim: int = DEFAULT_LATENT_DIM):
        ch = [config.base_channels * (i + 1) for i in range(config.n_stages + 1)]
        self.cond = ConditionEmbedding(config.embed_dim, rng, mode=mode)
        self.coarse_len = config.n_bins // (2 ** config.n_stages)
        self.z_lin = Linear(latent_dim, ch[-1] * self.coarse_len, rng)
        self.gate_scale = Linear(config.embed_dim, ch[-1], rng)
        self.gate_shift = Linear(config.embed_dim, ch[-1], rng)
        self.mid = ResBlock(ch[-1], config.embed_dim, rng)
        self.up_convs = [Conv1d(ch[i + 1], ch[i], 3, rng)
                         for i in reversed(range(config.n_stages))]
        self.up_blocks = [ResBlock(ch[i], config.embed_dim, rng)
                          for i in reversed(range(config.n_stages))]
        self.out_conv = Conv1d(ch[0], 1, 3, rng)
        self.config = config
        self.mode = mode
        self.latent_dim = latent_dim
        self._ch_top = ch[-1]

    def __call__(self, z: np.ndarray, feats: np.ndarray) -> Tensor:
        n = len(z)
        dropped = np.zeros(n, dtype=bool)
        emb = self.cond(feats, dropped)
        h = self.z_lin(Tensor(z)).reshape(n, self._ch_top, self.coarse_len)
        scale = self.gate_scale(emb).reshape(n, self._ch_top, 1)
        shift = self.gate_shift(emb).reshape(n, self._ch_top, 1)
        h = h * (scale + 1.0) + shift
        h = self.mid(h, emb)
        for up, block in zip(self.up_convs, self.up_blocks):
            h = block(up(ad.upsample_nearest(h)), emb)
        out = self.out_conv(ad.silu(h))
        return out.reshape(n, self.config.n_bins)


class Critic(Module):
    def __init__(self, config: NetworkConfig, rng: np.random.Generator,
                 mode: str = "both"):
        ch = [config.base_channels * (i + 1) for i in range(config.n_stages + 1)]
        self.cond = ConditionEmbedding(config.embed_dim, rng, mode=mode)
        self.stem = Conv1d(1, ch[0], 3, rng)
        self.downs = [Conv1d(ch[i], ch[i + 1], 3, rng, stride=2)
                      for i in range(config.n_stages)]
        self.projs = [Linear(config.embed_dim, ch[i + 1], rng)
                      for i in range(config.n_stages)]
        self.head = Linear(ch[-1], 1, rng)
        self.config = config
        self.mode = mode

    def __call__(self, x: Tensor | np.ndarray, feats: np.ndarray) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        n = x.shape[0]
        dropped = np.zeros(n, dtype=bool)
        emb = self.cond(feats, dropped)
        h = ad.silu(self.stem(x.reshape(n, 1, self.config.n_bins)))
        for down, proj in zip(self.downs, self.projs):
            h = down(h)
            h = ad.silu(h + proj(emb).reshape(n, down.weight.shape[0], 1))
        return self.head(h.mean(axis=2))


# -- losses -----------------------------------------------------------------

def generator_loss(critic, generator, z_batch: np.ndarray,
                   c_batch: np.ndarray) -> Tensor:
    """Adversarial generator loss: negative mean critic score on fakes."""
    if len(z_batch) == 0:
        raise ValueError("empty batch")
    return -critic(generator(z_batch, c_batch), c_batch).mean()


def critic_loss(critic, generator, z_batch: np.ndarray, x_batch: np.ndarray,
                c_batch: np.ndarray) -> Tensor:
    """Wasserstein critic loss: mean score on fakes minus mean score on reals."""
    if len(z_batch) == 0 or len(x_batch) == 0:
        raise ValueError("empty batch")
    fake = generator(z_batch, c_batch)
    return critic(fake, c_batch).mean() - critic(Tensor(x_batch), c_batch).mean()


def mse_loss(generator, z_batch: np.ndarray, x_batch: np.ndarray,
             c_batch: np.ndarray) -> Tensor:
    """Mean squared bin-wise difference between fakes and reals."""
    fake = generator(z_batch, c_batch)
    return ((fake - Tensor(x_batch)) ** 2.0).mean()


def generator_total_loss(critic, generator, z_batch: np.ndarray,
                         x_batch: np.ndarray, c_batch: np.ndarray,
                         lambda_mse: float = DEFAULT_LAMBDA_MSE) -> Tensor:
    """Adversarial plus lambda-weighted MSE generator objective."""
    return (generator_loss(critic, generator, z_batch, c_batch)
            + lambda_mse * mse_loss(generator, z_batch, x_batch, c_batch))


class GanLossRecord(NamedTuple):
    step: int
    l_advD: float
    l_advG: float
    l_mse: float
    l_totG: float


class GanState:
    """Models, optimizers, and update counters for one training run."""

    def __init__(self, config: GanTrainConfig, seed: int):
        rng = np.random.default_rng(seed)
        self.generator = Generator(config.network, rng, config.mode,
                                   config.latent_dim)
        self.critic = Critic(config.network, rng, config.mode)
        self.opt_g = Adam(self.generator.parameters(), lr=config.lr,
                          betas=(0.5, 0.9))
        self.opt_c = Adam(self.critic.parameters(), lr=config.lr,
                          betas=(0.5, 0.9))
        self.config = config
        self.seed = seed
        self.critic_updates = 0
        self.generator_updates = 0

    def named_parameters(self):
        return ([(f"generator.{n}", t)
                 for n, t in self.generator.named_parameters()]
                + [(f"critic.{n}", t)
                   for n, t in self.critic.named_parameters()])


def gan_train_step(state: GanState, real_x: np.ndarray, feats: np.ndarray,
                   seed: int) -> GanLossRecord:
    """One alternating update: n_critic critic steps, then one generator step.

    Every critic optimizer step is immediately followed by a hard clip of all
    critic parameters to [-clip_bound, clip_bound]. The recorded l_advD is
    from the last critic update of this call. The generator is detached
    (treated as a constant sampler) during critic updates; gradients and
    values are identical to differentiating the critic loss directly, since
    the critic update touches no generator parameter.
    """
    cfg = state.config
    rng = np.random.default_rng(seed)
    n = len(real_x)
    l_advD = 0.0
    for _ in range(cfg.n_critic):
        z = rng.standard_normal((n, cfg.latent_dim))
        with ad.no_grad():
            fake = state.generator(z, feats).data
        state.opt_c.zero_grad()
        loss_c = (state.critic(Tensor(fake), feats).mean()
                  - state.critic(Tensor(real_x), feats).mean())
        loss_c.backward()
        state.opt_c.step()
        clip_parameters(state.critic.parameters(), cfg.clip_bound)
        state.critic_updates += 1
        l_advD = loss_c.item()
    z = rng.standard_normal((n, cfg.latent_dim))
    state.opt_g.zero_grad()
    fake = state.generator(z, feats)
    l_advG = -state.critic(fake, feats).mean()
    l_mse = ((fake - Tensor(real_x)) ** 2.0).mean()
    total = l_advG + cfg.lambda_mse * l_mse
    total.backward()
    state.opt_g.step()
    state.generator_updates += 1
    return GanLossRecord(state.generator_updates, l_advD, l_advG.item(),
                         l_mse.item(), total.item())


def gan_generate(generator: Generator, feats: np.ndarray,
                 seed) -> np.ndarray:
    """Sample one profile per condition row; [0, 1], max-normalized.

    ``seed`` is one integer (one latent stream for the batch) or a sequence
    of per-row integers; the per-row form draws each row's latent from its
    own stream, so a row regenerated alone (or in any batch) matches up to
    the rounding of batched kernels.
    """
    if np.ndim(seed) == 0:
        rng = np.random.default_rng(int(seed))
        z = rng.standard_normal((len(feats), generator.latent_dim))
    else:
        if len(seed) != len(feats):
            raise ValueError("need one seed per condition row")
        z = np.stack([np.random.default_rng(int(s))
                      .standard_normal(generator.latent_dim) for s in seed])
    with ad.no_grad():
        x = generator(z, feats).data
    out = np.maximum((x + 1.0) / 2.0, 0.0)
    peaks = out.max(axis=1, keepdims=True)
    np.divide(out, peaks, out=out, where=peaks > 0)
    return out


def train_gan(profiles: np.ndarray, lengths: np.ndarray, widths: np.ndarray,
              aspects: np.ndarray, cfg: GanTrainConfig, seed: int,
              checkpoint_path: str | Path,
              loss_csv_path: str | Path | None = None) -> GanState:
    """Train on normalized profiles; writes checkpoint (both nets) + loss CSV."""
    state = GanState(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    x_all = 2.0 * profiles - 1.0
    feats_all = state.generator.cond.features(lengths, widths, aspects)
    step_seeds = rng.integers(0, 2 ** 31, size=cfg.steps)
    records: list[GanLossRecord] = []
    for step in range(cfg.steps):
        idx = rng.integers(0, len(x_all), size=cfg.batch_size)
        records.append(gan_train_step(state, x_all[idx], feats_all[idx],
                                      int(step_seeds[step])))
    if loss_csv_path is not None:
        with open(loss_csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "l_advD", "l_advG", "l_mse", "l_totG"])
            w.writerows((r.step, f"{r.l_advD:.8f}", f"{r.l_advG:.8f}",
                         f"{r.l_mse:.8f}", f"{r.l_totG:.8f}") for r in records)
    save_checkpoint(checkpoint_path, "gan", state.named_parameters(),
                    config={**cfg.network.as_dict(), "mode": cfg.mode,
                            "latent_dim": cfg.latent_dim,
                            "lambda_mse": cfg.lambda_mse,
                            "clip_bound": cfg.clip_bound,
                            "n_critic": cfg.n_critic},
                    seed=seed, step=cfg.steps,
                    loss_tail=[r.l_totG for r in records[-20:]],
                    extra={"conditioning": cfg.mode})
    return state


def load_gan(path: str | Path) -> tuple[GanState, dict]:
    """Rebuild generator and critic from a checkpoint.

    Critic parameters are re-clipped to the stored bound: float32 storage can
    round values sitting exactly on the bound outward by one ulp, and the
    clipping invariant must survive a round-trip.
    """
    header, arrays = load_checkpoint(path)
    if header.get("model") != "gan":
        raise ValueError(f"not a gan checkpoint: {path}")
    c = header["config"]
    net_cfg = NetworkConfig(
        n_bins=c["n_bins"], base_channels=c["base_channels"],
        n_resblocks_per_stage=c["n_resblocks_per_stage"],
        n_stages=c["n_stages"], embed_dim=c["embed_dim"],
        parameter_budget=c.get("parameter_budget", 0))
    cfg = GanTrainConfig(network=net_cfg, mode=c["mode"],
                         latent_dim=c["latent_dim"],
                         lambda_mse=c["lambda_mse"],
                         clip_bound=c["clip_bound"], n_critic=c["n_critic"])
    state = GanState(cfg, seed=header["seed"])
    restore_parameters(state.named_parameters(), header, arrays)
    clip_parameters(state.critic.parameters(), cfg.clip_bound)
    return state, header
