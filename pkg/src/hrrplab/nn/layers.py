"""Neural building blocks shared by both generative models.

Modules hold their parameters as autodiff Tensors in declaration order, which
also fixes the serialization order of checkpoints. Initialization is
variance-scaling for convolutions and linear layers; the final convolution of
every ResBlock starts at zero so each block begins as an exact identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hrrplab.core import canonical_angle
from hrrplab.nn import autodiff as ad
from hrrplab.nn.autodiff import Tensor

#: Fleet-wide scale that maps ship dimensions to O(1) model inputs.
DIMENSION_SCALE_M = 300.0


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters shared by the two models."""

    n_bins: int = 256
    base_channels: int = 16
    n_resblocks_per_stage: int = 1
    n_stages: int = 3
    embed_dim: int = 64
    parameter_budget: int = 0  # informational only

    def __post_init__(self):
        if min(self.n_bins, self.base_channels, self.n_resblocks_per_stage,
               self.n_stages, self.embed_dim) <= 0:
            raise ValueError("all NetworkConfig fields must be positive")
        if self.n_bins % (2 ** self.n_stages) != 0:
            raise ValueError("n_bins must be divisible by 2^n_stages")

    def as_dict(self) -> dict:
        return {
            "n_bins": self.n_bins,
            "base_channels": self.base_channels,
            "n_resblocks_per_stage": self.n_resblocks_per_stage,
            "n_stages": self.n_stages,
            "embed_dim": self.embed_dim,
            "parameter_budget": self.parameter_budget,
        }


#: A larger configuration in the ballpark of the published model sizes; not
#: exercised by the test suite (CPU budget).
FULL_SCALE_CONFIG = NetworkConfig(n_bins=256, base_channels=48,
                                  n_resblocks_per_stage=2, n_stages=3,
                                  embed_dim=128, parameter_budget=700_000)


class Module:
    """Base class: collects parameters from attributes in declaration order."""

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((name, value))
            elif isinstance(value, Module):
                out.extend((f"{name}.{sub}", t) for sub, t in value.named_parameters())
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend((f"{name}.{i}.{sub}", t)
                                   for sub, t in item.named_parameters())
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def n_parameters(self) -> int:
        return sum(t.size for t in self.parameters())


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 zero_init: bool = False):
        if zero_init:
            w = np.zeros((n_in, n_out))
        else:
            w = rng.standard_normal((n_in, n_out)) / math.sqrt(n_in)
        self.weight = ad.parameter(w)
        self.bias = ad.parameter(np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.matmul(x, self.weight) + self.bias


class Conv1d(Module):
    def __init__(self, ch_in: int, ch_out: int, kernel: int,
                 rng: np.random.Generator, stride: int = 1,
                 padding: int | None = None, zero_init: bool = False):
        if zero_init:
            w = np.zeros((ch_out, ch_in, kernel))
        else:
            w = rng.standard_normal((ch_out, ch_in, kernel)) / math.sqrt(ch_in * kernel)
        self.weight = ad.parameter(w)
        self.bias = ad.parameter(np.zeros(ch_out))
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class GroupNorm(Module):
    """Per-channel affine group normalization (batch-size independent)."""

    def __init__(self, channels: int, groups: int = 4, eps: float = 1e-5):
        if channels % groups != 0:
            raise ValueError("channels must be divisible by the group count")
        self.gamma = ad.parameter(np.ones((1, channels, 1)))
        self.beta = ad.parameter(np.zeros((1, channels, 1)))
        self.groups = groups
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        n, c, length = x.shape
        g = self.groups
        xg = x.reshape(n, g, (c // g) * length)
        mu = xg.mean(axis=2, keepdims=True)
        centered = xg - mu
        var = (centered ** 2.0).mean(axis=2, keepdims=True)
        xn = centered * ((var + self.eps) ** -0.5)
        return xn.reshape(n, c, length) * self.gamma + self.beta


class ResBlock(Module):
    """Residual block with additive embedding injection.

    out = x + F(x + broadcast(embedding)), F = [norm, SiLU, conv, norm, SiLU,
    conv], the final conv zero-initialized so the block starts as identity.
    """

    def __init__(self, channels: int, embed_dim: int, rng: np.random.Generator):
        self.emb_proj = Linear(embed_dim, channels, rng)
        self.norm1 = GroupNorm(channels)
        self.conv1 = Conv1d(channels, channels, 3, rng)
        self.norm2 = GroupNorm(channels)
        self.conv2 = Conv1d(channels, channels, 3, rng, zero_init=True)
        self.channels = channels

    def __call__(self, x: Tensor, emb: Tensor) -> Tensor:
        n = x.shape[0]
        if emb.shape[0] != n:
            raise ValueError("embedding batch size mismatch")
        inj = self.emb_proj(emb).reshape(n, self.channels, 1)
        h = x + inj
        h = self.conv1(ad.silu(self.norm1(h)))
        h = self.conv2(ad.silu(self.norm2(h)))
        return x + h


def sinusoidal_embedding(angle_deg: float, dim: int) -> np.ndarray:
    """Interleaved (sin, cos) pairs at integer frequencies 1, 2, 4, ... .

    Frequencies are geometrically spaced integers starting at 1, so the
    embedding is exactly 360-degree periodic: the angle is canonicalized to
    [0, 360) first, making embedding(theta) and embedding(theta + 360)
    bit-identical.
    """
    if dim % 2 != 0 or dim <= 0:
        raise ValueError("embedding dim must be a positive even integer")
    half = dim // 2
    freqs = 2.0 ** np.arange(half)
    rad = math.radians(canonical_angle(angle_deg))
    out = np.empty(dim)
    out[0::2] = np.sin(freqs * rad)
    out[1::2] = np.cos(freqs * rad)
    return out


def embed_angles(angles_deg: np.ndarray, dim: int) -> np.ndarray:
    """Row-wise sinusoidal_embedding for a batch of angles."""
    return np.stack([sinusoidal_embedding(float(a), dim) for a in angles_deg])


class ConditionEmbedding(Module):
    """Maps (length, width, aspect) to the shared embedding space.

    Input features are the aspect's sinusoidal embedding concatenated with the
    two dimensions scaled by the fleet maximum; they pass through
    linear-SiLU-linear. Dropped conditions are replaced by a learned null
    feature vector, so "unconditional" is distinguishable from a real
    zero-dimension ship. ``mode`` zeroes the feature block a restricted model
    must not see: "aspect" hides the dimensions, "dimensions" hides the
    aspect, "none" routes everything through the null vector.
    """

    MODES = ("none", "aspect", "dimensions", "both")

    def __init__(self, embed_dim: int, rng: np.random.Generator,
                 angle_dim: int = 16, hidden: int = 64, mode: str = "both"):
        if mode not in self.MODES:
            raise ValueError(f"unknown conditioning mode: {mode!r}")
        self.in_dim = angle_dim + 2
        self.null_token = ad.parameter(rng.standard_normal(self.in_dim) * 0.1)
        self.lin1 = Linear(self.in_dim, hidden, rng)
        self.lin2 = Linear(hidden, embed_dim, rng)
        self.angle_dim = angle_dim
        self.mode = mode

    def features(self, lengths: np.ndarray, widths: np.ndarray,
                 aspects: np.ndarray) -> np.ndarray:
        feats = np.concatenate([
            embed_angles(aspects, self.angle_dim),
            np.asarray(lengths)[:, None] / DIMENSION_SCALE_M,
            np.asarray(widths)[:, None] / DIMENSION_SCALE_M,
        ], axis=1)
        if self.mode in ("none", "dimensions"):
            feats[:, :self.angle_dim] = 0.0
        if self.mode in ("none", "aspect"):
            feats[:, self.angle_dim:] = 0.0
        return feats

    def __call__(self, feats: np.ndarray, dropped: np.ndarray) -> Tensor:
        """Embed feature rows; rows flagged in ``dropped`` use the null token."""
        if self.mode == "none":
            dropped = np.ones(len(feats), dtype=bool)
        keep = (~dropped).astype(np.float64)[:, None]
        drop = dropped.astype(np.float64)[:, None]
        mixed = Tensor(feats * keep) + self.null_token * Tensor(drop)
        return self.lin2(ad.silu(self.lin1(mixed)))
