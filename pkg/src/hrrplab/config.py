"""Plain-text run configuration shared by every CLI command.

A config file is lines of ``key = value`` (``#`` comments and blank lines
ignored). Every key has a default; unknown keys are rejected so typos cannot
silently fall back to defaults. Each command writes the fully-resolved
configuration next to its outputs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from hrrplab.nn.layers import NetworkConfig


class ConfigError(Exception):
    """Raised for unknown keys, bad values, or malformed config files."""


@dataclass
class RunConfig:
    # global
    seed: int = 0
    # simulated-acquisition grid
    n_bins: int = 256
    delta_r: float = 1.5
    # fleet / dataset
    n_ships: int = 60
    per_ship: int = 400
    snr_mean_db: float = 13.0
    density: float = 2.0
    split_fractions: tuple[float, float, float] = (0.90, 0.05, 0.05)
    # network
    base_channels: int = 16
    n_stages: int = 3
    n_resblocks_per_stage: int = 1
    embed_dim: int = 64
    # training (shared)
    mode: str = "both"
    steps: int = 2000
    batch_size: int = 24
    # diffusion
    schedule_T: int = 200
    lr_ddpm: float = 2e-4
    cond_dropout_p: float = 0.1
    guidance_scale: float = 1.0
    # adversarial
    gan_steps: int = 800
    lr_gan: float = 2e-4
    lambda_mse: float = 50.0
    clip_bound: float = 0.05
    n_critic: int = 5
    latent_dim: int = 64
    # evaluation
    delta_deg: float = 2.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in ("none", "aspect", "dimensions", "both"):
            raise ConfigError(
                f"mode: must be one of none/aspect/dimensions/both, "
                f"got {self.mode!r}")
        if len(self.split_fractions) != 3:
            raise ConfigError("split_fractions: need exactly three values")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigError(
                f"split_fractions: must sum to 1, got {self.split_fractions}")
        for key in ("n_bins", "n_ships", "per_ship", "base_channels",
                    "n_stages", "n_resblocks_per_stage", "embed_dim", "steps",
                    "gan_steps", "batch_size", "schedule_T", "n_critic",
                    "latent_dim"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be >= 1")
        for key in ("delta_r", "snr_mean_db", "density", "lr_ddpm", "lr_gan",
                    "clip_bound", "delta_deg", "guidance_scale"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key}: must be positive")
        if self.lambda_mse < 0:
            raise ConfigError("lambda_mse: must be >= 0")
        if not 0.0 <= self.cond_dropout_p < 1.0:
            raise ConfigError("cond_dropout_p: must be in [0, 1)")
        if self.n_bins % (2 ** self.n_stages) != 0:
            raise ConfigError(
                f"n_bins: {self.n_bins} not divisible by 2^n_stages")

    def network(self) -> NetworkConfig:
        return NetworkConfig(
            n_bins=self.n_bins, base_channels=self.base_channels,
            n_resblocks_per_stage=self.n_resblocks_per_stage,
            n_stages=self.n_stages, embed_dim=self.embed_dim)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, text: str):
    field = _FIELDS[key]
    text = text.strip()
    try:
        if field.type == "int":
            return int(text)
        if field.type == "float":
            return float(text)
        if field.type == "str":
            return text
        # the only tuple field: comma-separated floats
        return tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    values = dataclasses.asdict(base) if base else {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, "
                              f"got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, val)
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base)


def resolved_text(cfg: RunConfig, tool_version: str) -> str:
    """Render a config as a reloadable key = value document."""
    lines = [f"# hrrplab {tool_version} resolved configuration"]
    for name in _FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"


def write_resolved(cfg: RunConfig, out_dir: str | Path,
                   tool_version: str) -> Path:
    path = Path(out_dir) / "config.resolved.txt"
    path.write_text(resolved_text(cfg, tool_version))
    return path
