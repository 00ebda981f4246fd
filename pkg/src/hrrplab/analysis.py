"""Geometric profile analysis: LRP extraction, TLOP, and SNR estimation.

The length-related parameter (LRP) of a profile is measured by smoothing the
amplitudes with a uniform filter, keeping bins at or above half the smoothed
maximum, closing short gaps, and converting the first-to-last selected span to
meters. The theoretical counterpart (TLOP) is the projection of the ship
rectangle onto the line of sight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hrrplab.core import RangeProfile

DEFAULT_SMOOTH_WINDOW = 5
DEFAULT_THRESHOLD_FRAC = 0.5
DEFAULT_MAX_GAP = 14  # gaps strictly shorter than this many cells are closed


@dataclass(frozen=True)
class MaskParams:
    """Parameters of the activation-mask procedure."""

    window: int = DEFAULT_SMOOTH_WINDOW
    threshold_frac: float = DEFAULT_THRESHOLD_FRAC
    max_gap: int = DEFAULT_MAX_GAP

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be a positive odd integer, got {self.window}")
        if not (0.0 < self.threshold_frac < 1.0):
            raise ValueError("threshold_frac must be in (0, 1)")
        if self.max_gap < 0:
            raise ValueError("max_gap must be non-negative")


@dataclass(frozen=True)
class ActivationMask:
    """Boolean per-bin selection with convenience span accessors."""

    selected: np.ndarray  # bool vector
    first_idx: int | None
    last_idx: int | None
    params: MaskParams = field(default_factory=MaskParams)

    def __post_init__(self):
        sel = np.array(self.selected, dtype=bool)
        sel.setflags(write=False)
        object.__setattr__(self, "selected", sel)

    @property
    def empty(self) -> bool:
        return self.first_idx is None

    @property
    def n_selected(self) -> int:
        return int(np.count_nonzero(self.selected))


def smooth_uniform(amplitudes: np.ndarray, window: int) -> np.ndarray:
    """Uniform (boxcar) smoothing with edge truncation.

    ``out[i]`` is the mean of the input over the index window
    [i - window//2, i + window//2] clipped to the array bounds, so edge bins
    average fewer samples. ``window`` must be odd and within the vector length.
    """
    amp = np.asarray(amplitudes, dtype=np.float64)
    n = amp.size
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    if window > n:
        raise ValueError(f"window ({window}) exceeds profile length ({n})")
    if window == 1:
        return amp.copy()
    half = window // 2
    csum = np.concatenate(([0.0], np.cumsum(amp)))
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def _close_short_gaps(selected: np.ndarray, max_gap: int) -> np.ndarray:
    """Mark unselected runs strictly shorter than ``max_gap`` that lie between
    selected bins. Leading/trailing unselected runs are never closed."""
    sel = selected.copy()
    if max_gap <= 1 or not sel.any():
        return sel
    idx = np.flatnonzero(sel)
    first, last = idx[0], idx[-1]
    i = first
    while i < last:
        if not sel[i]:
            j = i
            while not sel[j]:
                j += 1
            if (j - i) < max_gap:
                sel[i:j] = True
            i = j
        else:
            i += 1
    return sel


def activation_mask(profile: RangeProfile, params: MaskParams | None = None) -> ActivationMask:
    """Compute the activated (echo-bearing) bins of a profile.

    Procedure: smooth with a uniform filter, select bins whose smoothed value
    is at least ``threshold_frac`` of the smoothed maximum, then close interior
    gaps strictly shorter than ``max_gap`` cells. An all-zero profile yields an
    empty mask (no error).
    """
    p = params or MaskParams()
    smoothed = smooth_uniform(profile.amplitudes, p.window)
    peak = float(np.max(smoothed))
    if peak <= 0.0:
        sel = np.zeros(profile.n_bins, dtype=bool)
        return ActivationMask(sel, None, None, p)
    sel = smoothed >= p.threshold_frac * peak
    sel = _close_short_gaps(sel, p.max_gap)
    idx = np.flatnonzero(sel)
    return ActivationMask(sel, int(idx[0]), int(idx[-1]), p)


def lrp_meters(profile: RangeProfile, params: MaskParams | None = None) -> float:
    """Length-related parameter: the activated span converted to meters.

    The span runs from the first to the last selected bin inclusive (interior
    gaps, closed or not, never shrink it): ``(last - first + 1) * delta_r``.
    Raises ValueError when no bins are activated.
    """
    mask = activation_mask(profile, params)
    if mask.empty:
        raise ValueError("no target detected: activation mask is empty")
    return (mask.last_idx - mask.first_idx + 1) * profile.delta_r


def tlop(length: float, width: float, aspect_angle_deg: float) -> float:
    """Theoretical length over projection: ship extent along the line of sight.

    ``tlop = length * |cos(aspect)| + width * |sin(aspect)|`` with the aspect
    angle in degrees. Length and width must be positive.
    """
    if not (length > 0.0 and width > 0.0):
        raise ValueError("length and width must be positive")
    theta = math.radians(aspect_angle_deg)
    return length * abs(math.cos(theta)) + width * abs(math.sin(theta))


def pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation coefficient of two equal-length vectors.

    Requires at least two points and nonzero variance on both sides.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    if len(x) < 2:
        raise ValueError("need at least two points")
    if np.std(x) == 0.0 or np.std(y) == 0.0:
        raise ValueError("zero variance: correlation undefined")
    return float(np.corrcoef(x, y)[0, 1])


def estimate_snr_db(profile: RangeProfile, params: MaskParams | None = None) -> float:
    """Estimate the signal-to-noise ratio of a profile in dB.

    Signal power is the mean squared amplitude over the activation mask; noise
    power is the mean squared amplitude over the unselected bins. Requires a
    non-empty mask and at least one unselected bin.
    """
    mask = activation_mask(profile, params)
    if mask.empty:
        raise ValueError("cannot estimate SNR: activation mask is empty")
    sel = mask.selected
    if sel.all():
        raise ValueError("cannot estimate SNR: activation mask covers every bin")
    amp = profile.amplitudes
    signal_power = float(np.mean(amp[sel] ** 2))
    noise_power = float(np.mean(amp[~sel] ** 2))
    if noise_power <= 0.0:
        return math.inf
    return 10.0 * math.log10(signal_power / noise_power)
