"""Generation-fidelity metrics and the neighborhood best-match protocol.

All three metrics are computed on the union of the two profiles' activation
masks, so only bins that at least one profile considers target echo enter the
comparison. The masks here are unsmoothed (window 1): smoothing exists to
stabilize detection in noise, but for comparing two already-normalized signals
it would leak energy into empty bins and dilute the scores.

Inputs are expected max-normalized (peak 1); none of the functions rescale.

The best-match protocol scores a generated profile against the closest real
profile of the same ship within a +-delta aspect window: the candidate that
minimizes ``mse_f`` is chosen, and ``cos_f``/PSNR are reported at that same
candidate. Samples with no candidate in the window are skipped and counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from hrrplab.analysis import MaskParams, activation_mask
from hrrplab.core import ConditionVector, RangeProfile, circular_distance

PSNR_CAP_DB = 100.0
DEFAULT_DELTA_DEG = 2.0

#: Unsmoothed mask parameters used for the union masks (see module docstring).
METRIC_MASK_PARAMS = MaskParams(window=1, threshold_frac=0.5, max_gap=14)


@dataclass(frozen=True)
class EvalReport:
    """Aggregated best-match metrics over an evaluated set."""

    psnr_db: float
    mse_f: float
    cos_f: float
    n_evaluated: int
    n_skipped_empty_neighborhood: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (-1.0 - 1e-9 <= self.cos_f <= 1.0 + 1e-9):
            raise ValueError("cos_f must lie in [-1, 1]")
        if self.mse_f < 0:
            raise ValueError("mse_f must be non-negative")

    def as_dict(self) -> dict:
        d = {
            "psnr_db": self.psnr_db,
            "mse_f": self.mse_f,
            "cos_f": self.cos_f,
            "n_evaluated": self.n_evaluated,
            "n_skipped_empty_neighborhood": self.n_skipped_empty_neighborhood,
        }
        d.update(self.metadata)
        return d

    def csv_row(self, model: str, conditioning: str) -> str:
        return (f"{model},{conditioning},{self.psnr_db:.4f},{self.mse_f:.6f},"
                f"{self.cos_f:.6f},{self.n_evaluated},"
                f"{self.n_skipped_empty_neighborhood}")


CSV_HEADER = "model,conditioning,psnr,mse_f,cos_f,n,skipped"


def _union_mask(a: RangeProfile, b: RangeProfile,
                params: MaskParams | None) -> np.ndarray:
    if a.n_bins != b.n_bins:
        raise ValueError("profiles must have equal length")
    p = params or METRIC_MASK_PARAMS
    union = activation_mask(a, p).selected | activation_mask(b, p).selected
    if not union.any():
        raise ValueError("both activation masks are empty")
    return union


def mse_f(generated: RangeProfile, reference: RangeProfile,
          params: MaskParams | None = None) -> float:
    """Mean squared difference over the union activation mask, x100.

    The x100 factor is a fixed reporting scale. Expects max-normalized inputs.
    """
    union = _union_mask(generated, reference, params)
    diff = generated.amplitudes[union] - reference.amplitudes[union]
    return 100.0 * float(np.mean(diff * diff))


def cos_f(generated: RangeProfile, reference: RangeProfile,
          params: MaskParams | None = None) -> float:
    """Cosine similarity of the two profiles restricted to the union mask."""
    union = _union_mask(generated, reference, params)
    g = generated.amplitudes[union]
    r = reference.amplitudes[union]
    gn, rn = float(np.linalg.norm(g)), float(np.linalg.norm(r))
    if gn == 0.0 or rn == 0.0:
        raise ValueError("zero vector on the union mask")
    return float(np.clip(np.dot(g, r) / (gn * rn), -1.0, 1.0))


def psnr_activated(generated: RangeProfile, reference: RangeProfile,
                   params: MaskParams | None = None) -> float:
    """PSNR (peak fixed at 1) over the union activation mask, capped at 100 dB."""
    union = _union_mask(generated, reference, params)
    diff = generated.amplitudes[union] - reference.amplitudes[union]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


class RealSample(NamedTuple):
    """One real profile with its condition, as the matching pool stores it."""

    profile: RangeProfile
    cond: ConditionVector


class BestMatch(NamedTuple):
    reference: RangeProfile
    mse_f: float
    cos_f: float
    psnr_db: float


def neighborhood_best_match(generated: RangeProfile, cond: ConditionVector,
                            real_set: Sequence[RealSample],
                            delta: float = DEFAULT_DELTA_DEG,
                            params: MaskParams | None = None) -> BestMatch | None:
    """Best real match for a generated profile within +-delta of its aspect.

    Candidates are real profiles of the same ship — identified by an exact
    (length, width) condition match, since one synthetic ship owns one
    dimension pair — whose aspect angle lies within the closed circular
    interval [aspect - delta, aspect + delta]. The candidate minimizing
    ``mse_f`` wins and all three metrics are reported against it. Returns
    ``None`` when the neighborhood is empty (caller counts the skip).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    best: BestMatch | None = None
    for sample in real_set:
        c = sample.cond
        if c.length != cond.length or c.width != cond.width:
            continue
        if circular_distance(c.aspect_angle, cond.aspect_angle) > delta:
            continue
        m = mse_f(generated, sample.profile, params)
        if best is None or m < best.mse_f:
            best = BestMatch(sample.profile, m,
                             cos_f(generated, sample.profile, params),
                             psnr_activated(generated, sample.profile, params))
    return best


def evaluate_set(generated: Iterable[tuple[RangeProfile, ConditionVector]],
                 real_set: Sequence[RealSample],
                 delta: float = DEFAULT_DELTA_DEG,
                 params: MaskParams | None = None,
                 metadata: dict | None = None) -> EvalReport:
    """Average best-match metrics over a set of generated samples.

    One generated sample per test condition; samples whose neighborhood is
    empty are skipped and counted. Raises when nothing could be evaluated.
    The matching pool passed in ``real_set`` is recorded in the report
    metadata under ``pool_size``.
    """
    psnrs, mses, coss = [], [], []
    n_skipped = 0
    for profile, cond in generated:
        match = neighborhood_best_match(profile, cond, real_set, delta, params)
        if match is None:
            n_skipped += 1
            continue
        psnrs.append(match.psnr_db)
        mses.append(match.mse_f)
        coss.append(match.cos_f)
    if not psnrs:
        raise ValueError("no generated sample had a non-empty neighborhood")
    meta = {"delta_deg": delta, "pool_size": len(real_set)}
    meta.update(metadata or {})
    return EvalReport(
        psnr_db=float(np.mean(psnrs)),
        mse_f=float(np.mean(mses)),
        cos_f=float(np.mean(coss)),
        n_evaluated=len(psnrs),
        n_skipped_empty_neighborhood=n_skipped,
        metadata=meta,
    )
