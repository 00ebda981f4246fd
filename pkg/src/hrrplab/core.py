"""Shared value types and angle conventions.

All angles in the public API are degrees. Aspect angle is the difference between
ship heading and radar azimuth, stored canonically in [0, 360). Range profiles
are non-negative amplitude vectors on a uniform range grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_N_BINS = 256
DEFAULT_DELTA_R = 1.5  # meters per range cell


def canonical_angle(angle_deg: float) -> float:
    """Map an angle in degrees onto the canonical interval [0, 360).

    Accepts any finite float (negative and multi-turn values included).
    """
    if not math.isfinite(angle_deg):
        raise ValueError(f"angle must be finite, got {angle_deg!r}")
    a = math.fmod(angle_deg, 360.0)
    if a < 0.0:
        a += 360.0
    # fmod can land exactly on 360.0 after the correction when the input is a
    # tiny negative number; fold that back to 0.
    if a >= 360.0:
        a -= 360.0
    return a


def canonical_angles(angles_deg: np.ndarray) -> np.ndarray:
    """Vectorized :func:`canonical_angle` for float arrays."""
    a = np.asarray(angles_deg, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("angles must be finite")
    out = np.mod(a, 360.0)
    out[out >= 360.0] -= 360.0
    return out


def aspect_angle_of(heading_deg: float, radar_azimuth_deg: float) -> float:
    """Aspect angle of a ship: heading minus radar azimuth, canonical [0, 360)."""
    return canonical_angle(canonical_angle(heading_deg) - canonical_angle(radar_azimuth_deg))


def circular_distance(a_deg: float, b_deg: float) -> float:
    """Shortest angular distance between two angles in degrees, in [0, 180]."""
    d = math.fmod(a_deg - b_deg, 360.0)
    if d < -180.0:
        d += 360.0
    elif d > 180.0:
        d -= 360.0
    return abs(d)


def normalize_profile(amplitudes: np.ndarray) -> np.ndarray:
    """Scale a non-negative amplitude vector so its maximum equals 1.

    Raises ValueError for an all-zero (degenerate) profile.
    """
    amp = np.asarray(amplitudes, dtype=np.float64)
    peak = float(np.max(amp)) if amp.size else 0.0
    if peak <= 0.0:
        raise ValueError("degenerate profile: maximum amplitude is zero")
    return amp / peak


@dataclass(frozen=True)
class RangeProfile:
    """A 1-D high-resolution range profile on a uniform range grid.

    ``amplitudes`` is a non-negative float vector; ``delta_r`` is the range cell
    size in meters. Instances are immutable and safe to share: the amplitude
    array is copied and marked read-only on construction.
    """

    amplitudes: np.ndarray
    delta_r: float = DEFAULT_DELTA_R

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=np.float64)
        if amp.ndim != 1 or amp.size == 0:
            raise ValueError("amplitudes must be a non-empty 1-D vector")
        if not np.all(np.isfinite(amp)):
            raise ValueError("amplitudes must be finite")
        if np.any(amp < 0.0):
            raise ValueError("amplitudes must be non-negative")
        if not (self.delta_r > 0.0 and math.isfinite(self.delta_r)):
            raise ValueError(f"delta_r must be positive and finite, got {self.delta_r}")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    @property
    def n_bins(self) -> int:
        return int(self.amplitudes.size)

    @property
    def extent_m(self) -> float:
        """Total length of the range window in meters."""
        return self.n_bins * self.delta_r

    def normalized(self) -> "RangeProfile":
        return RangeProfile(normalize_profile(self.amplitudes), self.delta_r)


@dataclass(frozen=True)
class ShipGeometry:
    """A ship as a rectangle of scatterers in the ship frame.

    The ship frame has x along the keel (bow at +length/2) and y athwartships.
    ``scatterers`` is an (N, 3) array of (x, y, reflectivity) rows; every
    scatterer lies inside the closed rectangle [-length/2, length/2] x
    [-width/2, width/2] and has strictly positive reflectivity.
    """

    ship_id: str
    length: float
    width: float
    scatterers: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.ship_id:
            raise ValueError("ship_id must be non-empty")
        if not (self.length > 0.0 and self.width > 0.0):
            raise ValueError("length and width must be positive")
        if self.length < self.width:
            raise ValueError(
                f"length ({self.length}) must be >= width ({self.width})"
            )
        sc = np.array(self.scatterers, dtype=np.float64)
        if sc.ndim != 2 or sc.shape[1] != 3 or sc.shape[0] == 0:
            raise ValueError("scatterers must be a non-empty (N, 3) array")
        if not np.all(np.isfinite(sc)):
            raise ValueError("scatterer entries must be finite")
        tol = 1e-9 * max(self.length, 1.0)
        if np.any(np.abs(sc[:, 0]) > self.length / 2 + tol) or np.any(
            np.abs(sc[:, 1]) > self.width / 2 + tol
        ):
            raise ValueError("scatterers must lie inside the ship rectangle")
        if np.any(sc[:, 2] <= 0.0):
            raise ValueError("reflectivities must be strictly positive")
        sc.setflags(write=False)
        object.__setattr__(self, "scatterers", sc)

    @property
    def n_scatterers(self) -> int:
        return int(self.scatterers.shape[0])

    def covers_extent(self, delta_r: float = DEFAULT_DELTA_R) -> bool:
        """True if some scatterer sits within ``delta_r`` of each keel end.

        Guarantees the projected profile reaches the full geometric extent to
        within one range cell.
        """
        x = self.scatterers[:, 0]
        half = self.length / 2
        return bool(np.min(x) <= -half + delta_r and np.max(x) >= half - delta_r)


@dataclass(frozen=True)
class AcquisitionCondition:
    """One radar acquisition: viewing geometry plus target noise level.

    ``aspect_angle`` is derived from heading and radar azimuth and stored
    canonically in [0, 360). ``target_snr_db`` may be ``math.inf`` for a
    noiseless acquisition.
    """

    heading: float
    radar_azimuth: float
    target_snr_db: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "heading", canonical_angle(self.heading))
        object.__setattr__(self, "radar_azimuth", canonical_angle(self.radar_azimuth))
        if math.isnan(self.target_snr_db):
            raise ValueError("target_snr_db must not be NaN")

    @property
    def aspect_angle(self) -> float:
        return aspect_angle_of(self.heading, self.radar_azimuth)

    @property
    def noiseless(self) -> bool:
        return math.isinf(self.target_snr_db)


@dataclass(frozen=True)
class ConditionVector:
    """Conditioning information handed to the generative models.

    Carries the ship dimensions in meters and the aspect angle in degrees.
    Validation here is deliberately minimal (positive dims, finite angle);
    stricter rules (e.g. length >= width) are applied where conditions enter
    the generation pipeline.
    """

    length: float
    width: float
    aspect_angle: float

    def __post_init__(self):
        if not (self.length > 0.0 and self.width > 0.0):
            raise ValueError("length and width must be positive")
        if not (math.isfinite(self.length) and math.isfinite(self.width)):
            raise ValueError("length and width must be finite")
        object.__setattr__(self, "aspect_angle", canonical_angle(self.aspect_angle))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.length, self.width, self.aspect_angle)
