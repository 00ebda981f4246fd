"""Synthetic fleet generation, acquisition sampling, splitting, persistence.

A dataset is a fleet of synthetic ships (log-uniform lengths, uniform
length/width ratios), a set of simulated acquisitions per ship (aspect angles
uniform with one deliberate 20-degree hole per ship; target SNR from a
truncated normal on [10, 30] dB), and a ship-identity-disjoint train/val/test
split, persisted as human-readable JSON-lines metadata plus a raw float32
signal blob with a CRC32 guard.

Profiles are max-normalized and float32-quantized at rest, so a read-back
returns bit-identical records.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hrrplab.core import RangeProfile, ShipGeometry, normalize_profile
from hrrplab.simulator import (GridSpec, add_noise, form_hrrp,
                               generate_scatterers, project_scatterers)

FORMAT_VERSION = 1
LENGTH_RANGE_M = (10.0, 300.0)
RATIO_RANGE = (4.0, 8.0)
SNR_RANGE_DB = (10.0, 30.0)
SNR_STD_DB = 4.0
ASPECT_HOLE_DEG = 20.0
DEFAULT_FRACTIONS = (0.90, 0.05, 0.05)


class DatasetError(Exception):
    """Raised for malformed, truncated, or corrupt dataset files."""


@dataclass(frozen=True)
class DatasetRecord:
    ship_id: str
    length: float
    width: float
    aspect_angle: float
    snr_db: float
    seed: int
    profile: RangeProfile

    def meta_dict(self) -> dict:
        return {
            "ship_id": self.ship_id,
            "length": self.length,
            "width": self.width,
            "aspect_angle": self.aspect_angle,
            "snr_db": self.snr_db,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SplitManifest:
    train_ship_ids: tuple[str, ...]
    val_ship_ids: tuple[str, ...]
    test_ship_ids: tuple[str, ...]
    fractions: tuple[float, float, float]
    seed: int

    def __post_init__(self):
        sets = (set(self.train_ship_ids), set(self.val_ship_ids),
                set(self.test_ship_ids))
        if (sets[0] & sets[1]) or (sets[0] & sets[2]) or (sets[1] & sets[2]):
            raise DatasetError("split ship-id sets overlap")

    def save(self, path: str | Path) -> None:
        payload = {
            "train_ship_ids": list(self.train_ship_ids),
            "val_ship_ids": list(self.val_ship_ids),
            "test_ship_ids": list(self.test_ship_ids),
            "fractions": list(self.fractions),
            "seed": self.seed,
        }
        Path(path).write_text(json.dumps(payload, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SplitManifest":
        d = json.loads(Path(path).read_text())
        return cls(tuple(d["train_ship_ids"]), tuple(d["val_ship_ids"]),
                   tuple(d["test_ship_ids"]), tuple(d["fractions"]), d["seed"])


def _mmsi_like(rng: np.random.Generator) -> str:
    """A nine-digit maritime-identity-style id (leading digit nonzero)."""
    return str(rng.integers(100_000_000, 1_000_000_000))


def generate_fleet(n_ships: int, seed: int = 0,
                   density: float = 2.0) -> list[ShipGeometry]:
    """Deterministic fleet: log-uniform lengths, uniform length/width ratio."""
    if n_ships < 3:
        raise ValueError("need at least 3 ships")
    rng = np.random.default_rng(seed)
    fleet: list[ShipGeometry] = []
    used: set[str] = set()
    lo, hi = LENGTH_RANGE_M
    for _ in range(n_ships):
        length = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        ratio = rng.uniform(*RATIO_RANGE)
        ship_id = _mmsi_like(rng)
        while ship_id in used:
            ship_id = _mmsi_like(rng)
        used.add(ship_id)
        fleet.append(generate_scatterers(
            length, length / ratio, density=density,
            seed=int(rng.integers(0, 2 ** 31)), ship_id=ship_id))
    return fleet


def _truncnorm_loc(target_mean: float, std: float,
                   lo: float, hi: float) -> float:
    """Parent-normal location whose [lo, hi] truncation has the target mean."""

    def trunc_mean(mu: float) -> float:
        a, b = (lo - mu) / std, (hi - mu) / std
        phi = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        cdf = lambda x: 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))
        z = cdf(b) - cdf(a)
        return mu + std * (phi(a) - phi(b)) / z

    left, right = lo - 6.0 * std, hi + 6.0 * std
    for _ in range(80):
        mid = 0.5 * (left + right)
        if trunc_mean(mid) < target_mean:
            left = mid
        else:
            right = mid
    return 0.5 * (left + right)


def _sample_truncnorm(rng: np.random.Generator, n: int, loc: float,
                      std: float, lo: float, hi: float) -> np.ndarray:
    out = np.empty(n)
    filled = 0
    while filled < n:
        draw = rng.normal(loc, std, size=2 * (n - filled))
        good = draw[(draw >= lo) & (draw <= hi)][:n - filled]
        out[filled:filled + len(good)] = good
        filled += len(good)
    return out


def sample_acquisitions(fleet: list[ShipGeometry], per_ship: int,
                        snr_mean_db: float = 13.0, seed: int = 0,
                        grid_spec: GridSpec | None = None) -> list[DatasetRecord]:
    """Simulate ``per_ship`` noisy acquisitions per ship.

    Aspect angles are uniform outside one random 20-degree hole per ship
    (missing-measurement analog); target SNRs follow a truncated normal on
    [10, 30] dB whose truncated mean equals ``snr_mean_db``. Profiles are
    stored max-normalized and float32-quantized.
    """
    if per_ship < 1:
        raise ValueError("per_ship must be >= 1")
    loc = _truncnorm_loc(snr_mean_db, SNR_STD_DB, *SNR_RANGE_DB)
    root = np.random.SeedSequence(seed)
    records: list[DatasetRecord] = []
    for ship, ss in zip(fleet, root.spawn(len(fleet))):
        rng = np.random.default_rng(ss)
        hole_start = rng.uniform(0.0, 360.0)
        aspects = (hole_start + ASPECT_HOLE_DEG
                   + rng.uniform(0.0, 360.0 - ASPECT_HOLE_DEG, per_ship)) % 360.0
        snrs = _sample_truncnorm(rng, per_ship, loc, SNR_STD_DB, *SNR_RANGE_DB)
        noise_seeds = rng.integers(0, 2 ** 31, size=per_ship)
        for aspect, snr, nseed in zip(aspects, snrs, noise_seeds):
            clean = form_hrrp(project_scatterers(ship, float(aspect), grid_spec))
            noisy = add_noise(clean, float(snr), seed=int(nseed))
            quantized = normalize_profile(noisy.amplitudes).astype(np.float32)
            records.append(DatasetRecord(
                ship_id=ship.ship_id, length=ship.length, width=ship.width,
                aspect_angle=float(aspect), snr_db=float(snr),
                seed=int(nseed),
                profile=RangeProfile(quantized.astype(np.float64),
                                     noisy.delta_r)))
    return records


def split_by_ship(records: list[DatasetRecord],
                  fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
                  seed: int = 0) -> SplitManifest:
    """Partition ships (not records) into train/val/test.

    Rounding rule: floor(fraction * n_ships) ships for val and test, the
    remainder to train. All records of a ship follow their ship.
    """
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError("fractions must sum to 1")
    ship_ids = sorted({r.ship_id for r in records})
    if len(ship_ids) < 3:
        raise ValueError("need at least 3 ships to split")
    rng = np.random.default_rng(seed)
    order = [ship_ids[i] for i in rng.permutation(len(ship_ids))]
    n = len(order)
    n_val = int(fractions[1] * n)
    n_test = int(fractions[2] * n)
    n_val, n_test = max(n_val, 1), max(n_test, 1)
    test = order[:n_test]
    val = order[n_test:n_test + n_val]
    train = order[n_test + n_val:]
    return SplitManifest(tuple(sorted(train)), tuple(sorted(val)),
                         tuple(sorted(test)), fractions, seed)


def records_in_split(records: list[DatasetRecord],
                     ship_ids: tuple[str, ...]) -> list[DatasetRecord]:
    wanted = set(ship_ids)
    return [r for r in records if r.ship_id in wanted]


# -- persistence -----------------------------------------------------------
# <name>.meta.jsonl : header line (version, n_bins, delta_r, n_records, crc32
#                     of the signal blob) followed by one JSON object per
#                     record, in blob order.
# <name>.sig.f32le  : n_records x n_bins little-endian float32 amplitudes.


def write_dataset(records: list[DatasetRecord], path_stem: str | Path) -> None:
    if not records:
        raise ValueError("refusing to write an empty dataset")
    n_bins = records[0].profile.n_bins
    delta_r = records[0].profile.delta_r
    for r in records:
        if r.profile.n_bins != n_bins or r.profile.delta_r != delta_r:
            raise ValueError("all records must share n_bins and delta_r")
    keys = {(r.ship_id, r.aspect_angle, r.seed) for r in records}
    if len(keys) != len(records):
        raise ValueError("duplicate (ship_id, aspect_angle, seed) records")
    stem = Path(path_stem)
    blob = np.stack([r.profile.amplitudes for r in records]).astype("<f4")
    raw = blob.tobytes()
    header = {
        "version": FORMAT_VERSION,
        "n_bins": n_bins,
        "delta_r": delta_r,
        "n_records": len(records),
        "crc32": zlib.crc32(raw) & 0xFFFFFFFF,
    }
    with open(stem.with_name(stem.name + ".meta.jsonl"), "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r.meta_dict(), sort_keys=True) + "\n")
    with open(stem.with_name(stem.name + ".sig.f32le"), "wb") as fh:
        fh.write(raw)


def read_dataset(path_stem: str | Path) -> list[DatasetRecord]:
    """Read a dataset back; bit-exact inverse of :func:`write_dataset`."""
    stem = Path(path_stem)
    meta_path = stem.with_name(stem.name + ".meta.jsonl")
    sig_path = stem.with_name(stem.name + ".sig.f32le")
    try:
        lines = meta_path.read_text().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read metadata: {exc}") from exc
    if not lines:
        raise DatasetError(f"malformed header: {meta_path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed header in {meta_path}") from exc
    if header.get("version") != FORMAT_VERSION:
        raise DatasetError(f"unsupported version {header.get('version')}")
    n_bins, n_records = header["n_bins"], header["n_records"]
    if len(lines) - 1 != n_records:
        raise DatasetError(
            f"truncated payload: header promises {n_records} records, "
            f"metadata has {len(lines) - 1}")
    raw = sig_path.read_bytes()
    if len(raw) != n_records * n_bins * 4:
        raise DatasetError(
            f"truncated payload: expected {n_records * n_bins * 4} signal "
            f"bytes, found {len(raw)}")
    if (zlib.crc32(raw) & 0xFFFFFFFF) != header["crc32"]:
        raise DatasetError(f"checksum mismatch in {sig_path}")
    blob = np.frombuffer(raw, dtype="<f4").reshape(n_records, n_bins)
    records: list[DatasetRecord] = []
    for line, row in zip(lines[1:], blob):
        m = json.loads(line)
        records.append(DatasetRecord(
            ship_id=m["ship_id"], length=m["length"], width=m["width"],
            aspect_angle=m["aspect_angle"], snr_db=m["snr_db"],
            seed=m["seed"],
            profile=RangeProfile(row.astype(np.float64), header["delta_r"])))
    return records


def dataset_arrays(records: list[DatasetRecord]):
    """Stack a record list into (profiles, lengths, widths, aspects) arrays."""
    profiles = np.stack([r.profile.amplitudes for r in records])
    lengths = np.array([r.length for r in records])
    widths = np.array([r.width for r in records])
    aspects = np.array([r.aspect_angle for r in records])
    return profiles, lengths, widths, aspects
