"""Fleet generation, acquisition sampling, ship-disjoint splits, persistence."""

import json
import re

import numpy as np
import pytest

from hrrplab.analysis import lrp_meters, pearson_r, tlop
from hrrplab.core import RangeProfile
from hrrplab.dataset import (DEFAULT_FRACTIONS, SNR_RANGE_DB, DatasetError,
                             DatasetRecord, SplitManifest, dataset_arrays,
                             generate_fleet, read_dataset, records_in_split,
                             sample_acquisitions, split_by_ship, write_dataset)
from hrrplab.simulator import GridSpec, generate_scatterers

CHEAP_GRID = GridSpec(n_bins=64, delta_r=4.0)


def cheap_fleet(n=4, seed=0):
    """Small ships on a coarse grid so sampling stays fast."""
    rng = np.random.default_rng(seed)
    return [generate_scatterers(float(rng.uniform(20, 80)),
                                float(rng.uniform(4, 12)), density=0.5,
                                seed=int(rng.integers(0, 2 ** 31)),
                                ship_id=str(100000000 + i))
            for i, n_ in enumerate(range(n))]


@pytest.fixture(scope="module")
def acquisitions():
    fleet = cheap_fleet(6, seed=1)
    return fleet, sample_acquisitions(fleet, per_ship=150, seed=2,
                                      grid_spec=CHEAP_GRID)


class TestFleet:
    def test_bounds_and_ratio(self):
        fleet = generate_fleet(40, seed=0, density=0.2)
        for ship in fleet:
            assert 10.0 <= ship.length <= 300.0
            assert 4.0 <= ship.length / ship.width <= 8.0

    def test_ids_unique_and_mmsi_like(self):
        fleet = generate_fleet(50, seed=1, density=0.2)
        ids = [s.ship_id for s in fleet]
        assert len(set(ids)) == 50
        assert all(re.fullmatch(r"[1-9]\d{8}", i) for i in ids)

    def test_deterministic(self):
        a = generate_fleet(10, seed=7, density=0.2)
        b = generate_fleet(10, seed=7, density=0.2)
        assert [s.ship_id for s in a] == [s.ship_id for s in b]
        assert all(np.array_equal(x.scatterers, y.scatterers)
                   for x, y in zip(a, b))
        c = generate_fleet(10, seed=8, density=0.2)
        assert [s.ship_id for s in a] != [s.ship_id for s in c]

    def test_too_few_ships(self):
        with pytest.raises(ValueError):
            generate_fleet(2)


class TestAcquisitions:
    def test_count_and_metadata_passthrough(self, acquisitions):
        fleet, records = acquisitions
        assert len(records) == 6 * 150
        by_ship = {s.ship_id: s for s in fleet}
        for r in records:
            ship = by_ship[r.ship_id]
            assert (r.length, r.width) == (ship.length, ship.width)
            assert 0.0 <= r.aspect_angle < 360.0

    def test_snr_targets_in_band_with_stated_mean(self, acquisitions):
        _, records = acquisitions
        snrs = np.array([r.snr_db for r in records])
        lo, hi = SNR_RANGE_DB
        assert np.all((snrs >= lo) & (snrs <= hi))
        assert 12.5 <= snrs.mean() <= 13.5

    def test_every_ship_has_aspect_hole(self, acquisitions):
        _, records = acquisitions
        for ship_id in {r.ship_id for r in records}:
            angles = np.sort([r.aspect_angle for r in records
                              if r.ship_id == ship_id])
            gaps = np.diff(angles)
            wrap = angles[0] + 360.0 - angles[-1]
            assert max(gaps.max(), wrap) >= 20.0

    def test_profiles_normalized_and_f32_quantized(self, acquisitions):
        _, records = acquisitions
        for r in records[::37]:
            amps = r.profile.amplitudes
            assert amps.max() == 1.0
            assert amps.min() >= 0.0
            assert np.array_equal(amps,
                                  amps.astype(np.float32).astype(np.float64))

    def test_deterministic(self):
        fleet = cheap_fleet(3, seed=3)
        a = sample_acquisitions(fleet, per_ship=5, seed=9,
                                grid_spec=CHEAP_GRID)
        b = sample_acquisitions(fleet, per_ship=5, seed=9,
                                grid_spec=CHEAP_GRID)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert x.meta_dict() == y.meta_dict()
            assert np.array_equal(x.profile.amplitudes, y.profile.amplitudes)

    def test_per_ship_positive(self):
        with pytest.raises(ValueError):
            sample_acquisitions(cheap_fleet(3), per_ship=0)

    def test_lrp_tracks_tlop_across_whole_dataset(self):
        # default range grid and default mask parameters; coarse grids
        # quantize extents too hard for this bound
        rng = np.random.default_rng(1)
        sizes = [(25, 5), (60, 10), (120, 20), (200, 30), (280, 40)]
        fleet = [generate_scatterers(float(l), float(w), density=0.5,
                                     seed=int(rng.integers(0, 2 ** 31)),
                                     ship_id=str(100000000 + i))
                 for i, (l, w) in enumerate(sizes)]
        records = sample_acquisitions(fleet, per_ship=80, seed=2)
        lrps, tlops = [], []
        for r in records:
            try:
                lrps.append(lrp_meters(r.profile))
            except ValueError:
                continue
            tlops.append(tlop(r.length, r.width, r.aspect_angle))
        assert len(lrps) > 0.9 * len(records)
        assert pearson_r(np.array(lrps), np.array(tlops)) >= 0.9


def dummy_records(ship_ids, per_ship=1, n_bins=8):
    rng = np.random.default_rng(0)
    out = []
    for ship_id in ship_ids:
        for k in range(per_ship):
            amps = rng.uniform(0.1, 1.0, n_bins)
            amps[rng.integers(0, n_bins)] = 1.0
            out.append(DatasetRecord(
                ship_id=ship_id, length=50.0, width=10.0,
                aspect_angle=float(k), snr_db=13.0, seed=k,
                profile=RangeProfile(amps, 1.5)))
    return out


class TestSplit:
    def test_hundred_ships_split_exact(self):
        records = dummy_records([f"{100000000 + i}" for i in range(100)])
        man = split_by_ship(records, DEFAULT_FRACTIONS, seed=0)
        assert (len(man.train_ship_ids), len(man.val_ship_ids),
                len(man.test_ship_ids)) == (90, 5, 5)
        train, val, test = (set(man.train_ship_ids), set(man.val_ship_ids),
                            set(man.test_ship_ids))
        assert not (train & val or train & test or val & test)
        assert train | val | test == {r.ship_id for r in records}

    def test_minimum_one_per_split(self):
        records = dummy_records([f"{100000000 + i}" for i in range(5)])
        man = split_by_ship(records, DEFAULT_FRACTIONS, seed=0)
        assert (len(man.train_ship_ids), len(man.val_ship_ids),
                len(man.test_ship_ids)) == (3, 1, 1)

    def test_deterministic_and_seed_sensitive(self):
        records = dummy_records([f"{100000000 + i}" for i in range(30)])
        a = split_by_ship(records, seed=4)
        b = split_by_ship(records, seed=4)
        assert a == b
        c = split_by_ship(records, seed=5)
        assert a != c

    def test_records_follow_their_ship(self):
        ids = [f"{100000000 + i}" for i in range(10)]
        records = dummy_records(ids, per_ship=3)
        man = split_by_ship(records, seed=1)
        for part in (man.train_ship_ids, man.val_ship_ids, man.test_ship_ids):
            sub = records_in_split(records, part)
            assert {r.ship_id for r in sub} == set(part)
            assert len(sub) == 3 * len(part)

    def test_too_few_ships(self):
        with pytest.raises(ValueError):
            split_by_ship(dummy_records(["100000001", "100000002"]))

    def test_bad_fraction_sum(self):
        records = dummy_records([f"{100000000 + i}" for i in range(10)])
        with pytest.raises(ValueError):
            split_by_ship(records, fractions=(0.8, 0.1, 0.2))


class TestSplitManifest:
    def test_overlap_rejected(self):
        with pytest.raises(DatasetError):
            SplitManifest(("a", "b"), ("b",), ("c",), DEFAULT_FRACTIONS, 0)

    def test_save_load_round_trip(self, tmp_path):
        man = SplitManifest(("a", "b"), ("c",), ("d",), DEFAULT_FRACTIONS, 3)
        path = tmp_path / "split.json"
        man.save(path)
        assert SplitManifest.load(path) == man


class TestPersistence:
    def test_round_trip_bit_exact(self, acquisitions, tmp_path):
        _, records = acquisitions
        stem = tmp_path / "ds"
        write_dataset(records, stem)
        back = read_dataset(stem)
        assert len(back) == len(records)
        for a, b in zip(records, back):
            assert a.meta_dict() == b.meta_dict()
            assert np.array_equal(a.profile.amplitudes, b.profile.amplitudes)
            assert a.profile.delta_r == b.profile.delta_r

    def test_write_is_byte_deterministic(self, acquisitions, tmp_path):
        _, records = acquisitions
        for stem in (tmp_path / "x", tmp_path / "y"):
            write_dataset(records, stem)
        assert ((tmp_path / "x.meta.jsonl").read_bytes()
                == (tmp_path / "y.meta.jsonl").read_bytes())
        assert ((tmp_path / "x.sig.f32le").read_bytes()
                == (tmp_path / "y.sig.f32le").read_bytes())

    def test_dotted_stem_keeps_full_name(self, tmp_path):
        records = dummy_records(["100000001"])
        write_dataset(records, tmp_path / "run.v2")
        assert (tmp_path / "run.v2.meta.jsonl").exists()
        assert (tmp_path / "run.v2.sig.f32le").exists()
        assert len(read_dataset(tmp_path / "run.v2")) == 1

    def test_empty_write_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_dataset([], tmp_path / "ds")

    def test_mixed_grid_rejected(self, tmp_path):
        a = dummy_records(["100000001"], n_bins=8)
        b = dummy_records(["100000002"], n_bins=16)
        with pytest.raises(ValueError):
            write_dataset(a + b, tmp_path / "ds")

    def test_duplicate_key_rejected(self, tmp_path):
        r = dummy_records(["100000001"])[0]
        with pytest.raises(ValueError, match="duplicate"):
            write_dataset([r, r], tmp_path / "ds")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="cannot read metadata"):
            read_dataset(tmp_path / "absent")

    def _written(self, tmp_path):
        records = dummy_records(["100000001", "100000002"], per_ship=3)
        stem = tmp_path / "ds"
        write_dataset(records, stem)
        return stem

    def test_malformed_header(self, tmp_path):
        stem = self._written(tmp_path)
        meta = tmp_path / "ds.meta.jsonl"
        lines = meta.read_text().splitlines()
        meta.write_text("{not json\n" + "\n".join(lines[1:]) + "\n")
        with pytest.raises(DatasetError, match="malformed header"):
            read_dataset(stem)

    def test_truncated_metadata(self, tmp_path):
        stem = self._written(tmp_path)
        meta = tmp_path / "ds.meta.jsonl"
        lines = meta.read_text().splitlines()
        meta.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(DatasetError, match="truncated payload"):
            read_dataset(stem)

    def test_truncated_signal_blob(self, tmp_path):
        stem = self._written(tmp_path)
        sig = tmp_path / "ds.sig.f32le"
        sig.write_bytes(sig.read_bytes()[:-5])
        with pytest.raises(DatasetError, match="truncated payload"):
            read_dataset(stem)

    def test_corrupt_signal_blob(self, tmp_path):
        stem = self._written(tmp_path)
        sig = tmp_path / "ds.sig.f32le"
        raw = bytearray(sig.read_bytes())
        raw[10] ^= 0xFF
        sig.write_bytes(bytes(raw))
        with pytest.raises(DatasetError, match="checksum mismatch"):
            read_dataset(stem)

    def test_unsupported_version(self, tmp_path):
        stem = self._written(tmp_path)
        meta = tmp_path / "ds.meta.jsonl"
        lines = meta.read_text().splitlines()
        header = json.loads(lines[0])
        header["version"] = 99
        meta.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
        with pytest.raises(DatasetError, match="unsupported version"):
            read_dataset(stem)


class TestArrays:
    def test_stacking(self):
        records = dummy_records(["100000001", "100000002"], per_ship=2)
        profiles, lengths, widths, aspects = dataset_arrays(records)
        assert profiles.shape == (4, 8)
        assert np.array_equal(lengths, np.full(4, 50.0))
        assert np.array_equal(widths, np.full(4, 10.0))
        assert np.array_equal(aspects, np.array([0.0, 1.0, 0.0, 1.0]))
