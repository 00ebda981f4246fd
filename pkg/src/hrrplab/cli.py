"""The ``hrrplab`` command line: simulate, train, generate, evaluate, analyze.

Global flags (before the subcommand): ``--config`` (key = value file),
``--seed``, ``--deterministic``, ``--out-dir``. Every command writes its
fully-resolved configuration (including the tool version) into the output
directory, so a run can be reproduced from its artifacts alone. All commands
are deterministic for a fixed config and seed.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import zlib
from pathlib import Path

import numpy as np

import hrrplab
from hrrplab.analysis import lrp_meters, pearson_r, tlop
from hrrplab.config import ConfigError, RunConfig, load_config, write_resolved
from hrrplab.core import ConditionVector, RangeProfile
from hrrplab.dataset import (DatasetError, SplitManifest, dataset_arrays,
                             generate_fleet, read_dataset, records_in_split,
                             sample_acquisitions, split_by_ship, write_dataset)
from hrrplab.ddpm import (DdpmTrainConfig, cosine_alpha_bar, ddpm_sample,
                          load_ddpm, train_ddpm)
from hrrplab.gan import GanTrainConfig, gan_generate, load_gan, train_gan
from hrrplab.metrics import (CSV_HEADER, RealSample, evaluate_set,
                             neighborhood_best_match)
from hrrplab.nn import load_checkpoint
from hrrplab.simulator import GridSpec

GENERATED_FORMAT_VERSION = 1


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# -- generated-profile artifact (blob + manifest) --------------------------


def write_generated(out_dir: Path, name: str, profiles: np.ndarray,
                    rows: list[dict], header: dict) -> tuple[Path, Path]:
    """Write ``<name>.sig.f32le`` + ``<name>.manifest.jsonl``.

    ``rows`` carry one dict per profile (condition, per-row seed, index);
    ``header`` carries run-level fields (model, conditioning, n_bins,
    delta_r, seed). A CRC32 of the blob is added to the header.
    """
    blob = np.asarray(profiles, dtype="<f4").tobytes()
    manifest = Path(out_dir) / f"{name}.manifest.jsonl"
    sig = Path(out_dir) / f"{name}.sig.f32le"
    full_header = {"version": GENERATED_FORMAT_VERSION, "kind": "generated",
                   "n_profiles": len(rows),
                   "crc32": zlib.crc32(blob) & 0xFFFFFFFF, **header}
    with open(manifest, "w") as fh:
        fh.write(json.dumps(full_header, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    with open(sig, "wb") as fh:
        fh.write(blob)
    return manifest, sig


def read_generated(stem: str | Path) -> tuple[dict, list[dict], np.ndarray]:
    """Read back a generated artifact: (header, rows, profiles float64)."""
    stem = Path(stem)
    manifest = stem.with_name(stem.name + ".manifest.jsonl")
    lines = manifest.read_text().splitlines()
    if not lines:
        raise DatasetError(f"malformed header: {manifest} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed header in {manifest}") from exc
    if header.get("version") != GENERATED_FORMAT_VERSION:
        raise DatasetError(f"unsupported version {header.get('version')}")
    rows = [json.loads(line) for line in lines[1:]]
    if len(rows) != header["n_profiles"]:
        raise DatasetError(
            f"truncated payload: header promises {header['n_profiles']} "
            f"rows, manifest has {len(rows)}")
    raw = stem.with_name(stem.name + ".sig.f32le").read_bytes()
    expected = header["n_profiles"] * header["n_bins"] * 4
    if len(raw) != expected:
        raise DatasetError(f"truncated payload: expected {expected} signal "
                           f"bytes, found {len(raw)}")
    if (zlib.crc32(raw) & 0xFFFFFFFF) != header["crc32"]:
        raise DatasetError(f"checksum mismatch in {stem}.sig.f32le")
    profiles = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return header, rows, profiles.reshape(header["n_profiles"],
                                          header["n_bins"])


# -- subcommands -----------------------------------------------------------


def cmd_simulate(args, cfg: RunConfig, out_dir: Path) -> int:
    grid = GridSpec(n_bins=cfg.n_bins, delta_r=cfg.delta_r)
    fleet = generate_fleet(cfg.n_ships, seed=cfg.seed, density=cfg.density)
    records = sample_acquisitions(fleet, cfg.per_ship,
                                  snr_mean_db=cfg.snr_mean_db,
                                  seed=cfg.seed + 1, grid_spec=grid)
    manifest = split_by_ship(records, cfg.split_fractions, seed=cfg.seed + 2)
    write_dataset(records, out_dir / "dataset")
    manifest.save(out_dir / "split.json")
    split_sizes = {}
    for split_name, ids in (("train", manifest.train_ship_ids),
                            ("val", manifest.val_ship_ids),
                            ("test", manifest.test_ship_ids)):
        subset = records_in_split(records, ids)
        write_dataset(subset, out_dir / split_name)
        split_sizes[split_name] = (len(ids), len(subset))
    snrs = np.array([r.snr_db for r in records])
    print(f"simulated {len(records)} records "
          f"({cfg.n_ships} ships x {cfg.per_ship} acquisitions)")
    print(f"target SNR dB: mean {snrs.mean():.2f} "
          f"min {snrs.min():.2f} max {snrs.max():.2f}")
    for split_name, (n_ships, n_recs) in split_sizes.items():
        print(f"{split_name}: {n_ships} ships, {n_recs} records")
    return 0


def cmd_train(args, cfg: RunConfig, out_dir: Path) -> int:
    stem = Path(args.dataset)
    if not stem.with_name(stem.name + ".meta.jsonl").exists():
        raise RuntimeError(f"dataset not found: {stem}.meta.jsonl")
    records = read_dataset(stem)
    split_path = Path(args.split) if args.split else stem.parent / "split.json"
    if split_path.exists():
        manifest = SplitManifest.load(split_path)
        records = records_in_split(records, manifest.train_ship_ids)
        if not records:
            raise RuntimeError(f"no training records under {split_path}")
    else:
        _warn(f"no split manifest at {split_path}; training on all records")
    profiles, lengths, widths, aspects = dataset_arrays(records)
    mode = args.mode or cfg.mode
    tag = f"{args.model}_{mode}"
    ckpt = out_dir / f"{tag}.ckpt"
    loss_csv = out_dir / f"{tag}.loss.csv"
    if args.model == "ddpm":
        steps = args.steps or cfg.steps
        tcfg = DdpmTrainConfig(network=cfg.network(), T=cfg.schedule_T,
                               steps=steps, batch_size=cfg.batch_size,
                               lr=cfg.lr_ddpm,
                               cond_dropout_p=cfg.cond_dropout_p, mode=mode)
        train_ddpm(profiles, lengths, widths, aspects, tcfg, cfg.seed,
                   ckpt, loss_csv)
    else:
        steps = args.steps or cfg.gan_steps
        tcfg = GanTrainConfig(network=cfg.network(),
                              lambda_mse=cfg.lambda_mse,
                              clip_bound=cfg.clip_bound,
                              n_critic=cfg.n_critic,
                              latent_dim=cfg.latent_dim,
                              batch_size=cfg.batch_size, steps=steps,
                              lr=cfg.lr_gan, mode=mode)
        train_gan(profiles, lengths, widths, aspects, tcfg, cfg.seed,
                  ckpt, loss_csv)
    with open(loss_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    columns = {key: np.array([float(r[key]) for r in rows])
               for key in rows[0] if key != "step"}
    steps_axis = np.array([int(r["step"]) for r in rows])
    from hrrplab.plots import plot_loss_columns
    plot_loss_columns(steps_axis, columns, f"{tag} training loss",
                      out_dir / f"{tag}.loss.png")
    tail = {k: float(np.mean(v[-20:])) for k, v in columns.items()}
    print(f"trained {tag} for {steps} steps on {len(records)} records")
    print("final loss (mean of last 20 steps): "
          + " ".join(f"{k}={v:.4f}" for k, v in tail.items()))
    print(f"checkpoint: {ckpt}")
    return 0


def _read_conditions(path: str | Path) -> list[dict]:
    """Parse a conditions CSV; returns accepted rows, warns on rejected ones.

    Required columns: length, width, aspect_angle; optional: ship_id.
    Rows violating length >= width > 0 are reported and skipped; the run
    continues with the remaining rows.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = {"length", "width", "aspect_angle"} - set(fields)
        if missing:
            raise ConfigError(
                f"conditions file {path} lacks columns: {sorted(missing)}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            try:
                length = float(raw["length"])
                width = float(raw["width"])
                aspect = float(raw["aspect_angle"])
            except (TypeError, ValueError):
                _warn(f"conditions row {lineno} rejected: unparsable values")
                continue
            if not (0.0 < width <= length):
                _warn(f"conditions row {lineno} rejected: "
                      f"need length >= width > 0, got ({length}, {width})")
                continue
            row = {"length": length, "width": width, "aspect_angle": aspect}
            if raw.get("ship_id"):
                row["ship_id"] = raw["ship_id"]
            rows.append(row)
    if not rows:
        raise RuntimeError(f"no usable condition rows in {path}")
    return rows


def cmd_generate(args, cfg: RunConfig, out_dir: Path) -> int:
    rows = _read_conditions(args.conditions)
    header, _ = load_checkpoint(args.checkpoint)
    model_kind = header.get("model")
    if model_kind not in ("ddpm", "gan"):
        raise RuntimeError(f"unsupported checkpoint model {model_kind!r}")
    n_bins = header["config"]["n_bins"]
    if n_bins != cfg.n_bins:
        raise RuntimeError(
            f"profile-length mismatch: checkpoint generates {n_bins} bins, "
            f"configuration expects {cfg.n_bins}")
    lengths = np.array([r["length"] for r in rows])
    widths = np.array([r["width"] for r in rows])
    aspects = np.array([r["aspect_angle"] for r in rows])
    row_seeds = np.random.default_rng(cfg.seed).integers(
        0, 2 ** 31, size=len(rows))
    if model_kind == "ddpm":
        model, schedule, _ = load_ddpm(args.checkpoint)
        feats = model.cond.features(lengths, widths, aspects)
        chunks = []
        for start in range(0, len(rows), 32):
            stop = min(start + 32, len(rows))
            chunks.append(ddpm_sample(model, schedule, feats[start:stop],
                                      seed=row_seeds[start:stop],
                                      guidance_scale=cfg.guidance_scale))
        profiles = np.concatenate(chunks)
        conditioning = model.cond.mode
    else:
        state, _ = load_gan(args.checkpoint)
        feats = state.generator.cond.features(lengths, widths, aspects)
        profiles = gan_generate(state.generator, feats, seed=row_seeds)
        conditioning = state.generator.cond.mode
    out_rows = [{"index": i, **row, "seed": int(s)}
                for i, (row, s) in enumerate(zip(rows, row_seeds))]
    manifest, _ = write_generated(
        out_dir, args.name, profiles, out_rows,
        {"model": model_kind, "conditioning": conditioning, "n_bins": n_bins,
         "delta_r": cfg.delta_r, "seed": cfg.seed,
         "guidance_scale": cfg.guidance_scale,
         "checkpoint": str(args.checkpoint)})
    print(f"generated {len(rows)} profiles with {model_kind}/{conditioning}")
    print(f"manifest: {manifest}")
    return 0


def _load_generated_side(stem: str | Path):
    """One evaluate/analyze input: generated manifest or real dataset stem.

    Returns (label_model, label_conditioning, samples, delta_r) where
    samples is a list of (RangeProfile, ConditionVector, ship_id | None).
    """
    stem = Path(stem)
    if stem.with_name(stem.name + ".manifest.jsonl").exists():
        header, rows, profiles = read_generated(stem)
        samples = [(RangeProfile(p, header["delta_r"]),
                    ConditionVector(r["length"], r["width"],
                                    r["aspect_angle"]),
                    r.get("ship_id"))
                   for r, p in zip(rows, profiles)]
        return header["model"], header["conditioning"], samples, header["delta_r"]
    if stem.with_name(stem.name + ".meta.jsonl").exists():
        records = read_dataset(stem)
        samples = [(r.profile,
                    ConditionVector(r.length, r.width, r.aspect_angle),
                    r.ship_id)
                   for r in records]
        return "real", "real", samples, records[0].profile.delta_r
    raise RuntimeError(f"no generated manifest or dataset at {stem}")


def cmd_evaluate(args, cfg: RunConfig, out_dir: Path) -> int:
    real_records = read_dataset(args.real)
    pool = [RealSample(r.profile,
                       ConditionVector(r.length, r.width, r.aspect_angle))
            for r in real_records]
    delta = args.delta if args.delta is not None else cfg.delta_deg
    csv_lines = [CSV_HEADER]
    json_reports = []
    for stem in args.generated:
        model, conditioning, samples, _ = _load_generated_side(stem)
        generated = [(p, c) for p, c, _ in samples]
        report = evaluate_set(generated, pool, delta=delta)
        csv_lines.append(report.csv_row(model, conditioning))
        json_reports.append({"model": model, "conditioning": conditioning,
                             "input": str(stem), **report.as_dict()})
        pairs = []
        for profile, cond in generated:
            match = neighborhood_best_match(profile, cond, pool, delta=delta)
            if match is not None:
                pairs.append((profile, match.reference,
                              f"L={cond.length:.0f}m W={cond.width:.0f}m "
                              f"aspect={cond.aspect_angle:.1f}deg "
                              f"mse_f={match.mse_f:.3f}"))
            if len(pairs) == 6:
                break
        if pairs:
            from hrrplab.plots import plot_profile_pairs
            plot_profile_pairs(pairs,
                               out_dir / f"overlays_{model}_{conditioning}.png")
        print(csv_lines[-1])
    (out_dir / "evaluation.csv").write_text("\n".join(csv_lines) + "\n")
    (out_dir / "evaluation.json").write_text(
        json.dumps(json_reports, indent=1) + "\n")
    print(f"report: {out_dir / 'evaluation.csv'}")
    return 0


def cmd_analyze(args, cfg: RunConfig, out_dir: Path) -> int:
    stem = args.dataset if args.dataset else args.generated
    _, _, samples, _ = _load_generated_side(stem)
    groups: dict[str, list] = {}
    for profile, cond, ship_id in samples:
        key = ship_id or f"L{cond.length:.1f}_W{cond.width:.1f}"
        groups.setdefault(key, []).append((profile, cond))
    n_written = 0
    from hrrplab.plots import plot_extent_curve
    for ship_id in sorted(groups):
        rows = []
        for profile, cond in groups[ship_id]:
            try:
                lrp = lrp_meters(profile)
            except ValueError:
                continue
            rows.append((cond.aspect_angle, lrp,
                         tlop(cond.length, cond.width, cond.aspect_angle)))
        if len(rows) < 2:
            _warn(f"ship {ship_id} skipped: "
                  f"fewer than two detectable profiles")
            continue
        rows.sort()
        aspects = np.array([r[0] for r in rows])
        lrps = np.array([r[1] for r in rows])
        tlops = np.array([r[2] for r in rows])
        try:
            r_value = pearson_r(lrps, tlops)
        except ValueError as exc:
            _warn(f"ship {ship_id} skipped: {exc}")
            continue
        path = out_dir / f"analysis_{ship_id}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["aspect_angle", "lrp_m", "tlop_m"])
            for aspect, lrp, tl in rows:
                writer.writerow([f"{aspect:.4f}", f"{lrp:.4f}", f"{tl:.4f}"])
            fh.write(f"# pearson_r={r_value:.6f}\n")
        plot_extent_curve(aspects, lrps, tlops, f"ship {ship_id}", r_value,
                          out_dir / f"analysis_{ship_id}.png")
        print(f"ship {ship_id}: n={len(rows)} pearson_r={r_value:.4f}")
        n_written += 1
    if n_written == 0:
        raise RuntimeError("no ship produced an analyzable extent curve")
    print(f"wrote {n_written} per-ship extent curves to {out_dir}")
    return 0


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrrplab",
        description="Simulate ship range profiles, train conditional "
                    "generators, and evaluate generated profiles.")
    parser.add_argument("--version", action="version",
                        version=f"hrrplab {hrrplab.__version__}")
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--deterministic", action="store_true",
                        help="assert fully reproducible outputs (runs are "
                             "already deterministic per seed; this flag "
                             "records the intent in the resolved config)")
    parser.add_argument("--out-dir", default=None,
                        help="output directory (default runs/<command>)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="generate a synthetic fleet dataset "
                                    "with ship-disjoint splits")

    p_train = sub.add_parser("train", help="train a conditional generator")
    p_train.add_argument("--model", choices=("ddpm", "gan"), required=True)
    p_train.add_argument("--dataset", required=True,
                         help="dataset stem (from simulate)")
    p_train.add_argument("--split", help="split manifest path "
                                         "(default <dataset dir>/split.json)")
    p_train.add_argument("--mode",
                         choices=("none", "aspect", "dimensions", "both"),
                         help="conditioning mode (default from config)")
    p_train.add_argument("--steps", type=int,
                         help="override training step count")

    p_gen = sub.add_parser("generate",
                           help="sample one profile per condition row")
    p_gen.add_argument("--checkpoint", required=True)
    p_gen.add_argument("--conditions", required=True,
                       help="CSV with length,width,aspect_angle[,ship_id]")
    p_gen.add_argument("--name", default="generated",
                       help="output artifact stem name")

    p_eval = sub.add_parser("evaluate",
                            help="score generated profiles against real "
                                 "neighbors")
    p_eval.add_argument("--generated", action="append", required=True,
                        help="generated manifest stem or dataset stem "
                             "(repeatable; one report row each)")
    p_eval.add_argument("--real", required=True, help="real dataset stem")
    p_eval.add_argument("--delta", type=float,
                        help="aspect neighborhood half-width in degrees")

    p_an = sub.add_parser("analyze",
                          help="per-ship measured-vs-projected extent curves")
    group = p_an.add_mutually_exclusive_group(required=True)
    group.add_argument("--dataset", help="dataset stem")
    group.add_argument("--generated", help="generated manifest stem")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig()
        if args.config:
            cfg = load_config(args.config, cfg)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.validate()
        out_dir = Path(args.out_dir or f"runs/{args.command}")
        out_dir.mkdir(parents=True, exist_ok=True)
        resolved = write_resolved(cfg, out_dir, hrrplab.__version__)
        if args.deterministic:
            with open(resolved, "a") as fh:
                fh.write("# deterministic: requested\n")
        return COMMANDS[args.command](args, cfg, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure -> exit 1, no traceback spam
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
