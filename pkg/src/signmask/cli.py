"""Batch entry points: preprocess, genmask, heatmap, visualize, stats.

Manifests are JSONL, one clip per line, with paths resolved relative to
the manifest file. Workers are clip-parallel processes; every clip's seed
derives from (corpus seed, clip id) alone, so serial and parallel runs
write byte-identical outputs. All canonical files are written atomically
(temp file + rename).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import MissingBundle, MissingFrames, SignmaskError
from .geometry import classify_handedness, plan_trim
from .heatmap import render_clip, write_heatmaps
from .ingest import (
    ClipBundle,
    apply_trim,
    crop_to_signer,
    identity_crop,
    parse_boxes,
    parse_clip,
    parse_meta,
    serialize_keypoints,
    serialize_meta,
    serialize_segments,
)
from .maskgen import STREAMS, MaskPlan, generate
from .patchgrid import PATCH_SIZE, TUBE_DEPTH

log = logging.getLogger("signmask")

EXIT_OK = 0
EXIT_CLIP_FAILURES = 1
EXIT_USAGE = 2


class UsageError(SignmaskError):
    pass


def _atomic_write(path: Path, data) -> None:
    tmp = path.with_name(f".{path.name}.tmp.{os.getpid()}")
    if isinstance(data, str):
        tmp.write_text(data)
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def _load_config(args) -> PipelineConfig:
    path = args.config or os.environ.get("SIGNMASK_CONFIG")
    cfg = PipelineConfig.from_file(path) if path else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = PipelineConfig.from_mapping({**cfg.to_mapping(), "seed": args.seed})
    return cfg


def _load_manifest(path: str) -> list[dict]:
    """Read the clip manifest; paths become absolute."""
    p = Path(path)
    if not p.exists():
        raise UsageError(f"manifest not found: {path}")
    base = p.parent
    records = []
    for lineno, line in enumerate(p.read_text().splitlines()):
        if not line.strip():
            continue
        rec = json.loads(line)
        for key in ("clip_id", "keypoints", "segments", "meta"):
            if key not in rec:
                raise UsageError(f"manifest line {lineno}: missing {key!r}")
        for key in ("keypoints", "segments", "meta", "boxes", "frames"):
            if key in rec and rec[key] is not None:
                rec[key] = str((base / rec[key]).resolve())
        records.append(rec)
    if not records:
        raise UsageError("manifest lists no clips")
    return records


def _read_bundle(rec: dict, label_map: tuple) -> ClipBundle:
    for key in ("keypoints", "segments", "meta"):
        if not Path(rec[key]).exists():
            raise MissingBundle(f"clip {rec['clip_id']}: missing {key} file")
    meta = parse_meta(Path(rec["meta"]).read_text())
    return parse_clip(
        Path(rec["keypoints"]).read_text(),
        Path(rec["segments"]).read_bytes(),
        meta,
        label_map=label_map,
    )


def _run_pool(tasks, worker, jobs: int):
    """Map worker over tasks, inline for jobs=1, processes otherwise."""
    if jobs <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks))


# ---------------------------------------------------------------- preprocess

def _preprocess_clip(task) -> dict:
    rec, cfg, out_dir = task
    clip_id = rec["clip_id"]
    row = {"clip_id": clip_id, "status": "ok"}
    try:
        bundle = _read_bundle(rec, cfg.label_map)
        n = bundle.meta.frame_count
        trim = plan_trim(bundle.keypoints, cfg)
        trimmed = apply_trim(bundle, trim.lo, trim.hi)
        if rec.get("boxes"):
            boxes = parse_boxes(Path(rec["boxes"]).read_text(), bundle.meta)
            transform = crop_to_signer(boxes[trim.lo:trim.hi], bundle.meta,
                                       size=cfg.crop_size)
        else:
            transform = identity_crop(bundle.meta, size=cfg.crop_size)
        keypoints = transform.apply_keypoints(trimmed.keypoints)
        segments = transform.apply_segments(trimmed.segments)
        meta = replace(trimmed.meta, height=cfg.crop_size, width=cfg.crop_size)
        out = Path(out_dir)
        _atomic_write(out / f"{clip_id}.keypoints.jsonl",
                      serialize_keypoints(keypoints))
        _atomic_write(out / f"{clip_id}.sgmt", serialize_segments(segments))
        _atomic_write(out / f"{clip_id}.meta.json", serialize_meta(meta))
        row.update(
            front_trim=trim.lo,
            back_trim=n - trim.hi,
            trim_fallback=trim.fallback,
            frame_count=meta.frame_count,
            handedness=classify_handedness(keypoints, cfg).value,
        )
    except (SignmaskError, OSError) as exc:
        row.update(status="error", error=str(exc))
    return row


def cmd_preprocess(args) -> int:
    cfg = _load_config(args)
    records = _load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = _run_pool([(rec, cfg, str(out)) for rec in records],
                     _preprocess_clip, args.jobs)
    rows.sort(key=lambda r: r["clip_id"])
    manifest_lines = []
    for row in rows:
        if row["status"] != "ok":
            log.warning("preprocess failed for %s: %s",
                        row["clip_id"], row.get("error"))
            continue
        manifest_lines.append(json.dumps({
            "clip_id": row["clip_id"],
            "keypoints": f"{row['clip_id']}.keypoints.jsonl",
            "segments": f"{row['clip_id']}.sgmt",
            "meta": f"{row['clip_id']}.meta.json",
        }, separators=(",", ":")))
    _atomic_write(out / "manifest.jsonl", "\n".join(manifest_lines) + "\n")
    failed = sum(1 for r in rows if r["status"] != "ok")
    _atomic_write(out / "report.json", json.dumps(
        {"clips": rows, "failed": failed}, indent=2) + "\n")
    log.info("preprocessed %d clips, %d failed", len(rows), failed)
    return EXIT_CLIP_FAILURES if failed and args.strict else EXIT_OK


# ------------------------------------------------------------------- genmask

def _genmask_clip(task) -> dict:
    rec, cfg, out_dir, streams = task
    clip_id = rec["clip_id"]
    row = {"clip_id": clip_id, "status": "ok"}
    try:
        bundle = _read_bundle(rec, cfg.label_map)
        plans = generate(bundle, cfg)
        for stream in streams:
            path = Path(out_dir) / f"{clip_id}.{stream}.smsk"
            _atomic_write(path, plans[stream].to_bytes())
        row["ratios"] = {s: plans[s].ratio for s in streams}
        row["strategies"] = {s: plans[s].strategy.name for s in streams}
    except (SignmaskError, OSError) as exc:
        row.update(status="error", error=str(exc))
    return row


def cmd_genmask(args) -> int:
    cfg = _load_config(args)
    records = _load_manifest(args.manifest)
    streams = _parse_streams(args.streams)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    rows = _run_pool([(rec, cfg, str(out), streams) for rec in records],
                     _genmask_clip, args.jobs)
    elapsed = time.perf_counter() - started
    rows.sort(key=lambda r: r["clip_id"])
    failed = sum(1 for r in rows if r["status"] != "ok")
    report = {
        "clips": rows,
        "failed": failed,
        "elapsed_s": elapsed,
        "clips_per_s": len(rows) / elapsed if elapsed > 0 else 0.0,
        "jobs": args.jobs,
        "seed": cfg.seed,
    }
    _atomic_write(out / "genmask_report.json",
                  json.dumps(report, indent=2) + "\n")
    for row in rows:
        if row["status"] != "ok":
            log.warning("genmask failed for %s: %s",
                        row["clip_id"], row.get("error"))
    log.info("generated plans for %d clips in %.2fs, %d failed",
             len(rows), elapsed, failed)
    return EXIT_CLIP_FAILURES if failed and args.strict else EXIT_OK


def _parse_streams(spec: str) -> tuple:
    streams = tuple(s.strip() for s in spec.split(",") if s.strip())
    for s in streams:
        if s not in STREAMS:
            raise UsageError(
                f"unknown stream {s!r}; choose from {', '.join(STREAMS)}")
    if not streams:
        raise UsageError("no streams selected")
    return streams


# ------------------------------------------------------------------- heatmap

def _heatmap_clip(task) -> dict:
    rec, cfg, out_dir = task
    clip_id = rec["clip_id"]
    row = {"clip_id": clip_id, "status": "ok"}
    try:
        bundle = _read_bundle(rec, cfg.label_map)
        clip = render_clip(bundle.keypoints, cfg)
        _atomic_write(Path(out_dir) / f"{clip_id}.shmp", write_heatmaps(clip))
    except (SignmaskError, OSError) as exc:
        row.update(status="error", error=str(exc))
    return row


def cmd_heatmap(args) -> int:
    cfg = _load_config(args)
    records = _load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = _run_pool([(rec, cfg, str(out)) for rec in records],
                     _heatmap_clip, args.jobs)
    rows.sort(key=lambda r: r["clip_id"])
    failed = sum(1 for r in rows if r["status"] != "ok")
    for row in rows:
        if row["status"] != "ok":
            log.warning("heatmap failed for %s: %s",
                        row["clip_id"], row.get("error"))
    log.info("rendered heatmaps for %d clips, %d failed", len(rows), failed)
    return EXIT_CLIP_FAILURES if failed and args.strict else EXIT_OK


# ----------------------------------------------------------------- visualize

def cmd_visualize(args) -> int:
    from PIL import Image

    records = _load_manifest(args.manifest)
    rec = next((r for r in records if r["clip_id"] == args.clip), None)
    if rec is None:
        raise UsageError(f"clip {args.clip!r} not in manifest")
    if not rec.get("frames"):
        raise MissingFrames(f"clip {args.clip!r} has no raw frame dump")
    plan_path = Path(args.out) / f"{args.clip}.{args.stream}.smsk"
    if not plan_path.exists():
        raise MissingBundle(f"no plan at {plan_path}; run genmask first")
    plan = MaskPlan.from_bytes(plan_path.read_bytes())
    frames = np.load(rec["frames"])
    if frames.ndim == 3:
        frames = np.repeat(frames[..., None], 3, axis=3)
    t_dim, gh, gw = plan.dims
    if frames.shape[0] != t_dim * TUBE_DEPTH:
        raise MissingFrames(
            f"frame dump has {frames.shape[0]} frames, plan expects "
            f"{t_dim * TUBE_DEPTH}")
    plane = gh * gw
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fi in range(frames.shape[0]):
        img = frames[fi].astype(np.float64)
        t = fi // TUBE_DEPTH
        for tok in plan.masked:
            if tok // plane != t:
                continue
            r, c = divmod(tok % plane, gw)
            ys = slice(r * PATCH_SIZE, (r + 1) * PATCH_SIZE)
            xs = slice(c * PATCH_SIZE, (c + 1) * PATCH_SIZE)
            img[ys, xs] *= 0.4
            if tok in plan.decoder_targets:
                img[ys.start:ys.stop, xs.start] = (255, 64, 64)
                img[ys.start:ys.stop, xs.stop - 1] = (255, 64, 64)
                img[ys.start, xs.start:xs.stop] = (255, 64, 64)
                img[ys.stop - 1, xs.start:xs.stop] = (255, 64, 64)
        path = out / f"{args.clip}.{args.stream}.frame{fi:03d}.png"
        Image.fromarray(img.clip(0, 255).astype(np.uint8)).save(path)
    log.info("wrote %d overlay frames", frames.shape[0])
    return EXIT_OK


# --------------------------------------------------------------------- stats

def _refnum_selfcheck() -> str:
    # Exercise the reference numerics end to end on fixed tiny inputs.
    from .refmae import (
        FusionSpec, MaskedPair, SoftLabel, fuse, identity_weights,
        masked_mse, soft_cross_entropy)

    pair = MaskedPair(truth=np.array([1.0, 2.0, 3.0]),
                      recon=np.array([1.0, 0.0, 0.0]),
                      masked_indices=np.array([1, 2]))
    mse = masked_mse(pair)
    ce = soft_cross_entropy(SoftLabel(np.array([0.5, 0.5])),
                            np.array([0.5, 0.5]))
    spec = FusionSpec(dim=2, layers=4)
    tok = np.array([[1.0, 0.0]])
    fused = fuse(spec, tok, tok, tok, identity_weights(spec))
    ok = (abs(mse - 6.5) < 1e-12 and abs(ce - np.log(2)) < 1e-12
          and fused.shape == (4,))
    return f"refnum selfcheck: {'ok' if ok else 'FAILED'}"


def cmd_stats(args) -> int:
    out = Path(args.out)
    plans = sorted(out.glob("*.smsk"))
    if not plans:
        raise UsageError(f"no mask plans under {out}")
    ratios = []
    strategies: dict[str, int] = {}
    for path in plans:
        plan = MaskPlan.from_bytes(path.read_bytes())
        ratios.append(plan.ratio)
        strategies[plan.strategy.name] = strategies.get(plan.strategy.name, 0) + 1
    print(f"plans: {len(plans)}")
    print(f"achieved ratio: min {min(ratios):.4f} "
          f"mean {sum(ratios) / len(ratios):.4f} max {max(ratios):.4f}")
    print("strategies: " + ", ".join(
        f"{k}={v}" for k, v in sorted(strategies.items())))
    report_path = out / "report.json"
    if report_path.exists():
        report = json.loads(report_path.read_text())
        rows = [r for r in report["clips"] if r.get("status") == "ok"]
        if rows:
            hands: dict[str, int] = {}
            for r in rows:
                hands[r["handedness"]] = hands.get(r["handedness"], 0) + 1
            front = sum(r["front_trim"] for r in rows) / len(rows)
            back = sum(r["back_trim"] for r in rows) / len(rows)
            print("handedness: " + ", ".join(
                f"{k}={v}" for k, v in sorted(hands.items())))
            print(f"mean trim: front {front:.2f} back {back:.2f}")
    gm_path = out / "genmask_report.json"
    if gm_path.exists():
        gm = json.loads(gm_path.read_text())
        print(f"throughput: {gm['clips_per_s']:.1f} clips/s "
              f"(jobs={gm['jobs']})")
    print(_refnum_selfcheck())
    return EXIT_OK


# ---------------------------------------------------------------------- main

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signmask",
        description="Segmentation-driven preprocessing and mask generation "
                    "for sign-language clips.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=True):
        if manifest:
            p.add_argument("--manifest", required=True,
                           help="clip manifest (JSONL)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="key=value config file "
                       "(falls back to $SIGNMASK_CONFIG)")
        p.add_argument("--seed", type=int, help="corpus seed override")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes (default 1)")
        p.add_argument("--strict", action="store_true",
                       help="exit nonzero when any clip fails")

    p = sub.add_parser("preprocess", help="trim, crop, and rewrite bundles")
    common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("genmask", help="generate mask plans per stream")
    common(p)
    p.add_argument("--streams", default=",".join(STREAMS),
                   help="comma-separated stream subset")
    p.set_defaults(func=cmd_genmask)

    p = sub.add_parser("heatmap", help="render keypoint heatmaps")
    common(p)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("visualize", help="overlay a plan on raw frames")
    common(p)
    p.add_argument("--clip", required=True)
    p.add_argument("--stream", default="video-st")
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("stats", help="summarize generated plans")
    p.add_argument("--out", required=True, help="directory holding plans")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SignmaskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CLIP_FAILURES


if __name__ == "__main__":
    sys.exit(main())
