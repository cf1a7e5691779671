"""Operator entry points: extract features, train, evaluate, infer, generate
synthetic data, and serve the HTTP tuner/classifier.

Defaults follow the shipped configuration: 16-frame samples, 50 color and 34
LBP buckets, 32 sample points at radius 8, HSV plus Y'CbCr, dual-layer
variant, batch size 32. Set ``LIVETEX_LOG`` (debug/info/warning/error) to
control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from . import dataset as ds
from . import evalharness, features, metrics, nn, train as train_mod
from .lbp import LbpParams

logger = logging.getLogger("livetex.cli")


def _spec_from_args(args) -> features.HistogramSpec:
    spaces = tuple(s.strip() for s in args.spaces.split(",") if s.strip())
    return features.HistogramSpec(
        color_buckets=args.buckets_color,
        lbp_buckets=args.buckets_lbp,
        lbp=LbpParams(points=args.lbp_points, radius=args.lbp_radius),
        spaces=spaces,
    )


def _load_dataset_config(manifest: Path) -> ds.DatasetConfig:
    config_path = manifest.parent / "dataset.json"
    if not config_path.is_file():
        raise FileNotFoundError(
            f"dataset config not found next to manifest: {config_path}"
        )
    return ds.load_dataset_config(config_path)


def cmd_extract(args) -> int:
    manifest = Path(args.manifest)
    records = ds.parse_manifest(manifest)
    config = _load_dataset_config(manifest)
    spec = _spec_from_args(args)
    out = features.write_feature_cache(
        args.out, records, spec, args.frames, args.stride or args.frames,
        config, source_manifest=str(manifest),
    )
    cache = features.load_feature_cache(out)
    print(
        f"extracted {len(cache.samples)} samples from {len(records)} videos "
        f"(dim {spec.feature_dim}, {cache.frames_per_sample} frames/sample) -> {out}"
    )
    return 0


def cmd_train(args) -> int:
    cache = features.load_feature_cache(args.features)
    config = train_mod.TrainConfig(
        variant=args.variant,
        hidden=args.hidden,
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
        protocol=args.protocol,
    )
    result = train_mod.train(config, cache, args.out)
    if result.diverged:
        print("training diverged; last good checkpoint retained", file=sys.stderr)
        return 1
    best = result.history[result.best_epoch - 1]
    print(
        f"trained {config.variant} model for {len(result.history)} epochs; "
        f"best epoch {result.best_epoch} "
        f"(val bal acc {best['val_balanced_accuracy']:.4f}) -> {result.checkpoint_path}"
    )
    return 0


def cmd_eval(args) -> int:
    if args.experiment:
        with open(args.experiment, encoding="utf-8") as fh:
            exp = json.load(fh)
        checkpoint = exp["checkpoint"]
        features_dir = exp["features"]
        protocol = exp.get("protocol", args.protocol)
        split = exp.get("split", args.split)
    else:
        checkpoint, features_dir = args.checkpoint, args.features
        protocol, split = args.protocol, args.split
    if not checkpoint or not features_dir:
        raise ValueError("eval needs --checkpoint and --features (or --experiment)")

    model, norm, _, _, _ = nn.load_checkpoint(checkpoint)
    cache = features.load_feature_cache(features_dir)
    report = evalharness.run_protocol(model, norm, cache, protocol=protocol, split=split)
    print(f"dataset={cache.dataset.name} split={split} protocol={protocol}")
    print(report.to_text())
    for fine, rep in metrics.grouped_report(report.window_outcomes, "fine_label").items():
        print(f"  window[{fine}]: {rep.to_text()}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            for record in report.to_records():
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        print(f"report records -> {out}")
    return 0


def cmd_infer(args) -> int:
    model, norm, spec, frames_per_sample, _ = nn.load_checkpoint(args.checkpoint)
    if args.sample:
        tensor, _ = features.deserialize_sample(Path(args.sample).read_bytes())
        decision, score = evalharness.classify_sample(model, norm, tensor)
        print(json.dumps({"decision": decision, "score": score}))
        return 0

    frame_dir = Path(args.frames)
    paths = sorted(p for p in frame_dir.iterdir() if p.is_file())
    if not paths:
        raise FileNotFoundError(f"no frame files in {frame_dir}")
    video = ds.VideoRecord("video", "user", "bonafide", {}, paths)
    windows = ds.window_video(video, frames_per_sample, frames_per_sample)
    if not windows:
        raise ValueError(
            f"{len(paths)} frames is shorter than one {frames_per_sample}-frame window"
        )
    rows = features.video_features(paths, spec)
    decisions, scores = [], []
    for sample in features.assemble_samples(rows, windows, None, "video"):
        decision, score = evalharness.classify_sample(model, norm, sample)
        decisions.append(decision)
        scores.append(score)
    verdict = evalharness.majority_vote(decisions, video_id=str(frame_dir), scores=scores)
    print(
        json.dumps(
            {
                "decision": verdict.final,
                "windows": len(decisions),
                "margin": verdict.margin,
                "scores": [round(s, 6) for s in scores],
            }
        )
    )
    return 0


def cmd_synth(args) -> int:
    manifest, config = ds.synth_generate(
        args.out,
        seed=args.seed,
        users=args.users,
        live_videos=args.live_videos,
        attack_videos=args.attack_videos,
        frames_per_video=args.frames_per_video,
        size=args.size,
        name=args.name,
    )
    print(f"synthetic dataset -> {manifest} + {config}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint=args.checkpoint, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="livetex",
        description="Liveness detection from color-texture histogram time series.",
    )
    parser.add_argument("--version", action="version", version=f"livetex {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_feature_flags(p):
        p.add_argument("--frames", type=int, default=16,
                       help="frames per sample (default 16)")
        p.add_argument("--stride", type=int, default=None,
                       help="window stride in frames (default: same as --frames)")
        p.add_argument("--buckets-color", type=int, default=50,
                       help="color histogram buckets (default 50)")
        p.add_argument("--buckets-lbp", type=int, default=34,
                       help="LBP histogram buckets (default 34)")
        p.add_argument("--lbp-points", type=int, default=32,
                       help="LBP sample points (default 32)")
        p.add_argument("--lbp-radius", type=float, default=8.0,
                       help="LBP radius in pixels (default 8)")
        p.add_argument("--spaces", default="hsv,ycbcr",
                       help="comma-joined color spaces (default hsv,ycbcr)")

    p = sub.add_parser("extract", help="extract window samples from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    add_feature_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a classifier on extracted features")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=["single", "dual"], default="dual")
    p.add_argument("--hidden", type=int, default=None,
                   help="hidden units (default 240 dual / 480 single)")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--protocol", default="all")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint")
    p.add_argument("--features")
    p.add_argument("--protocol", default="all")
    p.add_argument("--split", default="testing")
    p.add_argument("--out", help="write line-delimited report records here")
    p.add_argument("--experiment",
                   help="JSON file naming checkpoint/features/protocol/split")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="classify a serialized sample or a frame directory")
    p.add_argument("--checkpoint", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--sample", help="CTL1 sample file")
    group.add_argument("--frames", help="directory of frames for one video")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("synth", help="generate a deterministic synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--users", type=int, default=20)
    p.add_argument("--live-videos", type=int, default=2)
    p.add_argument("--attack-videos", type=int, default=4)
    p.add_argument("--frames-per-video", type=int, default=64)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--name", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the tuner/classifier HTTP service")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8470)
    p.add_argument("--static", default=None,
                   help="directory with the built tuner UI to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("LIVETEX_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface actionable diagnostics, nonzero exit
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
