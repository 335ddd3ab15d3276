"""Command-line entry point: ``bridgeprompt {synth,train,extract,infer,eval}``.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime or
numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_dict, load_config, write_config
from .dataset_io import (generate_synthetic, load_activities, load_dataset, load_feature_file, load_framewise_labels,
                         load_mapping, read_bundle, write_dataset, write_feature_file, write_framewise_labels)
from .exceptions import FormatError, ParseError, TrainingDiverged, ValidationError
from .inference import build_prompt_bank, decode_frames, infer_activity, infer_cuts
from .metrics import evaluate_split, format_report, topk_accuracy
from .prompts import VariantTable, load_variant_table
from .sampler import SampleConfig, make_cuts
from .trainer import train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
log = logging.getLogger("bridgeprompt")


class UsageError(Exception):
    """Bad input from the user; maps to exit code 2."""


# ------------------------------------------------------------------ helpers

def _load_run_config(args, check_paths=True) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.set_seed(args.seed)
    if args.out is not None:
        cfg.out = args.out
    cfg.validate(check_paths=check_paths)
    return cfg


def _variant_table(cfg: RunConfig) -> VariantTable:
    return load_variant_table(cfg.prompts.variants) if cfg.prompts.variants else VariantTable()


def _sample_config(cfg: RunConfig, vocab) -> SampleConfig:
    try:
        exclude = tuple(vocab.id_of(name) for name in cfg.data.exclude)
    except KeyError as exc:
        raise UsageError(f"data.exclude names an unknown action {exc}") from exc
    s = cfg.sampler
    return SampleConfig(s.window_len, s.schedules, s.pad_policy, s.max_steps, exclude)


def _split_ids(root: Path, split: str):
    bundle = root / "splits" / f"{split}.bundle"
    if bundle.is_file():
        return read_bundle(bundle)
    if split in ("", "all"):
        return None
    raise UsageError(f"no split file {bundle}")


def _load_split(cfg: RunConfig, split: str, vocab=None):
    root = Path(cfg.data.root)
    vocab = vocab or load_mapping(root / "mapping.txt")
    ids = _split_ids(root, split)
    try:
        return load_dataset(root, vocab, ids, cfg.data.fps)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc


def _load_model(path):
    if path is None:
        raise UsageError("--checkpoint is required")
    return load_checkpoint(path)


# ----------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    cfg = _load_run_config(args, check_paths=False)
    vocab, videos = generate_synthetic(cfg.synth)
    out = Path(cfg.out)
    n_test = min(cfg.data.held_out, len(videos) - 1)
    ids = [v.video_id for v in videos]
    splits = {"all": ids, cfg.data.train_split: ids[:len(ids) - n_test]}
    if n_test:
        splits[cfg.data.test_split] = ids[len(ids) - n_test:]
    write_dataset(out, vocab, videos, splits)
    print(f"wrote {len(videos)} videos ({len(vocab)} actions) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    vocab, videos = _load_split(cfg, cfg.data.train_split)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(out / "config.txt", cfg)
    samp = _sample_config(cfg, vocab)
    table = _variant_table(cfg)
    log_path = out / "loss.log"
    with open(log_path, "w", encoding="utf-8") as fh:
        def on_step(step, report):
            fh.write(report.format_line(step) + "\n")

        try:
            res = train(videos, vocab, samp, cfg.model, cfg.train, table, checkpoint_dir=out / "checkpoints",
                        on_step=on_step)
        except TrainingDiverged as exc:
            print(f"error: training diverged at step {exc.step}", file=sys.stderr)
            for name, value in exc.terms.items():
                print(f"  {name} = {value}", file=sys.stderr)
            return EXIT_RUNTIME
    activities = sorted({v.activity_label for v in videos if v.activity_label})
    extra = {"activities": activities, "activity_template": cfg.prompts.activity_template,
             "k_max": samp.max_steps, "config": config_dict(cfg)}
    save_checkpoint(out / "model.brpc", res.model, train_state={"step": res.step}, extra=extra)
    if res.history:
        print(res.history[-1])
    print(f"checkpoint: {out / 'model.brpc'}")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _load_run_config(args)
    model = _load_model(args.checkpoint).model.eval()
    root = Path(cfg.data.root)
    ids = args.videos or _split_ids(root, args.split or "all") or sorted(
        p.stem for p in (root / "features").glob("*.brpf"))
    out = Path(cfg.out) / "features"
    out.mkdir(parents=True, exist_ok=True)
    for vid in ids:
        path = root / "features" / f"{vid}.brpf"
        if not path.is_file():
            raise UsageError(f"unknown video id {vid!r}")
        with torch.no_grad():
            feats = model.encode_frames(load_feature_file(path)).double().numpy()
        write_feature_file(out / f"{vid}.brpf", feats)
    print(f"wrote {len(ids)} feature files to {out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = _load_run_config(args)
    ckpt = _load_model(args.checkpoint)
    model = ckpt.model.eval()
    vocab, videos = _load_split(cfg, args.split or cfg.data.test_split)
    samp = _sample_config(cfg, vocab)
    k_max = int(ckpt.extra.get("k_max", samp.max_steps))
    samp = SampleConfig(samp.window_len, samp.schedules, samp.pad_policy, k_max, samp.exclude)
    activities = ckpt.extra.get("activities") or []
    template = ckpt.extra.get("activity_template", cfg.prompts.activity_template)
    bank = build_prompt_bank(vocab, _variant_table(cfg), model, k_max, activities, template)
    out = Path(cfg.out)
    (out / "groundTruth").mkdir(parents=True, exist_ok=True)
    lines, act_lines = [], []
    for v in videos:
        cuts = make_cuts([v], samp)
        if not cuts:
            raise UsageError(f"video {v.video_id} yields no cuts")
        preds = infer_cuts(np.stack([c.features for c in cuts]), bank, model, cfg.prompts.voting)
        lines += [p.format_line(v.video_id, c.start, vocab) for c, p in zip(cuts, preds)]
        frames = decode_frames(list(zip(cuts, preds)), len(v), cfg.infer.decode_mode)
        write_framewise_labels(out / "groundTruth" / f"{v.video_id}.txt", frames, vocab)
        if activities:
            top1, ranked = infer_activity(v, bank, model, cfg.infer.activity_segments, cfg.infer.activity_seg_len)
            act_lines.append("\t".join([v.video_id] + [name for name, _ in ranked]))
    (out / "predictions.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if act_lines:
        (out / "activities.txt").write_text("\n".join(act_lines) + "\n", encoding="utf-8")
    print(f"wrote {len(lines)} cut predictions for {len(videos)} videos to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_run_config(args, check_paths=False)
    root = Path(cfg.data.root) if cfg.data.root else None
    pred_dir = Path(args.pred) if args.pred else Path(cfg.out) / "groundTruth"
    gt_dir = Path(args.gt) if args.gt else (root / "groundTruth" if root else None)
    mapping = Path(args.mapping) if args.mapping else (root / "mapping.txt" if root else None)
    if gt_dir is None or mapping is None:
        raise UsageError("eval needs --gt and --mapping (or data.root in the config)")
    for p in (pred_dir, gt_dir, mapping):
        if not p.exists():
            raise UsageError(f"missing {p}")
    vocab = load_mapping(mapping)
    preds, gts, names = [], [], []
    for path in sorted(pred_dir.glob("*.txt")):
        gt_path = gt_dir / path.name
        if not gt_path.exists():
            raise UsageError(f"no ground truth for predicted video {path.stem}")
        p, g = load_framewise_labels(path, vocab), load_framewise_labels(gt_path, vocab)
        if len(p) != len(g):
            raise UsageError(f"frame count mismatch for video {path.stem}: {len(p)} predicted vs {len(g)}")
        preds.append(p)
        gts.append(g)
        names.append(path.stem)
    if not preds:
        raise UsageError(f"no prediction files in {pred_dir}")
    split = args.split or "split"
    row = evaluate_split(preds, gts)
    report = {"split": split, "videos": names, "metrics": row}
    act_path = pred_dir.parent / "activities.txt"
    if root is not None and act_path.is_file() and (root / "activity.txt").is_file():
        truth = load_activities(root / "activity.txt")
        ranked = [line.split("\t") for line in act_path.read_text(encoding="utf-8").splitlines() if line.strip()]
        ranked = [r for r in ranked if r[0] in truth]
        if ranked:
            names_sorted = sorted({n for r in ranked for n in r[1:]} | {truth[r[0]] for r in ranked})
            index = {n: i for i, n in enumerate(names_sorted)}
            scores = np.zeros((len(ranked), len(names_sorted)))
            for i, r in enumerate(ranked):
                for rank, n in enumerate(r[1:]):
                    scores[i, index[n]] = len(r) - rank
            labels = [index[truth[r[0]]] for r in ranked]
            report["activity"] = {f"top{k}": topk_accuracy(scores, labels, k) for k in (1, 5)}
    print(format_report({split: row}))
    if "activity" in report:
        print("activity " + " ".join(f"{k}={v:.1f}" for k, v in report["activity"].items()))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "extract": cmd_extract, "infer": cmd_infer, "eval": cmd_eval}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="run configuration file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override every seed in the config")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="bridgeprompt", parents=[common],
                                     description="Prompt-based pre-training and inference for action videos.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    sub.add_parser("train", parents=[common], help="pre-train a model")
    p = sub.add_parser("extract", parents=[common], help="write frame-encoder features")
    p.add_argument("--checkpoint")
    p.add_argument("--split")
    p.add_argument("--videos", nargs="+")
    p = sub.add_parser("infer", parents=[common], help="predict counts, steps and frame labels")
    p.add_argument("--checkpoint")
    p.add_argument("--split")
    p = sub.add_parser("eval", parents=[common], help="score frame-label predictions")
    p.add_argument("--pred", help="directory of predicted frame-label files")
    p.add_argument("--gt", help="ground-truth directory")
    p.add_argument("--mapping", help="mapping.txt")
    p.add_argument("--split", help="name used in the report row")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("config", "seed", "out"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, ValidationError, ParseError, FormatError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
