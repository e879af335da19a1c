"""Command-line entry point: ``goalienet {synth,train,eval,decode,report}``.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _non_negative(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {text!r}")
    return v


def _fraction(text):
    try:
        v = float(text)
    except ValueError:
        v = -1.0
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"expected a fraction in [0, 1), got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="goalienet", description="Goalie, stick and net keypoint detection pipeline.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="generate a synthetic annotated dataset")
    s.add_argument("--out", required=True, type=Path, help="output directory")
    s.add_argument("--frames", required=True, type=_positive, help="number of frames")
    s.add_argument("--seed", required=True, type=_non_negative, help="generator seed (u64)")
    s.add_argument("--start-index", type=_non_negative, default=0,
                   help="index of the first frame (default 0)")
    s.add_argument("--width", type=_positive, default=320, help="image width in pixels (default 320)")
    s.add_argument("--height", type=_positive, default=240, help="image height in pixels (default 240)")

    t = sub.add_parser("train", help="train a network and write a checkpoint")
    t.add_argument("--data", required=True, type=Path, help="dataset directory or annotation file")
    t.add_argument("--config", type=Path, help="'key = value' config file (defaults if omitted)")
    t.add_argument("--out", required=True, type=Path, help="checkpoint path")
    t.add_argument("--seed", type=_non_negative, help="override the config seed")
    t.add_argument("--epochs", type=_positive, help="override the config epoch count")
    t.add_argument("--holdout-clips", type=_fraction, default=0.0, metavar="FRAC",
                   help="hold out this fraction of clips (frame_id prefix before '/'); "
                        "their frame ids go to CKPT.holdout.txt")
    t.add_argument("--log", type=Path, help="loss CSV path (default CKPT.loss.csv)")

    e = sub.add_parser("eval", help="score a checkpoint and write CSV/SVG reports")
    e.add_argument("--ckpt", required=True, type=Path, help="checkpoint path")
    e.add_argument("--data", required=True, type=Path, help="dataset directory or annotation file")
    e.add_argument("--out", required=True, type=Path, help="report directory")
    e.add_argument("--frames", type=Path, help="only evaluate frame ids listed in this file")
    e.add_argument("--dump-heatmaps", type=_non_negative, default=0, metavar="N",
                   help="also save final-stage heatmaps of the first N frames to heatmaps.bin")

    d = sub.add_parser("decode", help="print decoded coordinates of stored heatmaps")
    d.add_argument("--heatmap", required=True, type=Path, help="tensor-record file of [..., h, w] maps")
    d.add_argument("--second", choices=("global", "local"), default="global",
                   help="second-maximum rule (default global)")

    r = sub.add_parser("report", help="regenerate charts from an eval directory")
    r.add_argument("--eval", required=True, type=Path, dest="eval_dir", help="directory holding accuracy.csv")
    return p


# ------------------------------------------------------------------ commands

def cmd_synth(args) -> None:
    from goalienet.synth import SceneParams, generate_dataset

    params = SceneParams(seed=args.seed, image_size=(args.width, args.height))
    ds = generate_dataset(params, args.frames, args.out, start_index=args.start_index)
    print(f"wrote {len(ds)} frames to {args.out}")


def _load_dataset(path: Path):
    from goalienet.annotations import parse_dataset

    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return parse_dataset(path)


def clip_of(frame_id: str) -> str:
    return frame_id.split("/", 1)[0]


def split_clips(frames, frac: float, seed: int):
    """Deterministically hold out ``round(frac * n_clips)`` whole clips."""
    clips = sorted({clip_of(f.frame_id) for f in frames})
    n_hold = int(round(frac * len(clips)))
    if frac > 0 and n_hold == 0:
        n_hold = 1
    if n_hold >= len(clips):
        raise ValueError(f"cannot hold out {n_hold} of {len(clips)} clips and still train")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    held = {clips[i] for i in rng.permutation(len(clips))[:n_hold]}
    train = [f for f in frames if clip_of(f.frame_id) not in held]
    hold = [f for f in frames if clip_of(f.frame_id) in held]
    return train, hold


def cmd_train(args) -> None:
    from dataclasses import replace

    from goalienet.annotations import Dataset
    from goalienet.trainer import TrainConfig, load_config, save_checkpoint, train, write_loss_log

    cfg = load_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    ds = _load_dataset(args.data)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    if args.holdout_clips > 0:
        train_frames, hold = split_clips(ds.frames, args.holdout_clips, cfg.seed)
        ds = Dataset(train_frames, ds.root)
        Path(f"{args.out}.holdout.txt").write_text("".join(f"{f.frame_id}\n" for f in hold), encoding="utf-8")

    def progress(rec):
        logging.getLogger("goalienet").info("epoch %d/%d  step %d  loss %.6f", rec.epoch, cfg.epochs,
                                            rec.step, rec.loss)

    ckpt, records = train(cfg, ds, progress=progress)
    save_checkpoint(ckpt, args.out)
    write_loss_log(records, args.log or Path(f"{args.out}.loss.csv"))
    print(f"trained {cfg.epochs} epochs ({ckpt.step} steps) on {len(ds)} frames; "
          f"final loss {records[-1].loss:.6g}; checkpoint {args.out}")


def write_predictions(evaluation, path) -> None:
    from goalienet.metrics import DEFAULT_THRESHOLD, is_detected, normalized_distance

    with open(path, "w", encoding="utf-8") as fp:
        fp.write("frame_id,keypoint,pred_x,pred_y,gt_present,gt_x,gt_y,normalized_distance,detected\n")
        for r in evaluation.results:
            if r.gt_present:
                ratio = normalized_distance(r.predicted, r.ground_truth, r.bbox_diag)
                tail = f"1,{r.ground_truth[0]!r},{r.ground_truth[1]!r},{ratio:.6g},{int(is_detected(ratio, DEFAULT_THRESHOLD))}"
            else:
                tail = "0,NA,NA,NA,NA"
            fp.write(f"{r.frame_id},{r.keypoint},{r.predicted[0]:.4f},{r.predicted[1]:.4f},{tail}\n")


def cmd_eval(args) -> None:
    from goalienet.annotations import Dataset, presence_proportions
    from goalienet.metrics import emit_report
    from goalienet.tensor.serialize import save_tensors
    from goalienet.trainer import evaluate, load_checkpoint

    try:
        ckpt = load_checkpoint(args.ckpt)
    except FileNotFoundError:
        raise FileNotFoundError(f"checkpoint not found: {args.ckpt}") from None
    ds = _load_dataset(args.data)
    if args.frames is not None:
        wanted = {line.strip() for line in args.frames.read_text(encoding="utf-8").splitlines() if line.strip()}
        ds = Dataset([f for f in ds.frames if f.frame_id in wanted], ds.root)
        if not len(ds):
            raise ValueError(f"no frames of {args.data} are listed in {args.frames}")
    ev = evaluate(ckpt, ds, keep_heatmaps=args.dump_heatmaps)
    args.out.mkdir(parents=True, exist_ok=True)
    emit_report(ev.report, presence_proportions(ds), args.out)
    write_predictions(ev, args.out / "predictions.csv")
    if ev.heatmaps is not None:
        save_tensors(args.out / "heatmaps.bin",
                     [(f.frame_id, m) for f, m in zip(ds.frames, ev.heatmaps)])
    print(f"mean accuracy {ev.report.mean_accuracy:.4f} over {len(ds)} frames; reports in {args.out}")


def cmd_decode(args) -> None:
    from goalienet.codec import decode
    from goalienet.tensor.serialize import load_tensors

    if not args.heatmap.exists():
        raise FileNotFoundError(f"heatmap file not found: {args.heatmap}")
    for name, arr in load_tensors(args.heatmap).items():
        if arr.ndim < 2:
            raise ValueError(f"{name}: expected [..., h, w] maps, got shape {arr.shape}")
        maps = arr.reshape(-1, *arr.shape[-2:])
        for i, m in enumerate(maps):
            x, y = decode(m, second=args.second)
            label = f"{name}[{i}]" if arr.ndim > 2 else name
            print(f"{label} {x:.2f} {y:.2f}")


def cmd_report(args) -> None:
    from goalienet.metrics import emit_report, read_csv

    csv = args.eval_dir / "accuracy.csv"
    if not csv.exists():
        raise FileNotFoundError(f"no accuracy.csv in {args.eval_dir}")
    report, presence = read_csv(csv)
    emit_report(report, presence, args.eval_dir)
    print(f"regenerated reports in {args.eval_dir}")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "decode": cmd_decode, "report": cmd_report}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    from goalienet.threads import limit_threads, thread_count
    from goalienet.trainer import ConfigFileError

    try:
        thread_count()
    except ValueError as exc:
        print(f"goalienet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with limit_threads():
            COMMANDS[args.command](args)
    except ConfigFileError as exc:
        print(f"goalienet {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"goalienet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
