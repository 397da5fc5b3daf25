"""Command-line entry point: ``facereenact {synth-data,train,reenact,eval}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .geometry import LandmarkFormatError, read_landmarks
from .pipeline.checkpoint import CheckpointError
from .pipeline.config import ConfigError, TrainConfig
from .pipeline.evaluation import ManifestError, evaluate, synthesize
from .pipeline.imageio import ImageFormatError, read_image, write_image
from .pipeline.training import NumericalAbort, Trainer

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DATA_ERRORS = (LandmarkFormatError, ManifestError, ImageFormatError, CheckpointError, ConfigError,
               FileNotFoundError, KeyError, ValueError)

log = logging.getLogger("facereenact")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def cmd_synth_data(args) -> int:
    manifest = synthesize(args.out, args.identities, args.frames, args.seed, args.resolution)
    print(f"wrote {args.identities * args.frames} frames and {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = TrainConfig.load(args.config) if args.config else TrainConfig()
    if args.overfit:
        config = config.replace(overfit_mode=True)
    if args.resume:
        trainer = Trainer.load(args.resume)
        # the checkpoint's config is authoritative; only the step budget may grow
        trainer.config = trainer.config.replace(steps=config.steps)
        log.info("resumed from %s at step %d", args.resume, trainer.step)
    else:
        trainer = Trainer(config)
    out = Path(args.out)
    every = trainer.config.checkpoint_every

    def checkpoint(tr, report):
        if every and report.step % every == 0:
            tr.save(out)

    remaining = trainer.config.steps - trainer.step
    if remaining > 0:
        trainer.fit(remaining, checkpoint)
    trainer.save(out)
    if trainer.history:
        last = trainer.history[-1]
        print(f"step {last.step}: total {last.total:.4f} (gan {last.gan:.4f}, content {last.content:.4f}, "
              f"local {last.local:.4f}); D {last.discriminator:.4f}")
    print(f"saved {out}")
    return EXIT_OK


def cmd_reenact(args) -> int:
    trainer = Trainer.load(args.ckpt)
    src = read_image(args.source)
    res = trainer.config.resolution
    if src.shape[1:] != (res, res):
        raise ImageFormatError(f"{args.source}: image is {src.shape[2]}x{src.shape[1]}, checkpoint expects {res}x{res}")
    out = trainer.reenact(src[None], [read_landmarks(args.source_lm)], [read_landmarks(args.driving_lm)],
                          same_identity=args.same_identity)
    write_image(args.out, out[0])
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    trainer = Trainer.load(args.ckpt)
    report = evaluate(trainer, args.manifest, args.id_vectors, args.poses, args.aus)
    record = report.write(args.report)
    sys.stdout.write(report.table())
    print(f"wrote {args.report} and {record}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="facereenact", description="One-shot face reenactment on synthetic faces.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-data", help="render a synthetic face dataset with a pair manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--resolution", type=int, default=64)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train (or resume) and write a checkpoint")
    p.add_argument("--config", help="key = value file under a [train] section")
    p.add_argument("--out", required=True)
    p.add_argument("--resume")
    p.add_argument("--overfit", action="store_true", help="single-pair harness at the overfit learning rate")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reenact", help="animate one source image to driving landmarks")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--source-lm", required=True)
    p.add_argument("--driving-lm", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--same-identity", action="store_true", help="skip driving-shape adaptation")
    p.set_defaults(func=cmd_reenact)

    p = sub.add_parser("eval", help="score a checkpoint on a pair manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--id-vectors")
    p.add_argument("--poses")
    p.add_argument("--aus")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericalAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
