"""Command line entry point: ``tamed-ce {train,sweep,gradcheck,summarize}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 gradcheck failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import gradcheck
from .core import ContractError
from .data import IdxFormatError
from .harness import TrainConfig, run_sweep, run_training, summarize
from .losses import LossSpec

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_GRADCHECK = 0, 1, 2, 3

GRADCHECK_SUITE = [("ce", 0.0), ("tce", 0.5), ("tce", 1.0), ("tce", 1.5), ("tce", 2.0),
                   ("mse", 0.0), ("mae", 0.0)]


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def loss_list(text):
    """``ce,tce:0.5,tce:2,mse`` -> [(kind, alpha), ...]"""
    out = []
    for item in text.split(","):
        kind, _, alpha = item.strip().partition(":")
        if kind not in ("ce", "tce", "mse", "mae"):
            raise argparse.ArgumentTypeError(f"unknown loss {kind!r}")
        try:
            a = float(alpha) if alpha else 0.0
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad alpha in {item!r}")
        if a < 0:
            raise argparse.ArgumentTypeError(f"alpha must be >= 0 in {item!r}")
        out.append((kind, a))
    return out


def add_train_flags(p):
    # Defaults are None so a --config file can supply values the flags don't override.
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--loss", choices=["ce", "tce", "mse", "mae"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--lr-drops", type=int_list)
    p.add_argument("--lr-factor", type=float)
    p.add_argument("--hidden", type=int_list, help="hidden widths, e.g. 256,128")
    p.add_argument("--dataset", choices=["mnist", "blobs"])
    p.add_argument("--data-dir")
    p.add_argument("--train-subset", type=int)
    p.add_argument("--normalize", choices=["feature", "channel"])
    p.add_argument("--holdout", type=int)
    p.add_argument("--blobs-classes", type=int)
    p.add_argument("--blobs-dim", type=int)
    p.add_argument("--blobs-per-class", type=int)
    p.add_argument("--blobs-test-per-class", type=int)
    p.add_argument("--blobs-separation", type=float)
    p.add_argument("--blobs-spread", type=float)
    p.add_argument("--threshold", type=float, help="accuracy percent for epochs-to-threshold")
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")


def config_from_args(args) -> TrainConfig:
    base = TrainConfig.load(args.config).to_dict() if args.config else TrainConfig().to_dict()
    for key in base:
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    if getattr(args, "alpha", None) is not None and args.alpha < 0:
        raise UsageError(f"--alpha must be >= 0, got {args.alpha}")
    try:
        return TrainConfig.from_dict(base)
    except ContractError as exc:
        raise UsageError(str(exc)) from exc


def build_parser():
    parser = Parser(prog="tamed-ce", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("train", help="train one configuration")
    add_train_flags(p)

    p = sub.add_parser("sweep", help="grid of losses x noise levels x seeds")
    add_train_flags(p)
    p.add_argument("--losses", type=loss_list, default=[("ce", 0.0), ("tce", 2.0)],
                   help="e.g. ce,tce:0.5,tce:2,mse")
    p.add_argument("--etas", type=float_list, default=[0.0, 0.4, 0.8])
    p.add_argument("--seeds", type=int_list, default=[0, 1, 2])

    p = sub.add_parser("gradcheck", help="finite-difference check of loss gradients")
    p.add_argument("--loss", choices=["ce", "tce", "mse", "mae"],
                   help="omit to check the whole suite")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--num-classes", type=int, default=10)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float)

    p = sub.add_parser("summarize", help="aggregate run directories into summary.csv")
    p.add_argument("--out", required=True, help="directory containing run subdirectories")
    return parser


def cmd_train(args):
    cfg = config_from_args(args)
    res = run_training(cfg)
    s = res.summary()
    print(f"{cfg.run_name}: best epoch {s['best_epoch']} test_top1 {s['test_top1_at_best']} "
          f"diverged {s['diverged']} -> {res.run_dir}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = config_from_args(args)
    rows = run_sweep(cfg, args.losses, args.etas, args.seeds)
    for r in rows:
        print(r)
    return EXIT_OK


def cmd_gradcheck(args):
    if args.alpha < 0:
        raise UsageError(f"--alpha must be >= 0, got {args.alpha}")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    suite = [(args.loss, args.alpha)] if args.loss else GRADCHECK_SUITE
    ok = True
    for kind, alpha in suite:
        spec = LossSpec(kind, alpha, args.num_classes)
        rep = gradcheck.check_loss(spec, args.trials, args.seed, tolerance=args.tolerance)
        print(f"{spec.label:8s} {rep}")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_GRADCHECK


def cmd_summarize(args):
    rows = summarize(args.out)
    if not rows:
        print(f"no run summaries under {args.out}", file=sys.stderr)
        return EXIT_DATA
    for r in rows:
        print(r)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s")
    handler = {"train": cmd_train, "sweep": cmd_sweep,
               "gradcheck": cmd_gradcheck, "summarize": cmd_summarize}[args.command]
    try:
        return handler(args)
    except (UsageError, ContractError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IdxFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
