"""Command-line entry point: ``fictsc {train,analyze-shift,sharpness,compare,bench-synth}``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import sys
from pathlib import Path

from fictsc.data import DatasetError, load_dataset, save_csv
from fictsc.harness.config import ConfigError, apply_overrides, load_config
from fictsc.harness.synthetic import generate_synthetic_shift

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pairs(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _add_experiment_flags(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--train", dest="train_path", help="train split file (.csv or .ts)")
    p.add_argument("--test", dest="test_path", help="test split file")
    p.add_argument("--format", dest="data_format", choices=["csv", "ts"])
    p.add_argument("--architecture", choices=["linear", "mlp", "inception-lite"])
    p.add_argument("--width", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--zscore", dest="zscore", action="store_true", default=None)
    p.add_argument("--no-zscore", dest="zscore", action="store_false")
    p.add_argument("--instance-norm", dest="instance_norm", action="store_true", default=None)


_EXPERIMENT_KEYS = ("train_path", "test_path", "data_format", "architecture", "width", "epochs",
                    "batch_size", "lr", "weight_decay", "zscore", "instance_norm")


def _experiment_config(args, extra_keys=()):
    overrides = _pairs(args.set)
    for key in _EXPERIMENT_KEYS + tuple(extra_keys):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = str(val)
    return load_config(args.config, overrides)


def cmd_train(args):
    if args.epsilon is not None and args.optimizer not in (None, "fic"):
        raise UsageError(f"--epsilon only applies to --optimizer fic, not {args.optimizer}")
    if args.rho is not None and args.optimizer not in (None, "sam"):
        raise UsageError(f"--rho only applies to --optimizer sam, not {args.optimizer}")
    if bool(args.train_path) != bool(args.test_path):
        raise UsageError("--train and --test must be given together")
    cfg = _experiment_config(args, ("optimizer", "epsilon", "rho", "seed"))
    if args.no_sharpness:
        cfg.sharpness = False
    log = None
    if args.log:
        from fictsc.optim import DiagnosticsLog
        log = DiagnosticsLog(args.log)
    from fictsc.harness.train import train
    report = train(cfg, log=log)
    report.write(args.out, args.loss_curve)
    if args.checkpoint:
        from fictsc.models import save_checkpoint
        save_checkpoint(report.model, args.checkpoint)
    print(report.summary())
    print(f"report written to {args.out}")
    return EXIT_OK


def cmd_analyze_shift(args):
    from fictsc import shift
    train = load_dataset(args.data, format=args.format, split="train")
    test = load_dataset(args.test, format=args.format, split="test") if args.test else train
    if train.T != test.T:
        raise DatasetError(f"train and test lengths differ ({train.T} vs {test.T})")
    if not 0 <= args.channel < train.d:
        raise UsageError(f"--channel {args.channel} out of range for d={train.d}")
    rep = shift.in_effect_report(train, test, args.channel)
    mats = shift.shift_report(train, test, args.channel)
    records = {
        "channel": args.channel,
        "between_train_before_mean": repr(rep.mean_between("between_train_before")),
        "between_train_after_mean": repr(rep.mean_between("between_train_after")),
        "between_test_before_mean": repr(rep.mean_between("between_test_before")),
        "between_test_after_mean": repr(rep.mean_between("between_test_after")),
    }
    shift.write_report(mats, args.out, records)
    print(rep.before.block())
    print()
    print(rep.between_train_before.block())
    print(f"report written to {args.out}")
    return EXIT_OK


def cmd_sharpness(args):
    from fictsc.models import load_checkpoint
    from fictsc.sharpness import landscape_slice, sharpness
    try:
        model = load_checkpoint(args.checkpoint)
    except (ValueError, OSError) as exc:
        raise DatasetError(f"cannot load checkpoint {args.checkpoint}: {exc}") from exc
    data = load_dataset(args.data, format=args.format, split="train")
    if (data.d, data.T) != (model.config.d, model.config.T):
        raise DatasetError(f"data shape d={data.d}, T={data.T} does not match the checkpoint "
                           f"(d={model.config.d}, T={model.config.T})")
    estimators = ("per-sample", "batch-mean") if args.estimator == "both" else (args.estimator,)
    lines = [sharpness(model, data, args.alpha, est).record() for est in estimators]
    if args.slice:
        sl = landscape_slice(model, data, seed=args.seed, radius=args.radius, resolution=args.resolution)
        sl.write(args.slice)
        lines.append(f"slice={args.slice}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_compare(args):
    from fictsc.harness.suite import ARMS, MIN_SEEDS, run_comparison_suite
    if args.seeds < MIN_SEEDS:
        raise UsageError(f"--seeds must be at least {MIN_SEEDS}")
    arms = [a.strip() for a in args.arms.split(",") if a.strip()]
    bad = [a for a in arms if a not in ARMS]
    if bad:
        raise UsageError(f"unknown arm(s) {bad}; choose from {list(ARMS)}")
    cfg = _experiment_config(args)
    seeds = range(args.first_seed, args.first_seed + args.seeds)

    def progress(arm, seed, rep):
        print(f"seed={seed} arm={arm} accuracy={rep.metrics.accuracy:.4f}", flush=True)

    rep = run_comparison_suite(cfg, seeds, arms, progress=None if args.quiet else progress)
    rep.write(args.out)
    print(rep.summary())
    print(f"report written to {args.out}")
    return EXIT_OK


def cmd_bench_synth(args):
    cfg = load_config(args.config)
    apply_overrides(cfg, _pairs(args.set))
    if args.seed is not None:
        cfg.recipe.seed = args.seed
    cfg.validate()
    train, test = generate_synthetic_shift(cfg.recipe)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(train, out / "train.csv")
    save_csv(test, out / "test.csv")
    print(f"wrote {out / 'train.csv'} ({train.n} series) and {out / 'test.csv'} ({test.n} series)")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="fictsc", description="Fisher-information-constrained time-series classification.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train one configuration and write a run report")
    _add_experiment_flags(p)
    p.add_argument("--optimizer", choices=["plain", "fic", "sam"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-sharpness", action="store_true")
    p.add_argument("--out", default="run_report.txt")
    p.add_argument("--loss-curve", help="write 'step loss' columns here")
    p.add_argument("--checkpoint", help="save the trained model here")
    p.add_argument("--log", help="per-step diagnostics file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze-shift", help="W1 dissimilarity matrices before/after instance normalization")
    p.add_argument("--data", required=True)
    p.add_argument("--test", help="second split; defaults to --data itself")
    p.add_argument("--format", choices=["csv", "ts"])
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--out", default="shift_report.txt")
    p.set_defaults(func=cmd_analyze_shift)

    p = sub.add_parser("sharpness", help="sharpness of a saved model on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=["csv", "ts"])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--estimator", choices=["per-sample", "batch-mean", "both"], default="both")
    p.add_argument("--slice", help="write a 2-D loss landscape slice here")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--resolution", type=int, default=21)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sharpness)

    p = sub.add_parser("compare", help="multi-seed comparison suite")
    _add_experiment_flags(p)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--arms", default="baseline,fic,sam,in-ablation")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", default="comparison_report.txt")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench-synth", help="write the synthetic recipe's splits as CSV fixtures")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_bench_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"fictsc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as exc:
        print(f"fictsc {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"fictsc {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
