"""Command-line entry point: ``rulmae <command> ...``.

Commands: preprocess, pretrain, finetune, evaluate, reproduce, selftest and
synthesize.  Every run option can also come from a ``key = value`` config
file (``--config``); flags given on the command line win.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, env_seed
from .errors import RulMaeError
from .evaluate import evaluate_split, plot_csv, svg_from_plot_csv
from .features import NormStats, fit_norm, select_features
from .ingest import format_cmapss, format_truth, load_split
from .reproduce import DEFAULT_RATIOS, run_reproduce, synthetic_splits
from .train import (
    build_windows,
    dims_for,
    finetune,
    make_checkpoint,
    normalize_split,
    prepare_features,
    pretrain,
)

log = logging.getLogger("rulmae")


def _ratio(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"mask ratio must be in [0, 1), got {v}")
    return v


def _ratios(text: str) -> list[float]:
    return [_ratio(t) for t in text.split(",") if t.strip()]


# flag dest -> RunConfig field
_CONFIG_FLAGS = {
    "mask_ratio": "mask_ratio", "lr": "lr", "dropout": "dropout", "d": "d", "heads": "heads",
    "layers": "layers", "window": "P", "patch": "K", "gamma": "gamma", "lam": "lam",
    "epochs": "epochs", "batch_size": "batch_size", "seed": "seed", "stride": "stride",
    "loss_scope": "loss_scope", "rul_cap": "rul_cap", "rul_scale": "rul_scale",
}


def _add_run_flags(p: argparse.ArgumentParser, ratio: bool = False) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--d", type=int, help="model width")
    p.add_argument("--heads", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--window", type=int, help="timestamps per window (P)")
    p.add_argument("--patch", type=int, help="timestamps per patch (K)")
    p.add_argument("--stride", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--loss-scope", choices=["all", "masked_only"])
    p.add_argument("--rul-cap", type=float)
    p.add_argument("--rul-scale", type=float)
    if ratio:
        p.add_argument("--mask-ratio", type=_ratio)


def build_config(args, **fixed) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is None and not getattr(args, "config", None):
        cfg = cfg.with_(seed=env_seed(cfg.seed))
    changes = {field: getattr(args, dest) for dest, field in _CONFIG_FLAGS.items()
               if getattr(args, dest, None) is not None}
    changes.update(fixed)
    return cfg.with_(**changes)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands ----------------------------------------------------------------

def cmd_preprocess(args) -> int:
    cfg = build_config(args)
    split = load_split(args.data, "train")
    report = select_features(split.units, cfg.gamma, cfg.lam)
    out = _out(args)
    (out / "feature_report.csv").write_text(report.to_csv())
    print(f"{len(report.selected)} of {len(report.cor)} features selected: {list(report.selected)}")
    if not report.selected:
        log.warning("no feature passes criteria > 0 (lambda=%s); norm_stats not written", cfg.lam)
        return 0
    fit_norm(split.units, report.selected).save(out / "norm_stats")
    return 0


def _load_norm(args, split, cfg):
    if getattr(args, "norm_stats", None):
        return NormStats.load(args.norm_stats)
    return prepare_features(split, cfg.gamma, cfg.lam)[1]


def cmd_pretrain(args) -> int:
    cfg = build_config(args, phase="pretrain", train_data=str(args.data))
    split = load_split(args.data, "train")
    norm = _load_norm(args, split, cfg)
    windows = build_windows(normalize_split(split, norm), cfg.P, cfg.stride)
    params, tlog = pretrain(cfg, windows)
    out = _out(args)
    ckpt_path = out / "pretrain.ckpt"
    save_checkpoint(ckpt_path, make_checkpoint("mae", params, cfg, norm))
    tlog.checkpoint_path = str(ckpt_path)
    (out / "trainlog.csv").write_text(tlog.to_csv())
    print(f"pretrain done: final loss {tlog.losses[-1] if tlog.epochs else float('nan'):.6g}, "
          f"checkpoint {ckpt_path}")
    return 0


def cmd_finetune(args) -> int:
    init = None
    if args.init:
        if not Path(args.init).is_file():
            print(f"error: checkpoint not found: {args.init}", file=sys.stderr)
            return 1
        init = load_checkpoint(args.init)
        if init.kind != "mae":
            raise RulMaeError(f"{args.init} is not a pretrained autoencoder checkpoint")
    cfg = build_config(args, phase="finetune", train_data=str(args.data),
                       init_checkpoint=args.init)
    split = load_split(args.data, "train")
    # Pretrained encoders only understand the feature layout they were trained on.
    norm = init.norm if init is not None and init.norm is not None else _load_norm(args, split, cfg)
    windows = build_windows(normalize_split(split, norm), cfg.P, cfg.stride)
    params, tlog = finetune(cfg, windows, init=None if init is None else init.params)
    out = _out(args)
    ckpt_path = out / "finetune.ckpt"
    save_checkpoint(ckpt_path, make_checkpoint("rul", params, cfg, norm))
    tlog.checkpoint_path = str(ckpt_path)
    (out / "trainlog.csv").write_text(tlog.to_csv())
    print(f"finetune done: final loss {tlog.losses[-1] if tlog.epochs else float('nan'):.6g}, "
          f"checkpoint {ckpt_path}")
    return 0


def cmd_evaluate(args) -> int:
    if not Path(args.checkpoint).is_file():
        print(f"error: checkpoint not found: {args.checkpoint}", file=sys.stderr)
        return 1
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.kind != "rul":
        raise RulMaeError(f"{args.checkpoint} is not a fine-tuned RUL checkpoint")
    if ckpt.norm is None:
        raise RulMaeError("checkpoint carries no normalisation statistics")
    test = load_split(args.data, "test", truth_path=args.truth)
    report = evaluate_split(ckpt.params, ckpt.config, ckpt.norm, test)
    out = _out(args)
    (out / "eval_report.csv").write_text(report.to_csv())
    pcsv = plot_csv(report, title=f"RMSE {report.rmse:.3f}")
    (out / "rul_plot.csv").write_text(pcsv)
    (out / "rul_plot.svg").write_text(svg_from_plot_csv(pcsv))
    print(f"RMSE {report.rmse:.4f} over {report.count} units")
    return 0


def cmd_reproduce(args) -> int:
    cfg = build_config(args)
    if args.synthetic:
        train, test = synthetic_splits(cfg)
        pre = train
    else:
        if not (args.pretrain_data and args.finetune_data and args.test_data):
            print("error: --pretrain-data, --finetune-data and --test-data are required "
                  "unless --synthetic is given", file=sys.stderr)
            return 2
        pre = load_split(args.pretrain_data, "train")
        train = pre if args.finetune_data == args.pretrain_data else load_split(args.finetune_data, "train")
        test = load_split(args.test_data, "test", truth_path=args.truth)
    result = run_reproduce(pre, train, test, cfg, ratios=args.ratios,
                           pretrain_epochs=args.pretrain_epochs, finetune_epochs=args.finetune_epochs,
                           out_dir=_out(args))
    print(result.table.to_csv(), end="")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest(verbose=True) else 1


def cmd_synthesize(args) -> int:
    cfg = build_config(args)
    train, test = synthetic_splits(cfg)
    out = _out(args)
    (out / "train_SYN.txt").write_text(format_cmapss(train))
    (out / "test_SYN.txt").write_text(format_cmapss(test))
    (out / "RUL_SYN.txt").write_text(format_truth(test.test_rul_truth))
    print(f"wrote {len(train.units)} training and {len(test.units)} test units to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rulmae", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="score and select features, fit normalisation")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("pretrain", help="masked-autoencoder pretraining")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--norm-stats")
    _add_run_flags(p, ratio=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="RUL regression, optionally from a pretrained encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init")
    p.add_argument("--norm-stats")
    _add_run_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="terminal-RUL RMSE on a test split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--truth")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reproduce", help="baseline vs pretrained arms comparison table")
    p.add_argument("--pretrain-data")
    p.add_argument("--finetune-data")
    p.add_argument("--test-data")
    p.add_argument("--truth")
    p.add_argument("--synthetic", action="store_true", help="use the generated desk-scale corpus")
    p.add_argument("--ratios", type=_ratios, default=list(DEFAULT_RATIOS))
    p.add_argument("--pretrain-epochs", type=int)
    p.add_argument("--finetune-epochs", type=int)
    p.add_argument("--out", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("selftest", help="gradient checks and invariant suite")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("synthesize", help="write the synthetic corpus in C-MAPSS format")
    p.add_argument("--out", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_synthesize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except (RulMaeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
