"""With/without-pretraining comparison harness."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .checkpoint import save_checkpoint
from .config import RunConfig
from .evaluate import ComparisonTable, EvalReport, evaluate_split, plot_csv, svg_from_plot_csv
from .ingest import DatasetSplit, generate_synthetic, truncate_for_test
from .train import build_windows, finetune, make_checkpoint, normalize_split, prepare_features, pretrain

log = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.2, 0.5, 0.75)


@dataclass
class ReproduceResult:
    table: ComparisonTable
    reports: dict[str, EvalReport] = field(default_factory=dict)
    pretrain_losses: dict[float, list[float]] = field(default_factory=dict)
    finetune_losses: dict[str, list[float]] = field(default_factory=dict)


def synthetic_splits(config: RunConfig) -> tuple[DatasetSplit, DatasetSplit]:
    """Training corpus plus an independent, randomly truncated test corpus."""
    lengths = (config.synth_length_min, config.synth_length_max)
    train = generate_synthetic(config.synth_units, lengths, config.synth_features,
                               config.synth_noise, config.synth_seed)
    full_test = generate_synthetic(config.synth_units, lengths, config.synth_features,
                                   config.synth_noise, config.synth_seed + 1000)
    test = truncate_for_test(full_test, seed=config.synth_seed + 2000, min_keep=config.P // 2)
    return train, test


def run_reproduce(pretrain_split: DatasetSplit, train_split: DatasetSplit, test_split: DatasetSplit,
                  config: RunConfig, ratios: Sequence[float] = DEFAULT_RATIOS,
                  pretrain_epochs: Optional[int] = None, finetune_epochs: Optional[int] = None,
                  out_dir=None) -> ReproduceResult:
    """Baseline (fresh init) plus one pretrained arm per masking ratio.

    Feature selection and normalisation come from the pretraining split and
    are shared by every arm, so the arms differ only in initialisation.
    When ``out_dir`` is set, the comparison CSV is rewritten after every arm.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    _, norm = prepare_features(pretrain_split, config.gamma, config.lam)
    pre_windows = build_windows(normalize_split(pretrain_split, norm), config.P, config.stride)
    ft_windows = build_windows(normalize_split(train_split, norm), config.P, config.stride)

    pre_cfg = config.with_(phase="pretrain", lr=None,
                           epochs=pretrain_epochs if pretrain_epochs is not None else config.epochs)
    ft_cfg = config.with_(phase="finetune", lr=None,
                          epochs=finetune_epochs if finetune_epochs is not None else config.epochs)

    result = ReproduceResult(table=ComparisonTable())

    def flush(name: str, report: EvalReport):
        result.reports[name] = report
        if out is None:
            return
        (out / "comparison.csv").write_text(result.table.to_csv())
        (out / f"eval_report_{name}.csv").write_text(report.to_csv())
        pcsv = plot_csv(report, title=f"{name}: RMSE {report.rmse:.3f}")
        (out / f"rul_plot_{name}.csv").write_text(pcsv)
        (out / f"rul_plot_{name}.svg").write_text(svg_from_plot_csv(pcsv))

    params, tlog = finetune(ft_cfg, ft_windows)
    report = evaluate_split(params, ft_cfg, norm, test_split)
    result.table.baseline_rmse = report.rmse
    result.finetune_losses["baseline"] = tlog.losses
    log.info("baseline RMSE %.4f", report.rmse)
    flush("baseline", report)

    for ratio in ratios:
        name = f"mask{round(ratio * 100):d}"
        mae, plog = pretrain(pre_cfg.with_(mask_ratio=ratio), pre_windows)
        if out is not None:
            save_checkpoint(out / f"pretrain_{name}.ckpt",
                            make_checkpoint("mae", mae, pre_cfg.with_(mask_ratio=ratio), norm))
        params, tlog = finetune(ft_cfg, ft_windows, init=mae)
        report = evaluate_split(params, ft_cfg, norm, test_split)
        result.table.arms.append((ratio, report.rmse))
        result.pretrain_losses[ratio] = plog.losses
        result.finetune_losses[name] = tlog.losses
        log.info("%s RMSE %.4f", name, report.rmse)
        flush(name, report)
    return result
