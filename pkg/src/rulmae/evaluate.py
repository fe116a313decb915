"""Terminal-RUL evaluation, comparison tables and the sorted prediction plot."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig
from .errors import MissingTruth
from .features import NormStats, apply_norm
from .ingest import DatasetSplit
from .model import ModelParams
from .train import predict_windows
from .windowing import last_window, stack_windows


def rmse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("rmse needs two non-empty arrays of equal shape")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


@dataclass
class EvalReport:
    unit_ids: np.ndarray
    true_rul: np.ndarray
    pred_rul: np.ndarray
    config: Optional[RunConfig] = None

    @property
    def count(self) -> int:
        return len(self.unit_ids)

    @property
    def rmse(self) -> float:
        return rmse(self.true_rul, self.pred_rul)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["unit_id", "true_rul", "pred_rul"])
        for u, t, p in zip(self.unit_ids, self.true_rul, self.pred_rul):
            w.writerow([int(u), repr(float(t)), repr(float(p))])
        w.writerow(["RMSE", repr(self.rmse), self.count])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        rows = [r for r in rows if r and r[0] != "RMSE"]
        return cls(unit_ids=np.array([int(r[0]) for r in rows]),
                   true_rul=np.array([float(r[1]) for r in rows]),
                   pred_rul=np.array([float(r[2]) for r in rows]))


def evaluate_split(params: ModelParams, config: RunConfig, norm: NormStats,
                   test: DatasetSplit) -> EvalReport:
    """Predict each test unit from its last P cycles and score the final timestamp."""
    if test.test_rul_truth is None:
        raise MissingTruth("test split has no truth values")
    units = [apply_norm(u, norm) for u in test.units]
    X, _, _ = stack_windows([last_window(u, params.dims.P) for u in units])
    pred = predict_windows(params, X, config)[:, -1]
    return EvalReport(unit_ids=np.array([u.unit_id for u in units]),
                      true_rul=test.test_rul_truth.astype(np.float64), pred_rul=pred,
                      config=config)


# --- sorted predicted-vs-actual plot -----------------------------------------

def plot_csv(report: EvalReport, title: str = "") -> str:
    """Points sorted by actual RUL ascending (ties by unit id)."""
    order = np.lexsort((report.unit_ids, report.true_rul))
    out = io.StringIO()
    out.write(f"# {title} sorted by actual RUL ascending\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["rank", "unit_id", "actual", "predicted"])
    for rank, i in enumerate(order):
        w.writerow([rank, int(report.unit_ids[i]), repr(float(report.true_rul[i])),
                    repr(float(report.pred_rul[i]))])
    return out.getvalue()


def svg_from_plot_csv(text: str, width: int = 640, height: int = 360) -> str:
    """Render the plot CSV as a line chart; nothing but the CSV feeds the SVG."""
    lines = text.splitlines()
    title = lines[0].lstrip("# ").strip() if lines and lines[0].startswith("#") else ""
    rows = list(csv.DictReader(l for l in lines if not l.startswith("#")))
    xs = [float(r["rank"]) for r in rows]
    actual = [float(r["actual"]) for r in rows]
    pred = [float(r["predicted"]) for r in rows]
    margin = 40
    x_hi = max(xs + [1.0])
    y_lo = min(actual + pred + [0.0])
    y_hi = max(actual + pred + [1.0])
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return margin + (width - 2 * margin) * x / x_hi

    def sy(y):
        return height - margin - (height - 2 * margin) * (y - y_lo) / (y_hi - y_lo)

    def path(ys, colour):
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        return f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>'

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{margin}" y="20" font-size="12" font-family="sans-serif">{_esc(title)}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 8}" font-size="11" text-anchor="middle" '
        f'font-family="sans-serif">test unit (sorted)</text>',
        f'<text x="4" y="{margin - 8}" font-size="11" font-family="sans-serif">'
        f'RUL [{y_lo:.0f}, {y_hi:.0f}]</text>',
        path(actual, "#1f77b4"),
        path(pred, "#d62728"),
        f'<text x="{width - margin - 120}" y="{margin}" font-size="11" fill="#1f77b4" '
        f'font-family="sans-serif">actual</text>',
        f'<text x="{width - margin - 60}" y="{margin}" font-size="11" fill="#d62728" '
        f'font-family="sans-serif">predicted</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# --- comparison table --------------------------------------------------------

WITH = "With masked self-supervision"
WITHOUT = "Without masked self-supervision"


@dataclass
class ComparisonTable:
    baseline_rmse: Optional[float] = None
    arms: list[tuple[float, float]] = field(default_factory=list)  # (ratio, rmse)

    def rows(self) -> list[tuple[str, str, float, Optional[float]]]:
        out = []
        for ratio, value in self.arms:
            delta = None if self.baseline_rmse is None else self.baseline_rmse - value
            out.append((WITH, f"{round(ratio * 100):d}%", value, delta))
        if self.baseline_rmse is not None:
            out.append((WITHOUT, "--", self.baseline_rmse, None))
        return out

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["Method", "Masking ratio", "RMSE", "Delta"])
        for method, ratio, value, delta in self.rows():
            w.writerow([method, ratio, repr(value), "--" if delta is None else repr(delta)])
        return out.getvalue()

    @staticmethod
    def parse_csv(text: str) -> list[dict]:
        return list(csv.DictReader(io.StringIO(text)))
