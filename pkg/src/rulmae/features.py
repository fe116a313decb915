"""Sensor scoring, feature selection and min-max normalisation."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyDataset, UnknownFeature
from .ingest import UnitSeries

DEFAULT_GAMMA = 0.5
DEFAULT_LAMBDA = 0.2


def correlation(seq) -> float:
    """Absolute Pearson correlation between ``seq`` and the time index 1..N.

    A constant sequence carries no signal and scores 0.
    """
    f = np.asarray(seq, dtype=np.float64)
    if f.size < 2:
        raise ValueError("correlation needs at least two points")
    i = np.arange(1, f.size + 1, dtype=np.float64)
    df = f - f.mean()
    di = i - i.mean()
    denom = np.sqrt(np.dot(df, df) * np.dot(di, di))
    if denom == 0.0:
        return 0.0
    return float(min(1.0, abs(np.dot(df, di)) / denom))


def monotonicity(seq) -> float:
    """|#positive steps - #negative steps| / (N - 1); flat steps count for neither."""
    f = np.asarray(seq, dtype=np.float64)
    if f.size < 2:
        raise ValueError("monotonicity needs at least two points")
    d = np.diff(f)
    return abs(int(np.count_nonzero(d > 0)) - int(np.count_nonzero(d < 0))) / (f.size - 1)


@dataclass(frozen=True)
class FeatureReport:
    cor: np.ndarray
    mono: np.ndarray
    criteria: np.ndarray
    selected: tuple[int, ...]
    gamma: float
    lam: float

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["index", "cor", "mono", "criteria", "selected"])
        chosen = set(self.selected)
        for j in range(len(self.cor)):
            w.writerow([j, repr(float(self.cor[j])), repr(float(self.mono[j])),
                        repr(float(self.criteria[j])), int(j in chosen)])
        return out.getvalue()


def select_features(units: Sequence[UnitSeries], gamma: float = DEFAULT_GAMMA,
                    lam: float = DEFAULT_LAMBDA) -> FeatureReport:
    """Score each channel per unit, average uniformly over units, keep criteria > 0."""
    if not units:
        raise EmptyDataset("feature selection needs at least one unit")
    scored = [u for u in units if u.length >= 2]
    if not scored:
        raise EmptyDataset("every unit is shorter than two cycles")
    n_feat = scored[0].features.shape[1]
    cor = np.zeros(n_feat)
    mono = np.zeros(n_feat)
    for u in scored:
        for j in range(n_feat):
            cor[j] += correlation(u.features[:, j])
            mono[j] += monotonicity(u.features[:, j])
    cor /= len(scored)
    mono /= len(scored)
    criteria = gamma * cor + (1.0 - gamma) * mono - lam
    selected = tuple(int(j) for j in np.flatnonzero(criteria > 0))
    return FeatureReport(cor=cor, mono=mono, criteria=criteria, selected=selected,
                         gamma=float(gamma), lam=float(lam))


@dataclass(frozen=True)
class NormStats:
    """Global per-feature extrema over the training split, keyed by raw sensor index."""

    index: tuple[int, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if not (len(self.index) == len(self.mins) == len(self.maxs)):
            raise ValueError("index, mins and maxs must align")
        if np.any(self.mins > self.maxs):
            raise ValueError("min must not exceed max")

    def to_text(self) -> str:
        lines = ["index min max"]
        for j, lo, hi in zip(self.index, self.mins, self.maxs):
            lines.append(f"{j} {float(lo)!r} {float(hi)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NormStats":
        rows = [ln.split() for ln in text.splitlines()[1:] if ln.strip()]
        return cls(
            index=tuple(int(r[0]) for r in rows),
            mins=np.array([float(r[1]) for r in rows]),
            maxs=np.array([float(r[2]) for r in rows]),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "NormStats":
        return cls.from_text(Path(path).read_text())


def fit_norm(units: Sequence[UnitSeries], selected: Sequence[int]) -> NormStats:
    if not units:
        raise EmptyDataset("cannot fit normalisation on zero units")
    if not selected:
        raise EmptyDataset("no features selected")
    cols = list(selected)
    stacked = np.concatenate([u.features[:, cols] for u in units], axis=0)
    return NormStats(index=tuple(int(j) for j in cols), mins=stacked.min(axis=0),
                     maxs=stacked.max(axis=0))


def apply_norm(unit: UnitSeries, stats: NormStats) -> UnitSeries:
    """Keep the selected channels and map them with the training extrema.

    Values outside the training range (test data) are left unclamped.  A
    constant channel maps to 0.
    """
    pos = {raw: k for k, raw in enumerate(unit.feature_index)}
    try:
        cols = [pos[j] for j in stats.index]
    except KeyError as exc:
        raise UnknownFeature(f"unit {unit.unit_id} has no feature {exc.args[0]}") from None
    raw = unit.features[:, cols]
    span = stats.maxs - stats.mins
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (raw - stats.mins) / safe, 0.0)
    return replace(unit, features=scaled, feature_index=tuple(stats.index))
