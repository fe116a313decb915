"""C-MAPSS text parsing, RUL labelling and a synthetic degradation corpus.

A C-MAPSS record is 26 whitespace-separated numbers: unit id, cycle,
three operating settings and 21 sensor readings.  Training files run every
unit to failure, so labels come from the last observed cycle.  Test files
stop early and a companion truth file gives each unit's terminal RUL.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidRange, MalformedLine, MissingTruth, NonContiguousCycles

N_COLUMNS = 26
N_SETTINGS = 3
N_SENSORS = 21


@dataclass(frozen=True, eq=False)
class UnitSeries:
    """One engine unit.

    ``features`` starts as the 21 raw sensor columns; after normalisation it
    holds only the selected channels and ``feature_index`` records which raw
    sensors they came from.
    """

    unit_id: int
    cycles: np.ndarray
    op_settings: np.ndarray
    features: np.ndarray
    rul: Optional[np.ndarray] = None
    feature_index: tuple[int, ...] = tuple(range(N_SENSORS))

    def __post_init__(self):
        if len(self.cycles) < 1:
            raise InvalidRange(f"unit {self.unit_id} has no records")
        if self.features.shape[0] != len(self.cycles):
            raise InvalidRange("features and cycles disagree on length")

    @property
    def length(self) -> int:
        return len(self.cycles)

    def __eq__(self, other):
        if not isinstance(other, UnitSeries):
            return NotImplemented
        same_rul = (self.rul is None and other.rul is None) or (
            self.rul is not None and other.rul is not None and np.array_equal(self.rul, other.rul)
        )
        return (
            self.unit_id == other.unit_id
            and self.feature_index == other.feature_index
            and np.array_equal(self.cycles, other.cycles)
            and np.array_equal(self.op_settings, other.op_settings)
            and np.array_equal(self.features, other.features)
            and same_rul
        )


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    role: str
    units: list[UnitSeries] = field(default_factory=list)
    test_rul_truth: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.role not in ("train", "test"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.test_rul_truth is not None and len(self.test_rul_truth) != len(self.units):
            raise MissingTruth(
                f"truth has {len(self.test_rul_truth)} values for {len(self.units)} units"
            )

    def __eq__(self, other):
        if not isinstance(other, DatasetSplit):
            return NotImplemented
        if self.role != other.role or len(self.units) != len(other.units):
            return False
        if (self.test_rul_truth is None) != (other.test_rul_truth is None):
            return False
        if self.test_rul_truth is not None and not np.array_equal(
            self.test_rul_truth, other.test_rul_truth
        ):
            return False
        return all(a == b for a, b in zip(self.units, other.units))


def label_rul(unit: UnitSeries, terminal_rul: int = 0) -> UnitSeries:
    """Attach per-cycle RUL = max cycle - cycle (+ terminal offset for test units)."""
    rul = (unit.cycles.max() - unit.cycles).astype(np.int64) + int(terminal_rul)
    return replace(unit, rul=rul)


def _parse_rows(lines: Iterable[str]) -> tuple[list[int], np.ndarray]:
    linenos, rows = [], []
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != N_COLUMNS:
            raise MalformedLine(lineno, f"expected {N_COLUMNS} columns, got {len(tokens)}")
        try:
            values = [float(t) for t in tokens]
        except ValueError as exc:
            raise MalformedLine(lineno, f"non-numeric token ({exc})") from None
        if not all(math.isfinite(v) for v in values):
            raise MalformedLine(lineno, "non-finite value")
        if values[0] != int(values[0]) or values[1] != int(values[1]) or values[0] < 1 or values[1] < 1:
            raise MalformedLine(lineno, "unit id and cycle must be positive integers")
        linenos.append(lineno)
        rows.append(values)
    return linenos, np.asarray(rows, dtype=np.float64).reshape(-1, N_COLUMNS)


def parse_cmapss(
    text_stream,
    role: str = "train",
    truth: Optional[Sequence[int]] = None,
) -> DatasetSplit:
    """Parse a C-MAPSS text stream into a unit-grouped split.

    Training units get labels from their own last cycle.  Test units are
    labelled from ``truth`` when it is given (i-th value belongs to the i-th
    unit in ascending id order).
    """
    if isinstance(text_stream, str):
        text_stream = io.StringIO(text_stream)
    linenos, table = _parse_rows(text_stream)

    units: list[UnitSeries] = []
    ids = table[:, 0].astype(np.int64)
    for uid in np.unique(ids):
        rows = table[ids == uid]
        order = np.argsort(rows[:, 1], kind="stable")
        rows = rows[order]
        cycles = rows[:, 1].astype(np.int64)
        expected = np.arange(1, len(cycles) + 1)
        if not np.array_equal(cycles, expected):
            bad = int(np.flatnonzero(cycles != expected)[0])
            raise NonContiguousCycles(
                f"unit {uid}: expected cycle {expected[bad]}, found {cycles[bad]}"
            )
        units.append(
            UnitSeries(
                unit_id=int(uid),
                cycles=cycles,
                op_settings=rows[:, 2 : 2 + N_SETTINGS].copy(),
                features=rows[:, 2 + N_SETTINGS :].copy(),
            )
        )

    truth_arr = None
    if role == "train":
        units = [label_rul(u) for u in units]
    elif truth is not None:
        truth_arr = np.asarray(truth, dtype=np.int64)
        if len(truth_arr) != len(units):
            raise MissingTruth(f"truth has {len(truth_arr)} values for {len(units)} units")
        units = [label_rul(u, t) for u, t in zip(units, truth_arr)]
    return DatasetSplit(role=role, units=units, test_rul_truth=truth_arr)


def parse_truth(text_stream) -> np.ndarray:
    if isinstance(text_stream, str):
        text_stream = io.StringIO(text_stream)
    values = []
    for lineno, line in enumerate(text_stream, start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 1:
            raise MalformedLine(lineno, "truth file holds one integer per line")
        try:
            values.append(int(float(tokens[0])))
        except ValueError:
            raise MalformedLine(lineno, f"non-numeric token {tokens[0]!r}") from None
    return np.asarray(values, dtype=np.int64)


def format_cmapss(split: DatasetSplit) -> str:
    """Serialise a split back to 26-column text; floats use repr so parsing round-trips."""
    out = io.StringIO()
    for unit in split.units:
        sensors = np.zeros((unit.length, N_SENSORS))
        sensors[:, list(unit.feature_index)] = unit.features
        for i in range(unit.length):
            fields = [str(unit.unit_id), str(int(unit.cycles[i]))]
            fields += [repr(float(v)) for v in unit.op_settings[i]]
            fields += [repr(float(v)) for v in sensors[i]]
            out.write(" ".join(fields) + "\n")
    return out.getvalue()


def format_truth(truth: Sequence[int]) -> str:
    return "".join(f"{int(t)}\n" for t in truth)


def load_split(path, role: str = "train", truth_path=None) -> DatasetSplit:
    """Read a split from disk.  For test files the truth file is looked up
    next to the data file (``test_X.txt`` -> ``RUL_X.txt``) when not given."""
    path = Path(path)
    truth = None
    if role == "test":
        if truth_path is None:
            guess = path.with_name(path.name.replace("test_", "RUL_", 1))
            truth_path = guess if guess != path and guess.exists() else None
        if truth_path is None:
            raise MissingTruth(f"no truth file found for {path}")
        truth = parse_truth(Path(truth_path).read_text())
    with open(path) as fh:
        return parse_cmapss(fh, role=role, truth=truth)


# --- synthetic corpus -------------------------------------------------------

# Repeating channel layout; a period of six gives 2/3 degradation channels.
_CHANNEL_KINDS = ("linear_up", "convex_down", "periodic", "convex_up", "linear_down", "noise")


def channel_kind(j: int) -> str:
    return _CHANNEL_KINDS[j % len(_CHANNEL_KINDS)]


def _synthetic_channel(kind: str, life_frac, t, rng, noise_level):
    if kind == "linear_up":
        clean = 0.2 + 0.6 * life_frac
    elif kind == "linear_down":
        clean = 0.8 - 0.6 * life_frac
    elif kind == "convex_up":
        clean = 0.1 + 0.05 * np.expm1(3.0 * life_frac)
    elif kind == "convex_down":
        clean = 0.9 - 0.05 * np.expm1(3.0 * life_frac)
    elif kind == "periodic":
        period = rng.uniform(8.0, 16.0)
        clean = 0.5 + 0.3 * np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
    else:
        clean = 0.5 + 0.3 * rng.standard_normal(len(t))
    return clean + noise_level * rng.standard_normal(len(t))


def generate_synthetic(
    n_units: int,
    length_range: tuple[int, int],
    n_features: int,
    noise_level: float,
    seed: int,
) -> DatasetSplit:
    """Build a run-to-failure corpus with known channel behaviour.

    Channel ``j`` follows ``channel_kind(j)``: linear or convex degradation
    trends (which should pass feature selection), a periodic signal and pure
    noise (which should not).  Each unit also gets a random wear offset and
    gain so units are not identical.  Sensor columns past ``n_features`` are
    zero when written out.
    """
    lo, hi = length_range
    if lo < 1 or hi < lo:
        raise InvalidRange(f"empty length range {length_range!r}")
    if not 1 <= n_features <= N_SENSORS:
        raise InvalidRange(f"n_features must be in [1, {N_SENSORS}]")
    rng = np.random.default_rng(seed)
    units = []
    for q in range(n_units):
        length = int(rng.integers(lo, hi + 1))
        t = np.arange(1, length + 1, dtype=np.float64)
        wear0 = rng.uniform(0.0, 0.15)
        life_frac = wear0 + (1.0 - wear0) * t / length
        sensors = np.zeros((length, N_SENSORS))
        for j in range(n_features):
            gain = rng.uniform(0.8, 1.2)
            sensors[:, j] = gain * _synthetic_channel(channel_kind(j), life_frac, t, rng, noise_level)
        ops = noise_level * rng.standard_normal((length, N_SETTINGS)) * 0.01
        unit = UnitSeries(
            unit_id=q + 1,
            cycles=np.arange(1, length + 1, dtype=np.int64),
            op_settings=ops,
            features=sensors,
        )
        units.append(label_rul(unit))
    return DatasetSplit(role="train", units=units)


def truncate_for_test(split: DatasetSplit, seed: int, min_keep: int = 1) -> DatasetSplit:
    """Cut every run-to-failure unit at a random cycle to make a test split.

    The truth value of each unit is the number of cycles that were cut off.
    """
    rng = np.random.default_rng(seed)
    units, truth = [], []
    for unit in split.units:
        lo = min(min_keep, unit.length)
        keep = int(rng.integers(lo, unit.length + 1))
        cut = UnitSeries(
            unit_id=unit.unit_id,
            cycles=unit.cycles[:keep].copy(),
            op_settings=unit.op_settings[:keep].copy(),
            features=unit.features[:keep].copy(),
            feature_index=unit.feature_index,
        )
        terminal = unit.length - keep
        units.append(label_rul(cut, terminal))
        truth.append(terminal)
    return DatasetSplit(role="test", units=units, test_rul_truth=np.asarray(truth, dtype=np.int64))
