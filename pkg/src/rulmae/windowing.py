"""Fixed-length windows, overlapping patches and random patch masking."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import BadPatchSize, BadRatio, UnitTooShort
from .ingest import UnitSeries

DEFAULT_WINDOW = 50
DEFAULT_PATCH = 3


@dataclass(frozen=True, eq=False)
class Window:
    features: np.ndarray                 # [P, J]
    labels: Optional[np.ndarray] = None  # [P]
    origin: tuple[int, int] = (0, 1)     # (unit_id, first cycle)
    valid: Optional[np.ndarray] = None   # [P] bool, False on left padding

    def __post_init__(self):
        if self.valid is None:
            object.__setattr__(self, "valid", np.ones(self.features.shape[0], dtype=bool))

    @property
    def length(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True, eq=False)
class PatchedWindow:
    patches: np.ndarray   # [N, K, J]
    centers: np.ndarray   # [N]
    mask: np.ndarray      # [N] bool, True = hidden from the encoder
    source: Window = field(repr=False)

    @property
    def n_patches(self) -> int:
        return self.patches.shape[0]


def make_windows(unit: UnitSeries, P: int = DEFAULT_WINDOW, stride: int = 1) -> list[Window]:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if unit.length < P:
        raise UnitTooShort(f"unit {unit.unit_id} has {unit.length} cycles, window needs {P}")
    out = []
    for t in range(0, unit.length - P + 1, stride):
        labels = None if unit.rul is None else unit.rul[t : t + P].astype(np.float64)
        out.append(Window(features=unit.features[t : t + P], labels=labels,
                          origin=(unit.unit_id, int(unit.cycles[t]))))
    return out


def last_window(unit: UnitSeries, P: int = DEFAULT_WINDOW) -> Window:
    """The final P cycles of a unit; short units are left-padded with their first row."""
    n = min(P, unit.length)
    pad = P - n
    feats = unit.features[-n:]
    feats = np.concatenate([np.repeat(feats[:1], pad, axis=0), feats], axis=0)
    labels = None
    if unit.rul is not None:
        tail = unit.rul[-n:].astype(np.float64)
        labels = np.concatenate([np.repeat(tail[:1], pad), tail])
    valid = np.concatenate([np.zeros(pad, dtype=bool), np.ones(n, dtype=bool)])
    return Window(features=feats, labels=labels,
                  origin=(unit.unit_id, int(unit.cycles[-n])), valid=valid)


def n_patches(P: int, K: int = DEFAULT_PATCH) -> int:
    if K % 2 == 0 or K < 1 or K > P:
        raise BadPatchSize(f"patch size {K} invalid for window of {P}")
    return P - K + 1


def patch_array(x: np.ndarray, K: int = DEFAULT_PATCH) -> np.ndarray:
    """[..., P, J] -> [..., N, K, J] stride-1 overlapping patches (copied)."""
    n_patches(x.shape[-2], K)
    view = np.lib.stride_tricks.sliding_window_view(x, K, axis=-2)  # [..., N, J, K]
    return np.ascontiguousarray(np.swapaxes(view, -1, -2))


def patch(window: Window, K: int = DEFAULT_PATCH) -> PatchedWindow:
    N = n_patches(window.length, K)
    half = K // 2
    return PatchedWindow(
        patches=patch_array(window.features, K),
        centers=np.arange(half, half + N),
        mask=np.zeros(N, dtype=bool),
        source=window,
    )


def mask_count(N: int, ratio: float) -> int:
    """round(ratio * N), at least 1 for a positive ratio and never all N."""
    if not 0.0 <= ratio < 1.0:
        raise BadRatio(f"mask ratio must be in [0, 1), got {ratio}")
    if ratio == 0.0:
        return 0
    return int(min(max(round(ratio * N), 1), N - 1))


def sample_mask(N: int, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean [N] mask with exactly ``mask_count(N, ratio)`` hidden patches."""
    M = mask_count(N, ratio)
    mask = np.zeros(N, dtype=bool)
    if M:
        mask[rng.choice(N, size=M, replace=False)] = True
    return mask


def apply_mask(patched: PatchedWindow, ratio: float, rng: np.random.Generator) -> PatchedWindow:
    return replace(patched, mask=sample_mask(patched.n_patches, ratio, rng))


def split_sets(patched: PatchedWindow) -> tuple[np.ndarray, np.ndarray]:
    """Return (visible patch indices, masked patch indices), both ascending."""
    return np.flatnonzero(~patched.mask), np.flatnonzero(patched.mask)


def mask_rng(seed: int, epoch: int, window_index: int) -> np.random.Generator:
    """Independent generator per (epoch, window) so masks ignore batch order."""
    return np.random.default_rng([seed, 1, epoch, window_index])


def reassemble(patches: np.ndarray, P: int) -> np.ndarray:
    """Average overlapping [N, K, J] patches back onto P timestamps."""
    N, K = patches.shape[:2]
    total = np.zeros((P,) + patches.shape[2:])
    count = np.zeros(P)
    for i in range(K):
        total[i : i + N] += patches[:, i]
        count[i : i + N] += 1
    return total / count.reshape((P,) + (1,) * (patches.ndim - 2))


def stack_windows(windows: Sequence[Window]) -> tuple[np.ndarray, Optional[np.ndarray], np.ndarray]:
    X = np.stack([w.features for w in windows])
    V = np.stack([w.valid for w in windows])
    Y = None
    if all(w.labels is not None for w in windows):
        Y = np.stack([w.labels for w in windows])
    return X, Y, V


def patched_to_csv(patched: PatchedWindow) -> str:
    """Debug dump: one row per timestamp of the source window, then a mask row."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    J = patched.source.features.shape[1]
    w.writerow(["t"] + [f"f{j}" for j in range(J)])
    for t, row in enumerate(patched.source.features):
        w.writerow([t] + [repr(float(v)) for v in row])
    w.writerow(["mask"] + [int(m) for m in patched.mask])
    return out.getvalue()
