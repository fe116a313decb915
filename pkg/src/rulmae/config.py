"""Run configuration: one flat record, serialised as ``key = value`` lines."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

PRETRAIN_LR = 0.002
FINETUNE_LR = 0.001


@dataclass(frozen=True)
class RunConfig:
    phase: str = "pretrain"
    mask_ratio: float = 0.2
    lr: Optional[float] = None
    dropout: float = 0.1
    d: int = 128
    heads: int = 4
    layers: int = 2
    P: int = 50
    K: int = 3
    gamma: float = 0.5
    lam: float = 0.2
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    stride: int = 1
    loss_scope: str = "all"
    rul_cap: Optional[float] = None
    # Labels are divided by this before the regression loss; predictions are
    # multiplied back.  Reports are always in cycles.
    rul_scale: float = 100.0
    train_data: Optional[str] = None
    test_data: Optional[str] = None
    init_checkpoint: Optional[str] = None
    synth_units: int = 20
    synth_length_min: int = 120
    synth_length_max: int = 200
    synth_features: int = 12
    synth_noise: float = 0.02
    synth_seed: int = 7

    def __post_init__(self):
        if self.phase not in ("pretrain", "finetune"):
            raise ValueError(f"phase must be pretrain or finetune, got {self.phase!r}")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ValueError(f"mask_ratio must be in [0, 1), got {self.mask_ratio}")
        if self.loss_scope not in ("all", "masked_only"):
            raise ValueError(f"loss_scope must be all or masked_only, got {self.loss_scope!r}")
        if self.d % self.heads:
            raise ValueError(f"d={self.d} is not divisible by heads={self.heads}")
        if self.epochs < 0 or self.batch_size < 1 or self.stride < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and stride >= 1 are required")

    @property
    def learning_rate(self) -> float:
        if self.lr is not None:
            return self.lr
        return PRETRAIN_LR if self.phase == "pretrain" else FINETUNE_LR

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str, base: Optional["RunConfig"] = None) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key = value")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _parse(raw, types[key])
        return replace(base or cls(), **values)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path, base: Optional["RunConfig"] = None) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), base)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw: str, typ: str):
    if raw.lower() == "none":
        return None
    base = typ.replace("Optional[", "").rstrip("]")
    if base == "int":
        return int(raw)
    if base == "float":
        return float(raw)
    return raw


def env_seed(default: int = 0) -> int:
    """Seed fallback from the RULMAE_SEED environment variable."""
    raw = os.environ.get("RULMAE_SEED")
    return int(raw) if raw not in (None, "") else default
