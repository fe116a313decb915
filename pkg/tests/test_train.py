import numpy as np
import pytest

from rulmae.checkpoint import Checkpoint, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from rulmae.config import RunConfig, env_seed
from rulmae.errors import CorruptFile, EmptyDataset, MissingLabels, ShapeMismatch, VersionMismatch
from rulmae.features import NormStats
from rulmae.model import ENCODER_GROUPS, ModelDims, init_mae_params
from rulmae.train import (
    build_windows,
    finetune,
    make_checkpoint,
    normalize_split,
    predict_windows,
    prepare_features,
    pretrain,
)
from rulmae.windowing import Window


TINY = dict(d=8, heads=2, layers=1, P=10, K=3, batch_size=16, stride=5)


@pytest.fixture(scope="module")
def tiny_windows(synth_split):
    _, norm = prepare_features(synth_split, 0.5, 0.2)
    return build_windows(normalize_split(synth_split, norm), 10, 5), norm


def test_pretrain_bitwise_deterministic(tiny_windows):
    windows, _ = tiny_windows
    cfg = RunConfig(epochs=2, seed=5, **TINY)
    p1, l1 = pretrain(cfg, windows)
    p2, l2 = pretrain(cfg, windows)
    assert l1.losses == l2.losses
    assert all(np.array_equal(p1.arrays[k], p2.arrays[k]) for k in p1.arrays)
    _, l3 = pretrain(cfg.with_(seed=6), windows)
    assert l3.losses != l1.losses


def test_finetune_deterministic_and_logs(tiny_windows):
    windows, _ = tiny_windows
    cfg = RunConfig(phase="finetune", epochs=2, seed=1, **TINY)
    _, l1 = finetune(cfg, windows)
    _, l2 = finetune(cfg, windows)
    assert l1.losses == l2.losses
    rows = l1.to_csv().splitlines()
    assert rows[0] == "epoch,loss,wall_ms,grad_norm"
    assert len(rows) == 3
    assert all(np.isfinite(r.grad_norm) for r in l1.epochs)


def test_finetune_starts_from_pretrained_encoder(tiny_windows):
    windows, _ = tiny_windows
    mae, _ = pretrain(RunConfig(epochs=1, **TINY), windows)
    snapshot = mae.copy()
    tuned, _ = finetune(RunConfig(phase="finetune", epochs=0, **TINY), windows, init=mae)
    for name, arr in tuned.arrays.items():
        if name.split(".", 1)[0] in ENCODER_GROUPS:
            assert np.array_equal(arr, snapshot.arrays[name])


def test_masked_only_scope_runs(tiny_windows):
    windows, _ = tiny_windows
    _, log = pretrain(RunConfig(epochs=1, loss_scope="masked_only", mask_ratio=0.5, **TINY), windows)
    assert np.isfinite(log.losses[0])


def test_training_input_errors():
    unlabeled = [Window(features=np.zeros((10, 2)))]
    with pytest.raises(MissingLabels):
        finetune(RunConfig(phase="finetune", epochs=1, **TINY), unlabeled)
    with pytest.raises(EmptyDataset):
        pretrain(RunConfig(epochs=1, **TINY), [])
    with pytest.raises(EmptyDataset):
        finetune(RunConfig(phase="finetune", epochs=1, **TINY), [])


def test_no_feature_selected_is_an_error(synth_split):
    with pytest.raises(EmptyDataset):
        prepare_features(synth_split, 0.5, 1.0)


def test_predictions_in_cycles(tiny_windows):
    windows, _ = tiny_windows
    params, _ = finetune(RunConfig(phase="finetune", epochs=1, **TINY), windows)
    X = np.stack([w.features for w in windows[:3]])
    pred = predict_windows(params, X, RunConfig(**TINY))
    assert pred.shape == (3, 10)
    assert np.all(np.isfinite(pred))


def _ckpt(kind="mae", d=8):
    dims = ModelDims(J=2, d=d, heads=2, layers=1, K=3, P=10)
    norm = NormStats(index=(1, 4), mins=np.array([0.0, -1.0]), maxs=np.array([2.0, 3.5]))
    return make_checkpoint(kind, init_mae_params(dims, 0), RunConfig(d=d, heads=2, seed=3), norm)


def test_checkpoint_round_trip_bytes(tmp_path):
    ckpt = _ckpt()
    save_checkpoint(tmp_path / "a.ckpt", ckpt)
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert back.kind == "mae" and back.config == ckpt.config
    assert back.norm.index == (1, 4)
    assert all(np.array_equal(back.params.arrays[k], ckpt.params.arrays[k]) for k in ckpt.params.arrays)
    save_checkpoint(tmp_path / "b.ckpt", back)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_corruption():
    raw = to_bytes(_ckpt())
    with pytest.raises(CorruptFile):
        from_bytes(raw[:-10])
    flipped = bytearray(raw)
    flipped[len(raw) // 2] ^= 0xFF
    with pytest.raises(CorruptFile):
        from_bytes(bytes(flipped))
    with pytest.raises(CorruptFile):
        from_bytes(b"not a checkpoint at all")
    newer = bytearray(raw)
    newer[8:12] = (2).to_bytes(4, "little")
    with pytest.raises(VersionMismatch):
        from_bytes(bytes(newer))


def test_checkpoint_dimension_mismatch():
    raw = to_bytes(_ckpt(d=8))
    with pytest.raises(ShapeMismatch):
        from_bytes(raw, expect_dims=ModelDims(J=2, d=128, heads=2, layers=1, K=3, P=10))


def test_config_text_round_trip(tmp_path):
    cfg = RunConfig(mask_ratio=0.5, lr=0.01, rul_cap=125.0, train_data="x.txt")
    cfg.save(tmp_path / "run.conf")
    assert RunConfig.load(tmp_path / "run.conf") == cfg
    assert RunConfig().learning_rate == 0.002
    assert RunConfig(phase="finetune").learning_rate == 0.001
    with pytest.raises(ValueError):
        RunConfig.from_text("bogus = 1")
    with pytest.raises(ValueError):
        RunConfig(mask_ratio=1.0)


def test_env_seed(monkeypatch):
    monkeypatch.setenv("RULMAE_SEED", "42")
    assert env_seed() == 42
    monkeypatch.delenv("RULMAE_SEED")
    assert env_seed(7) == 7
