import numpy as np
import pytest

from rulmae.errors import BadPatchSize, BadRatio, UnitTooShort
from rulmae.ingest import UnitSeries
from rulmae.windowing import (
    Window,
    apply_mask,
    last_window,
    make_windows,
    mask_count,
    mask_rng,
    n_patches,
    patch,
    patch_array,
    patched_to_csv,
    reassemble,
    sample_mask,
    split_sets,
    stack_windows,
)


def _unit(n, J=2, uid=1):
    feats = np.arange(n * J, dtype=float).reshape(n, J)
    return UnitSeries(unit_id=uid, cycles=np.arange(1, n + 1), op_settings=np.zeros((n, 3)),
                      features=feats, rul=np.arange(n - 1, -1, -1), feature_index=tuple(range(J)))


def test_window_counts_and_labels():
    ws = make_windows(_unit(60), P=50)
    assert len(ws) == 11
    assert ws[0].labels[0] == 59 and ws[-1].labels[-1] == 0
    assert ws[3].origin == (1, 4)
    assert len(make_windows(_unit(60), P=50, stride=4)) == 3
    with pytest.raises(UnitTooShort):
        make_windows(_unit(49), P=50)


def test_last_window_pads_short_unit():
    w = last_window(_unit(30), P=50)
    assert w.features.shape == (50, 2)
    assert w.valid.sum() == 30 and not w.valid[:20].any()
    assert np.array_equal(w.features[:20], np.repeat(w.features[20:21], 20, axis=0))
    assert w.labels[-1] == 0


def test_patch_counts():
    assert n_patches(50, 3) == 48
    assert n_patches(10, 3) == 8
    for K in (2, 0, 51):
        with pytest.raises(BadPatchSize):
            n_patches(50, K)


def test_patch_contents():
    w = Window(features=np.arange(100, dtype=float).reshape(50, 2))
    pw = patch(w, 3)
    assert pw.patches.shape == (48, 3, 2)
    assert pw.centers[0] == 1 and pw.centers[-1] == 48
    for i in (0, 17, 47):
        assert np.array_equal(pw.patches[i], w.features[i : i + 3])
    assert patch_array(np.zeros((4, 50, 2))).shape == (4, 48, 3, 2)


@pytest.mark.parametrize("ratio, expected", [(0.2, 10), (0.5, 24), (0.75, 36), (0.0, 0)])
def test_mask_count(ratio, expected):
    assert mask_count(48, ratio) == expected


def test_mask_count_clamps():
    assert mask_count(48, 0.001) == 1
    assert mask_count(4, 0.99) == 3
    for bad in (1.0, -0.1, 1.5):
        with pytest.raises(BadRatio):
            mask_count(48, bad)


def test_partition_1000_draws():
    pw = patch(Window(features=np.zeros((50, 2))), 3)
    for draw in range(1000):
        ratio = (0.2, 0.5, 0.75)[draw % 3]
        masked = apply_mask(pw, ratio, np.random.default_rng(draw))
        vis, hid = split_sets(masked)
        assert len(hid) == mask_count(48, ratio)
        assert np.array_equal(np.sort(np.concatenate([vis, hid])), np.arange(48))
        assert np.intersect1d(vis, hid).size == 0


def test_mask_deterministic_and_order_free():
    a = sample_mask(48, 0.5, mask_rng(3, 2, 17))
    b = sample_mask(48, 0.5, mask_rng(3, 2, 17))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_mask(48, 0.5, mask_rng(3, 2, 18)))


def test_mask_marginals_uniform():
    rng = np.random.default_rng(0)
    hits = np.zeros(48)
    for _ in range(10_000):
        hits += sample_mask(48, 0.5, rng)
    freq = hits / 10_000
    assert np.all(np.abs(freq - 0.5) < 0.02)


def test_reassemble_inverts_patching(rng):
    x = rng.standard_normal((50, 3))
    assert np.allclose(reassemble(patch_array(x, 3), 50), x, atol=1e-14)
    # constant patches reassemble to the constant
    assert np.allclose(reassemble(np.full((48, 3, 1), 2.5), 50), 2.5)


def test_stack_and_csv():
    ws = make_windows(_unit(55), P=50)
    X, Y, V = stack_windows(ws)
    assert X.shape == (6, 50, 2) and Y.shape == (6, 50) and V.all()
    _, Y2, _ = stack_windows([Window(features=np.zeros((50, 2)))])
    assert Y2 is None
    text = patched_to_csv(apply_mask(patch(ws[0]), 0.5, np.random.default_rng(0)))
    lines = text.splitlines()
    assert len(lines) == 52
    assert sum(int(v) for v in lines[-1].split(",")[1:]) == 24
