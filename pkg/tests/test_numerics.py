import numpy as np
import pytest

from rulmae.errors import AllMasked, BadHeadCount, NonFinite
from rulmae.numerics import AdamState, Tape, Tensor, adam_step, grad_check
from rulmae.numerics import kernels as K
from rulmae.numerics import tape as T
from rulmae.numerics.gradcheck import numeric_grad, rel_error
from rulmae.selftest import kernel_checks


def test_linear_example():
    y, _ = K.linear_fwd(np.array([[1.0, 2.0]]), np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, 1.0]))
    assert y.tolist() == [[2.0, 3.0]]


def test_glu_example():
    y, _ = K.glu_fwd(np.array([2.0]), np.array([0.0]))
    assert y[0] == 1.0


def test_softmax_properties(rng):
    y, _ = K.softmax_fwd(rng.standard_normal((5, 7)) * 50)
    assert np.allclose(y.sum(-1), 1.0, atol=1e-12)
    assert np.all(y >= 0)
    big, _ = K.softmax_fwd(np.array([[1000.0, 1000.0]]))
    assert np.allclose(big, 0.5)
    with pytest.raises(NonFinite):
        K.softmax_fwd(np.array([[np.nan, 1.0]]))


def test_layer_norm_standardises(rng):
    y, _ = K.layer_norm_fwd(rng.standard_normal((4, 16)) * 3 + 2, np.ones(16), np.zeros(16))
    assert np.allclose(y.mean(-1), 0.0, atol=1e-12)
    assert np.allclose(y.var(-1), 1.0, atol=1e-3)


def test_conv1d_same_length_and_example():
    x = np.array([[1.0], [2.0], [3.0]])
    w = np.ones((3, 1, 1))  # [k, C_in, C_out]
    y, _ = K.conv1d_fwd(x, w, np.zeros(1), 1)
    assert y[:, 0].tolist() == [3.0, 6.0, 5.0]


def test_dropout_modes(rng):
    x = np.ones((200, 50))
    y, _ = K.dropout_fwd(x, 0.1, np.random.default_rng(0), training=False)
    assert np.array_equal(y, x)
    y, _ = K.dropout_fwd(x, 0.1, np.random.default_rng(0), training=True)
    kept = y != 0
    assert abs(kept.mean() - 0.9) < 0.01
    assert np.allclose(y[kept], 1 / 0.9)
    y2, _ = K.dropout_fwd(x, 0.1, np.random.default_rng(0), training=True)
    assert np.array_equal(y, y2)


def test_mha_head_count(rng):
    x = rng.standard_normal((3, 8))
    W = [rng.standard_normal((8, 8)) if i % 2 == 0 else np.zeros(8) for i in range(8)]
    with pytest.raises(BadHeadCount):
        K.mha_fwd(x, x, x, *W, heads=3)
    y, _ = K.mha_fwd(x, x, x, *W, heads=2)
    assert y.shape == (3, 8)


def test_mse_mask():
    v, _ = K.mse_fwd(np.array([1.0, 3.0]), np.array([0.0, 0.0]), np.array([True, False]))
    assert v == 1.0
    with pytest.raises(AllMasked):
        K.mse_fwd(np.ones(2), np.zeros(2), np.zeros(2, dtype=bool))


def test_overlap_average_example():
    patches = np.arange(1.0, 7.0).reshape(2, 3, 1)  # N=2, K=3 -> P=4
    y, _ = K.overlap_average_fwd(patches, 4)
    assert y[:, 0].tolist() == [1.0, (2 + 4) / 2, (3 + 5) / 2, 6.0]


def test_gather_scatter_round_trip(rng):
    x = rng.standard_normal((2, 3, 4))
    idx = np.array([[0, 2, 5], [1, 3, 4]])
    full, _ = K.scatter_rows_fwd(x, idx, 6)
    assert full.shape == (2, 6, 4)
    assert np.all(full[0, [1, 3, 4]] == 0)
    back, _ = K.gather_rows_fwd(full, idx)
    assert np.array_equal(back, x)


def test_every_kernel_passes_grad_check():
    errs = kernel_checks(seed=3)
    for name, err in errs.items():
        assert err < 1e-6, (name, err)


def test_grad_check_catches_sign_flip(rng):
    inputs = {"x": rng.standard_normal((3, 2)), "W": rng.standard_normal((2, 2))}

    def wrong(inp):
        y, cache = K.linear_fwd(inp["x"], inp["W"])
        dx, dW = K.linear_bwd(np.ones_like(y), cache)[:2]
        return float(y.sum()), {"x": dx, "W": -dW}

    report = grad_check(wrong, inputs)
    assert not report.passed
    assert report.per_input["W"] > 0.5


def test_numeric_grad_and_rel_error():
    x = np.array([1.0, -2.0])
    g = numeric_grad(lambda: float(np.sum(x ** 3)), x, 1e-5)
    assert np.allclose(g, 3 * x ** 2, atol=1e-8)
    assert rel_error(np.zeros(3), np.full(3, 1e-12)) < 1e-11
    assert rel_error(np.array([1.0]), np.array([-1.0])) == 1.0


def test_tape_chain_rule():
    x = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
    W = Tensor(np.array([[2.0], [3.0]]), requires_grad=True)
    with Tape() as tape:
        y = T.linear(x, W)
        loss = T.mse(y, np.zeros((1, 1)))
        tape.backward(loss)
    # loss = (2 + 6)^2 = 64, dL/dy = 16
    assert float(loss.data) == 64.0
    assert W.grad[:, 0].tolist() == [16.0, 32.0]
    assert x.grad[0].tolist() == [32.0, 48.0]


def test_adam_fixed_point_and_first_step(rng):
    p = {"w": rng.standard_normal(5)}
    before = p["w"].copy()
    state = AdamState.for_params(p, lr=0.01)
    adam_step(p, {"w": np.zeros(5)}, state)
    assert np.array_equal(p["w"], before)

    g = rng.standard_normal(5)
    state = AdamState.for_params(p, lr=0.01)
    adam_step(p, {"w": g}, state)
    assert np.allclose(p["w"] - before, -0.01 * np.sign(g), atol=1e-7)
