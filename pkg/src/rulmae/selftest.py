"""Gradient checks and invariant checks runnable from the command line."""
from __future__ import annotations

import time
from typing import Callable

import numpy as np

from .model import ModelDims, init_mae_params, mae_forward, recon_loss
from .numerics import Tape, Tensor, grad_check
from .numerics import kernels as K
from .windowing import mask_count, n_patches, sample_mask


def _projected(fwd, bwd, names, arrays, rng):
    """Wrap a kernel as loss = sum(out * R) so the backward sees a random cotangent."""
    out, _ = fwd(*arrays.values())
    R = rng.standard_normal(out.shape)

    def op(inputs):
        y, cache = fwd(*inputs.values())
        grads = bwd(R, cache)
        if not isinstance(grads, tuple):
            grads = (grads,)
        return float(np.sum(y * R)), dict(zip(names, grads))

    return op


def kernel_checks(seed: int = 0) -> dict[str, float]:
    """Max relative error of every kernel's backward vs central differences."""
    rng = np.random.default_rng(seed)
    r = lambda *s: rng.standard_normal(s)
    cases: dict[str, tuple[Callable, Callable, dict]] = {
        "linear": (K.linear_fwd, K.linear_bwd, {"x": r(4, 3), "W": r(3, 2), "b": r(2)}),
        "conv1d": (lambda x, w, b: K.conv1d_fwd(x, w, b, 1), K.conv1d_bwd,
                   {"x": r(5, 2), "w": r(3, 2, 3), "b": r(3)}),
        "glu": (K.glu_fwd, K.glu_bwd, {"a": r(3, 4), "b": r(3, 4)}),
        "softmax": (K.softmax_fwd, lambda g, c: (K.softmax_bwd(g, c),), {"x": r(3, 5)}),
        "layer_norm": (K.layer_norm_fwd, K.layer_norm_bwd,
                       {"x": r(3, 6), "gamma": r(6), "beta": r(6)}),
        "overlap_average": (lambda p: K.overlap_average_fwd(p, 7),
                            lambda g, c: (K.overlap_average_bwd(g, c),), {"p": r(2, 5, 3, 2)}),
    }
    out = {}
    for name, (fwd, bwd, arrays) in cases.items():
        op = _projected(fwd, bwd, list(arrays), arrays, rng)
        out[name] = grad_check(op, arrays, h=1e-5, tol=1e-6).max_rel_err

    x = r(3, 8)
    ws = {n: r(8, 8) * 0.5 if n.startswith("W") else r(8) * 0.1
          for n in ("Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo")}
    arrays = {"q": x, "k": x.copy(), "v": x.copy(), **ws}
    op = _projected(lambda *a: K.mha_fwd(*a, heads=2), K.mha_bwd, list(arrays), arrays, rng)
    out["multi_head_attention"] = grad_check(op, arrays, h=1e-5, tol=1e-6).max_rel_err

    pred, target = r(2, 3), r(2, 3)
    mask = rng.random((2, 3)) > 0.3
    mask[0, 0] = True

    def mse_op(inputs):
        v, cache = K.mse_fwd(inputs["pred"], target, mask)
        return v, {"pred": K.mse_bwd(1.0, cache)}

    out["mse"] = grad_check(mse_op, {"pred": pred}, h=1e-5, tol=1e-6).max_rel_err
    return out


def mae_end_to_end_check(seed: int = 0, dims: ModelDims | None = None) -> dict[str, float]:
    """Relative error of the full masked-autoencoder loss per parameter group.

    Dropout stays on with a fixed generator seed, so the masks are identical
    across the perturbed evaluations.
    """
    dims = dims or ModelDims(J=2, d=8, heads=2, layers=2, K=3, P=10, dropout=0.1)
    rng = np.random.default_rng(seed)
    params = init_mae_params(dims, seed)
    B = 2
    x = rng.random((B, dims.P, dims.J))
    mask = np.stack([sample_mask(dims.N, 0.5, np.random.default_rng([seed, b])) for b in range(B)])

    def loss_and_grads(arrays):
        bound = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
        with Tape() as tape:
            xh = mae_forward(x, mask, bound, dims, training=True, rng=np.random.default_rng(99))
            loss = recon_loss(x, xh)
            tape.backward(loss)
        return float(loss.data), {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                                  for k, t in bound.items()}

    bound_eval = {k: Tensor(v) for k, v in params.arrays.items()}

    def loss_only(arrays):
        xh = mae_forward(x, mask, bound_eval, dims, training=True, rng=np.random.default_rng(99))
        return float(recon_loss(x, xh).data)

    report = grad_check(loss_and_grads, params.arrays, h=1e-5, tol=1e-4, loss=loss_only)
    groups: dict[str, float] = {}
    for name, err in report.per_input.items():
        g = name.split(".", 1)[0]
        groups[g] = max(groups.get(g, 0.0), err)
    return groups


def run_selftest(verbose: bool = False) -> bool:
    ok = True

    def line(name, passed, detail):
        nonlocal ok
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name:<34} {detail}")

    t0 = time.perf_counter()
    for name, err in kernel_checks().items():
        line(f"grad {name}", err < 1e-6, f"rel-err {err:.2e} (tol 1e-6)")
    for group, err in mae_end_to_end_check().items():
        line(f"grad MAE loss / {group}", err < 1e-4, f"rel-err {err:.2e} (tol 1e-4)")
    line("patch count P=50 K=3", n_patches(50, 3) == 48, f"N = {n_patches(50, 3)}")
    counts = {r: mask_count(48, r) for r in (0.2, 0.5, 0.75)}
    line("mask counts", counts == {0.2: 10, 0.5: 24, 0.75: 36}, str(counts))
    y, _ = K.softmax_fwd(np.random.default_rng(1).standard_normal((4, 7)))
    line("softmax rows sum to 1", bool(np.all(np.abs(y.sum(-1) - 1) < 1e-12)), "")
    if verbose:
        print(f"selftest {'passed' if ok else 'FAILED'} in {time.perf_counter() - t0:.1f}s")
    return ok
