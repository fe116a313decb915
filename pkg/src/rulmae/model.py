"""Masked autoencoder and RUL regressor built on the tape ops.

Both networks share the same front end: a gated convolution over the K
timestamps of every patch, a projection to ``d`` and a sinusoidal position
embedding, followed by a stack of post-norm transformer blocks.  The
autoencoder then scatters encoded tokens back to all N patch slots (zeros
for masked slots), re-adds position embeddings, runs a gated convolution and
a second transformer stack over the token sequence and maps each token back
to a K x J patch.  The regressor maps each token to K per-timestamp RUL
values.  Overlapping patch outputs are averaged per timestamp.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import BadDim, EmptyInput, IndexOverlap, ShapeMismatch
from .numerics import tape as T
from .numerics.tape import Tensor

ENCODER_GROUPS = ("tokenizer_conv", "token_proj", "encoder")
MAE_GROUPS = ENCODER_GROUPS + ("decoder_conv", "decoder", "recon_head")
RUL_GROUPS = ENCODER_GROUPS + ("rul_head",)


@dataclass(frozen=True)
class ModelDims:
    J: int
    d: int = 128
    heads: int = 4
    layers: int = 2
    K: int = 3
    P: int = 50
    ffn_mult: int = 4
    dropout: float = 0.1

    @property
    def N(self) -> int:
        return self.P - self.K + 1

    @property
    def ffn(self) -> int:
        return self.ffn_mult * self.d


@dataclass
class ModelParams:
    dims: ModelDims
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def group(self, name: str) -> dict[str, np.ndarray]:
        pre = name + "."
        return {k: v for k, v in self.arrays.items() if k.startswith(pre)}

    def groups(self) -> list[str]:
        seen = []
        for k in self.arrays:
            g = k.split(".", 1)[0]
            if g not in seen:
                seen.append(g)
        return seen

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {k: v.copy() for k, v in self.arrays.items()})

    def bind(self, requires_grad: bool = True) -> dict[str, Tensor]:
        """Wrap arrays (no copy) as leaf tensors for one forward/backward pass."""
        return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in self.arrays.items()}

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


# --- initialisation ----------------------------------------------------------

def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_gated_conv(out, rng, prefix, channels, k=3):
    for path in ("value", "gate"):
        out[f"{prefix}.{path}_w"] = _uniform(rng, (k, channels, channels), k * channels)
        out[f"{prefix}.{path}_b"] = np.zeros(channels)


def _init_stack(out, rng, prefix, dims: ModelDims):
    d, f = dims.d, dims.ffn
    for l in range(dims.layers):
        p = f"{prefix}.{l}"
        for w in ("q", "k", "v", "o"):
            out[f"{p}.attn.w{w}"] = _uniform(rng, (d, d), d)
            out[f"{p}.attn.b{w}"] = np.zeros(d)
        out[f"{p}.norm1.g"] = np.ones(d)
        out[f"{p}.norm1.b"] = np.zeros(d)
        out[f"{p}.ff1.w"] = _uniform(rng, (d, f), d)
        out[f"{p}.ff1.b"] = np.zeros(f)
        out[f"{p}.ff2.w"] = _uniform(rng, (f, d), f)
        out[f"{p}.ff2.b"] = np.zeros(d)
        out[f"{p}.norm2.g"] = np.ones(d)
        out[f"{p}.norm2.b"] = np.zeros(d)


def _init_encoder(out, rng, dims: ModelDims):
    _init_gated_conv(out, rng, "tokenizer_conv", dims.J)
    out["token_proj.w"] = _uniform(rng, (dims.K * dims.J, dims.d), dims.K * dims.J)
    out["token_proj.b"] = np.zeros(dims.d)
    _init_stack(out, rng, "encoder", dims)


def _init_rul_head(out, rng, dims: ModelDims):
    out["rul_head.w"] = _uniform(rng, (dims.d, dims.K), dims.d)
    out["rul_head.b"] = np.zeros(dims.K)


def init_mae_params(dims: ModelDims, seed: int) -> ModelParams:
    rng = np.random.default_rng([seed, 101])
    out: dict[str, np.ndarray] = {}
    _init_encoder(out, rng, dims)
    _init_gated_conv(out, rng, "decoder_conv", dims.d)
    _init_stack(out, rng, "decoder", dims)
    out["recon_head.w"] = _uniform(rng, (dims.d, dims.K * dims.J), dims.d)
    out["recon_head.b"] = np.zeros(dims.K * dims.J)
    return ModelParams(dims, out)


def init_rul_params(dims: ModelDims, seed: int) -> ModelParams:
    rng = np.random.default_rng([seed, 202])
    out: dict[str, np.ndarray] = {}
    _init_encoder(out, rng, dims)
    _init_rul_head(out, np.random.default_rng([seed, 303]), dims)
    return ModelParams(dims, out)


def transfer_encoder(mae: ModelParams, seed: int, dims: Optional[ModelDims] = None) -> ModelParams:
    """Start a regressor from a pretrained autoencoder.

    The tokenizer and encoder stack are copied verbatim, the regression head
    is freshly initialised from ``seed``, decoder-side groups are dropped.
    """
    dims = dims or mae.dims
    template = init_rul_params(dims, seed)
    out: dict[str, np.ndarray] = {}
    for name, arr in template.arrays.items():
        if name.split(".", 1)[0] in ENCODER_GROUPS:
            if name not in mae.arrays:
                raise ShapeMismatch(f"pretrained model lacks {name}")
            src = mae.arrays[name]
            if src.shape != arr.shape:
                raise ShapeMismatch(f"{name}: pretrained {src.shape} vs target {arr.shape}")
            out[name] = src.copy()
        else:
            out[name] = arr
    return ModelParams(dims, out)


# --- position embedding ------------------------------------------------------

def positional_embedding(i: int, D: int) -> np.ndarray:
    """sin/cos embedding of position ``i``: [sin(i/w_0), cos(i/w_0), sin(i/w_1), ...]."""
    if D % 2:
        raise BadDim(f"embedding dimension must be even, got {D}")
    if i < 0:
        raise ValueError("position must be non-negative")
    return position_table(i + 1, D)[i].copy()


@lru_cache(maxsize=32)
def _position_table(n: int, D: int) -> np.ndarray:
    j = np.arange(D // 2)
    freq = 1.0 / 10000.0 ** (2.0 * j / D)
    ang = np.arange(n)[:, None] * freq[None, :]
    table = np.empty((n, D))
    table[:, 0::2] = np.sin(ang)
    table[:, 1::2] = np.cos(ang)
    table.flags.writeable = False
    return table


def position_table(n: int, D: int) -> np.ndarray:
    if D % 2:
        raise BadDim(f"embedding dimension must be even, got {D}")
    return _position_table(n, D)


# --- building blocks ---------------------------------------------------------

def gated_conv(x, p: dict, prefix: str) -> Tensor:
    """value(x) * sigmoid(gate(x)), both same-length convolutions over axis -2."""
    value = T.conv1d(x, p[f"{prefix}.value_w"], p[f"{prefix}.value_b"], padding=1)
    gate = T.conv1d(x, p[f"{prefix}.gate_w"], p[f"{prefix}.gate_b"], padding=1)
    return T.glu(value, gate)


def transformer_block(x, p: dict, prefix: str, dims: ModelDims, training: bool, rng) -> Tensor:
    a = T.self_attention(x, p[f"{prefix}.attn.wq"], p[f"{prefix}.attn.bq"],
                         p[f"{prefix}.attn.wk"], p[f"{prefix}.attn.bk"],
                         p[f"{prefix}.attn.wv"], p[f"{prefix}.attn.bv"],
                         p[f"{prefix}.attn.wo"], p[f"{prefix}.attn.bo"], heads=dims.heads)
    a = T.dropout(a, dims.dropout, rng, training)
    x = T.layer_norm(T.add(x, a), p[f"{prefix}.norm1.g"], p[f"{prefix}.norm1.b"])
    h = T.relu(T.linear(x, p[f"{prefix}.ff1.w"], p[f"{prefix}.ff1.b"]))
    h = T.dropout(h, dims.dropout, rng, training)
    f = T.linear(h, p[f"{prefix}.ff2.w"], p[f"{prefix}.ff2.b"])
    f = T.dropout(f, dims.dropout, rng, training)
    return T.layer_norm(T.add(x, f), p[f"{prefix}.norm2.g"], p[f"{prefix}.norm2.b"])


def transformer(x, p: dict, prefix: str, dims: ModelDims, training: bool = False, rng=None) -> Tensor:
    for l in range(dims.layers):
        x = transformer_block(x, p, f"{prefix}.{l}", dims, training, rng)
    return x


@dataclass
class LatentSet:
    """Token rows plus the original patch index of every row ([B, n])."""

    tokens: Tensor
    index_map: np.ndarray

    def __post_init__(self):
        if self.index_map.ndim == 1:
            self.index_map = self.index_map[None, :]
        if self.index_map.shape[-1] > 1 and np.any(np.diff(self.index_map, axis=-1) <= 0):
            raise ValueError("index_map must be strictly increasing")


def tokenize(patches: np.ndarray, index_map: np.ndarray, p: dict, dims: ModelDims) -> Tensor:
    """[B, n, K, J] patches at original positions ``index_map`` -> [B, n, d] tokens."""
    if patches.ndim == 3:
        patches = patches[None]
    index_map = np.broadcast_to(index_map, patches.shape[:2])
    B, n, K, J = patches.shape
    if (K, J) != (dims.K, dims.J):
        raise ShapeMismatch(f"patches are {K}x{J}, model expects {dims.K}x{dims.J}")
    h = gated_conv(patches, p, "tokenizer_conv")
    h = T.reshape(h, (B, n, K * J))
    h = T.linear(h, p["token_proj.w"], p["token_proj.b"])
    pos = position_table(int(index_map.max()) + 1, dims.d)[index_map]
    return T.add(h, pos)


def encode(visible: LatentSet, p: dict, dims: ModelDims, training: bool = False, rng=None) -> LatentSet:
    if visible.tokens.shape[-2] == 0:
        raise EmptyInput("the encoder needs at least one visible token")
    return LatentSet(transformer(visible.tokens, p, "encoder", dims, training, rng), visible.index_map)


def restore(latent: LatentSet, masked_indices: np.ndarray, N: int, d: Optional[int] = None) -> LatentSet:
    """Scatter encoded rows back to N slots, zeros for masked ones, then add
    position embeddings to every slot."""
    vis = latent.index_map
    B, n = vis.shape
    masked = np.asarray(masked_indices).reshape(B, -1)
    if n + masked.shape[1] != N:
        raise ShapeMismatch(f"{n} visible + {masked.shape[1]} masked != {N} patches")
    for b in range(B):
        if np.intersect1d(vis[b], masked[b]).size:
            raise IndexOverlap("a masked index collides with a visible one")
    d = d or latent.tokens.shape[-1]
    full = T.scatter_rows(latent.tokens, vis, N)
    full = T.add(full, position_table(N, d))
    return LatentSet(full, np.broadcast_to(np.arange(N), (B, N)).copy())


def decode_reconstruct(restored: LatentSet, p: dict, dims: ModelDims, training: bool = False,
                       rng=None) -> Tensor:
    """[B, N, d] restored tokens -> [B, P, J] reconstructed window."""
    x = restored.tokens
    B, N = x.shape[0], x.shape[1]
    if N != dims.N:
        raise ShapeMismatch(f"decoder expects {dims.N} tokens, got {N}")
    h = gated_conv(x, p, "decoder_conv")
    h = transformer(h, p, "decoder", dims, training, rng)
    h = T.linear(h, p["recon_head.w"], p["recon_head.b"])
    h = T.reshape(h, (B, N, dims.K, dims.J))
    return T.overlap_average(h, dims.P)


def mae_forward(x: np.ndarray, mask: np.ndarray, p: dict, dims: ModelDims, training: bool = False,
                rng=None) -> Tensor:
    """Reconstruct windows ``x`` [B, P, J] with patches hidden where ``mask`` [B, N] is true.

    Every row of ``mask`` must hide the same number of patches.
    """
    from .windowing import patch_array

    B = x.shape[0]
    mask = np.asarray(mask, dtype=bool).reshape(B, dims.N)
    counts = mask.sum(axis=1)
    if np.any(counts != counts[0]):
        raise ShapeMismatch("all rows of a batch must mask the same number of patches")
    vis_idx = np.nonzero(~mask)[1].reshape(B, -1)
    mask_idx = np.nonzero(mask)[1].reshape(B, -1)
    patches = patch_array(x, dims.K)
    vis_patches = np.take_along_axis(patches, vis_idx[:, :, None, None], axis=1)
    tokens = tokenize(vis_patches, vis_idx, p, dims)
    latent = encode(LatentSet(tokens, vis_idx), p, dims, training, rng)
    full = restore(latent, mask_idx, dims.N, dims.d)
    return decode_reconstruct(full, p, dims, training, rng)


def masked_timestamps(mask: np.ndarray, K: int, P: int) -> np.ndarray:
    """[B, N] patch mask -> [B, P] true where a timestamp lies in any masked patch."""
    mask = np.asarray(mask, dtype=bool)
    N = mask.shape[-1]
    out = np.zeros(mask.shape[:-1] + (P,), dtype=bool)
    for i in range(K):
        out[..., i : i + N] |= mask
    return out


def recon_loss(x, x_hat, timestamp_mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean squared reconstruction error; optionally only at selected timestamps [B, P]."""
    x = T.as_tensor(x)
    m = None if timestamp_mask is None else np.asarray(timestamp_mask, dtype=np.float64)[..., None]
    return T.mse(x_hat, x, m)


def predict_rul(x: np.ndarray, p: dict, dims: ModelDims, training: bool = False, rng=None) -> Tensor:
    """[B, P, J] windows -> [B, P] per-timestamp RUL (in model units)."""
    from .windowing import patch_array

    if x.ndim == 2:
        x = x[None]
    B = x.shape[0]
    if x.shape[1:] != (dims.P, dims.J):
        raise ShapeMismatch(f"window {x.shape[1:]} vs model {(dims.P, dims.J)}")
    idx = np.broadcast_to(np.arange(dims.N), (B, dims.N))
    tokens = tokenize(patch_array(x, dims.K), idx, p, dims)
    h = transformer(tokens, p, "encoder", dims, training, rng)
    h = T.linear(h, p["rul_head.w"], p["rul_head.b"])
    h = T.reshape(h, (B, dims.N, dims.K, 1))
    h = T.overlap_average(h, dims.P)
    return T.reshape(h, (B, dims.P))


def rul_loss(pred, labels, valid: Optional[np.ndarray] = None) -> Tensor:
    """Mean squared error over valid (non-padding) timestamps."""
    return T.mse(pred, T.as_tensor(labels), valid)
