"""Forward-only transformer encoder over feature-grid tokens with positional
key masking.

Masking adds a very large negative constant to every attention logit whose
key position belongs to a masked grid block; softmax then assigns those keys
exactly zero weight (the constant underflows exp in 32-bit arithmetic), so
masked regions cannot influence the quality readout.  The quality score is
read from a dedicated prepended token that is never maskable, which makes
key-masking provably equivalent to deleting the masked tokens outright.

There is no training path: weights are either seeded deterministic
pseudo-random values (for property testing and synthetic studies) or loaded
from a QWT1 weight file produced elsewhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from os import PathLike
from typing import Sequence

import numpy as np
from scipy.special import erf

from qregion._binio import FormatError, expect_magic, read_exact, read_u32s
from qregion.grid import BlockGrid, BlockSet, FeatureMatrix, block_set_to_feature_mask

__all__ = [
    "EncoderConfig",
    "EncoderWeights",
    "LayerWeights",
    "TokenSequence",
    "EncoderError",
    "AllKeysMaskedError",
    "init_weights",
    "tokenize",
    "masked_attention",
    "forward",
    "predict",
    "predict_masks",
    "save_weights",
    "load_weights",
    "QWT_MAGIC",
]

QWT_MAGIC = b"QWT1"
QUALITY_TOKEN_POSITION = (-1, -1)
_LN_EPS = 1e-6


class EncoderError(ValueError):
    """Invalid encoder configuration or inputs."""


class AllKeysMaskedError(EncoderError):
    """Attention was asked to run with every key masked."""


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 64
    num_heads: int = 4
    num_layers: int = 2
    mlp_dim: int = 128
    mask_logit_value: float = -1e9
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.embed_dim, self.num_heads, self.num_layers, self.mlp_dim) < 1:
            raise EncoderError("encoder dimensions must be positive")
        if self.embed_dim % self.num_heads:
            raise EncoderError(
                f"embed_dim={self.embed_dim} not divisible by num_heads={self.num_heads}"
            )
        if not self.mask_logit_value <= -1e8:
            raise EncoderError(
                "mask_logit_value must be <= -1e8 so masked keys underflow to zero weight"
            )
        if not 0 <= self.seed < 2**64:
            raise EncoderError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class LayerWeights:
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray


@dataclass(frozen=True)
class EncoderWeights:
    """All encoder parameters; float32, immutable, shareable across workers."""

    input_w: np.ndarray  # (channels, embed_dim)
    input_b: np.ndarray  # (embed_dim,)
    quality_token: np.ndarray  # (embed_dim,)
    layers: tuple[LayerWeights, ...]
    head_w: np.ndarray  # (embed_dim,)
    head_b: np.ndarray  # (1,)

    def __post_init__(self) -> None:
        for arr in _weight_arrays(self):
            if not np.all(np.isfinite(arr)):
                raise EncoderError("encoder weights contain non-finite values")
            arr.setflags(write=False)

    @property
    def channels(self) -> int:
        return self.input_w.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.input_w.shape[1]


def _weight_arrays(weights: EncoderWeights) -> list[np.ndarray]:
    """All weight arrays in the fixed serialization order (see save_weights)."""
    arrs = [weights.input_w, weights.input_b, weights.quality_token]
    for lw in weights.layers:
        arrs += [
            lw.wq, lw.bq, lw.wk, lw.bk, lw.wv, lw.bv, lw.wo, lw.bo,
            lw.ln1_g, lw.ln1_b,
            lw.mlp_w1, lw.mlp_b1, lw.mlp_w2, lw.mlp_b2,
            lw.ln2_g, lw.ln2_b,
        ]
    arrs += [weights.head_w, weights.head_b]
    return arrs


def init_weights(config: EncoderConfig, channels: int = 16) -> EncoderWeights:
    """Deterministic pseudo-random weights for a given seed and input width.

    Projection matrices are drawn N(0, 1/fan_in) so pre-softmax logits on
    z-scored input stay in a benign range and the mask constant dominates;
    biases start at zero, normalization at identity.
    """
    if channels < 1:
        raise EncoderError("channels must be positive")
    rng = np.random.default_rng(np.uint64(config.seed))
    d, m = config.embed_dim, config.mlp_dim

    def mat(fan_in: int, fan_out: int) -> np.ndarray:
        return (rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)).astype(np.float32)

    def vec(n: int, value: float = 0.0) -> np.ndarray:
        return np.full(n, value, dtype=np.float32)

    input_w = mat(channels, d)
    input_b = vec(d)
    quality_token = (rng.standard_normal(d) / np.sqrt(d)).astype(np.float32)
    layers = []
    for _ in range(config.num_layers):
        layers.append(
            LayerWeights(
                wq=mat(d, d), bq=vec(d),
                wk=mat(d, d), bk=vec(d),
                wv=mat(d, d), bv=vec(d),
                wo=mat(d, d), bo=vec(d),
                ln1_g=vec(d, 1.0), ln1_b=vec(d),
                mlp_w1=mat(d, m), mlp_b1=vec(m),
                mlp_w2=mat(m, d), mlp_b2=vec(d),
                ln2_g=vec(d, 1.0), ln2_b=vec(d),
            )
        )
    head_w = mat(d, 1)[:, 0]
    head_b = vec(1)
    return EncoderWeights(
        input_w=input_w,
        input_b=input_b,
        quality_token=quality_token,
        layers=tuple(layers),
        head_w=head_w,
        head_b=head_b,
    )


def _sincos_1d(positions: np.ndarray, dim: int) -> np.ndarray:
    """Standard sinusoidal encoding of integer positions into dim channels."""
    half = (dim + 1) // 2
    freqs = np.exp(-np.log(10000.0) * (np.arange(half) / max(half, 1)))
    angles = positions[:, None] * freqs[None, :]
    enc = np.empty((len(positions), 2 * half))
    enc[:, 0::2] = np.sin(angles)
    enc[:, 1::2] = np.cos(angles)
    return enc[:, :dim]


def positional_encoding(rows: int, cols: int, embed_dim: int) -> np.ndarray:
    """Fixed 2-D sinusoidal encoding: first half row position, second half column."""
    half = embed_dim // 2
    pe = np.empty((rows, cols, embed_dim), dtype=np.float32)
    pe[:, :, :half] = _sincos_1d(np.arange(rows), half)[:, None, :]
    pe[:, :, half:] = _sincos_1d(np.arange(cols), embed_dim - half)[None, :, :]
    return pe


@dataclass(frozen=True)
class TokenSequence:
    """Quality token followed by one token per grid position, row-major.

    ``mask`` flags tokens masked as attention keys; the quality token at
    index 0 is never masked.
    """

    tokens: np.ndarray  # (L, embed_dim) float32
    positions: tuple[tuple[int, int], ...]  # (-1, -1) marks the quality token
    mask: np.ndarray  # (L,) bool

    def __post_init__(self) -> None:
        if self.tokens.ndim != 2 or len(self.positions) != len(self.tokens):
            raise EncoderError("tokens and positions are inconsistent")
        if self.mask.shape != (len(self.tokens),):
            raise EncoderError("mask length does not match token count")
        if self.positions[0] != QUALITY_TOKEN_POSITION or self.mask[0]:
            raise EncoderError("quality token must be first and unmasked")
        self.tokens.setflags(write=False)
        self.mask.setflags(write=False)


def tokenize(
    features: FeatureMatrix,
    weights: EncoderWeights,
    mask_blocks: BlockSet,
    grid: BlockGrid,
) -> TokenSequence:
    """Project grid cells to tokens, add positions, prepend the quality token."""
    if (grid.rows, grid.cols) != (features.rows, features.cols):
        raise EncoderError(
            f"grid {grid.rows}x{grid.cols} does not match features "
            f"{features.rows}x{features.cols}"
        )
    if features.channels != weights.channels:
        raise EncoderError(
            f"features have {features.channels} channels, weights expect {weights.channels}"
        )
    d = weights.embed_dim
    flat = features.data.reshape(-1, features.channels)
    proj = flat @ weights.input_w + weights.input_b
    proj += positional_encoding(features.rows, features.cols, d).reshape(-1, d)
    tokens = np.concatenate([weights.quality_token[None, :], proj]).astype(np.float32)

    key_mask = block_set_to_feature_mask(mask_blocks, grid).reshape(-1)
    mask = np.concatenate([[False], key_mask])
    positions = (QUALITY_TOKEN_POSITION,) + tuple(
        (r, c) for r in range(features.rows) for c in range(features.cols)
    )
    return TokenSequence(tokens=tokens, positions=positions, mask=mask)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def masked_attention(
    queries: np.ndarray,
    keys: np.ndarray,
    values: np.ndarray,
    mask: np.ndarray,
    mask_logit_value: float = -1e9,
) -> np.ndarray:
    """Scaled dot-product attention with key masking.

    ``mask_logit_value`` is added to every logit whose key is masked, for all
    queries (and all leading head/batch axes); masked keys end up with weight
    exactly 0.0 because exp underflows.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        raise AllKeysMaskedError("at least one attention key must be unmasked")
    dh = queries.shape[-1]
    logits = queries @ np.swapaxes(keys, -1, -2) / np.sqrt(np.float32(dh))
    logits = logits + np.where(mask, np.float32(mask_logit_value), np.float32(0.0))
    return _softmax(logits) @ values


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + np.float32(_LN_EPS)) * gain + bias


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.float32(np.sqrt(2.0))))


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    b, length, d = x.shape
    return x.reshape(b, length, num_heads, d // num_heads).swapaxes(1, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, length, dh = x.shape
    return x.swapaxes(1, 2).reshape(b, length, h * dh)


def _forward_batch(
    tokens: np.ndarray,  # (B, L, d) float32
    mask: np.ndarray,  # (B, L) bool
    weights: EncoderWeights,
    config: EncoderConfig,
) -> np.ndarray:
    if mask.all(axis=-1).any():
        raise AllKeysMaskedError("at least one attention key must be unmasked")
    penalty = np.where(mask, np.float32(config.mask_logit_value), np.float32(0.0))
    penalty = penalty[:, None, None, :]  # broadcast over heads and queries
    x = tokens
    for lw in weights.layers:
        q = _split_heads(x @ lw.wq + lw.bq, config.num_heads)
        k = _split_heads(x @ lw.wk + lw.bk, config.num_heads)
        v = _split_heads(x @ lw.wv + lw.bv, config.num_heads)
        logits = q @ k.swapaxes(-1, -2) / np.sqrt(np.float32(q.shape[-1]))
        ctx = _merge_heads(_softmax(logits + penalty) @ v)
        x = _layer_norm(x + (ctx @ lw.wo + lw.bo), lw.ln1_g, lw.ln1_b)
        h = _gelu(x @ lw.mlp_w1 + lw.mlp_b1).astype(np.float32) @ lw.mlp_w2 + lw.mlp_b2
        x = _layer_norm(x + h, lw.ln2_g, lw.ln2_b)
    return x[:, 0, :] @ weights.head_w + weights.head_b[0]


def forward(tokens: TokenSequence, weights: EncoderWeights, config: EncoderConfig) -> float:
    """Run the encoder and read the quality score off the quality token."""
    scores = _forward_batch(tokens.tokens[None], tokens.mask[None], weights, config)
    return float(scores[0])


def predict(
    features: FeatureMatrix,
    mask_blocks: BlockSet,
    weights: EncoderWeights,
    config: EncoderConfig,
    grid: BlockGrid,
) -> float:
    """Quality score for one feature matrix under one block mask."""
    return forward(tokenize(features, weights, mask_blocks, grid), weights, config)


def predict_masks(
    features: FeatureMatrix,
    masks: Sequence[BlockSet],
    weights: EncoderWeights,
    config: EncoderConfig,
    grid: BlockGrid,
    attention_budget_bytes: int = 256 << 20,
) -> np.ndarray:
    """Scores for many block masks over one image, tokenizing only once.

    Masks are evaluated in chunks sized so the attention buffers stay within
    ``attention_budget_bytes``; results match per-mask predict up to float32
    round-off (batched matmuls may reduce in a different order).
    """
    seq = tokenize(features, weights, BlockSet.empty(grid.block_count), grid)
    length = len(seq.tokens)
    block_to_tokens = {
        b: np.flatnonzero(
            block_set_to_feature_mask(BlockSet.from_indices(grid.block_count, [b]), grid).reshape(-1)
        )
        + 1
        for b in range(grid.block_count)
    }
    mask_rows = np.zeros((len(masks), length), dtype=bool)
    for i, ms in enumerate(masks):
        for b in ms:
            mask_rows[i, block_to_tokens[b]] = True

    per_mask_bytes = 4 * config.num_heads * length * length
    chunk = max(1, min(len(masks), attention_budget_bytes // max(per_mask_bytes, 1)))
    scores = np.empty(len(masks), dtype=np.float32)
    for start in range(0, len(masks), chunk):
        rows = mask_rows[start : start + chunk]
        batch = np.broadcast_to(seq.tokens, (len(rows),) + seq.tokens.shape)
        scores[start : start + len(rows)] = _forward_batch(batch, rows, weights, config)
    return scores.astype(np.float64)


def save_weights(weights: EncoderWeights, config: EncoderConfig, path: str | PathLike) -> None:
    """Write a QWT1 weight file.

    Layout: magic "QWT1"; five u32 LE config fields (embed_dim, num_heads,
    num_layers, mlp_dim, channels); then every weight array as f32 LE in
    order: input_w, input_b, quality_token; per layer wq, bq, wk, bk, wv,
    bv, wo, bo, ln1_g, ln1_b, mlp_w1, mlp_b1, mlp_w2, mlp_b2, ln2_g, ln2_b;
    head_w, head_b.  Matrices are row-major with fan-in rows.
    """
    if len(weights.layers) != config.num_layers or weights.embed_dim != config.embed_dim:
        raise EncoderError("weights do not match config")
    with open(path, "wb") as fh:
        fh.write(QWT_MAGIC)
        fh.write(
            struct.pack(
                "<5I",
                config.embed_dim,
                config.num_heads,
                config.num_layers,
                config.mlp_dim,
                weights.channels,
            )
        )
        for arr in _weight_arrays(weights):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path: str | PathLike) -> tuple[EncoderConfig, EncoderWeights]:
    """Read a QWT1 weight file; mask constant and seed take their defaults."""
    with open(path, "rb") as fh:
        expect_magic(fh, QWT_MAGIC)
        d, heads, layers, m, channels = read_u32s(fh, 5, "QWT header")
        try:
            config = EncoderConfig(embed_dim=d, num_heads=heads, num_layers=layers, mlp_dim=m)
        except EncoderError as exc:
            raise FormatError(f"QWT header is not a valid config: {exc}") from exc

        def arr(*shape: int) -> np.ndarray:
            n = int(np.prod(shape))
            raw = read_exact(fh, 4 * n, f"array of shape {shape}")
            return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

        input_w = arr(channels, d)
        input_b = arr(d)
        quality_token = arr(d)
        layer_list = []
        for _ in range(layers):
            layer_list.append(
                LayerWeights(
                    wq=arr(d, d), bq=arr(d),
                    wk=arr(d, d), bk=arr(d),
                    wv=arr(d, d), bv=arr(d),
                    wo=arr(d, d), bo=arr(d),
                    ln1_g=arr(d), ln1_b=arr(d),
                    mlp_w1=arr(d, m), mlp_b1=arr(m),
                    mlp_w2=arr(m, d), mlp_b2=arr(d),
                    ln2_g=arr(d), ln2_b=arr(d),
                )
            )
        head_w = arr(d)
        head_b = arr(1)
        if fh.read(1):
            raise FormatError("trailing bytes after QWT payload")
    try:
        weights = EncoderWeights(
            input_w=input_w,
            input_b=input_b,
            quality_token=quality_token,
            layers=tuple(layer_list),
            head_w=head_w,
            head_b=head_b,
        )
    except EncoderError as exc:
        raise FormatError(str(exc)) from exc
    return config, weights
