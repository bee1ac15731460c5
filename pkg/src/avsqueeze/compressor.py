"""Periodic-query token compressor.

One shared trainable query vector is inserted after every complete group of R
input tokens (plus one trailing query under emit_partial). The augmented
sequence runs through a stack of identical layers, and only the outputs at the
query positions survive, so N tokens become floor(N/R) (+1 for the partial
group). Three layer families share this wiring and the same output shape:

    causal_ssm          residual + pre-RMS-norm selective scan
    bidirectional_ssm   forward and reversed scans summed, shared projection
    attention_resampler unmasked multi-head attention + feed-forward block

Queries are inserted once before the stack; selection happens after the last
layer. Weights live in a flat name-to-tensor mapping whose names and shapes
come from `weight_shapes`, the single source of truth for initialization,
serialization, and parameter counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import ssm
from . import tensor as T
from .errors import ConfigurationError, ContractError, DimensionError, InputError
from .fstream import FeatureStream
from .rng import Rng
from .tensor import Tape, Tensor, Value

VARIANTS = ("causal_ssm", "bidirectional_ssm", "attention_resampler")
TRAILING_POLICIES = ("drop_partial", "emit_partial")

# feed-forward hidden width, as a multiple of d_model (attention variant)
_FFN_MULT = 4


@dataclass(frozen=True)
class CompressorConfig:
    """Architecture knobs shared by all variants.

    d_state matters only to the ssm variants, num_heads and use_positions
    only to the attention variant; they are carried (and serialized)
    regardless so configs stay comparable across variants.
    """

    d_model: int
    stride_R: int = 25
    variant: str = "causal_ssm"
    num_layers: int = 4
    d_state: int = 16
    num_heads: int = 4
    trailing_policy: str = "drop_partial"
    use_positions: bool = False

    def __post_init__(self):
        if self.d_model < 1:
            raise ConfigurationError(f"d_model must be >= 1, got {self.d_model}")
        if self.stride_R < 1:
            raise ConfigurationError(f"stride_R must be >= 1, got {self.stride_R}")
        if self.num_layers < 1:
            raise ConfigurationError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r}; choose from {VARIANTS}"
            )
        if self.trailing_policy not in TRAILING_POLICIES:
            raise ConfigurationError(
                f"unknown trailing_policy {self.trailing_policy!r}; "
                f"choose from {TRAILING_POLICIES}"
            )
        if self.variant == "attention_resampler":
            if self.num_heads < 1:
                raise ConfigurationError(
                    f"num_heads must be >= 1, got {self.num_heads}"
                )
            if self.d_model % self.num_heads != 0:
                raise ConfigurationError(
                    f"d_model {self.d_model} not divisible by "
                    f"num_heads {self.num_heads}"
                )
        elif self.d_state < 1:
            raise ConfigurationError(f"d_state must be >= 1, got {self.d_state}")


def with_variant(cfg: CompressorConfig, variant: str) -> CompressorConfig:
    """Same config with a different layer family."""
    return replace(cfg, variant=variant)


# ---------------------------------------------------------------------------
# query placement


def query_positions(
    n_inputs: int, stride: int, trailing_policy: str
) -> tuple[np.ndarray, np.ndarray]:
    """(query indices, input indices) inside the augmented sequence.

    Input token j lands at augmented index j + floor(j/stride); the query for
    complete group g (1-based) lands right after it at g*(stride+1) - 1. Under
    emit_partial a trailing query closes the final short group.
    """
    if n_inputs < 1:
        raise ContractError("cannot place queries in an empty stream")
    complete = n_inputs // stride
    partial = 1 if (trailing_policy == "emit_partial" and n_inputs % stride) else 0
    j = np.arange(n_inputs)
    input_pos = j + j // stride
    q_pos = (np.arange(1, complete + 1) * (stride + 1)) - 1
    if partial:
        q_pos = np.append(q_pos, n_inputs + complete)
    return q_pos.astype(np.intp), input_pos.astype(np.intp)


def num_outputs(n_inputs: int, stride: int, trailing_policy: str) -> int:
    extra = 1 if (trailing_policy == "emit_partial" and n_inputs % stride) else 0
    return n_inputs // stride + extra


def interleave_queries(x, cfg: CompressorConfig, q) -> tuple[Tensor, list[int]]:
    """Insert the shared query row after each complete group of stride_R
    tokens; returns the augmented matrix and the query indices, ascending."""
    values = _as_matrix(x)
    q_arr = np.asarray(q.data if isinstance(q, (Tensor, Value)) else q, dtype=np.float64)
    if q_arr.shape != (values.shape[1],):
        raise DimensionError(
            f"query shape {q_arr.shape} does not match token width {values.shape[1]}"
        )
    q_pos, in_pos = query_positions(values.shape[0], cfg.stride_R, cfg.trailing_policy)
    out = np.empty((values.shape[0] + q_pos.size, values.shape[1]))
    out[in_pos] = values
    out[q_pos] = q_arr
    return Tensor(out, check_finite=False), [int(p) for p in q_pos]


def _as_matrix(x) -> np.ndarray:
    values = getattr(x, "values", x)
    if isinstance(values, (Tensor, Value)):
        values = values.data
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected [N, d] tokens, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ContractError("token stream is empty")
    return np.ascontiguousarray(arr)


# ---------------------------------------------------------------------------
# weight naming, shapes, and initialization


def weight_shapes(cfg: CompressorConfig) -> dict[str, tuple[int, ...]]:
    """Flat name -> shape map; iteration order is the canonical weight order."""
    d, n = cfg.d_model, cfg.d_state
    shapes: dict[str, tuple[int, ...]] = {"query": (d,)}
    for i in range(cfg.num_layers):
        p = f"layer{i}."
        if cfg.variant == "causal_ssm":
            shapes[p + "norm_gain"] = (d,)
            for name, shape in ssm.ssm_param_shapes(d, n).items():
                shapes[p + "ssm." + name] = shape
        elif cfg.variant == "bidirectional_ssm":
            shapes[p + "norm_gain"] = (d,)
            for name, shape in ssm.ssm_param_shapes(d, n).items():
                shapes[p + "fwd." + name] = shape
            for name, shape in ssm.ssm_param_shapes(d, n).items():
                shapes[p + "bwd." + name] = shape
            shapes[p + "out_proj"] = (d, d)
        else:
            h = _FFN_MULT * d
            shapes[p + "norm_attn"] = (d,)
            shapes[p + "w_q"] = (d, d)
            shapes[p + "w_k"] = (d, d)
            shapes[p + "w_v"] = (d, d)
            shapes[p + "w_o"] = (d, d)
            shapes[p + "norm_ffn"] = (d,)
            shapes[p + "ffn_w1"] = (d, h)
            shapes[p + "ffn_b1"] = (h,)
            shapes[p + "ffn_w2"] = (h, d)
            shapes[p + "ffn_b2"] = (d,)
    return shapes


def count_parameters(cfg: CompressorConfig) -> int:
    return sum(int(np.prod(s)) for s in weight_shapes(cfg).values())


def _init_tensor(name: str, shape: tuple[int, ...], rng: Rng) -> np.ndarray:
    leaf = name.rsplit(".", 1)[-1]
    if leaf in ssm.PARAM_NAMES:
        return ssm.init_ssm_tensor(leaf, shape, rng)
    if leaf in ("norm_gain", "norm_attn", "norm_ffn"):
        return np.ones(shape)
    if leaf in ("ffn_b1", "ffn_b2"):
        return np.zeros(shape)
    # query and all projection matrices: N(0, 1/fan_in)
    fan_in = shape[0]
    vals = rng.normals(int(np.prod(shape))).reshape(shape)
    return vals / math.sqrt(fan_in)


def init_weights(cfg: CompressorConfig, rng: Rng) -> dict[str, Tensor]:
    """Fresh weights; each tensor draws from its own named substream so a
    given name always initializes identically regardless of the others."""
    return {
        name: Tensor(_init_tensor(name, shape, rng.substream(name)))
        for name, shape in weight_shapes(cfg).items()
    }


def check_weights(cfg: CompressorConfig, weights: dict[str, Tensor]) -> None:
    """Weights must match the config's names and shapes exactly."""
    expected = weight_shapes(cfg)
    missing = sorted(set(expected) - set(weights))
    extra = sorted(set(weights) - set(expected))
    if missing or extra:
        raise ConfigurationError(
            f"weight names do not match config: missing {missing}, extra {extra}"
        )
    for name, shape in expected.items():
        got = weights[name].shape
        if tuple(got) != tuple(shape):
            raise ConfigurationError(
                f"weight {name!r} has shape {got}, config expects {shape}"
            )


# ---------------------------------------------------------------------------
# layer forward passes (tape mode)


def _subset(wvals: dict[str, Value], prefix: str) -> dict[str, Value]:
    cut = len(prefix)
    return {k[cut:]: v for k, v in wvals.items() if k.startswith(prefix)}


def _causal_layer(x: Value, w: dict[str, Value], grad: bool) -> Value:
    normed = T.rms_normalize(x, w["norm_gain"])
    return x + ssm.selective_scan_value(normed, _subset(w, "ssm."), grad=grad)


def _bidirectional_layer(x: Value, w: dict[str, Value], grad: bool) -> Value:
    normed = T.rms_normalize(x, w["norm_gain"])
    fused = ssm.bidirectional_scan_value(
        normed, _subset(w, "fwd."), _subset(w, "bwd."), w["out_proj"], grad=grad
    )
    return x + fused


def _attention_layer(x: Value, w: dict[str, Value], num_heads: int) -> Value:
    normed = T.rms_normalize(x, w["norm_attn"])
    q = normed @ w["w_q"]
    k = normed @ w["w_k"]
    v = normed @ w["w_v"]
    d = q.shape[1]
    dh = d // num_heads
    scale = 1.0 / math.sqrt(dh)
    heads = []
    for h in range(num_heads):
        lo, hi = h * dh, (h + 1) * dh
        qh = T.take_cols(q, lo, hi)
        kh = T.take_cols(k, lo, hi)
        vh = T.take_cols(v, lo, hi)
        attn = T.softmax_rows((qh @ T.transpose(kh)) * scale)
        heads.append(attn @ vh)
    mixed = (T.concat_cols(*heads) if len(heads) > 1 else heads[0]) @ w["w_o"]
    x = x + mixed
    normed = T.rms_normalize(x, w["norm_ffn"])
    hidden = T.silu(T.add_rowvec(normed @ w["ffn_w1"], w["ffn_b1"]))
    return x + T.add_rowvec(hidden @ w["ffn_w2"], w["ffn_b2"])


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    """Classic sin/cos position table, shape [n, d]."""
    pos = np.arange(n)[:, None].astype(np.float64)
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2.0 * (i // 2)) / d)
    table = np.empty((n, d))
    table[:, 0::2] = np.sin(angle[:, 0::2])
    table[:, 1::2] = np.cos(angle[:, 1::2])
    return table


def compress_value(
    tape: Tape,
    values: np.ndarray,
    cfg: CompressorConfig,
    wvals: dict[str, Value],
    *,
    grad: bool = True,
) -> Value:
    """Differentiable core: [N, d] tokens to [T, d] query outputs."""
    if values.shape[1] != cfg.d_model:
        raise ConfigurationError(
            f"token width {values.shape[1]} does not match d_model {cfg.d_model}"
        )
    q_pos, in_pos = query_positions(values.shape[0], cfg.stride_R, cfg.trailing_policy)
    x = tape.leaf(values)
    aug = T.insert_rows(x, wvals["query"], in_pos, q_pos)
    if cfg.variant == "attention_resampler" and cfg.use_positions:
        aug = aug + tape.leaf(sinusoidal_positions(aug.shape[0], cfg.d_model))
    for i in range(cfg.num_layers):
        w = _subset(wvals, f"layer{i}.")
        if cfg.variant == "causal_ssm":
            aug = _causal_layer(aug, w, grad)
        elif cfg.variant == "bidirectional_ssm":
            aug = _bidirectional_layer(aug, w, grad)
        else:
            aug = _attention_layer(aug, w, cfg.num_heads)
    return T.take_rows(aug, q_pos)


def compress(
    stream: FeatureStream, cfg: CompressorConfig, weights: dict[str, Tensor]
) -> FeatureStream:
    """Compress a stream stride_R-fold; forward only, no gradients kept.

    The output reuses the input origin with rate_hz divided by stride_R, so
    output token t covers [origin + t*R/rate, origin + (t+1)*R/rate). Under
    emit_partial the trailing token keeps that uniform-rate interval even
    though it summarizes fewer than R inputs.
    """
    values = _as_matrix(stream)
    if np.isnan(values).any():
        raise InputError("input stream contains NaN values")
    check_weights(cfg, weights)
    tape = Tape()
    wvals = {name: tape.leaf(t.data) for name, t in weights.items()}
    z = compress_value(tape, values, cfg, wvals, grad=False)
    return FeatureStream(
        values=z.data,
        rate_hz=stream.rate_hz / cfg.stride_R,
        origin_s=stream.origin_s,
    )


# ---------------------------------------------------------------------------
# raw-mode resampler entry points (tests and inspection)


def resampler_layer(
    x, weights: dict[str, Tensor], num_heads: int
) -> Tensor:
    """One attention + feed-forward block on [N, d] tokens, forward only."""
    values = _as_matrix(x)
    d = values.shape[1]
    if d % num_heads != 0:
        raise ConfigurationError(
            f"token width {d} not divisible by num_heads {num_heads}"
        )
    tape = Tape()
    wvals = {name: tape.leaf(t.data) for name, t in weights.items()}
    out = _attention_layer(tape.leaf(values), wvals, num_heads)
    return Tensor(out.data, check_finite=False)


def attention_maps(
    x, weights: dict[str, Tensor], num_heads: int
) -> list[np.ndarray]:
    """Per-head softmax attention matrices of the block, for inspection."""
    values = _as_matrix(x)
    gain = weights["norm_attn"].data
    r = np.sqrt(np.mean(values * values, axis=1, keepdims=True) + 1e-6)
    normed = (values / r) * gain
    q = normed @ weights["w_q"].data
    k = normed @ weights["w_k"].data
    d = q.shape[1]
    dh = d // num_heads
    maps = []
    for h in range(num_heads):
        lo, hi = h * dh, (h + 1) * dh
        scores = (q[:, lo:hi] @ k[:, lo:hi].T) / math.sqrt(dh)
        shifted = scores - scores.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        maps.append(e / e.sum(axis=1, keepdims=True))
    return maps
