"""Periodic-query compressor: placement, counts, wiring, causality, gradients."""

from __future__ import annotations

import numpy as np
import pytest

import _oracles
from avsqueeze import compressor as C
from avsqueeze import tensor as T
from avsqueeze.errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    InputError,
)
from avsqueeze.fstream import FeatureStream
from avsqueeze.rng import Rng
from avsqueeze.tensor import Tape, Tensor, backward


def _cfg(**kw):
    base = dict(d_model=4, stride_R=5, variant="causal_ssm", num_layers=1, d_state=2, num_heads=2)
    base.update(kw)
    return C.CompressorConfig(**base)


def _stream(n, d, seed=0, rate=25.0):
    return FeatureStream(Rng(seed).normals(n, d), rate, 0.0)


# ---------------------------------------------------------------------------
# query placement


def test_query_positions_match_worked_example():
    q_pos, in_pos = C.query_positions(100, 25, "drop_partial")
    assert q_pos.tolist() == [25, 51, 77, 103]
    assert len(in_pos) == 100
    assert in_pos[0] == 0 and in_pos[24] == 24
    assert in_pos[25] == 26  # first token after a query shifts by one
    assert in_pos[99] == 102
    # augmented length = inputs + queries
    assert len(in_pos) + len(q_pos) == 104


def test_query_positions_exact_multiple():
    q_pos, in_pos = C.query_positions(25, 25, "drop_partial")
    assert q_pos.tolist() == [25]
    assert in_pos.tolist() == list(range(25))


@pytest.mark.parametrize(
    "policy,want",
    [("drop_partial", [25]), ("emit_partial", [25, 31])],
)
def test_query_positions_trailing_policies(policy, want):
    q_pos, in_pos = C.query_positions(30, 25, policy)
    assert q_pos.tolist() == want
    assert in_pos.tolist() == list(range(25)) + [26, 27, 28, 29, 30]


def test_query_positions_stride_one():
    q_pos, in_pos = C.query_positions(4, 1, "drop_partial")
    assert q_pos.tolist() == [1, 3, 5, 7]
    assert in_pos.tolist() == [0, 2, 4, 6]


def test_query_positions_disjoint_and_complete():
    for n, r in [(1, 1), (7, 3), (99, 10), (100, 100), (5, 8)]:
        for policy in C.TRAILING_POLICIES:
            q_pos, in_pos = C.query_positions(n, r, policy)
            both = np.concatenate([q_pos, in_pos])
            assert len(set(both.tolist())) == len(both)
            assert sorted(both.tolist()) == list(range(n + len(q_pos)))


def test_query_positions_empty_rejected():
    with pytest.raises(ContractError):
        C.query_positions(0, 5, "drop_partial")


@pytest.mark.parametrize("n", [1, 2, 24, 25, 26, 49, 50, 99, 100, 101])
@pytest.mark.parametrize("r", [1, 2, 25, 40])
def test_num_outputs_floor_contract(n, r):
    assert C.num_outputs(n, r, "drop_partial") == n // r
    want_emit = n // r + (1 if n % r else 0)
    assert C.num_outputs(n, r, "emit_partial") == want_emit


def test_interleave_queries_layout():
    cfg = _cfg(stride_R=3)
    x = np.arange(28.0).reshape(7, 4)
    q = np.full(4, -1.0)
    aug, q_idx = C.interleave_queries(x, cfg, q)
    assert q_idx == [3, 7]
    assert aug.shape == (9, 4)
    assert np.array_equal(aug.data[[3, 7]], np.tile(q, (2, 1)))
    keep = [i for i in range(9) if i not in q_idx]
    assert np.array_equal(aug.data[keep], x)


def test_interleave_queries_shape_error():
    cfg = _cfg()
    with pytest.raises(DimensionError):
        C.interleave_queries(np.zeros((6, 4)), cfg, np.zeros(3))


# ---------------------------------------------------------------------------
# weight naming, counts, and init


def test_weight_shapes_starts_with_query_and_covers_layers():
    cfg = _cfg(num_layers=3)
    names = list(C.weight_shapes(cfg))
    assert names[0] == "query"
    for i in range(3):
        assert any(n.startswith(f"layer{i}.") for n in names)


def test_count_parameters_against_hand_arithmetic():
    d, n, layers = 6, 3, 2
    causal = C.CompressorConfig(
        d_model=d, d_state=n, num_layers=layers, variant="causal_ssm", num_heads=3
    )
    bi = C.with_variant(causal, "bidirectional_ssm")
    attn = C.with_variant(causal, "attention_resampler")
    # per layer: norm d + a_log dn + w_delta dd + bias_delta d + w_b dn + bias_b n + w_c dn + bias_c n
    causal_layer = d + d * n + d * d + d + d * n + n + d * n + n
    assert C.count_parameters(causal) == d + layers * causal_layer
    bi_layer = d + 2 * (d * n + d * d + d + d * n + n + d * n + n) + d * d
    assert C.count_parameters(bi) == d + layers * bi_layer
    h = 4 * d
    attn_layer = d + 4 * d * d + d + d * h + h + h * d + d
    assert C.count_parameters(attn) == d + layers * attn_layer


def test_parameter_count_ordering():
    base = C.CompressorConfig(d_model=16, d_state=8, num_layers=2, num_heads=4)
    counts = {v: C.count_parameters(C.with_variant(base, v)) for v in C.VARIANTS}
    assert counts["attention_resampler"] > counts["bidirectional_ssm"] > counts["causal_ssm"]


def test_init_weights_matches_shapes_and_is_name_stable():
    cfg = _cfg(num_layers=2)
    w = C.init_weights(cfg, Rng(5))
    shapes = C.weight_shapes(cfg)
    assert list(w) == list(shapes)
    for name, t in w.items():
        assert t.shape == shapes[name]
    # same name initializes identically even when the config grows
    w_small = C.init_weights(_cfg(num_layers=1), Rng(5))
    assert np.array_equal(w["layer0.ssm.a_log"].data, w_small["layer0.ssm.a_log"].data)
    assert np.array_equal(w["query"].data, w_small["query"].data)


def test_check_weights_catches_drift():
    cfg = _cfg()
    w = C.init_weights(cfg, Rng(1))
    C.check_weights(cfg, w)
    missing = dict(w)
    missing.pop("query")
    with pytest.raises(ConfigurationError):
        C.check_weights(cfg, missing)
    extra = dict(w)
    extra["stray"] = Tensor(np.zeros(2))
    with pytest.raises(ConfigurationError):
        C.check_weights(cfg, extra)
    warped = dict(w)
    warped["query"] = Tensor(np.zeros(cfg.d_model + 1))
    with pytest.raises(ConfigurationError):
        C.check_weights(cfg, warped)


# ---------------------------------------------------------------------------
# config validation


@pytest.mark.parametrize(
    "kw",
    [
        {"d_model": 0},
        {"stride_R": 0},
        {"num_layers": 0},
        {"variant": "conv"},
        {"trailing_policy": "pad"},
        {"variant": "attention_resampler", "d_model": 6, "num_heads": 4},
        {"variant": "attention_resampler", "num_heads": 0},
        {"d_state": 0},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        _cfg(**kw)


def test_with_variant_keeps_other_fields():
    cfg = _cfg(stride_R=7, num_layers=3)
    out = C.with_variant(cfg, "attention_resampler")
    assert out.variant == "attention_resampler"
    assert out.stride_R == 7 and out.num_layers == 3 and out.d_model == cfg.d_model


# ---------------------------------------------------------------------------
# compress: counts, stamps, and stream contracts


@pytest.mark.parametrize("variant", C.VARIANTS)
def test_compress_count_rate_origin(variant):
    cfg = _cfg(variant=variant, stride_R=5)
    w = C.init_weights(cfg, Rng(2))
    stream = FeatureStream(Rng(3).normals(23, 4), 25.0, origin_s=1.5)
    out = C.compress(stream, cfg, w)
    assert out.rows == 4  # floor(23/5)
    assert out.dim == 4
    assert out.rate_hz == 5.0
    assert out.origin_s == 1.5


def test_compress_emit_partial_adds_one():
    cfg = _cfg(trailing_policy="emit_partial")
    w = C.init_weights(cfg, Rng(2))
    out = C.compress(_stream(23, 4), cfg, w)
    assert out.rows == 23 // 5 + 1


def test_compress_rejects_nan_and_width_mismatch():
    cfg = _cfg()
    w = C.init_weights(cfg, Rng(2))
    bad = Rng(0).normals(10, 4)
    bad[3, 1] = np.nan
    with pytest.raises(InputError):
        C.compress(FeatureStream(bad, 25.0, 0.0, ), cfg, w)
    with pytest.raises(ConfigurationError):
        C.compress(_stream(10, 5), cfg, w)


def test_variants_share_output_shape():
    shapes = set()
    for variant in C.VARIANTS:
        cfg = _cfg(variant=variant)
        w = C.init_weights(cfg, Rng(4))
        shapes.add(C.compress(_stream(17, 4), cfg, w).values.shape)
    assert shapes == {(3, 4)}


def test_query_outputs_are_distinct():
    cfg = _cfg(num_layers=2)
    w = C.init_weights(cfg, Rng(6))
    out = C.compress(_stream(25, 4, seed=7), cfg, w).values
    for i in range(len(out) - 1):
        assert np.max(np.abs(out[i + 1] - out[i])) > 1e-6


# ---------------------------------------------------------------------------
# causality and future sensitivity


def test_causal_outputs_ignore_the_future_bitwise():
    cfg = _cfg(variant="causal_ssm", stride_R=5, num_layers=2)
    w = C.init_weights(cfg, Rng(8))
    x = Rng(9).normals(30, 4)
    base = C.compress(FeatureStream(x, 25.0, 0.0), cfg, w).values
    for seed in range(6):
        g = Rng(100 + seed).integer(5) + 1  # keep groups < g intact
        bumped = x.copy()
        bumped[g * 5 :] += Rng(200 + seed).normals(30 - g * 5, 4)
        got = C.compress(FeatureStream(bumped, 25.0, 0.0), cfg, w).values
        assert got[:g].tobytes() == base[:g].tobytes()


@pytest.mark.parametrize("variant", ["bidirectional_ssm", "attention_resampler"])
def test_non_causal_variants_see_the_future(variant):
    cfg = _cfg(variant=variant, stride_R=5)
    w = C.init_weights(cfg, Rng(10))
    x = Rng(11).normals(30, 4)
    base = C.compress(FeatureStream(x, 25.0, 0.0), cfg, w).values
    bumped = x.copy()
    bumped[-1] += 1.0
    got = C.compress(FeatureStream(bumped, 25.0, 0.0), cfg, w).values
    assert np.max(np.abs(got[0] - base[0])) > 1e-9


def test_attention_constant_input_gives_constant_outputs():
    # without positions the block is permutation-blind, so identical tokens
    # must produce identical query outputs
    cfg = _cfg(variant="attention_resampler", num_layers=2)
    w = C.init_weights(cfg, Rng(12))
    x = np.tile(Rng(13).normals(4), (20, 1))
    out = C.compress(FeatureStream(x, 25.0, 0.0), cfg, w).values
    assert np.max(np.abs(out - out[0])) <= 1e-10


def test_positions_break_the_symmetry():
    cfg = _cfg(variant="attention_resampler", num_layers=1, use_positions=True)
    w = C.init_weights(cfg, Rng(12))
    x = np.tile(Rng(13).normals(4), (20, 1))
    out = C.compress(FeatureStream(x, 25.0, 0.0), cfg, w).values
    assert np.max(np.abs(out - out[0])) > 1e-6


def test_sinusoidal_positions_table():
    tab = C.sinusoidal_positions(10, 6)
    assert tab.shape == (10, 6)
    assert np.all(np.abs(tab) <= 1.0)
    assert np.array_equal(tab[0, 0::2], np.zeros(3))  # sin(0)
    assert np.array_equal(tab[0, 1::2], np.ones(3))  # cos(0)


# ---------------------------------------------------------------------------
# gradients through the full stack


@pytest.mark.parametrize("variant", C.VARIANTS)
def test_compressor_gradients_match_finite_differences(variant):
    cfg = _cfg(variant=variant, stride_R=2, num_layers=1)
    weights = {k: v.numpy() for k, v in C.init_weights(cfg, Rng(20)).items()}
    x = Rng(21).normals(6, 4)
    w_loss = np.random.default_rng(22).normal(size=(3, 4))

    tape = Tape()
    wv = {k: tape.leaf(v) for k, v in weights.items()}
    out = C.compress_value(tape, x, cfg, wv)
    loss = T.sum_all(T.mul(out, tape.leaf(w_loss)))
    grads = backward(tape, loss)

    for name in weights:

        def f(arr, name=name):
            t2 = Tape()
            wv2 = {k: t2.leaf(arr if k == name else weights[k]) for k in weights}
            out2 = C.compress_value(t2, x, cfg, wv2)
            return float(np.sum(out2.data * w_loss))

        fd = _oracles.fd_gradient(f, weights[name])
        err = _oracles.rel_err(grads.wrt(wv[name]), fd)
        assert err.max() <= 1e-4, f"{variant}/{name}: {err.max():.3e}"


# ---------------------------------------------------------------------------
# raw attention entry points


def test_attention_maps_are_row_stochastic():
    cfg = _cfg(variant="attention_resampler")
    w = {k[len("layer0.") :]: v for k, v in C.init_weights(cfg, Rng(30)).items() if k.startswith("layer0.")}
    x = Rng(31).normals(9, 4)
    maps = C.attention_maps(x, w, num_heads=2)
    assert len(maps) == 2
    for m in maps:
        assert m.shape == (9, 9)
        assert np.max(np.abs(m.sum(axis=1) - 1.0)) <= 1e-12
        assert np.all(m >= 0.0)


def test_resampler_layer_shape_and_heads_check():
    cfg = _cfg(variant="attention_resampler")
    w = {k[len("layer0.") :]: v for k, v in C.init_weights(cfg, Rng(32)).items() if k.startswith("layer0.")}
    out = C.resampler_layer(Rng(33).normals(7, 4), w, num_heads=2)
    assert out.shape == (7, 4)
    with pytest.raises(ConfigurationError):
        C.resampler_layer(Rng(33).normals(7, 4), w, num_heads=3)
