import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointgva import oracles
from pointgva.attention import (
    AttentionConfig,
    GroupedVectorAttention,
    gva,
    make_weight_encoding,
    multi_head_attention,
    scalar_attention,
    vector_attention,
)
from pointgva.checks import random_reference_sets
from pointgva.geom import NeighborTable
from pointgva.numerics import MSAEncoding
from pointgva.numerics.layers import Module


class Identity(Module):
    def forward(self, r):
        return r


def _qkv(rng, n, c):
    return tuple(rng.standard_normal((n, c)) for _ in range(3))


def _rows(nbr):
    return [nbr.row(i) for i in range(nbr.n_query)]


def test_scalar_attention_self_only():
    q, k, v = _qkv(np.random.default_rng(0), 1, 4)
    out = scalar_attention(q, k, v, NeighborTable.from_lists([[0]], 1)).data
    np.testing.assert_array_equal(out, v)


def test_scalar_attention_identical_keys_mix_uniformly():
    rng = np.random.default_rng(1)
    q = rng.standard_normal((1, 3))
    k = np.tile(rng.standard_normal(3), (2, 1))
    v = rng.standard_normal((2, 3))
    out = scalar_attention(q, k, v, NeighborTable.from_lists([[0, 1]], 2)).data
    np.testing.assert_allclose(out[0], v.mean(axis=0), atol=1e-15)


def test_scalar_attention_matches_dense_oracle():
    rng = np.random.default_rng(2)
    q, k, v = _qkv(rng, 50, 8)
    nbr = random_reference_sets(rng, 50)
    np.testing.assert_allclose(scalar_attention(q, k, v, nbr).data,
                               oracles.dense_scalar_attention(q, k, v, _rows(nbr)), atol=1e-12)


def test_multi_head_with_one_head_is_scalar_attention():
    rng = np.random.default_rng(3)
    q, k, v = _qkv(rng, 20, 6)
    nbr = random_reference_sets(rng, 20)
    np.testing.assert_array_equal(multi_head_attention(q, k, v, nbr, 1).data,
                                  scalar_attention(q, k, v, nbr).data)


def test_multi_head_keeps_heads_separate():
    rng = np.random.default_rng(4)
    q, k, v = _qkv(rng, 15, 8)
    v[:, :4] = 0.0  # values live only in the second head
    out = multi_head_attention(q, k, v, random_reference_sets(rng, 15), 2).data
    assert np.all(out[:, :4] == 0.0)
    assert np.all(out[:, 4:] != 0.0)


def test_vector_attention_identity_encoding_single_neighbor():
    rng = np.random.default_rng(5)
    q, k, v = _qkv(rng, 4, 3)
    nbr = NeighborTable.from_lists([[2], [0], [3], [1]], 4)
    np.testing.assert_array_equal(vector_attention(q, k, v, nbr, Identity()).data, v[[2, 0, 3, 1]])


def test_vector_attention_matches_loop_oracle():
    rng = np.random.default_rng(6)
    q, k, v = _qkv(rng, 30, 8)
    nbr = random_reference_sets(rng, 30)
    enc = make_weight_encoding("L+N+A+L", 8, 8, rng)
    logits = enc(oracles.loop_relation(q, k, _rows(nbr))).data
    np.testing.assert_allclose(vector_attention(q, k, v, nbr, enc).data,
                               oracles.loop_grouped_attention(logits, v, _rows(nbr)), atol=1e-12)


@pytest.mark.parametrize("variant", ["L", "GL", "L+N+A+L", "GL+N+A+L"])
def test_gva_with_one_group_per_channel_is_vector_attention(variant):
    rng = np.random.default_rng(7)
    q, k, v = _qkv(rng, 40, 8)
    nbr = random_reference_sets(rng, 40)
    enc = make_weight_encoding(variant, 8, 8, rng)
    np.testing.assert_allclose(gva(q, k, v, nbr, enc, 8).data,
                               vector_attention(q, k, v, nbr, enc).data, atol=1e-12)


@pytest.mark.parametrize("groups", [1, 2, 4, 8])
def test_gva_with_block_sum_encoding_is_multi_head_attention(groups):
    rng = np.random.default_rng(8)
    q, k, v = _qkv(rng, 40, 8)
    nbr = random_reference_sets(rng, 40)
    a = gva(q, k, v, nbr, MSAEncoding(8, groups), groups, relation_kind="multiply").data
    np.testing.assert_allclose(a, multi_head_attention(q, k, v, nbr, groups).data, atol=1e-12)


def test_gva_single_neighbor_weights_are_one():
    rng = np.random.default_rng(9)
    q, k, v = _qkv(rng, 1, 4)
    enc = make_weight_encoding("GL", 4, 2, rng)
    out, attn = gva(q, k, v, NeighborTable.from_lists([[0]], 1), enc, 2, return_weights=True)
    np.testing.assert_array_equal(attn.data, [[1.0, 1.0]])
    np.testing.assert_allclose(out.data, v, atol=1e-15)


def test_gva_matches_loop_oracle_on_ragged_sets():
    rng = np.random.default_rng(10)
    q, k, v = _qkv(rng, 25, 12)
    nbr = random_reference_sets(rng, 25)
    enc = make_weight_encoding("GL+N+A+L", 12, 3, rng)
    logits = enc(oracles.loop_relation(q, k, _rows(nbr))).data
    np.testing.assert_allclose(gva(q, k, v, nbr, enc, 3).data,
                               oracles.loop_grouped_attention(logits, v, _rows(nbr)), atol=1e-12)


def test_gva_rejects_empty_reference_set():
    rng = np.random.default_rng(11)
    q, k, v = _qkv(rng, 2, 4)
    nbr = NeighborTable.from_lists([[0, 1], []], 2)
    with pytest.raises(ValueError, match="empty reference set for point 1"):
        gva(q, k, v, nbr, make_weight_encoding("GL", 4, 2, rng), 2)


def test_weight_encoding_parameter_counts():
    rng = np.random.default_rng(12)
    c, g = 16, 4
    counts = {v: make_weight_encoding(v, c, g, rng).n_params()
              for v in ("MSA", "L", "GL", "L+N+A+L", "GL+N+A+L")}
    assert counts["MSA"] == 0
    assert counts["GL"] == c
    assert counts["L"] == c * g + g
    assert counts["L+N+A+L"] - counts["GL+N+A+L"] == c * g + g - c


def test_config_validation():
    with pytest.raises(ValueError, match="divide"):
        AttentionConfig(10, 4)
    with pytest.raises(ValueError, match="relation"):
        AttentionConfig(8, 4, relation="add")
    with pytest.raises(ValueError, match="weight encoding"):
        make_weight_encoding("XL", 8, 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.sampled_from([(4, 1), (4, 2), (8, 4), (12, 3), (6, 6)]),
       st.sampled_from(["MSA", "L", "GL", "L+N+A+L", "GL+N+A+L"]), st.integers(0, 2**31 - 1))
def test_attention_weights_sum_to_one(n, cg, variant, seed):
    c, g = cg
    rng = np.random.default_rng(seed)
    q, k, v = _qkv(rng, n, c)
    nbr = random_reference_sets(rng, n)
    _, attn = gva(q, k, v, nbr, make_weight_encoding(variant, c, g, rng), g, return_weights=True)
    sums = np.add.reduceat(attn.data, nbr.offsets[:-1], axis=0)
    assert np.abs(sums - 1).max() <= 1e-12


def test_module_cross_attention_shapes():
    rng = np.random.default_rng(13)
    block = GroupedVectorAttention(AttentionConfig(8, 2, value_pe=True), rng)
    x, ref = rng.standard_normal((5, 8)), rng.standard_normal((9, 8))
    pos, ref_pos = rng.random((5, 3)), rng.random((9, 3))
    nbr = random_reference_sets(rng, 5, 4)
    nbr = NeighborTable(nbr.offsets, nbr.indices % 9, 9)
    out = block(x, pos, nbr, ref_x=ref, ref_positions=ref_pos)
    assert out.shape == (5, 8)
    assert np.isfinite(out.data).all()
