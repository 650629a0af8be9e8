import numpy as np
import pytest

from pointgva.geom import NeighborTable
from pointgva.numerics import Param, grad_check
from pointgva.numerics import autograd as ag
from pointgva.posenc import (
    PosEncConfig,
    PositionEncoding,
    compose_relation,
    encode_bias,
    relative_positions,
)


def _encoder(mode="multiplier_and_bias", c=6, seed=0):
    return PositionEncoding(PosEncConfig(c, mode), np.random.default_rng(seed))


def test_zero_weight_bias_mlp_gives_constant_rows():
    enc = _encoder()
    for p in enc.bias.parameters():
        if p.name == "weight":
            p.data[...] = 0.0
    out = encode_bias(np.random.default_rng(1).standard_normal((7, 3)), enc).data
    assert np.all(out == out[0])


def test_zero_offsets_give_identical_rows():
    enc = _encoder()
    out = enc.encode_bias(np.zeros((4, 3))).data
    assert np.all(out == out[0])


def test_forced_identity_reduces_to_plain_relation():
    enc = _encoder()
    for mlp, value in ((enc.mul, 1.0), (enc.bias, 0.0)):
        for p in mlp.fc2.parameters():
            p.data[...] = 0.0
        mlp.fc2.bias.data[...] = value
    rng = np.random.default_rng(2)
    rel = rng.standard_normal((9, 6))
    out = compose_relation(rel, rng.standard_normal((9, 3)), enc).data
    np.testing.assert_array_equal(out, rel)


@pytest.mark.parametrize("mode", ["bias_only", "multiplier_and_bias"])
def test_zero_relation_leaves_only_the_bias(mode):
    enc = _encoder(mode)
    rel_pos = np.random.default_rng(3).standard_normal((5, 3))
    out = compose_relation(np.zeros((5, 6)), rel_pos, enc).data
    np.testing.assert_allclose(out, enc.encode_bias(rel_pos).data, atol=1e-15)


def test_matches_explicit_loop():
    enc = _encoder()
    rng = np.random.default_rng(4)
    rel, rel_pos = rng.standard_normal((8, 6)), rng.standard_normal((8, 3))
    mul = enc.encode_mul(rel_pos).data
    bias = enc.encode_bias(rel_pos).data
    want = np.array([[mul[e, j] * rel[e, j] + bias[e, j] for j in range(6)] for e in range(8)])
    np.testing.assert_allclose(compose_relation(rel, rel_pos, enc).data, want, atol=1e-15)


def test_bias_only_has_no_multiplier():
    enc = _encoder("bias_only")
    assert enc.mul is None
    with pytest.raises(ValueError, match="disabled"):
        enc.encode_mul(np.zeros((1, 3)))
    full = _encoder()
    assert full.n_params() - enc.n_params() == full.mul.n_params()


def test_gradient_through_both_branches():
    enc = _encoder(seed=5)
    rng = np.random.default_rng(6)
    rel = Param(rng.standard_normal((10, 6)))
    rel_pos = rng.standard_normal((10, 3))
    weights = rng.standard_normal((10, 6))
    rep = grad_check(lambda: ag.weighted_total(compose_relation(rel, rel_pos, enc), weights),
                     [rel, *enc.parameters()])
    assert rep.passed, rep


def test_relative_positions_per_edge():
    q = np.array([[0.0, 0, 0], [1.0, 1, 1]])
    ref = np.array([[0.5, 0, 0], [0.0, 2, 0]])
    nbr = NeighborTable.from_lists([[1], [0, 1]], 2)
    np.testing.assert_array_equal(relative_positions(q, ref, nbr),
                                  [[0, -2, 0], [0.5, 1, 1], [1, -1, 1]])


def test_shape_validation():
    enc = _encoder()
    with pytest.raises(ValueError, match="m x 3"):
        enc.encode_bias(np.zeros((2, 2)))
    with pytest.raises(ValueError, match="does not match"):
        compose_relation(np.zeros((3, 6)), np.zeros((2, 3)), enc)
    with pytest.raises(ValueError, match="mode"):
        PosEncConfig(4, "mul_only")
