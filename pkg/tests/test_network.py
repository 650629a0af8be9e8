import numpy as np
import pytest

from pointgva.geom import PointCloud
from pointgva.network import (
    Backbone,
    BackboneConfig,
    Block,
    ClassificationNet,
    ClsHead,
    SegmentationNet,
    block_forward,
    count_params,
    posenc_multiplier_params,
    reference_table,
    stage_point_counts,
)
from pointgva.numerics import GroupedLinear
from pointgva.spatial import knn


def _scene(n, c=6, seed=0, scale=2.0):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.random((n, 3)) * scale, rng.standard_normal((n, c)))


def test_block_with_zeroed_residual_branches_is_identity():
    cfg = BackboneConfig.toy()
    block = Block(cfg.attention_config(8, 2), np.random.default_rng(0))
    for layer in (block.proj, block.ffn.fc2):
        layer.weight.data[...] = 0.0
        layer.bias.data[...] = 0.0
    cloud = _scene(50, c=8)
    out = block_forward(cloud, knn(cloud.positions, cloud.positions, 16), block)
    np.testing.assert_array_equal(out.features, cloud.features)


def test_single_point_forward():
    cfg = BackboneConfig.toy()
    out = SegmentationNet(cfg)(_scene(1)).data
    assert out.shape == (1, cfg.num_classes)
    assert np.isfinite(out).all()


@pytest.mark.parametrize("mode", ["knn", "grid"])
def test_permutation_invariance(mode):
    cfg = BackboneConfig.toy(reference_mode=mode, base_grid=0.1)
    net = Backbone(cfg)
    cloud = _scene(1000, seed=1)
    perm = np.random.default_rng(2).permutation(cloud.n)
    out = net(cloud).data
    np.testing.assert_allclose(net(cloud.permuted(perm)).data, out[perm], atol=1e-9)


def test_translation_invariance():
    net = Backbone(BackboneConfig.toy(base_grid=0.1))
    cloud = _scene(1000, seed=3)
    np.testing.assert_allclose(net(cloud.translated([5.5, -1.25, 3.0])).data, net(cloud).data,
                               atol=1e-9)


@pytest.mark.slow
def test_default_backbone_output_width_on_10k_scene():
    cloud = _scene(10_000, seed=4)
    out = Backbone(BackboneConfig())(cloud).data
    assert out.shape == (10_000, 48)
    assert np.isfinite(out).all()


def test_stage_point_counts_shrink():
    counts = stage_point_counts(Backbone(BackboneConfig.toy()), _scene(5000, seed=5))
    assert counts[0] == 5000
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[-1] >= 1


@pytest.mark.parametrize("pooling,unpooling", [("fps_knn", "interp"), ("grid_knn", "interp"),
                                               ("grid", "interp")])
def test_baseline_pooling_variants_run(pooling, unpooling):
    cfg = BackboneConfig.toy(pooling=pooling, unpooling=unpooling, pool_k=8, base_grid=0.1)
    out = Backbone(cfg)(_scene(600, seed=6)).data
    assert out.shape == (600, 8)
    assert np.isfinite(out).all()


def test_msa_backbone_runs():
    out = Backbone(BackboneConfig.toy(attention="msa"))(_scene(300, seed=7)).data
    assert np.isfinite(out).all()


def test_cls_head_uses_the_mean_row():
    rng = np.random.default_rng(8)
    head = ClsHead(5, 3, rng)
    feats = rng.standard_normal((20, 5))
    np.testing.assert_allclose(head(feats).data, head(feats.mean(axis=0, keepdims=True)).data,
                               atol=1e-14)
    np.testing.assert_allclose(head(feats[rng.permutation(20)]).data, head(feats).data,
                               atol=1e-14)
    with pytest.raises(ValueError, match="at least one point"):
        head(np.zeros((0, 5)))


def test_classification_net_is_permutation_invariant():
    cfg = BackboneConfig.toy(base_grid=0.1, num_classes=7)
    net = ClassificationNet(cfg)
    cloud = _scene(800, seed=9)
    out = net(cloud).data
    assert out.shape == (1, 7)
    perm = np.random.default_rng(10).permutation(cloud.n)
    np.testing.assert_allclose(net(cloud.permuted(perm)).data, out, atol=1e-9)


def test_grouped_linear_param_count():
    assert GroupedLinear(8, 4, np.random.default_rng(0)).n_params() == 8


def test_posenc_multiplier_toggle_changes_count_by_its_mlps():
    with_mul = SegmentationNet(BackboneConfig.toy())
    without = SegmentationNet(BackboneConfig.toy(posenc="bias_only"))
    diff = count_params(with_mul) - count_params(without)
    assert diff == posenc_multiplier_params(with_mul) > 0
    assert posenc_multiplier_params(without) == 0


def test_linear_vs_grouped_linear_encoding_count():
    cfg_l = BackboneConfig.toy(stem_depth=1, encoder_depths=(0, 0, 0, 0),
                               decoder_depths=(0, 0, 0, 0), weight_encoding="L")
    cfg_gl = BackboneConfig.toy(stem_depth=1, encoder_depths=(0, 0, 0, 0),
                                decoder_depths=(0, 0, 0, 0), weight_encoding="GL")
    c, g = cfg_l.stem_dim, cfg_l.stem_groups
    assert count_params(cfg_l) - count_params(cfg_gl) == c * g + g - c


def test_config_toml_round_trip(tmp_path):
    cfg = BackboneConfig.toy(reference_mode="grid", value_pe=True, base_grid=0.05)
    path = tmp_path / "cfg.toml"
    path.write_text(cfg.to_toml())
    assert BackboneConfig.load(path) == cfg


def test_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        BackboneConfig.toy(stem_groups=3)
    with pytest.raises(ValueError, match="map unpooling"):
        BackboneConfig.toy(pooling="fps_knn")
    with pytest.raises(ValueError, match="unknown config keys"):
        BackboneConfig.from_dict({"backbone": {"heads": 4}})
    with pytest.raises(ValueError, match="equal lengths"):
        BackboneConfig(dims=(96, 192))


def test_input_channel_mismatch():
    with pytest.raises(ValueError, match="input channels"):
        Backbone(BackboneConfig.toy())(_scene(10, c=4))


def test_grid_reference_table_alternates_shift():
    pos = _scene(400).positions
    a = reference_table(pos, 16, "grid", 0.5, 0)
    b = reference_table(pos, 16, "grid", 0.5, 1)
    assert not np.array_equal(a.offsets, b.offsets) or not np.array_equal(a.indices, b.indices)
