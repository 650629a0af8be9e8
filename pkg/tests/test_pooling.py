import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointgva import oracles
from pointgva.geom import PointCloud
from pointgva.numerics import Param
from pointgva.pooling import (
    Pool,
    fps_knn_pool,
    grid_knn_pool,
    grid_pool,
    interp_unpool,
    interpolation_weights,
    map_unpool,
    unpool,
)
from pointgva.spatial import GridSpec


def _cloud(n, c=4, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.random((n, 3)) * scale, rng.standard_normal((n, c)))


def test_one_point_per_cell_is_identity():
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [0.0, 0, 1]])
    feats = np.random.default_rng(0).standard_normal((4, 3))
    res = grid_pool(PointCloud(pos, feats), GridSpec(0.5), Param(np.eye(3)))
    assert res.n == 4
    np.testing.assert_array_equal(res.features.data, feats)
    np.testing.assert_array_equal(res.positions, pos)


def test_single_cell_gives_global_max_and_centroid():
    cloud = _cloud(30, scale=0.1)
    res = grid_pool(cloud, GridSpec(1.0), Param(np.eye(4)))
    assert res.n == 1
    np.testing.assert_array_equal(res.features.data[0], cloud.features.max(axis=0))
    np.testing.assert_allclose(res.positions[0], cloud.positions.mean(axis=0), atol=1e-15)


def test_unpool_from_one_cell_broadcasts():
    cloud = _cloud(12, scale=0.1)
    res = grid_pool(cloud, GridSpec(1.0))
    up = map_unpool(np.array([[1.0, 2.0, 3.0, 4.0]]), res.map).data
    np.testing.assert_array_equal(up, np.tile([1.0, 2.0, 3.0, 4.0], (12, 1)))


def test_map_unpool_rows_match_their_cell():
    cloud = _cloud(400, seed=1)
    res = grid_pool(cloud, GridSpec(0.2))
    up = map_unpool(res.features, res.map).data
    for i in range(cloud.n):
        np.testing.assert_array_equal(up[i], res.features.data[res.map.cell_of[i]])


def test_map_unpool_checks_row_count():
    res = grid_pool(_cloud(50), GridSpec(0.3))
    with pytest.raises(ValueError, match="pooled rows"):
        map_unpool(np.zeros((res.n + 1, 4)), res.map)


def test_fps_knn_full_ratio_k1_is_a_permutation():
    cloud = _cloud(60, seed=2)
    res = fps_knn_pool(cloud, 1.0, 1)
    np.testing.assert_array_equal(res.features.data, cloud.features[res.centers])


def test_fps_knn_one_center_all_points_is_global_max():
    cloud = _cloud(40, seed=3)
    res = fps_knn_pool(cloud, 1 / 40, 40)
    assert res.n == 1
    np.testing.assert_array_equal(res.features.data[0], cloud.features.max(axis=0))


def test_knn_pools_overlap_but_grid_cells_do_not():
    cloud = _cloud(500, seed=4)
    res = grid_knn_pool(cloud, GridSpec(0.25), 16)
    counts = np.bincount(res.neighbors.indices, minlength=cloud.n)
    assert counts.max() > 1
    grid = grid_pool(cloud, GridSpec(0.25))
    assert np.array_equal(np.sort(grid.map.order), np.arange(cloud.n))


def test_interp_at_coincident_point_copies_feature():
    pooled_pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]])
    pooled = np.array([[1.0, -1.0], [5.0, 3.0], [2.0, 2.0]])
    out = interp_unpool(pooled_pos, pooled, np.array([[1.0, 0, 0]])).data
    np.testing.assert_allclose(out[0], pooled[1], atol=1e-6)


def test_interp_weights_sum_to_one():
    cloud = _cloud(300, seed=5)
    res = grid_pool(cloud, GridSpec(0.3))
    nbr, w = interpolation_weights(res.positions, cloud.positions)
    sums = np.add.reduceat(w, nbr.offsets[:-1])
    np.testing.assert_allclose(sums, 1.0, atol=1e-14)
    assert np.all(nbr.counts == 3)


def test_interp_with_fewer_pooled_points_than_neighbors():
    out = interp_unpool(np.array([[0.0, 0, 0]]), np.array([[7.0]]), np.random.random((5, 3))).data
    np.testing.assert_array_equal(out, 7.0)


def test_uniform_features_stay_uniform():
    rng = np.random.default_rng(6)
    cloud = PointCloud(rng.random((200, 3)), np.full((200, 3), 2.5))
    for res in (grid_pool(cloud, GridSpec(0.3)), fps_knn_pool(cloud, 0.25, 8),
                grid_knn_pool(cloud, GridSpec(0.3), 8)):
        np.testing.assert_array_equal(res.features.data, 2.5)
        method = "map" if res.neighbors is None else "interp"
        np.testing.assert_allclose(unpool(res, res.features, cloud.positions, method).data, 2.5,
                                   atol=1e-13)


def test_grid_pool_matches_loop_oracle():
    rng = np.random.default_rng(7)
    cloud = _cloud(2000, c=6, seed=7)
    u = rng.standard_normal((6, 5))
    res = grid_pool(cloud, GridSpec(0.15), Param(u))
    centers, pooled, cell_of = oracles.loop_grid_pool(cloud.positions, cloud.features, 0.15, u)
    np.testing.assert_array_equal(res.map.cell_of, cell_of)
    np.testing.assert_allclose(res.features.data, pooled, atol=1e-12)
    np.testing.assert_allclose(res.positions, centers, atol=1e-12)


def test_knn_pools_match_loop_oracle():
    cloud = _cloud(800, seed=8)
    for res in (fps_knn_pool(cloud, 0.25, 16), grid_knn_pool(cloud, GridSpec(0.2), 16)):
        pooled, _ = oracles.loop_knn_pool(cloud.positions, cloud.features, res.positions, 16)
        np.testing.assert_allclose(res.features.data, pooled, atol=1e-12)


def test_interp_matches_loop_oracle():
    cloud = _cloud(500, seed=9)
    res = fps_knn_pool(cloud, 0.25, 8)
    want = oracles.loop_interp(res.positions, res.features.data, cloud.positions)
    np.testing.assert_allclose(interp_unpool(res.positions, res.features, cloud.positions).data,
                               want, atol=1e-12)


def test_unpool_method_errors():
    cloud = _cloud(100)
    res = grid_knn_pool(cloud, GridSpec(0.3), 4)
    with pytest.raises(ValueError, match="non-overlapping"):
        unpool(res, res.features, cloud.positions, "map")
    with pytest.raises(ValueError, match="unknown"):
        unpool(res, res.features, cloud.positions, "nearest")


def test_pool_argument_errors():
    with pytest.raises(ValueError, match="empty"):
        grid_pool(PointCloud(np.zeros((0, 3)), np.zeros((0, 2))), GridSpec(1.0))
    with pytest.raises(ValueError, match="k=5"):
        fps_knn_pool(_cloud(3), 0.5, 5)
    with pytest.raises(ValueError, match="unknown pooling"):
        Pool(4, 4, np.random.default_rng(0), method="voxel")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.floats(0.05, 2.0), st.integers(0, 2**31 - 1))
def test_grid_pool_cell_count_and_bounds(n, gs, seed):
    cloud = _cloud(n, seed=seed)
    res = grid_pool(cloud, GridSpec(gs))
    assert 1 <= res.n <= n
    # pooled max dominates every member's features
    up = map_unpool(res.features, res.map).data
    assert np.all(up >= cloud.features)


def test_pool_stage_output_is_nonnegative():
    cloud = _cloud(300, seed=10)
    for method in Pool.METHODS:
        stage = Pool(4, 8, np.random.default_rng(11), method=method, k=8)
        res = stage(cloud.positions, cloud.features, 0.3)
        assert res.features.shape == (res.n, 8)
        assert np.all(res.features.data >= 0)
