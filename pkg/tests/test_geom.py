import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointgva.geom import NeighborTable, PartitionMap, PointCloud, validate


def test_empty_cloud_validates():
    cloud = PointCloud(np.zeros((0, 3)), np.zeros((0, 4)))
    assert validate(cloud).ok
    assert cloud.n == 0


def test_nan_position_is_reported_at_its_row():
    pos = np.random.default_rng(0).random((10, 3))
    pos[7, 1] = np.nan
    rep = validate(PointCloud(pos, np.zeros((10, 2))))
    assert not rep.ok
    assert rep.bad_rows == [7]
    assert "row 7" in rep.violations[0]


def test_random_finite_cloud_validates():
    rng = np.random.default_rng(1)
    assert validate(PointCloud(rng.random((1000, 3)), rng.standard_normal((1000, 16)))).ok


def test_shape_errors():
    with pytest.raises(ValueError, match="n x 3"):
        PointCloud(np.zeros((4, 2)), np.zeros((4, 1)))
    with pytest.raises(ValueError, match="row count"):
        PointCloud(np.zeros((4, 3)), np.zeros((5, 1)))


def test_cloud_copies_and_freezes_its_arrays():
    pos = np.zeros((3, 3))
    cloud = PointCloud(pos, np.zeros((3, 1)))
    pos[0, 0] = 5.0  # caller's array stays writable and independent
    assert cloud.positions[0, 0] == 0.0
    with pytest.raises(ValueError):
        cloud.positions[0, 0] = 1.0


def test_permute_and_translate():
    rng = np.random.default_rng(2)
    cloud = PointCloud(rng.random((5, 3)), rng.random((5, 2)))
    perm = np.array([4, 2, 0, 1, 3])
    moved = cloud.permuted(perm).translated([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(moved.features, cloud.features[perm])
    np.testing.assert_allclose(moved.positions, cloud.positions[perm] + [1, 2, 3])


def test_neighbor_table_rows():
    nbr = NeighborTable.from_lists([[0, 2], [1], [2, 0, 1]], 3)
    assert nbr.n_query == 3
    np.testing.assert_array_equal(nbr.counts, [2, 1, 3])
    np.testing.assert_array_equal(nbr.row(2), [2, 0, 1])
    np.testing.assert_array_equal(nbr.row_ids, [0, 0, 1, 2, 2, 2])
    with pytest.raises(ValueError, match="different lengths"):
        nbr.as_fixed()


def test_neighbor_table_rejects_bad_layouts():
    with pytest.raises(ValueError, match="out of range"):
        NeighborTable.from_lists([[0, 3]], 3)
    with pytest.raises(ValueError, match="non-decreasing"):
        NeighborTable(np.array([0, 2, 1]), np.array([0]), 3)
    with pytest.raises(ValueError, match="offsets end"):
        NeighborTable(np.array([0, 2]), np.array([0]), 3)


def test_partition_members_are_ascending():
    part = PartitionMap.from_cell_ids([1, 0, 1, 2, 0])
    assert part.n_cells == 3
    assert [m.tolist() for m in part.members] == [[1, 4], [0, 2], [3]]
    with pytest.raises(ValueError, match="dense"):
        PartitionMap.from_cell_ids([0, 2])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=60))
def test_partition_round_trip(ids):
    # relabel to dense ids, then check members and cell_of agree both ways
    _, dense = np.unique(ids, return_inverse=True)
    part = PartitionMap.from_cell_ids(dense)
    seen = np.zeros(part.n, dtype=int)
    for j, mem in enumerate(part.members):
        assert np.all(part.cell_of[mem] == j)
        seen[mem] += 1
    assert np.all(seen == 1)
    table = part.as_neighbor_table()
    assert table.n_query == part.n_cells
