import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qvlab.generators import gen_bm
from qvlab.partitions import (
    FixedPartition,
    PartitionError,
    build_partition,
    dyadic,
    dyadic_refining,
    full_grid,
    hitting_time_partition,
    mesh,
    random_mesh,
    scheme_label,
    shifted_dyadic,
    validate_scheme,
)
from qvlab.paths import CadlagPath, TimeGrid
from qvlab.streams import stream

G = TimeGrid(1.0, 2**10)


def test_dyadic_points_and_mesh():
    p = dyadic(G, 4)
    assert len(p) == 17
    assert p.indices[1] == 64
    assert mesh(p, G) == pytest.approx(1 / 16)


def test_dyadic_rejects_depth_beyond_grid():
    with pytest.raises(PartitionError):
        dyadic(G, 11)
    with pytest.raises(PartitionError):
        dyadic(TimeGrid(1.0, 12), 3)


def test_refining_sequence_is_nested():
    rs = dyadic_refining(G, 2, 6)
    for (_, coarse), (_, fine) in zip(rs, list(rs)[1:]):
        assert set(coarse.indices) <= set(fine.indices)
    assert rs.finest.indices.size == 65


def test_invalid_partitions():
    with pytest.raises(PartitionError):
        FixedPartition(np.array([1, 5]))
    with pytest.raises(PartitionError):
        FixedPartition(np.array([0, 5, 5]))


def test_shifted_dyadic_moves_interior_points():
    p = shifted_dyadic(G, 3, 0.5)
    assert p.indices[0] == 0 and p.indices[-1] == G.n_steps
    assert 64 in p.indices and 128 not in p.indices


def test_random_mesh_mean_gap():
    p = random_mesh(G, 8 * G.dt, stream(1, "random_mesh"))
    gaps = np.diff(p.indices)
    assert p.indices[-1] == G.n_steps
    assert 6 < gaps.mean() < 10


def test_hitting_time_levels():
    x = CadlagPath(G, G.times.copy())  # linear path
    p = hitting_time_partition(x, epsilon=0.1)
    # moves of 0.1 on a 1/1024 grid take ceil(102.4) steps
    assert np.all(np.diff(p.indices)[:-1] == 103)


def test_hitting_time_cap():
    x = CadlagPath.zeros(G)
    p = hitting_time_partition(x, epsilon=1.0, cap=0.05)
    assert np.all(np.diff(p.indices)[:-1] == 51)


def test_hitting_time_fires_on_jump():
    x = CadlagPath(G, np.zeros(G.n_steps + 1), [300], [1.0])
    p = hitting_time_partition(x, epsilon=0.5)
    assert 300 in p.indices


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), cut=st.integers(50, 900), eps=st.floats(0.02, 0.3))
def test_hitting_time_is_adapted(seed, cut, eps):
    # replacing the path after `cut` cannot move points at or before `cut`
    x = gen_bm(G, 1.0, stream(seed, "bm"))
    other = gen_bm(G, 1.0, stream(seed + 1, "bm")).values
    spliced = np.concatenate([x.values[:cut + 1], other[cut + 1:] - other[cut] + x.values[cut]])
    p = hitting_time_partition(x, eps, cap=0.1)
    q = hitting_time_partition(CadlagPath(G, spliced), eps, cap=0.1)
    np.testing.assert_array_equal(p.indices[p.indices <= cut], q.indices[q.indices <= cut])


def test_scheme_validation():
    validate_scheme({"name": "dyadic", "depth": 3})
    with pytest.raises(PartitionError):
        validate_scheme({"name": "midpoint"})
    with pytest.raises(PartitionError):
        validate_scheme({"name": "dyadic", "depth": 3, "colour": 1})


def test_build_partition_dispatch():
    x = gen_bm(G, 1.0, stream(0, "bm"))
    assert len(build_partition({"name": "grid"}, x)) == G.n_steps + 1
    assert len(build_partition({"name": "dyadic", "depth": 5}, x)) == 33
    a = build_partition({"name": "random", "mean_gap": 0.01, "seed": 3}, x)
    b = build_partition({"name": "random", "mean_gap": 0.01, "seed": 3}, x)
    np.testing.assert_array_equal(a.indices, b.indices)
    assert scheme_label({"name": "hitting", "epsilon": 0.05, "cap": 0.01}) == "hitting:cap=0.01:epsilon=0.05"


def test_full_grid():
    assert mesh(full_grid(G), G) == pytest.approx(G.dt)
