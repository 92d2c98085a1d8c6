import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qvlab.generators import gen_bm, gen_fbm
from qvlab.partitions import dyadic, dyadic_refining, full_grid, hitting_time_partition
from qvlab.paths import CadlagPath, TimeGrid, combine
from qvlab.quadvar import (
    kunita_watanabe_check,
    partition_covar,
    partition_qv,
    qv_process,
    strong_qv_sweep,
    triangle_check,
    weak_covar,
    weak_qv,
)
from qvlab.streams import stream

G = TimeGrid(1.0, 2**12)


def bm(seed, member=0, grid=G):
    return gen_bm(grid, 1.0, stream(seed, "bm", member))


def test_single_jump_every_partition():
    x = CadlagPath(G, np.zeros(G.n_steps + 1), [1000], [2.0])
    for p in (dyadic(G, 3), full_grid(G), hitting_time_partition(bm(0), 0.1)):
        assert partition_qv(x, p) == 4.0
        assert partition_qv(x, p, s_index=1000) == 4.0
        assert partition_qv(x, p, s_index=999) == 0.0


@pytest.mark.parametrize("k", [0, 3, 7, 12])
def test_linear_path_dyadic(k):
    x = CadlagPath(G, G.times.copy())
    assert partition_qv(x, dyadic(G, k)) == pytest.approx(2.0**-k, rel=1e-12)


def test_stopped_increment_convention():
    x = CadlagPath(G, G.times.copy())
    p = dyadic(G, 2)  # points at 0, 1024, 2048, ...
    s = 1536
    expected = 0.25**2 + (s / G.n_steps - 0.25) ** 2
    assert partition_qv(x, p, s_index=s) == pytest.approx(expected, rel=1e-12)
    assert qv_process(x, p)[s] == pytest.approx(expected, rel=1e-12)


def test_covar_examples():
    x, y = bm(1), bm(2)
    p = dyadic(G, 10)
    assert partition_covar(x, x, p) == pytest.approx(partition_qv(x, p), rel=1e-14)
    assert partition_covar(x, x.scaled(-3.0), p) == pytest.approx(-3.0 * partition_qv(x, p), rel=1e-12)
    assert weak_covar(x, y, dyadic_refining(G, 4, 6)).shape == (3,)


def test_independent_bm_covariation_mean_zero():
    # E[x, y] = 0 for independent pairs; 200-seed mean
    grid = TimeGrid(1.0, 2**14)
    p = dyadic(grid, 14)
    vals = [partition_covar(bm(s, 0, grid), bm(s, 1, grid), p) for s in range(200)]
    assert abs(np.mean(vals)) <= 0.02


def test_weak_qv_compound_poisson_has_no_continuous_part():
    rng = np.random.default_rng(3)
    idx = np.sort(rng.choice(np.arange(1, G.n_steps + 1), 7, replace=False))
    x = CadlagPath(G, np.full(G.n_steps + 1, 0.7), idx, rng.normal(size=7))
    rep = weak_qv(x, dyadic_refining(G, 4, 12))
    assert rep.cont_part_estimate <= 1e-10
    assert rep.jump_part == pytest.approx(np.sum(x.jump_size**2))


def test_weak_qv_bm_plus_jump():
    grid = TimeGrid(1.0, 2**14)
    x = combine(1.0, bm(5, grid=grid), 1.0, CadlagPath(grid, np.zeros(grid.n_steps + 1), [grid.n_steps // 2], [2.0]))
    rep = weak_qv(x, dyadic_refining(grid, 10, 14))
    assert rep.jump_part == 4.0
    assert rep.estimate == pytest.approx(5.0, abs=0.1)
    assert rep.cauchy.shape == (4,)
    assert rep.to_rows()[-3][0] == "summary:estimate"


def test_fbm_estimates_decrease():
    grid = TimeGrid(1.0, 2**14)
    rep = weak_qv(gen_fbm(grid, 0.75, 1.0, stream(0, "zero_qv")), dyadic_refining(grid, 6, 14))
    assert np.all(np.diff(rep.estimates) < 0)


def test_strong_sweep_examples():
    rng = np.random.default_rng(0)
    idx = np.array([256, 1024, 3000])
    pj = CadlagPath(G, np.zeros(G.n_steps + 1), idx, rng.normal(size=3))
    ref = weak_qv(pj, dyadic_refining(G, 12, 12))
    sweep = strong_qv_sweep(pj, [{"name": "grid"}, {"name": "hitting", "epsilon": 0.01}], ref)
    assert sweep.max_deviation <= 1e-12
    f = gen_fbm(G, 0.75, 1.0, stream(1, "zero_qv"))
    sw0 = strong_qv_sweep(f, [{"name": "dyadic", "depth": 8}], 0.0)
    assert sw0.max_deviation == pytest.approx(qv_process(f, dyadic(G, 8)).max())
    assert "never certify" in sw0.note


def test_strong_sweep_shrinks_for_bm():
    grid = TimeGrid(1.0, 2**16)
    devs_d, devs_h = [], []
    for s in range(20):
        x = bm(s, grid=grid)
        ref = grid.times
        devs_d.append(strong_qv_sweep(x, [{"name": "dyadic", "depth": 8}, {"name": "dyadic", "depth": 14}],
                                      ref).deviations)
        devs_h.append(strong_qv_sweep(x, [{"name": "hitting", "epsilon": 0.2, "cap": 0.05},
                                          {"name": "hitting", "epsilon": 0.05, "cap": 0.01}], ref).deviations)
    assert np.median([d[1] for d in devs_d]) < np.median([d[0] for d in devs_d])
    assert np.median([d[1] for d in devs_h]) < np.median([d[0] for d in devs_h])


def test_kunita_watanabe_examples():
    x, y = bm(1), bm(2)
    p = dyadic(G, 9)
    ok, slack = kunita_watanabe_check(x, x, p)
    assert ok and abs(slack) <= 1e-12
    ok, slack = kunita_watanabe_check(x, x.scaled(-1.0), p)
    assert ok and abs(slack) <= 1e-12
    ok, slack = kunita_watanabe_check(x, y, p)
    assert ok and slack > 0


def test_triangle_examples():
    x = bm(1)
    p = dyadic(G, 12)
    ok, slack = triangle_check([x], p)
    assert ok and abs(slack) <= 1e-12
    ok, slack = triangle_check([x, x.scaled(-1.0)], p)
    assert ok and slack == pytest.approx(4 * partition_qv(x, p))
    ok, slack = triangle_check([bm(1), bm(2), bm(3)], p)
    assert ok and slack > 0


paths_seed = st.integers(0, 100_000)


@settings(max_examples=40, deadline=None)
@given(seed=paths_seed, k=st.integers(0, 12), p2=st.integers(-6, 6), sign=st.sampled_from([1.0, -1.0]))
def test_scaling_by_power_of_two_is_exact(seed, k, p2, sign):
    a = sign * 2.0**p2
    x = bm(seed)
    rs = dyadic_refining(G, k, k)
    np.testing.assert_array_equal(weak_qv(x.scaled(a), rs).estimates, a * a * weak_qv(x, rs).estimates)


@settings(max_examples=40, deadline=None)
@given(seed=paths_seed, k=st.integers(1, 12))
def test_cauchy_schwarz_and_triangle_hold(seed, k):
    x, y = bm(seed, 0), bm(seed, 1)
    p = dyadic(G, k)
    assert kunita_watanabe_check(x, y, p)[0]
    assert triangle_check([x, y, combine(0.3, x, -2.0, y)], p)[0]


@settings(max_examples=30, deadline=None)
@given(seed=paths_seed, eps=st.floats(0.01, 0.5))
def test_qv_process_nondecreasing_at_partition_points(seed, eps):
    x = bm(seed)
    p = hitting_time_partition(x, eps)
    proc = qv_process(x, p)
    assert np.all(np.diff(proc[p.indices]) >= 0.0)
    assert partition_qv(x, p, s_index=int(p.indices[1])) <= partition_qv(x, p)


@settings(max_examples=30, deadline=None)
@given(seed=paths_seed, a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_covariation_bilinear(seed, a, b):
    x, y, z = bm(seed, 0), bm(seed, 1), bm(seed, 2)
    p = dyadic(G, 10)
    lhs = partition_covar(combine(a, x, b, y), z, p)
    rhs = a * partition_covar(x, z, p) + b * partition_covar(y, z, p)
    assert lhs == pytest.approx(rhs, abs=1e-12)
