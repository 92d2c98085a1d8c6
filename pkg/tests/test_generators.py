import numpy as np
import pytest

from qvlab.generators import (
    DriftSpec,
    PerturbationFamily,
    ProcessSpec,
    ZeroQVSpec,
    fgn_autocovariance,
    fgn_circulant,
    gen_bm,
    gen_dirichlet,
    gen_fbm,
    gen_holder,
    gen_jumps,
    gen_perturbed_family,
    _fgn_cholesky,
)
from qvlab.laws import DiscreteLaw, FixedTimeJump, JumpModel, PoissonJumps
from qvlab.partitions import dyadic, dyadic_refining
from qvlab.paths import TimeGrid, combine
from qvlab.quadvar import partition_qv, weak_qv
from qvlab.streams import stream

from conftest import bm_cp

G = TimeGrid(1.0, 2**10)


def test_bm_sigma_zero_is_zero_path():
    assert np.all(gen_bm(G, 0.0, stream(0, "bm")).values == 0.0)


def test_bm_is_deterministic():
    np.testing.assert_array_equal(gen_bm(G, 1.0, stream(9, "bm")).values, gen_bm(G, 1.0, stream(9, "bm")).values)


def test_bm_expected_dyadic_qv():
    sigma = 1.7
    vals = np.array([partition_qv(gen_bm(G, sigma, stream(s, "bm")), dyadic(G, 8)) for s in range(200)])
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean() - sigma**2) <= 3 * se


def test_fgn_increment_variance():
    # oracle: Var(B_H(t + dt) - B_H(t)) = scale^2 dt^{2H}
    h, scale = 0.75, 0.8
    inc = np.concatenate([np.diff(gen_fbm(G, h, scale, stream(s, "zero_qv")).values)[[0, 500]] for s in range(400)])
    var, oracle = inc.var(ddof=1), scale**2 * G.dt ** (2 * h)
    se = oracle * np.sqrt(2.0 / (inc.size - 1))
    assert abs(var - oracle) <= 3 * se


def test_fgn_circulant_matches_covariance():
    n, h = 32, 0.7
    draws = np.array([fgn_circulant(n, h, stream(s, "zero_qv")) for s in range(4000)])
    emp = np.mean(draws[:, 0:1] * draws, axis=0)[:4]
    np.testing.assert_allclose(emp, fgn_autocovariance(3, h), atol=0.08)


def test_fgn_cholesky_fallback_and_limit():
    x = _fgn_cholesky(16, 0.75, np.random.default_rng(0))
    assert x.shape == (16,)
    with pytest.raises(RuntimeError):
        _fgn_cholesky(5000, 0.75, np.random.default_rng(0))


def test_fbm_requires_zero_qv_hurst():
    with pytest.raises(ValueError):
        gen_fbm(G, 0.5, 1.0, stream(0, "zero_qv"))
    with pytest.raises(ValueError):
        ZeroQVSpec("fbm", 0.4)


def test_fbm_dyadic_qv_decreasing_trend():
    grid = TimeGrid(1.0, 2**14)
    rs = dyadic_refining(grid, 6, 14)
    est = np.array([weak_qv(gen_fbm(grid, 0.75, 1.0, stream(s, "zero_qv")), rs).estimates for s in range(50)])
    assert np.all(np.diff(np.median(est, axis=0)) < 0)


def test_holder_path_is_deterministic_and_continuous():
    a, b = gen_holder(G, 0.7, 1.0), gen_holder(G, 0.7, 1.0)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.jump_idx.size == 0 and a.values[0] == 0.0


def test_no_jumps_model():
    idx, size = gen_jumps(G, JumpModel(), stream(0, "jumps.poisson"))
    assert idx.size == 0 and size.size == 0


def test_fixed_time_point_mass():
    model = JumpModel(fixed_times=(FixedTimeJump(G.index_of(0.5), DiscreteLaw(((2.0, 1.0),)), 1.0),))
    idx, size = gen_jumps(G, model, stream(0, "jumps.poisson"))
    assert idx.tolist() == [512] and size.tolist() == [2.0]


def test_poisson_mean_count():
    model = JumpModel(PoissonJumps(5.0, DiscreteLaw(((1.0, 1.0),))))
    counts = np.array([gen_jumps(G, model, stream(s, "jumps.poisson"))[1].sum() for s in range(500)])
    se = np.sqrt(5.0 / 500)
    # merged collisions can only lower the count, and only by O(dt)
    assert abs(counts.mean() - 5.0) <= 3 * se


def test_component_identity_and_jump_lists(sample):
    np.testing.assert_array_equal(combine(1.0, sample.z, 1.0, sample.c).values, sample.x.values)
    np.testing.assert_array_equal(sample.x.jump_idx, sample.z.jump_idx)
    assert sample.c.jump_idx.size == 0


def test_bm_only_spec_gives_bm():
    spec = ProcessSpec(G, 1.0)
    np.testing.assert_array_equal(gen_dirichlet(spec, 4).x.values, gen_bm(G, 1.0, stream(4, "bm")).values)


def test_independence_flag_keeps_z_fixed():
    spec = bm_cp(2**10, zero_qv=True)
    a = gen_dirichlet(spec, 11, c_seed=1)
    b = gen_dirichlet(spec, 11, c_seed=2)
    np.testing.assert_array_equal(a.z.values, b.z.values)
    assert not np.array_equal(a.c.values, b.c.values)


def test_drift_component():
    spec = ProcessSpec(G, 0.0, drift=DriftSpec(2.0, ((0.0, 0.0), (1.0, 1.0))))
    np.testing.assert_allclose(gen_dirichlet(spec, 0).x.values, 3.0 * G.times, atol=1e-14)


def test_continuous_part_has_no_repeated_values():
    # non-atomic X^c: no collisions across 10^4 seeds at a fixed time
    grid = TimeGrid(1.0, 64)
    vals = np.array([gen_bm(grid, 1.0, stream(s, "bm")).values[32] for s in range(10_000)])
    assert np.unique(vals).size == vals.size


def test_perturbation_eps_zero_is_identity(sample):
    fam = PerturbationFamily("add_bm", (2, 3), c=0.0)
    for xn in gen_perturbed_family(sample, fam, 1):
        np.testing.assert_array_equal(xn.values, sample.x.values)


def test_add_bm_difference_qv():
    grid = TimeGrid(1.0, 2**14)
    spec = bm_cp(2**14)
    fam = PerturbationFamily("add_bm", (2, 6))
    rel = []
    for s in range(30):
        smp = gen_dirichlet(spec, s)
        for n, xn in zip(fam.n_range, gen_perturbed_family(smp, fam, s)):
            rel.append(partition_qv(combine(1.0, xn, -1.0, smp.x), dyadic(grid, 14)) / fam.eps(n) ** 2 - 1.0)
    assert abs(np.median(rel)) <= 0.05


def test_jump_scale_difference_is_exact(sample):
    fam = PerturbationFamily("jump_scale", (1, 4))
    assert fam.hypothesis_status == "hypothesis-unverified"
    for n, xn in zip(fam.n_range, gen_perturbed_family(sample, fam, 0)):
        d = combine(1.0, xn, -1.0, sample.x)
        expected = fam.eps(n) ** 2 * np.sum(sample.x.jump_size**2)
        assert partition_qv(d, dyadic(sample.x.grid, 12)) == pytest.approx(expected, rel=1e-12)


def test_family_validation():
    with pytest.raises(ValueError):
        PerturbationFamily("rotate", (1,))
    with pytest.raises(ValueError):
        PerturbationFamily("add_bm", ())
    np.testing.assert_allclose(PerturbationFamily("add_bm", (2, 4)).eps_values, [0.5, 0.25])
