import numpy as np
import pytest
from scipy import integrate, stats

from qvlab.laws import (
    DensityLaw,
    DiscreteLaw,
    FixedTimeJump,
    JumpModel,
    PoissonJumps,
    composite_gauss_legendre,
    compensator_queries,
    expect,
    restricted_nodes,
)

PM1 = DiscreteLaw(((-1.0, 0.5), (1.0, 0.5)))


def test_discrete_law_validation():
    with pytest.raises(ValueError):
        DiscreteLaw(((0.0, 1.0),))
    with pytest.raises(ValueError):
        DiscreteLaw(((1.0, 0.4), (2.0, 0.4)))
    with pytest.raises(ValueError):
        DiscreteLaw(())


def test_density_law_validation():
    with pytest.raises(ValueError):
        DensityLaw("cauchy", (("lo", -1.0), ("hi", 1.0)))
    with pytest.raises(ValueError):
        DensityLaw("uniform", (("lo", 1.0), ("hi", -1.0)))
    with pytest.raises(ValueError):
        DensityLaw("truncnorm", (("mean", 0.0), ("std", 0.0), ("lo", -1.0), ("hi", 1.0)))


def test_gauss_legendre_is_exact_for_polynomials():
    x, w = composite_gauss_legendre(-1.0, 2.0, 3, breakpoints=[0.3])
    assert np.dot(w, x**7) == pytest.approx((2.0**8 - 1.0) / 8, rel=1e-13)


@pytest.mark.parametrize("law", [
    DensityLaw("uniform", (("lo", -0.3), ("hi", 0.7))),
    DensityLaw("truncnorm", (("mean", 0.2), ("std", 0.5), ("lo", -1.0), ("hi", 2.0))),
])
def test_density_nodes_integrate_to_one(law):
    x, w = law.nodes()
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_truncnorm_sampling_matches_scipy():
    law = DensityLaw("truncnorm", (("mean", 0.2), ("std", 0.5), ("lo", -1.0), ("hi", 2.0)))
    ref = stats.truncnorm((-1.0 - 0.2) / 0.5, (2.0 - 0.2) / 0.5, loc=0.2, scale=0.5)
    draws = law.sample(np.random.default_rng(0), 20_000)
    assert stats.kstest(draws, ref.cdf).pvalue > 1e-3


def test_truncated_normal_second_moment():
    # oracle: scipy's truncated normal, integrated adaptively over |x| <= 3
    law = DensityLaw("truncnorm", (("mean", 0.0), ("std", 0.5), ("lo", -4.0), ("hi", 4.0)))
    ref = stats.truncnorm(-8.0, 8.0, loc=0.0, scale=0.5)
    oracle = 5.0 * integrate.quad(lambda x: x * x * ref.pdf(x), -3.0, 3.0, epsabs=1e-14, epsrel=1e-14)[0]
    info = compensator_queries(JumpModel(PoissonJumps(5.0, law)), a=3.0)
    assert info.nu_c_integral(np.square, 1.0) == pytest.approx(oracle, abs=1e-10)
    assert oracle == pytest.approx(1.2499999063952898, abs=1e-13)


def test_restriction_indicator():
    law = DiscreteLaw(((1.5, 1.0),))
    x, w = restricted_nodes(law, 1.0)
    assert x.size == 0
    assert expect(law, np.abs, a=1.0) == 0.0
    assert expect(PM1, np.abs) == 1.0


def test_compensator_queries_examples():
    model = JumpModel(fixed_times=(FixedTimeJump(10, PM1, 0.3),))
    info = compensator_queries(model)
    assert info.calA == frozenset({10})
    assert info.atom_integral(10, np.abs) == pytest.approx(0.3)
    assert compensator_queries(JumpModel(PoissonJumps(2.0, PM1))).calA == frozenset()


def test_jump_model_validation():
    with pytest.raises(ValueError):
        JumpModel(fixed_times=(FixedTimeJump(3, PM1), FixedTimeJump(3, PM1)))
    with pytest.raises(ValueError):
        FixedTimeJump(0, PM1)
    with pytest.raises(ValueError):
        FixedTimeJump(3, PM1, 1.5)
    with pytest.raises(ValueError):
        PoissonJumps(-1.0, PM1)
    m = JumpModel(fixed_times=(FixedTimeJump(9, PM1), FixedTimeJump(3, PM1)))
    assert m.predictable_indices.tolist() == [3, 9]


def test_kinked_integrand_quadrature_converges_at_second_order():
    # kink of W(y, x) at x = -y sits off the panel edges
    law = DensityLaw("uniform", (("lo", -0.3), ("hi", 0.3)))
    y = 0.1

    def w(x):
        return np.abs(y + x) - abs(y) - x * np.sign(y)

    oracle = integrate.quad(w, -0.3, 0.3, points=[-y], epsabs=1e-15)[0] / 0.6
    errs = []
    for refine in (1, 4):
        x, wt = restricted_nodes(law, 1.0, refine)
        errs.append(abs(np.dot(wt, w(x)) - oracle))
    assert errs[0] <= 1e-6
    assert 8.0 <= errs[0] / errs[1] <= 32.0
