import math

import numpy as np
import pytest

from hamsde.coefficients import BumpFamily, CoefficientSpec
from hamsde.cylinder import PolyCylinder, default_audit_battery
from hamsde.errors import ConfigError, ContractViolationError
from hamsde.kolmogorov import (GibbsSample, OperatorContext, apply_A_Phi,
                               apply_L_Phi, apply_S, audit_identities,
                               carre_du_champ, mu_phi_expectation,
                               sample_gibbs_states, sample_product_gaussian)
from hamsde.potential import make_potential

PI = math.pi
LAM1 = PI**-2.0

LINEAR = CoefficientSpec(alpha1=1.0, alpha2=1.0, sigma1=1.0, sigma2=1.0,
                         sigma3=1.5, bumps=None)
CONVEX = CoefficientSpec(alpha1=1.2, alpha2=0.9, sigma1=0.75, sigma2=0.9,
                         sigma3=1.35, bumps=BumpFamily())


def _linear_ctx(n=2):
    return OperatorContext(spec=LINEAR, n=n, phi=make_potential("zero"),
                           phi_variant="zero")


def _convex_ctx(n=2):
    return OperatorContext(spec=CONVEX, n=n, phi=make_potential("quadratic", a1=0.5),
                           phi_variant="raw")


def test_generator_on_v1_linear():
    # f = v1: S f = -v1 lam1^-1 (lam1 + lam1) = -2 v1, A f = u1
    ctx = _linear_ctx()
    f = PolyCylinder.coordinate_v(1, 2)
    w = (np.array([0.7, -0.1]), np.array([0.4, 0.2]))
    assert apply_S(ctx, f, w) == pytest.approx(-0.8, abs=1e-14)
    assert apply_A_Phi(ctx, f, w) == pytest.approx(0.7, abs=1e-14)
    assert apply_L_Phi(ctx, f, w) == pytest.approx(-0.8 - 0.7, abs=1e-14)


def test_generator_on_u1_linear():
    # f = u1 is flat in v: S f = 0 and L f = v1 (the kinematic drift)
    ctx = _linear_ctx()
    f = PolyCylinder.coordinate_u(1, 2)
    w = (np.array([0.7, -0.1]), np.array([0.4, 0.2]))
    assert apply_S(ctx, f, w) == 0.0
    assert apply_L_Phi(ctx, f, w) == pytest.approx(0.4, abs=1e-14)


def test_generator_on_v1_squared_linear():
    # f = v1^2: S f = 2 lam22_1 - 2 v1^2 lam1^-1 lam22_1 = 4 lam1 - 4 v1^2
    ctx = _linear_ctx()
    v1 = PolyCylinder.coordinate_v(1, 2)
    f = v1 * v1
    w = (np.array([0.0, 0.0]), np.array([0.5, -0.3]))
    assert apply_S(ctx, f, w) == pytest.approx(4.0 * LAM1 - 1.0, abs=1e-13)


def test_potential_drift_enters_A():
    # quadratic phi with a1 = 1/2 has grad Phi_n(u) = u
    ctx = _convex_ctx()
    f = PolyCylinder.coordinate_v(1, 2)
    u = np.array([0.9, 0.0])
    v = np.array([0.0, 0.0])
    expected = 0.9 * (LAM1 ** (0.75 - 1.2) + LAM1**0.75)
    assert apply_A_Phi(ctx, f, (u, v)) == pytest.approx(expected, rel=1e-12)


def test_carre_du_champ_values():
    ctx = _linear_ctx()
    v1 = PolyCylinder.coordinate_v(1, 2)
    u1 = PolyCylinder.coordinate_u(1, 2)
    w = (np.array([0.3, 0.1]), np.array([-0.2, 0.8]))
    assert carre_du_champ(ctx, v1, v1, w) == pytest.approx(2.0 * LAM1, rel=1e-14)
    assert carre_du_champ(ctx, u1, v1, w) == 0.0
    assert carre_du_champ(ctx, u1, u1, w) == 0.0


def test_carre_du_champ_is_half_product_defect():
    ctx = _convex_ctx()
    rng = np.random.default_rng(9)
    U = rng.standard_normal((40, 2))
    V = rng.standard_normal((40, 2))
    v1 = PolyCylinder.coordinate_v(1, 2)
    u2 = PolyCylinder.coordinate_u(2, 2)
    f = v1 * v1 + u2
    g = v1 * u2 - 2.0
    lhs = apply_L_Phi(ctx, f * g, (U, V))
    rhs = (np.asarray(f.value(U, V)) * apply_L_Phi(ctx, g, (U, V))
           + np.asarray(g.value(U, V)) * apply_L_Phi(ctx, f, (U, V))
           + 2.0 * carre_du_champ(ctx, f, g, (U, V)))
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_operator_batch_matches_single():
    ctx = _convex_ctx()
    f = PolyCylinder.monomial(1.0, (1, 0), (0, 2))
    rng = np.random.default_rng(10)
    U = rng.standard_normal((7, 2))
    V = rng.standard_normal((7, 2))
    batch = apply_L_Phi(ctx, f, (U, V))
    for b in range(7):
        single = apply_L_Phi(ctx, f, (U[b], V[b]))
        assert batch[b] == pytest.approx(single, rel=1e-13, abs=1e-13)


def test_base_dim_guard():
    ctx = _linear_ctx(n=2)
    f = PolyCylinder.coordinate_v(3, 3)
    w = (np.zeros(2), np.zeros(2))
    with pytest.raises(ContractViolationError):
        apply_S(ctx, f, w)
    with pytest.raises(ContractViolationError):
        apply_S(ctx, PolyCylinder.coordinate_v(1, 2), (np.zeros(3), np.zeros(3)))


def test_context_validation():
    with pytest.raises(ConfigError):
        OperatorContext(spec=LINEAR, n=0, phi=make_potential("zero"))
    with pytest.raises(ConfigError):
        OperatorContext(spec=LINEAR, n=2, phi=make_potential("zero"),
                        phi_variant="damped")


def test_product_gaussian_moments():
    ctx = OperatorContext(spec=CONVEX, n=3, phi=make_potential("zero"),
                          phi_variant="zero")
    U, V = sample_product_gaussian(ctx, 150_000, seed=1)
    lam = np.array([(k * PI) ** -2.0 for k in range(1, 4)])
    assert np.allclose(U.var(axis=0), lam**1.2, rtol=0.03)
    assert np.allclose(V.var(axis=0), lam**0.9, rtol=0.03)


def test_product_gaussian_prefix_stable():
    ctx = _linear_ctx()
    U1, V1 = sample_product_gaussian(ctx, 500, seed=4)
    U2, V2 = sample_product_gaussian(ctx, 9000, seed=4)
    assert np.array_equal(U1, U2[:500])
    assert np.array_equal(V1, V2[:500])


def test_mu_phi_expectation_zero_potential():
    ctx = _linear_ctx()
    v1sq = PolyCylinder.monomial(1.0, (0, 0), (2, 0))
    est = mu_phi_expectation(ctx, v1sq, budget=100_000, seed=2)
    value, se = est
    assert not est.degenerate
    assert est.ess == pytest.approx(100_000.0)
    assert abs(value - LAM1) <= 3.0 * se


def test_mu_phi_expectation_quadratic_reweighting():
    # phi = u^2/2 tilts each u_k to variance lam^1.2 / (1 + lam^1.2)
    ctx = _convex_ctx()
    u1sq = PolyCylinder.monomial(1.0, (2, 0), (0, 0))
    value, se = mu_phi_expectation(ctx, u1sq, budget=200_000, seed=3)
    lam_a1 = LAM1**1.2
    expected = lam_a1 / (1.0 + lam_a1)
    assert abs(value - expected) <= 3.0 * se
    assert se < 0.01


def test_mu_phi_expectation_callable():
    ctx = _linear_ctx()
    value, se = mu_phi_expectation(ctx, lambda U, V: U[:, 0] * V[:, 0],
                                   budget=50_000, seed=5)
    assert abs(value) <= 3.0 * se


def test_gibbs_states_shape_and_moments():
    ctx = _linear_ctx()
    sample = sample_gibbs_states(ctx, 5000, seed=6)
    assert isinstance(sample, GibbsSample)
    assert sample.states.shape == (5000, 4)
    assert not sample.degenerate
    # zero potential: resampling is uniform, variances stay Gaussian
    var = sample.states.var(axis=0)
    lam = np.array([LAM1, (2 * PI) ** -2.0])
    assert np.allclose(var[:2], lam, rtol=0.1)
    assert np.allclose(var[2:], lam, rtol=0.1)


def test_gibbs_reference_consistency():
    ctx = _convex_ctx()
    sample = sample_gibbs_states(ctx, 200, seed=7)
    u1sq = PolyCylinder.monomial(1.0, (2, 0), (0, 0))
    mean, se, _ = sample.reference(u1sq)
    lam_a1 = LAM1**1.2
    expected = lam_a1 / (1.0 + lam_a1)
    assert abs(mean - expected) <= 4.0 * se
    norm = sample.centered_norm(u1sq, mean)
    assert norm > 0.0


def test_degenerate_weights_flagged():
    spiky = OperatorContext(spec=LINEAR, n=4,
                            phi=make_potential("quadratic", a1=5e7),
                            phi_variant="raw")
    est = mu_phi_expectation(spiky, PolyCylinder.coordinate_u(1, 1),
                             budget=20_000, seed=8)
    assert est.degenerate
    sample = sample_gibbs_states(spiky, 100, seed=8)
    assert sample.degenerate


def test_audit_identities_linear_all_pass():
    ctx = _linear_ctx(n=2)
    report = audit_identities(ctx, default_audit_battery(2), budget=40_000, seed=9)
    assert report.all_pass
    identities = {row.identity for row in report.rows}
    assert identities == {"symmetry", "antisymmetry", "dissipativity",
                          "invariance", "ibp_residual", "first_order_bound"}
    csv_text = report.to_csv()
    assert csv_text.splitlines()[0] == "pair,identity,gap,se,verdict"
    assert len(csv_text.splitlines()) == len(report.rows) + 1
