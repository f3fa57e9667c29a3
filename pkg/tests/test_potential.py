import math

import numpy as np
import pytest

from hamsde.errors import ConfigError, ContractViolationError
from hamsde.potential import (BUILTIN_POTENTIALS, Phi_n, Phi_n_m,
                              RegularizationSpec, choose_q, grad_Phi_n,
                              grad_Phi_n_m, make_potential, moreau_yosida,
                              phi_m_derivs, psi_m_derivs)

PI = math.pi


def test_builtin_names():
    assert set(BUILTIN_POTENTIALS) == {
        "zero", "quadratic", "subquadratic", "cos-bump", "quartic"}
    with pytest.raises(ConfigError):
        make_potential("hexic")
    with pytest.raises(ConfigError):
        make_potential("quadratic", a1=-1.0)


def test_quadratic_parseval_fast_path():
    # int_0^1 a1 u(xi)^2 dxi = a1 sum u_k^2 by Parseval
    phi = make_potential("quadratic", a1=0.5)
    u = np.array([[0.3, -0.2, 0.1, 0.05]])
    val = Phi_n(phi, u, 4)
    assert float(val[0]) == pytest.approx(0.5 * float(np.sum(u**2)), abs=1e-12)
    g = grad_Phi_n(phi, u, 4)
    assert np.allclose(g, u, atol=1e-12)


def test_quartic_quadrature_against_dense_grid():
    phi = make_potential("quartic")
    u = np.array([[0.3, -0.2, 0.1, 0.05]])
    val = float(Phi_n(phi, u, 4)[0])
    xi = np.linspace(0.0, 1.0, 200001)[1:-1]
    k = np.arange(1, 5)
    field = (np.sqrt(2.0) * np.sin(PI * np.outer(xi, k))) @ u[0]
    brute = float(np.trapezoid(phi.eval(field), xi))
    assert val == pytest.approx(brute, abs=1e-9)


def test_grad_phi_matches_finite_differences():
    phi = make_potential("quartic")
    u = np.array([[0.4, 0.1, -0.3]])
    g = grad_Phi_n(phi, u, 3)[0]
    eps = 1e-6
    for j in range(3):
        up, um = u.copy(), u.copy()
        up[0, j] += eps
        um[0, j] -= eps
        fd = (float(Phi_n(phi, up, 3)[0]) - float(Phi_n(phi, um, 3)[0])) / (2 * eps)
        assert g[j] == pytest.approx(fd, abs=1e-7)


def test_zero_potential_is_zero():
    phi = make_potential("zero")
    u = np.random.default_rng(0).standard_normal((5, 3))
    assert np.all(Phi_n(phi, u, 3) == 0.0)
    assert np.all(grad_Phi_n(phi, u, 3) == 0.0)


def test_choose_q():
    # quartic: m1 = 4, m0 = 4 -> ratio 0.75 -> q = 2
    assert choose_q(make_potential("quartic")) == 2
    # quadratic: m1 = 4, m0 = 2 -> ratio 1.5 -> q = 2
    assert choose_q(make_potential("quadratic")) == 2
    with pytest.raises(ConfigError):
        choose_q(make_potential("zero"))


def test_regularization_spec_validation():
    with pytest.raises(ConfigError):
        RegularizationSpec(q=3)
    with pytest.raises(ConfigError):
        RegularizationSpec(q=0)
    reg = RegularizationSpec(q=2)
    assert reg.alpha(2) == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        reg.alpha(0)


def test_psi_m_closed_form_values():
    # q=2, alpha_1=1: psi(x) = x/(1+x^2)
    reg = RegularizationSpec(q=2, alphas=lambda m: 1.0)
    assert psi_m_derivs(reg, 1, 1.0, 0) == pytest.approx(0.5)
    assert psi_m_derivs(reg, 1, 1.0, 1) == pytest.approx(0.0, abs=1e-15)
    assert psi_m_derivs(reg, 1, 1.0, 2) == pytest.approx(-0.5)
    assert psi_m_derivs(reg, 1, 0.0, 3) == pytest.approx(-6.0)


def test_psi_m_derivs_match_finite_differences():
    reg = RegularizationSpec(q=4, alphas=lambda m: 0.7 / m)
    xs = np.array([-1.7, -0.4, 0.3, 1.1, 2.6])
    h = 1e-5
    for order in (1, 2, 3, 4):
        lower = psi_m_derivs(reg, 3, xs - h, order - 1)
        upper = psi_m_derivs(reg, 3, xs + h, order - 1)
        fd = (upper - lower) / (2 * h)
        exact = psi_m_derivs(reg, 3, xs, order)
        assert np.allclose(exact, fd, rtol=1e-6, atol=1e-5)


def test_psi_m_bounded_by_identity():
    reg = RegularizationSpec(q=2)
    x = np.linspace(-50.0, 50.0, 2001)
    for m in (1, 5, 20):
        pm = psi_m_derivs(reg, m, x, 0)
        assert np.all(np.abs(pm) <= np.abs(x) + 1e-15)
        assert np.all(pm * x >= -1e-15)


def test_phi_m_derivs_chain_cascade():
    phi = make_potential("quartic")
    reg = RegularizationSpec(q=2)
    xs = np.array([-2.1, -0.5, 0.8, 1.9])
    h = 1e-5
    for order in (1, 2, 3, 4):
        lower = phi_m_derivs(phi, reg, 2, xs - h, order - 1)
        upper = phi_m_derivs(phi, reg, 2, xs + h, order - 1)
        fd = (upper - lower) / (2 * h)
        exact = phi_m_derivs(phi, reg, 2, xs, order)
        assert np.allclose(exact, fd, rtol=2e-5, atol=2e-4)


def test_phi_m_squeeze_below_phi():
    phi = make_potential("quartic")
    reg = RegularizationSpec(q=2)
    x = np.linspace(-6.0, 6.0, 481)
    raw = phi.eval(x)
    for m in (1, 4, 20):
        damped = phi_m_derivs(phi, reg, m, x, 0)
        assert np.all(damped <= raw + 1e-12)
        assert np.all(damped >= -1e-12)


def test_regularized_functional_converges_to_raw():
    phi = make_potential("quartic")
    reg = RegularizationSpec(q=2)
    u = np.array([[0.5, -0.2]])
    raw = float(Phi_n(phi, u, 2)[0])
    vals = [float(Phi_n_m(phi, reg, m, u, 2)[0]) for m in (1, 10, 100, 1000)]
    gaps = [abs(v - raw) for v in vals]
    assert gaps[-1] < gaps[0]
    assert gaps[-1] < 1e-3
    g_raw = grad_Phi_n(phi, u, 2)
    g_m = grad_Phi_n_m(phi, reg, 1000, u, 2)
    assert np.allclose(g_m, g_raw, atol=1e-2)


def test_moreau_yosida_quadratic_closed_form():
    phi = make_potential("quadratic", a1=0.5)  # phi_1(x) = x^2/2
    for t in (0.125, 0.5, 1.0, 4.0):
        for y in (-2.0, 0.3, 1.2):
            val, dval = moreau_yosida(phi, t, y)
            assert val == pytest.approx(y * y / (2.0 * (1.0 + t)), abs=1e-10)
            assert dval == pytest.approx(y / (1.0 + t), abs=1e-10)


def test_moreau_yosida_rejects_bad_input():
    phi = make_potential("quadratic", a1=0.5)
    with pytest.raises(ConfigError):
        moreau_yosida(phi, 0.0, 1.0)
    bump = make_potential("cos-bump", a1=0.5, b=1.5)
    # the full cos-bump is not convex, but its declared convex part is fine
    val, _ = moreau_yosida(bump, 0.5, 1.2)
    assert val == pytest.approx(1.2**2 / 3.0, abs=1e-10)


def test_moreau_yosida_monotone_in_t():
    phi = make_potential("quartic")
    y = 1.7
    vals = [moreau_yosida(phi, t, y)[0] for t in (2.0, 1.0, 0.5, 0.25, 0.125)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= phi.eval(y) + 1e-12
