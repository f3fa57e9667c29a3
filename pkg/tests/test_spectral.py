import math

import numpy as np
import pytest

from hamsde.spectral import (INFINITE, GaussianSpec, dirichlet_eigenvalues,
                             evaluate_field, fernique_integral,
                             gaussian_moment2, gaussian_moment4,
                             sample_gaussian)

PI = math.pi


def test_eigenvalues_closed_form():
    lam = dirichlet_eigenvalues(5)
    assert lam.shape == (5,)
    assert lam[0] == pytest.approx(1.0 / PI**2, rel=0, abs=0)
    for k in range(1, 6):
        assert lam[k - 1] == (k * PI) ** -2.0
    assert np.all(np.diff(lam) < 0)


def test_eigenvalues_reject_nonpositive():
    with pytest.raises(ValueError):
        dirichlet_eigenvalues(0)


def test_evaluate_field_single_point():
    # coefficients (1, 1) at x = 0.25: sqrt(2)(sin(pi/4) + sin(pi/2))
    out = evaluate_field(np.array([1.0, 1.0]), np.array([0.25]))
    assert out[0] == pytest.approx(2.414213562373095, abs=1e-15)


def test_evaluate_field_batch_shape():
    v = np.ones((3, 4))
    grid = np.array([0.2, 0.5, 0.7])
    out = evaluate_field(v, grid)
    assert out.shape == (3, 3)
    with pytest.raises(ValueError):
        evaluate_field(v, np.array([0.0, 0.5]))


def test_gaussian_spec_trace_class_threshold():
    assert GaussianSpec(exponent=0.51, dim=4).trace_class
    assert not GaussianSpec(exponent=0.5, dim=4).trace_class
    with pytest.raises(ValueError):
        GaussianSpec(exponent=0.0, dim=4)
    with pytest.raises(ValueError):
        GaussianSpec(exponent=1.0, dim=0)


def test_sample_gaussian_prefix_stability():
    spec = GaussianSpec(exponent=1.0, dim=3)
    short = sample_gaussian(spec, 11, 100)
    long = sample_gaussian(spec, 11, 9000)
    assert np.array_equal(short, long[:100])


def test_sample_gaussian_marginal_variance():
    spec = GaussianSpec(exponent=0.9, dim=4)
    x = sample_gaussian(spec, 5, 200_000)
    var = x.var(axis=0)
    assert np.allclose(var, spec.eigenvalues, rtol=0.02)


def test_moment2_diagonal():
    spec = GaussianSpec(exponent=1.0, dim=3)
    e1 = np.array([1.0, 0.0, 0.0])
    assert gaussian_moment2(spec, e1, e1) == pytest.approx(1.0 / PI**2)
    e2 = np.array([0.0, 1.0, 0.0])
    assert gaussian_moment2(spec, e1, e2) == 0.0


def test_moment2_padding_and_rejection():
    spec = GaussianSpec(exponent=1.0, dim=4)
    assert gaussian_moment2(spec, [1.0], [1.0]) == pytest.approx(1.0 / PI**2)
    with pytest.raises(ValueError):
        gaussian_moment2(spec, np.ones(5), np.ones(5))


def test_moment4_pairing_identity():
    spec = GaussianSpec(exponent=1.0, dim=2)
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    # E[z1^2 z2^2] = lam1 lam2 for independent coordinates
    expected = (PI**-2.0) * (2.0 * PI) ** -2.0
    assert gaussian_moment4(spec, e1, e1, e2, e2) == pytest.approx(expected)
    # E[z1^4] = 3 lam1^2
    assert gaussian_moment4(spec, e1, e1, e1, e1) == pytest.approx(3.0 * PI**-4.0)


def test_moment4_against_mc():
    spec = GaussianSpec(exponent=1.0, dim=3)
    rng = np.random.default_rng(7)
    l = [rng.standard_normal(3) for _ in range(4)]
    x = sample_gaussian(spec, 13, 400_000)
    prods = (x @ l[0]) * (x @ l[1]) * (x @ l[2]) * (x @ l[3])
    mc = prods.mean()
    se = prods.std(ddof=1) / math.sqrt(len(prods))
    assert abs(mc - gaussian_moment4(spec, *l)) <= 3.0 * se


def test_fernique_product_formula():
    spec = GaussianSpec(exponent=1.0, dim=6)
    lam1 = PI**-2.0
    s = 0.1 / (2.0 * lam1)
    val = fernique_integral(spec, s)
    # independent product over modes, frozen from the closed form
    assert val == pytest.approx(1.080534094463992, abs=1e-13)


def test_fernique_divergence_boundary():
    spec = GaussianSpec(exponent=1.0, dim=2)
    lam1 = PI**-2.0
    assert fernique_integral(spec, 1.0 / (2.0 * lam1)) == INFINITE
    assert fernique_integral(spec, 0.49999 / lam1) != INFINITE
    assert fernique_integral(spec, -2.0) < 1.0
    assert fernique_integral(spec, 0.0) == pytest.approx(1.0)
