"""Rate constants, the theta2 arithmetic, and the two decay estimators."""

import json
import math
import types

import numpy as np
import pytest

from hamsde import (
    CoefficientSpec,
    ConfigError,
    ContractViolationError,
    HypocConstants,
    OperatorContext,
    PolyCylinder,
    assemble,
    compute_c1,
    compute_cA,
    compute_cS,
    compute_constants,
    ergodic_bound,
    estimate_decay,
    estimate_ergodic_error,
    make_potential,
    preset,
    theta2,
)
from hamsde.coefficients import BumpFamily

LINEAR = CoefficientSpec(alpha1=1.0, alpha2=1.0, sigma1=1.0, sigma2=1.0,
                         sigma3=1.5, bumps=None)
CONVEX = CoefficientSpec(alpha1=1.2, alpha2=0.9, sigma1=0.75, sigma2=0.9,
                         sigma3=1.35, bumps=BumpFamily())

# valid by construction: c1 = (sqrt(4) + 0 + 0)/2 = 1
UNIT = HypocConstants(c_S=1.0, c_A=1.0, c_Phi2=0.0, C1=4.0, C2=0.0, M22=0.0,
                      c1=1.0, theta1=2.0)


def _linear_system(n=1):
    ctx = OperatorContext(spec=LINEAR, n=n, phi=make_potential("zero"),
                          phi_variant="zero")
    return assemble(ctx, n)


# -- scalar constants ---------------------------------------------------


def test_compute_cS_closed_forms():
    # omega22 = 1 against the default floor, so cS = 1/lam_1^alpha2
    assert compute_cS(LINEAR) == pytest.approx(math.pi ** 2, rel=1e-15)
    assert compute_cS(CONVEX) == pytest.approx(7.850002062466907, rel=1e-15)


def test_compute_cS_custom_lower_bound():
    lam2 = (np.arange(1, 9) * math.pi) ** -2.0
    half = compute_cS(LINEAR, n=8, lower=0.5 * lam2)
    assert half == pytest.approx(0.5 * math.pi ** 2, rel=1e-12)
    with pytest.raises(ConfigError):
        compute_cS(LINEAR, n=8, lower=lam2[:4])
    with pytest.raises(ConfigError):
        compute_cS(LINEAR, n=8, lower=0.0 * lam2)


def test_compute_cA_frozen_value():
    ca = compute_cA(CONVEX, make_potential("quadratic", a1=0.5))
    assert ca.value == pytest.approx(61.62253238073467, rel=1e-15)
    assert ca.exponent == pytest.approx(-0.6)
    assert ca.minimizer_k == 1
    assert not ca.vanishing_gap
    assert float(ca) == ca.value


def test_compute_cA_oscillation_discount():
    flat = compute_cA(CONVEX, make_potential("quadratic", a1=0.5))
    bumpy_phi = make_potential("cos-bump", a1=0.5, b=1.5)
    assert bumpy_phi.osc > 0.0
    bumpy = compute_cA(CONVEX, bumpy_phi)
    assert bumpy.value == pytest.approx(flat.value * math.exp(-bumpy_phi.osc),
                                        rel=1e-12)


def test_compute_cA_vanishing_gap_warns():
    # 2 sigma1 - alpha2 - alpha1 = 0.8 > 0: the minimum runs off to k = n
    runaway = CoefficientSpec(alpha1=0.6, alpha2=0.6, sigma1=1.0, sigma2=0.6,
                              sigma3=1.5, bumps=None)
    with pytest.warns(RuntimeWarning, match="spectral gap vanishes"):
        ca = compute_cA(runaway, make_potential("zero"), n=16)
    assert ca.vanishing_gap
    assert ca.minimizer_k == 16
    assert ca.exponent == pytest.approx(0.8)


def test_compute_c1_without_bumps():
    parts = compute_c1(LINEAR, 1000, seed=0, n=4)
    assert tuple(parts) == (1.0, 4.0, 0.0, 0.0)
    assert parts.c2bar_sup == 0.0
    assert parts.tail_exponent == pytest.approx(4.0)
    assert parts.tail_summable
    assert parts.note == ""


def test_compute_c1_frozen_convex_split():
    parts = compute_c1(CONVEX, 20000, seed=0, n=8)
    assert parts.C1 == 4.0
    assert parts.C2 == pytest.approx(0.0005544362637648579, rel=1e-9)
    assert parts.M22 == pytest.approx(3.134880061567076e-05, rel=1e-9)
    expected = 0.5 * (math.sqrt(parts.C1) + math.sqrt(parts.C2)
                      + math.sqrt(parts.M22))
    assert parts.c1 == pytest.approx(expected, rel=1e-15)
    assert 0.0 < parts.C2 < parts.c2bar_sup * 3.0
    assert parts.tail_exponent == pytest.approx(3.6)
    assert parts.tail_summable


def test_compute_c1_unbounded_constant_part():
    sagging = CoefficientSpec(alpha1=1.2, alpha2=0.9, sigma1=0.75, sigma2=0.8,
                              sigma3=1.35, bumps=None)
    parts = compute_c1(sagging, 1000, seed=0, n=4)
    assert math.isinf(parts.C1)
    assert math.isinf(parts.c1)
    assert "unbounded" in parts.note


def test_compute_c1_tail_not_summable():
    thin = CoefficientSpec(alpha1=1.2, alpha2=0.9, sigma1=0.75, sigma2=0.9,
                           sigma3=0.5, bumps=None)
    parts = compute_c1(thin, 1000, seed=0, n=4)
    assert parts.tail_exponent == pytest.approx(0.2)
    assert not parts.tail_summable
    assert "square-summable" in parts.note


def test_compute_c1_budget_guards():
    with pytest.raises(ConfigError):
        compute_c1(LINEAR, 999, seed=0)
    with pytest.raises(ConfigError):
        compute_c1(LINEAR, 1000, seed=0, n=0)


# -- the constant bundle ------------------------------------------------


def test_constants_reject_inconsistent_c1():
    with pytest.raises(ContractViolationError):
        HypocConstants(c_S=1.0, c_A=1.0, c_Phi2=0.0, C1=4.0, C2=0.0, M22=0.0,
                       c1=1.5, theta1=2.0)


def test_constants_reject_bad_fields():
    with pytest.raises(ConfigError):
        HypocConstants(c_S=0.0, c_A=1.0, c_Phi2=0.0, C1=4.0, C2=0.0, M22=0.0,
                       c1=1.0, theta1=2.0)
    with pytest.raises(ConfigError):
        HypocConstants(c_S=1.0, c_A=1.0, c_Phi2=-1.0, C1=4.0, C2=0.0, M22=0.0,
                       c1=1.0, theta1=2.0)
    with pytest.raises(ConfigError):
        HypocConstants(c_S=1.0, c_A=1.0, c_Phi2=0.0, C1=4.0, C2=0.0, M22=0.0,
                       c1=1.0, theta1=1.0)


def test_constants_from_components_and_json(tmp_path):
    consts = HypocConstants.from_components(c_S=2.0, c_A=3.0, c_Phi2=1.0,
                                            C1=4.0, C2=1.0, M22=0.25)
    assert consts.c1 == pytest.approx(0.5 * (2.0 + 1.0 + 0.5))
    assert consts.theta1 == 2.0
    payload = consts.as_dict()
    assert payload["theta2"] == pytest.approx(theta2(2.0, consts), rel=1e-15)
    path = tmp_path / "constants.json"
    consts.to_json(path)
    assert json.loads(path.read_text()) == pytest.approx(payload)


def test_compute_constants_convex_preset():
    cfg = preset("convex-quadratic")
    consts = compute_constants(cfg.coefficient_spec(), cfg.phi(), theta1=2.0,
                               mc_budget=20000, seed=0, n=8)
    assert consts.c_S == pytest.approx(7.850002062466907, rel=1e-15)
    assert consts.c_A == pytest.approx(61.62253238073467, rel=1e-15)
    assert consts.c_Phi2 == 0.0
    assert consts.C1 == 4.0
    assert theta2(2.0, consts) == pytest.approx(0.014466928698626499, rel=1e-9)


def test_compute_constants_warns_on_unbounded_coupling():
    drifting = CoefficientSpec(alpha1=1.2, alpha2=0.9, sigma1=0.4, sigma2=0.9,
                               sigma3=1.35, bumps=None)
    with pytest.warns(RuntimeWarning, match="coupling covariance"):
        consts = compute_constants(drifting, make_potential("quadratic", a1=0.5),
                                   mc_budget=1000, seed=0)
    assert consts.c_Phi2 == 0.0  # quadratic potential has no perturbation part


# -- the rate and the time-average bound --------------------------------


def test_theta2_frozen_unit_tuple():
    assert theta2(2.0, UNIT) == pytest.approx(0.0044026276028183474, rel=1e-15)


def test_theta2_shrinks_with_prefactor():
    values = [theta2(t1, UNIT) for t1 in (2.0, 1.01, 1.0 + 1e-6, 1.0 + 1e-9)]
    assert all(v > 0.0 for v in values)
    assert values == sorted(values, reverse=True)
    assert values[-1] < 1e-11


def test_theta2_domain_errors():
    with pytest.raises(ConfigError):
        theta2(1.0, UNIT)
    bad = types.SimpleNamespace(c_S=0.0, c_A=1.0, c1=1.0, c_Phi2=0.0)
    with pytest.raises(ConfigError):
        theta2(2.0, bad)
    bad = types.SimpleNamespace(c_S=1.0, c_A=1.0, c1=math.inf, c_Phi2=0.0)
    with pytest.raises(ConfigError):
        theta2(2.0, bad)
    bad = types.SimpleNamespace(c_S=1.0, c_A=1.0, c1=1.0, c_Phi2=-0.5)
    with pytest.raises(ConfigError):
        theta2(2.0, bad)


def test_ergodic_bound_frozen_value():
    assert ergodic_bound(100.0, 2.0, 0.1, 1.0) == pytest.approx(
        0.6000015133290836, rel=1e-15)


def test_ergodic_bound_small_time_limit():
    # t -> 0 with theta1 = 2: h/t -> theta2/2, so the bound tends to sqrt(2)
    assert ergodic_bound(1e-9, 2.0, 1.0, 1.0) == pytest.approx(math.sqrt(2.0),
                                                               rel=1e-8)
    lo = ergodic_bound(0.9999999e-6, 2.0, 1.0, 1.0)
    hi = ergodic_bound(1.0000001e-6, 2.0, 1.0, 1.0)
    assert hi == pytest.approx(lo, rel=1e-8)


def test_ergodic_bound_long_time_decay():
    assert ergodic_bound(1e6, 2.0, 0.1, 1.0) == pytest.approx(
        math.sqrt(40.0 / 1e6), rel=1e-4)
    times = [1.0, 10.0, 100.0, 1000.0]
    vals = [ergodic_bound(t, 2.0, 0.1, 1.0) for t in times]
    assert vals == sorted(vals, reverse=True)


def test_ergodic_bound_domain_errors():
    with pytest.raises(ConfigError):
        ergodic_bound(0.0, 2.0, 0.1, 1.0)
    with pytest.raises(ConfigError):
        ergodic_bound(1.0, 1.0, 0.1, 1.0)
    with pytest.raises(ConfigError):
        ergodic_bound(1.0, 2.0, 0.0, 1.0)
    with pytest.raises(ConfigError):
        ergodic_bound(1.0, 2.0, 0.1, -1.0)


# -- Monte-Carlo estimators ---------------------------------------------


def test_estimate_decay_linear_sanity():
    system = _linear_system(n=1)
    f = PolyCylinder.coordinate_v(1, 1)
    curve = estimate_decay(system, f, times=(0.0, 1.0), outer=64, inner=32,
                           seed=5, dt=1e-2, mc_budget=2000)
    points = list(curve)
    assert [p.t for p in points] == [0.0, 1.0]
    assert not curve.degenerate
    assert curve.excluded == 0
    assert curve.note == ""
    assert abs(curve.mu_f) < 0.05
    assert curve.norm_f == pytest.approx(1.0 / math.pi, rel=0.15)
    assert curve.rate == pytest.approx(
        theta2(curve.constants.theta1, curve.constants), rel=1e-15)
    # at t = 0 the inner paths have not moved, so the estimate is the
    # centered norm of f up to resampling noise
    assert points[0].estimate == pytest.approx(curve.norm_f, rel=0.25)
    assert points[0].bound == pytest.approx(2.0 * curve.norm_f, rel=1e-12)
    # the n = 1 linear semigroup contracts at unit rate, far faster than
    # the certified theta2, so one time unit must show real decay
    assert points[1].estimate < 0.8 * points[0].estimate
    for p in points:
        assert p.estimate <= p.bound + 3.0 * p.se
    csv = curve.to_csv()
    lines = csv.strip().split("\n")
    assert lines[0] == "t,estimate,SE,bound"
    assert len(lines) == 3


def test_estimate_decay_validation():
    system = _linear_system(n=1)
    f = PolyCylinder.coordinate_v(1, 1)
    with pytest.raises(ConfigError):
        estimate_decay(system, f, times=(1.0, 0.0), outer=4, inner=4, seed=0)
    with pytest.raises(ConfigError):
        estimate_decay(system, f, times=(-1.0, 0.0), outer=4, inner=4, seed=0)
    with pytest.raises(ConfigError):
        estimate_decay(system, f, times=(0.0,), outer=1, inner=4, seed=0)
    with pytest.raises(ConfigError):
        estimate_decay(system, f, times=(0.0,), outer=4, inner=1, seed=0)


def test_estimate_ergodic_error_linear_sanity():
    system = _linear_system(n=1)
    g = PolyCylinder.monomial(1.0, (0,), (2,))  # v_1^2
    est = estimate_ergodic_error(system, g, t=50.0, reps=32, seed=3, dt=1e-2)
    assert est.reps == 32
    assert est.excluded == 0
    assert tuple(est) == (est.value, est.se)
    # zero potential: the reference is a plain Gaussian average of v^2
    assert est.reference == pytest.approx(math.pi ** -2, abs=3e-3)
    assert est.reference_se < 2e-3
    assert 0.0 < est.value < 0.2
    assert est.se >= 0.0


def test_estimate_ergodic_error_validation():
    system = _linear_system(n=1)
    g = PolyCylinder.monomial(1.0, (0,), (2,))
    with pytest.raises(ConfigError):
        estimate_ergodic_error(system, g, t=0.0, reps=32, seed=0)
    with pytest.raises(ConfigError):
        estimate_ergodic_error(system, g, t=1.0, reps=29, seed=0)
