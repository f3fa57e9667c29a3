"""Scalar potentials and the superposition functional.

A potential is a scalar function phi in C^4 acting on field values. It
enters the dynamics through the superposition functional

    Phi_n(u) = int_0^1 phi(P_n u(xi)) dxi,

whose gradient has components int phi'(P_n u) d_i dxi for i <= n. Two
regularizations are provided: the damped family phi_m = Psi_m(phi) with
Psi_m(x) = x / (1 + alpha_m x^q), which tames polynomial growth while
keeping four bounded-ratio derivatives, and the Moreau-Yosida envelope of
the convex part, used where a globally Lipschitz gradient is needed.

All built-in potentials carry hand-coded exact derivatives up to order
four; nothing here differentiates numerically.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, ContractViolationError

DEFAULT_QUAD_NODES = 256
_BATCH_ROWS = 16384


@dataclass(frozen=True)
class ScalarFunction:
    """A scalar function with exact derivatives through order four."""

    name: str
    f0: Callable
    f1: Callable
    f2: Callable
    f3: Callable
    f4: Callable

    def deriv(self, order):
        if order not in (0, 1, 2, 3, 4):
            raise ConfigError(f"derivative order must be 0..4, got {order}")
        return (self.f0, self.f1, self.f2, self.f3, self.f4)[order]

    def __call__(self, x):
        return self.f0(x)


@dataclass(frozen=True)
class GrowthData:
    """Growth metadata: phi(x) >= A|x|^m0 for |x| >= R and derivative scale B_bar."""

    A: float
    B_bar: float
    R: float
    m0: float
    m1: int

    def __post_init__(self):
        if self.A <= 0 or self.B_bar <= 0 or self.R <= 0:
            raise ConfigError("growth constants A, B_bar, R must be positive")
        if self.m0 <= 0:
            raise ConfigError(f"m0 must be positive, got {self.m0}")
        if int(self.m1) != self.m1 or self.m1 < 4:
            raise ConfigError(f"m1 must be an integer >= 4, got {self.m1}")


@dataclass(frozen=True)
class PhiSpec:
    """A potential phi = quad_coeff*x^2 + remainder, with optional structure.

    convex_part / perturbation record the split phi = phi_1 + phi_2 with
    phi_1 convex and phi_2 of bounded oscillation `osc`; d2_perturbation_sup
    is sup|phi_2''|. growth carries the lower/upper growth constants when
    known. remainder=None means the remainder is identically zero.
    """

    name: str
    fn: ScalarFunction
    growth: Optional[GrowthData] = None
    convex_part: Optional[ScalarFunction] = None
    perturbation: Optional[ScalarFunction] = None
    osc: float = 0.0
    d2_perturbation_sup: float = 0.0
    quad_coeff: float = 0.0
    remainder: Optional[ScalarFunction] = None

    def eval(self, x):
        return self.fn.f0(x)

    def deriv(self, order, x):
        return self.fn.deriv(order)(x)


def _const_zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


ZERO_FUNCTION = ScalarFunction("zero", _const_zero, _const_zero, _const_zero,
                               _const_zero, _const_zero)


def phi_zero():
    return PhiSpec(name="zero", fn=ZERO_FUNCTION, convex_part=ZERO_FUNCTION)


def phi_quadratic(a1=0.5):
    """phi(x) = a1 x^2."""
    if a1 <= 0:
        raise ConfigError(f"quadratic coefficient must be positive, got {a1}")
    fn = ScalarFunction(
        f"quadratic(a1={a1})",
        lambda x: a1 * np.square(x),
        lambda x: 2.0 * a1 * np.asarray(x, dtype=float),
        lambda x: np.full_like(np.asarray(x, dtype=float), 2.0 * a1),
        _const_zero,
        _const_zero,
    )
    return PhiSpec(
        name="quadratic",
        fn=fn,
        growth=GrowthData(A=a1, B_bar=max(1.0, 2.0 * a1), R=1.0, m0=2.0, m1=4),
        convex_part=fn,
        quad_coeff=a1,
    )


def _subquadratic_parts():
    # psi(x) = (1 + x^2)^(3/4) - 1, convex with sub-quadratic growth.
    def p0(x):
        s = 1.0 + np.square(x)
        return s ** 0.75 - 1.0

    def p1(x):
        x = np.asarray(x, dtype=float)
        s = 1.0 + np.square(x)
        return 1.5 * x * s ** -0.25

    def p2(x):
        s = 1.0 + np.square(x)
        return 1.5 * s ** -1.25 * (1.0 + 0.5 * np.square(x))

    def p3(x):
        x = np.asarray(x, dtype=float)
        s = 1.0 + np.square(x)
        return -0.375 * x * s ** -2.25 * (6.0 + np.square(x))

    def p4(x):
        x2 = np.square(x)
        s = 1.0 + x2
        return 0.5625 * s ** -3.25 * (x2 * x2 + 12.0 * x2 - 4.0)

    return ScalarFunction("subquadratic", p0, p1, p2, p3, p4)


def phi_subquadratic(a1=0.5):
    """phi(x) = a1 x^2 + (1+x^2)^(3/4) - 1, convex."""
    if a1 <= 0:
        raise ConfigError(f"quadratic coefficient must be positive, got {a1}")
    psi = _subquadratic_parts()
    fn = ScalarFunction(
        f"subquadratic(a1={a1})",
        lambda x: a1 * np.square(x) + psi.f0(x),
        lambda x: 2.0 * a1 * np.asarray(x, dtype=float) + psi.f1(x),
        lambda x: 2.0 * a1 + psi.f2(x),
        psi.f3,
        psi.f4,
    )
    return PhiSpec(
        name="subquadratic",
        fn=fn,
        growth=GrowthData(A=a1, B_bar=6.0, R=1.0, m0=2.0, m1=4),
        convex_part=fn,
        quad_coeff=a1,
        remainder=psi,
    )


def phi_cos_bump(a1=0.5, b=1.5):
    """phi(x) = a1 x^2 + b (1 + cos x): convex part plus bounded perturbation."""
    if a1 <= 0 or b <= 0:
        raise ConfigError("cos-bump parameters a1 and b must be positive")
    psi = ScalarFunction(
        f"cos_bump(b={b})",
        lambda x: b * (1.0 + np.cos(x)),
        lambda x: -b * np.sin(x),
        lambda x: -b * np.cos(x),
        lambda x: b * np.sin(x),
        lambda x: b * np.cos(x),
    )
    quad = ScalarFunction(
        f"quadratic_core(a1={a1})",
        lambda x: a1 * np.square(x),
        lambda x: 2.0 * a1 * np.asarray(x, dtype=float),
        lambda x: np.full_like(np.asarray(x, dtype=float), 2.0 * a1),
        _const_zero,
        _const_zero,
    )
    fn = ScalarFunction(
        f"cos_bump(a1={a1}, b={b})",
        lambda x: quad.f0(x) + psi.f0(x),
        lambda x: quad.f1(x) + psi.f1(x),
        lambda x: quad.f2(x) + psi.f2(x),
        psi.f3,
        psi.f4,
    )
    return PhiSpec(
        name="cos-bump",
        fn=fn,
        growth=GrowthData(A=a1, B_bar=max(6.0, 2.0 * b + 2.0 * a1), R=1.0, m0=2.0, m1=4),
        convex_part=quad,
        perturbation=psi,
        osc=2.0 * b,
        d2_perturbation_sup=b,
        quad_coeff=a1,
        remainder=psi,
    )


def phi_quartic():
    """phi(x) = x^4, the polynomial benchmark for the damped regularization."""
    fn = ScalarFunction(
        "quartic",
        lambda x: np.square(x) ** 2,
        lambda x: 4.0 * np.asarray(x, dtype=float) ** 3,
        lambda x: 12.0 * np.square(x),
        lambda x: 24.0 * np.asarray(x, dtype=float),
        lambda x: np.full_like(np.asarray(x, dtype=float), 24.0),
    )
    return PhiSpec(
        name="quartic",
        fn=fn,
        growth=GrowthData(A=1.0, B_bar=24.0, R=1.0, m0=4.0, m1=4),
        convex_part=fn,
        remainder=fn,
    )


BUILTIN_POTENTIALS = {
    "zero": phi_zero,
    "quadratic": phi_quadratic,
    "subquadratic": phi_subquadratic,
    "cos-bump": phi_cos_bump,
    "quartic": phi_quartic,
}


def make_potential(name, **params):
    if name not in BUILTIN_POTENTIALS:
        raise ConfigError(
            f"unknown potential {name!r}; available: {sorted(BUILTIN_POTENTIALS)}")
    return BUILTIN_POTENTIALS[name](**params)


def normalize_nonnegative(phi, grid=None):
    """Shift phi so its minimum over the probe grid is zero.

    Returns (shifted PhiSpec, shift). Built-ins are already nonnegative, so
    this is only needed for user-supplied potentials.
    """
    if grid is None:
        grid = np.linspace(-20.0, 20.0, 2001)
    shift = float(np.min(phi.fn.f0(np.asarray(grid, dtype=float))))
    if shift == 0.0:
        return phi, 0.0
    base = phi.fn
    shifted = ScalarFunction(
        base.name + "-shifted",
        lambda x: base.f0(x) - shift,
        base.f1, base.f2, base.f3, base.f4,
    )
    return PhiSpec(
        name=phi.name,
        fn=shifted,
        growth=phi.growth,
        convex_part=phi.convex_part,
        perturbation=phi.perturbation,
        osc=phi.osc,
        d2_perturbation_sup=phi.d2_perturbation_sup,
        quad_coeff=phi.quad_coeff,
        remainder=phi.remainder,
    ), shift


def default_alphas(m):
    return 1.0 / m


@dataclass(frozen=True)
class RegularizationSpec:
    """Damping family Psi_m(x) = x / (1 + alphas(m) x^q), q even."""

    q: int
    alphas: Callable = default_alphas

    def __post_init__(self):
        if self.q < 2 or self.q % 2 != 0:
            raise ConfigError(f"q must be an even integer >= 2, got {self.q}")

    def alpha(self, m):
        if m < 1:
            raise ConfigError(f"regularization index must be >= 1, got {m}")
        a = float(self.alphas(m))
        if a <= 0:
            raise ConfigError(f"alpha_{m} must be positive, got {a}")
        return a

    @classmethod
    def for_potential(cls, phi):
        return cls(q=choose_q(phi))


def choose_q(phi):
    """Smallest even integer strictly greater than (m1-1)/m0."""
    if phi.growth is None:
        raise ConfigError(f"potential {phi.name!r} carries no growth metadata")
    ratio = (phi.growth.m1 - 1.0) / phi.growth.m0
    return 2 * (math.floor(ratio / 2.0) + 1)


def psi_m_derivs(reg, m, x, order):
    """Psi_m^(order)(x) in closed form, order 0..4."""
    a = reg.alpha(m)
    q = reg.q
    scalar_in = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    u = a * x ** q
    d = 1.0 + u
    if order == 0:
        out = x / d
    elif order == 1:
        out = (1.0 - (q - 1) * u) / d ** 2
    elif order == 2:
        out = a * q * x ** (q - 1) * ((q - 1) * u - (q + 1)) / d ** 3
    elif order == 3:
        poly = -(q * q - 1) * u * u + (4 * q * q + 2) * u - (q * q - 1)
        out = a * q * x ** (q - 2) * poly / d ** 4
    elif order == 4:
        a3 = (q - 1) * (q + 1) * (q + 2)
        a2 = -(11 * q ** 3 + 6 * q ** 2 + q + 6)
        a1_ = (q - 1) * (q * (11 * q + 5) + 6)
        num = (a3 * a ** 3 * x ** (4 * q - 3)
               + a2 * a ** 2 * x ** (3 * q - 3)
               + a1_ * a * x ** (2 * q - 3))
        if q != 2:
            # at q=2 this coefficient vanishes identically and the x^(q-3)
            # power is singular at the origin, so the term is dropped there
            a0 = -(q - 2) * (q * q - 1)
            num = num + a0 * x ** (q - 3)
        out = a * q * num / d ** 5
    else:
        raise ConfigError(f"derivative order must be 0..4, got {order}")
    return float(out) if scalar_in else out


def phi_m_derivs(phi, reg, m, x, order):
    """(Psi_m o phi)^(order)(x) via the chain-rule cascade through order four."""
    scalar_in = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    p0 = phi.fn.f0(x)

    def psi(j):
        return psi_m_derivs(reg, m, p0, j)

    if order == 0:
        out = psi(0)
    elif order == 1:
        out = psi(1) * phi.fn.f1(x)
    elif order == 2:
        g1 = phi.fn.f1(x)
        out = psi(2) * g1 ** 2 + psi(1) * phi.fn.f2(x)
    elif order == 3:
        g1 = phi.fn.f1(x)
        g2 = phi.fn.f2(x)
        out = psi(3) * g1 ** 3 + 3.0 * psi(2) * g1 * g2 + psi(1) * phi.fn.f3(x)
    elif order == 4:
        g1 = phi.fn.f1(x)
        g2 = phi.fn.f2(x)
        g3 = phi.fn.f3(x)
        out = (psi(4) * g1 ** 4
               + 6.0 * psi(3) * g1 ** 2 * g2
               + 3.0 * psi(2) * g2 ** 2
               + 4.0 * psi(2) * g1 * g3
               + psi(1) * phi.fn.f4(x))
    else:
        raise ConfigError(f"derivative order must be 0..4, got {order}")
    out = np.asarray(out, dtype=float)
    return float(out) if scalar_in else out


@lru_cache(maxsize=32)
def _unit_gauss_rule(nodes):
    if nodes < 2:
        raise ConfigError(f"quadrature needs at least 2 nodes, got {nodes}")
    x, w = np.polynomial.legendre.leggauss(int(nodes))
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=128)
def _sine_design(nodes, n):
    xi, _ = _unit_gauss_rule(nodes)
    k = np.arange(1, n + 1, dtype=float)
    return np.sqrt(2.0) * np.sin(np.pi * np.outer(xi, k))  # (nodes, n)


def _truncate(u, n):
    u = np.asarray(u, dtype=float)
    squeeze = u.ndim == 1
    if squeeze:
        u = u[None, :]
    if u.shape[1] >= n:
        un = u[:, :n]
    else:
        un = np.concatenate([u, np.zeros((u.shape[0], n - u.shape[1]))], axis=1)
    return un, squeeze, u.shape[1]


def _integrate_rows(fn, un, nodes):
    """int_0^1 fn(P_n u(xi)) dxi for each row of un, chunked for memory."""
    xi_w = _unit_gauss_rule(nodes)[1]
    design = _sine_design(nodes, un.shape[1])
    out = np.empty(un.shape[0])
    for start in range(0, un.shape[0], _BATCH_ROWS):
        block = un[start:start + _BATCH_ROWS]
        field = block @ design.T  # (rows, nodes)
        out[start:start + _BATCH_ROWS] = fn(field) @ xi_w
    return out


def Phi_n(phi, u, n, quad_nodes=DEFAULT_QUAD_NODES):
    """Phi_n(u) = int_0^1 phi(P_n u(xi)) dxi.

    The pure-quadratic part is summed exactly via orthonormality of the sine
    basis; only the remainder goes through quadrature.
    """
    if n < 1:
        raise ConfigError(f"truncation level must be >= 1, got {n}")
    un, squeeze, _ = _truncate(u, n)
    vals = phi.quad_coeff * np.sum(un * un, axis=1)
    if phi.remainder is not None:
        vals = vals + _integrate_rows(phi.remainder.f0, un, quad_nodes)
    elif phi.quad_coeff == 0.0:
        vals = _integrate_rows(phi.fn.f0, un, quad_nodes)
    return float(vals[0]) if squeeze else vals


def Phi_n_m(phi, reg, m, u, n, quad_nodes=DEFAULT_QUAD_NODES):
    """Companion of Phi_n with the damped integrand phi_m = Psi_m(phi)."""
    if n < 1:
        raise ConfigError(f"truncation level must be >= 1, got {n}")
    un, squeeze, _ = _truncate(u, n)
    vals = _integrate_rows(lambda f: phi_m_derivs(phi, reg, m, f, 0), un, quad_nodes)
    return float(vals[0]) if squeeze else vals


def _grad_rows(deriv_fn, un, nodes):
    xi_w = _unit_gauss_rule(nodes)[1]
    design = _sine_design(nodes, un.shape[1])
    out = np.empty_like(un)
    for start in range(0, un.shape[0], _BATCH_ROWS):
        block = un[start:start + _BATCH_ROWS]
        field = block @ design.T
        out[start:start + _BATCH_ROWS] = (deriv_fn(field) * xi_w) @ design
    return out


def grad_Phi_n(phi, u, n, quad_nodes=DEFAULT_QUAD_NODES):
    """Gradient of Phi_n: component i = int phi'(P_n u) d_i dxi for i <= n.

    Components beyond n are zero; the output keeps the input dimension when
    that exceeds n.
    """
    if n < 1:
        raise ConfigError(f"truncation level must be >= 1, got {n}")
    un, squeeze, dim = _truncate(u, n)
    if phi.remainder is not None:
        grad = 2.0 * phi.quad_coeff * un + _grad_rows(phi.remainder.f1, un, quad_nodes)
    elif phi.quad_coeff != 0.0:
        grad = 2.0 * phi.quad_coeff * un
    else:
        grad = _grad_rows(phi.fn.f1, un, quad_nodes)
    width = max(dim, n)
    if width > n:
        grad = np.concatenate([grad, np.zeros((grad.shape[0], width - n))], axis=1)
    return grad[0] if squeeze else grad


def grad_Phi_n_m(phi, reg, m, u, n, quad_nodes=DEFAULT_QUAD_NODES):
    """Companion of grad_Phi_n using phi_m' in place of phi'."""
    if n < 1:
        raise ConfigError(f"truncation level must be >= 1, got {n}")
    un, squeeze, dim = _truncate(u, n)
    grad = _grad_rows(lambda f: phi_m_derivs(phi, reg, m, f, 1), un, quad_nodes)
    width = max(dim, n)
    if width > n:
        grad = np.concatenate([grad, np.zeros((grad.shape[0], width - n))], axis=1)
    return grad[0] if squeeze else grad


_CONVEXITY_GRID = np.linspace(-30.0, 30.0, 1201)


def moreau_yosida(phi, t, y, probe_grid=None):
    """Moreau-Yosida envelope of the convex part at y.

    Returns (value, derivative) where value = min_x phi_1(x) + (y-x)^2/(2t)
    and derivative = (y - argmin)/t. The convexity of phi_1 is probed on a
    grid before solving; a negative second derivative is a contract
    violation.
    """
    if t <= 0:
        raise ConfigError(f"Moreau-Yosida parameter t must be positive, got {t}")
    if phi.convex_part is None:
        raise ConfigError(f"potential {phi.name!r} has no convex part")
    part = phi.convex_part
    grid = _CONVEXITY_GRID if probe_grid is None else np.asarray(probe_grid, dtype=float)
    if np.any(part.f2(grid) < -1e-12):
        raise ContractViolationError(
            f"convex part of {phi.name!r} has negative second derivative on probe grid")

    y = float(y)

    def g(x):
        return t * float(part.f1(x)) + x - y

    # g is strictly increasing (t*phi_1'' + 1 >= 1), so a sign-changing
    # bracket always exists; expand geometrically until we find it.
    half = 1.0 + abs(t * float(part.f1(y)))
    lo, hi = y - half, y + half
    for _ in range(80):
        if g(lo) <= 0.0 <= g(hi):
            break
        lo, hi = y - 2.0 * (y - lo), y + 2.0 * (hi - y)
    else:
        raise RuntimeError("failed to bracket the proximal point")
    if g(lo) == 0.0:
        xstar = lo
    elif g(hi) == 0.0:
        xstar = hi
    else:
        xstar = brentq(g, lo, hi, xtol=1e-14, rtol=1e-15)
    value = float(part.f0(xstar)) + (y - xstar) ** 2 / (2.0 * t)
    return value, (y - xstar) / t
