"""Finitely based cylinder functions with exact derivatives.

A cylinder function depends on the first base_dim coordinates of the
position block u and the velocity block v. Two kinds are provided:
polynomials (with symbolic exponent bookkeeping, so derivatives are again
polynomials) and Gaussian-type bumps exp(-sum a_i u_i^2 - sum b_j v_j^2).
Both expose the same evaluation interface, batched over states:

    value(U, V)            -> (B,)
    dx_value(i, U, V)      -> (B,)   d/du_i, 1-based
    dy_value(i, U, V)      -> (B,)   d/dv_i
    dyy_value(i, j, U, V)  -> (B,)   d^2/dv_i dv_j

No automatic differentiation is involved anywhere.
"""

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np


def _prepare(U, V):
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if U.shape != V.shape:
        raise ValueError(f"state blocks disagree: {U.shape} vs {V.shape}")
    return U, V


@dataclass(frozen=True)
class PolyCylinder:
    """Polynomial in (u_1..u_d, v_1..v_d), stored as monomial terms.

    terms is a tuple of (coefficient, x-exponents, y-exponents) with the
    exponent tuples of equal length d = base_dim.
    """

    terms: tuple

    @property
    def base_dim(self):
        if not self.terms:
            return 1
        return len(self.terms[0][1])

    @property
    def degree(self):
        if not self.terms:
            return 0
        return max(sum(xe) + sum(ye) for _, xe, ye in self.terms)

    @staticmethod
    def from_dict(d, dim):
        terms = tuple((float(c), tuple(xe), tuple(ye))
                      for (xe, ye), c in sorted(d.items()) if c != 0.0)
        if not terms:
            terms = ((0.0, (0,) * dim, (0,) * dim),)
        return PolyCylinder(terms)

    @staticmethod
    def constant(c, dim=1):
        return PolyCylinder(((float(c), (0,) * dim, (0,) * dim),))

    @staticmethod
    def coordinate_u(i, dim):
        xe = tuple(1 if j == i - 1 else 0 for j in range(dim))
        return PolyCylinder(((1.0, xe, (0,) * dim),))

    @staticmethod
    def coordinate_v(i, dim):
        ye = tuple(1 if j == i - 1 else 0 for j in range(dim))
        return PolyCylinder(((1.0, (0,) * dim, ye),))

    @staticmethod
    def monomial(coef, xexp, yexp):
        return PolyCylinder(((float(coef), tuple(xexp), tuple(yexp)),))

    def _padded_to(self, dim):
        if self.base_dim == dim:
            return self
        pad = dim - self.base_dim
        if pad < 0:
            raise ValueError("cannot shrink a polynomial's base dimension")
        terms = tuple((c, xe + (0,) * pad, ye + (0,) * pad) for c, xe, ye in self.terms)
        return PolyCylinder(terms)

    def __add__(self, other):
        if np.isscalar(other):
            other = PolyCylinder.constant(other, self.base_dim)
        dim = max(self.base_dim, other.base_dim)
        a, b = self._padded_to(dim), other._padded_to(dim)
        acc = {}
        for c, xe, ye in a.terms + b.terms:
            acc[(xe, ye)] = acc.get((xe, ye), 0.0) + c
        return PolyCylinder.from_dict(acc, dim)

    __radd__ = __add__

    def __mul__(self, other):
        if np.isscalar(other):
            return PolyCylinder(tuple((c * float(other), xe, ye)
                                      for c, xe, ye in self.terms))
        dim = max(self.base_dim, other.base_dim)
        a, b = self._padded_to(dim), other._padded_to(dim)
        acc = {}
        for c1, xe1, ye1 in a.terms:
            for c2, xe2, ye2 in b.terms:
                key = (tuple(p + q for p, q in zip(xe1, xe2)),
                       tuple(p + q for p, q in zip(ye1, ye2)))
                acc[key] = acc.get(key, 0.0) + c1 * c2
        return PolyCylinder.from_dict(acc, dim)

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (other * -1.0 if isinstance(other, PolyCylinder) else -other)

    def dx(self, i):
        """Symbolic d/du_i, 1-based; result is again a PolyCylinder."""
        acc = {}
        dim = self.base_dim
        for c, xe, ye in self.terms:
            e = xe[i - 1]
            if e == 0:
                continue
            new_xe = tuple(p - 1 if j == i - 1 else p for j, p in enumerate(xe))
            acc[(new_xe, ye)] = acc.get((new_xe, ye), 0.0) + c * e
        return PolyCylinder.from_dict(acc, dim)

    def dy(self, i):
        acc = {}
        dim = self.base_dim
        for c, xe, ye in self.terms:
            e = ye[i - 1]
            if e == 0:
                continue
            new_ye = tuple(p - 1 if j == i - 1 else p for j, p in enumerate(ye))
            acc[(xe, new_ye)] = acc.get((xe, new_ye), 0.0) + c * e
        return PolyCylinder.from_dict(acc, dim)

    def value(self, U, V):
        U, V = _prepare(U, V)
        if U.shape[1] < self.base_dim:
            raise ValueError(
                f"state dimension {U.shape[1]} below base_dim {self.base_dim}")
        out = np.zeros(U.shape[0])
        for c, xe, ye in self.terms:
            t = np.full(U.shape[0], c)
            for j, e in enumerate(xe):
                if e:
                    t = t * U[:, j] ** e
            for j, e in enumerate(ye):
                if e:
                    t = t * V[:, j] ** e
            out += t
        return out

    def dx_value(self, i, U, V):
        if i > self.base_dim:
            U, V = _prepare(U, V)
            return np.zeros(U.shape[0])
        return self.dx(i).value(U, V)

    def dy_value(self, i, U, V):
        if i > self.base_dim:
            U, V = _prepare(U, V)
            return np.zeros(U.shape[0])
        return self.dy(i).value(U, V)

    def dyy_value(self, i, j, U, V):
        if i > self.base_dim or j > self.base_dim:
            U, V = _prepare(U, V)
            return np.zeros(U.shape[0])
        return self.dy(i).dy(j).value(U, V)


@dataclass(frozen=True)
class ExpQuad:
    """scale * exp(-sum_i a_i u_i^2 - sum_j b_j v_j^2) with a, b >= 0."""

    a: tuple
    b: tuple
    scale: float = 1.0

    def __post_init__(self):
        if len(self.a) != len(self.b):
            raise ValueError("a and b must have equal length")
        if any(c < 0 for c in self.a) or any(c < 0 for c in self.b):
            raise ValueError("bump quadratic coefficients must be nonnegative")

    @property
    def base_dim(self):
        return len(self.a)

    def value(self, U, V):
        U, V = _prepare(U, V)
        d = self.base_dim
        expo = -(U[:, :d] ** 2 @ np.asarray(self.a)) - (V[:, :d] ** 2 @ np.asarray(self.b))
        return self.scale * np.exp(expo)

    def dx_value(self, i, U, V):
        base = self.value(U, V)
        if i > self.base_dim:
            return np.zeros_like(base)
        Up = np.atleast_2d(np.asarray(U, dtype=float))
        return -2.0 * self.a[i - 1] * Up[:, i - 1] * base

    def dy_value(self, i, U, V):
        base = self.value(U, V)
        if i > self.base_dim:
            return np.zeros_like(base)
        Vp = np.atleast_2d(np.asarray(V, dtype=float))
        return -2.0 * self.b[i - 1] * Vp[:, i - 1] * base

    def dyy_value(self, i, j, U, V):
        base = self.value(U, V)
        if i > self.base_dim or j > self.base_dim:
            return np.zeros_like(base)
        Vp = np.atleast_2d(np.asarray(V, dtype=float))
        bi, bj = self.b[i - 1], self.b[j - 1]
        out = 4.0 * bi * bj * Vp[:, i - 1] * Vp[:, j - 1] * base
        if i == j:
            out = out - 2.0 * bi * base
        return out


def monomial_battery(dim, max_degree=3):
    """All monomials in (u_1..u_dim, v_1..v_dim) of total degree <= max_degree.

    Returned in a fixed deterministic order, constant first.
    """
    out = [PolyCylinder.constant(1.0, dim)]
    nvars = 2 * dim
    for deg in range(1, max_degree + 1):
        for combo in combinations_with_replacement(range(nvars), deg):
            xe = [0] * dim
            ye = [0] * dim
            for var in combo:
                if var < dim:
                    xe[var] += 1
                else:
                    ye[var - dim] += 1
            out.append(PolyCylinder.monomial(1.0, xe, ye))
    return out


def default_audit_battery(n):
    """Mixed (pair id, f, g) battery used by the identity audits."""
    d = min(n, 2)
    u1 = PolyCylinder.coordinate_u(1, d)
    v1 = PolyCylinder.coordinate_v(1, d)
    pairs = [
        ("v1-v1", v1, v1),
        ("u1-v1", u1, v1),
        ("const-v1", PolyCylinder.constant(1.0, d), v1),
        ("mixed-quad", v1 * v1 + u1, v1 * u1),
    ]
    if n >= 2:
        u2 = PolyCylinder.coordinate_u(2, 2)
        v2 = PolyCylinder.coordinate_v(2, 2)
        pairs.append(("cross-uv", u1 * v2, u2 * u1))
    bump = ExpQuad(a=(0.5,) * d, b=(0.25,) * d)
    pairs.append(("bump-v1", bump, v1))
    return pairs
