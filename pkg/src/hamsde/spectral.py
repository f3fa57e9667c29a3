"""Spectral basis and Gaussian layer on (0, 1).

The negative Dirichlet Laplacian on (0, 1) has eigenfunctions
d_k(x) = sqrt(2) sin(k pi x) and (inverse) eigenvalues lam_k = (k pi)^-2.
Everything downstream is expanded in this basis: a coefficient vector
v in R^n represents the function sum_k v_k d_k. Centered Gaussian measures
with covariance diag(lam_k^alpha) are sampled coordinatewise, and the
moment / exponential-moment helpers below are the closed forms used to
cross-check Monte Carlo estimates elsewhere in the package.
"""

from dataclasses import dataclass

import numpy as np

from ._rng import substream

# Sentinel returned by fernique_integral when the exponential moment diverges.
# A string (not float inf) so that JSON output stays unambiguous.
INFINITE = "infinite"

_SAMPLE_CHUNK = 8192


def dirichlet_eigenvalues(n):
    """First n eigenvalues lam_k = (k pi)^-2, k = 1..n, strictly decreasing."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    k = np.arange(1, n + 1, dtype=float)
    return (k * np.pi) ** -2.0


def evaluate_field(v, grid):
    """Evaluate the function with sine coefficients v on points of (0, 1).

    v has shape (n,) or (batch, n); grid has shape (m,). Returns (m,) or
    (batch, m). Points outside the open interval are rejected: the basis
    functions all vanish at 0 and 1 so values there are never informative.
    """
    v = np.asarray(v, dtype=float)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(grid <= 0.0) or np.any(grid >= 1.0):
        raise ValueError("grid points must lie strictly inside (0, 1)")
    n = v.shape[-1]
    k = np.arange(1, n + 1, dtype=float)
    design = np.sqrt(2.0) * np.sin(np.pi * np.outer(grid, k))  # (m, n)
    return v @ design.T


@dataclass(frozen=True)
class GaussianSpec:
    """Centered Gaussian on span{d_1..d_dim} with covariance diag(lam_k^exponent)."""

    exponent: float
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.exponent <= 0.0:
            raise ValueError(f"exponent must be positive, got {self.exponent}")

    @property
    def eigenvalues(self):
        return dirichlet_eigenvalues(self.dim) ** self.exponent

    @property
    def trace_class(self):
        # sum_k (k pi)^(-2 exponent) < inf  iff  2 * exponent > 1.
        return self.exponent > 0.5

    def trace(self):
        return float(np.sum(self.eigenvalues))


def sample_gaussian(spec, seed, count):
    """Draw `count` iid samples, shape (count, spec.dim).

    Deterministic in (spec, seed, count), and extending count keeps the
    earlier rows: samples are generated in fixed-size chunks with one
    substream per chunk, so sample_gaussian(spec, s, 100) is the prefix of
    sample_gaussian(spec, s, 1000).
    """
    if count < 0:
        raise ValueError(f"count must be nonnegative, got {count}")
    scale = np.sqrt(spec.eigenvalues)
    out = np.empty((count, spec.dim), dtype=float)
    chunk_index = 0
    done = 0
    while done < count:
        take = min(_SAMPLE_CHUNK, count - done)
        rng = substream(seed, 101, chunk_index)
        block = rng.standard_normal((_SAMPLE_CHUNK, spec.dim))
        out[done:done + take] = block[:take] * scale
        done += take
        chunk_index += 1
    return out


def _padded(spec, vec):
    v = np.asarray(vec, dtype=float)
    if v.ndim != 1 or v.shape[0] > spec.dim:
        raise ValueError(f"vector must be 1-d with dim <= {spec.dim}, got shape {v.shape}")
    if v.shape[0] < spec.dim:
        v = np.concatenate([v, np.zeros(spec.dim - v.shape[0])])
    return v


def gaussian_moment2(spec, l1, l2):
    """E[(Z, l1)(Z, l2)] = sum_k lam_k^alpha l1_k l2_k."""
    a = _padded(spec, l1)
    b = _padded(spec, l2)
    return float(np.sum(spec.eigenvalues * a * b))


def gaussian_moment4(spec, l1, l2, l3, l4):
    """E[(Z, l1)(Z, l2)(Z, l3)(Z, l4)] by the Gaussian pairing identity.

    Equals q12 q34 + q13 q24 + q14 q23 with q_ij = gaussian_moment2(li, lj).
    """
    q12 = gaussian_moment2(spec, l1, l2)
    q34 = gaussian_moment2(spec, l3, l4)
    q13 = gaussian_moment2(spec, l1, l3)
    q24 = gaussian_moment2(spec, l2, l4)
    q14 = gaussian_moment2(spec, l1, l4)
    q23 = gaussian_moment2(spec, l2, l3)
    return q12 * q34 + q13 * q24 + q14 * q23


def fernique_integral(spec, s):
    """E[exp(s ||Z||^2)] = prod_k (1 - 2 s lam_k^alpha)^(-1/2), or INFINITE.

    The product is finite exactly when s < 1 / (2 lam_1^alpha) (the largest
    eigenvalue binds). s <= 0 is always finite.
    """
    lam = spec.eigenvalues
    factors = 1.0 - 2.0 * float(s) * lam
    if np.any(factors <= 0.0):
        return INFINITE
    return float(np.exp(-0.5 * np.sum(np.log(factors))))
