"""Operator coefficients and exponent-regime audits.

The block operators are diagonal powers of Q = diag(lam_k): the position
and velocity covariances Q^alpha1 and Q^alpha2, the coupling Q^sigma1, and
a state-dependent velocity-block diffusion with eigenvalues

    lam22_k(v) = lam_k^alpha2 + lam_k^sigma2
                 + lam_k^sigma3 * psi_k(p_k v) / ||psi_k||_C4,

where each psi_k is a nonnegative compactly supported C^4 bump depending
on at most the first three coordinates. check_regime evaluates every
exponent inequality from the parameter table as a numeric left/right pair
and aggregates them into four verdicts; check_K_assumptions probes the
operator-level assumptions (lower bound, split-norm bounds, square-summable
logarithmic derivative, Poincare constants, trace bound) at a truncation.
"""

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from ._rng import substream
from .errors import ConfigError
from .potential import phi_zero
from .spectral import dirichlet_eigenvalues

_TOL = 1e-12
_SUPPORT = 2.0


def _bump_window(y):
    y = np.asarray(y, dtype=float)
    w = 1.0 - 0.25 * np.square(y)
    return y, w, np.abs(y) < _SUPPORT


def bump0(y):
    y, w, inside = _bump_window(y)
    return np.where(inside, w ** 5, 0.0)


def bump1(y):
    y, w, inside = _bump_window(y)
    return np.where(inside, -2.5 * y * w ** 4, 0.0)


def bump2(y):
    y, w, inside = _bump_window(y)
    return np.where(inside, -2.5 * w ** 3 * (w - 2.0 * np.square(y)), 0.0)


def bump3(y):
    y, w, inside = _bump_window(y)
    return np.where(inside, 7.5 * y * w ** 2 * (2.0 * w - np.square(y)), 0.0)


def bump4(y):
    y, w, inside = _bump_window(y)
    y2 = np.square(y)
    return np.where(inside, 7.5 * w * (2.0 * w * w - 6.0 * w * y2 + y2 * y2), 0.0)


_BUMP_DERIVS = (bump0, bump1, bump2, bump3, bump4)


@lru_cache(maxsize=8)
def _bump_deriv_sups(grid_points=4096):
    # even-count grid misses the origin, where the fourth derivative peaks,
    # so the origin is appended explicitly
    grid = np.concatenate([np.linspace(-_SUPPORT, _SUPPORT, grid_points), [0.0]])
    return tuple(float(np.max(np.abs(d(grid)))) for d in _BUMP_DERIVS)


@lru_cache(maxsize=8)
def _c4_norm_for_factors(factors):
    sups = _bump_deriv_sups()
    best = 0.0
    for orders in itertools.product(range(5), repeat=factors):
        if sum(orders) > 4:
            continue
        prod = 1.0
        for r in orders:
            prod *= sups[r]
        best = max(best, prod)
    return best


@dataclass(frozen=True)
class BumpFamily:
    """psi_k(v) = prod of bump(v_j) over j <= min(k, max_factors)."""

    max_factors: int = 3

    def __post_init__(self):
        if self.max_factors < 1:
            raise ConfigError(f"max_factors must be >= 1, got {self.max_factors}")

    def factor_count(self, k):
        return min(k, self.max_factors)

    def c4_norm(self, k):
        return _c4_norm_for_factors(self.factor_count(k))

    def psi(self, k, v):
        v = np.asarray(v, dtype=float)
        f = self.factor_count(k)
        out = np.ones(v.shape[:-1])
        for j in range(f):
            out = out * bump0(v[..., j])
        return out

    def dpsi(self, k, i, v):
        """Partial derivative of psi_k along coordinate i (1-based)."""
        f = self.factor_count(k)
        if i > f:
            return np.zeros(np.asarray(v, dtype=float).shape[:-1])
        v = np.asarray(v, dtype=float)
        out = bump1(v[..., i - 1])
        for j in range(f):
            if j != i - 1:
                out = out * bump0(v[..., j])
        return out


@dataclass(frozen=True)
class CoefficientSpec:
    """Exponents (alpha1, alpha2, sigma1, sigma2, sigma3) plus the bump family.

    bumps=None gives a state-independent diffusion (the bump term drops out).
    """

    alpha1: float
    alpha2: float
    sigma1: float
    sigma2: float
    sigma3: float
    bumps: Optional[BumpFamily] = None

    def __post_init__(self):
        if self.alpha1 <= 0.5 or self.alpha2 <= 0.5:
            raise ConfigError(
                f"alpha1 and alpha2 must exceed 1/2 for trace-class covariances, "
                f"got alpha1={self.alpha1}, alpha2={self.alpha2}")
        for name in ("sigma1", "sigma2", "sigma3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)}")

    def exponents(self):
        return self.alpha1, self.alpha2, self.sigma1, self.sigma2, self.sigma3


def lambda22(spec, k, v):
    """Eigenvalue of the velocity diffusion block on mode k at state v."""
    if k < 1:
        raise ConfigError(f"mode index must be >= 1, got {k}")
    lam_k = (k * np.pi) ** -2.0
    base = lam_k ** spec.alpha2 + lam_k ** spec.sigma2
    if spec.bumps is None:
        return float(base)
    psi = float(spec.bumps.psi(k, np.asarray(v, dtype=float)))
    return float(base + lam_k ** spec.sigma3 * psi / spec.bumps.c4_norm(k))


def lambda22_partials(spec, k, i, v):
    """d/dv_i of lambda22(spec, k, v); zero for i beyond the dependence range."""
    if k < 1 or i < 1:
        raise ConfigError(f"mode indices must be >= 1, got k={k}, i={i}")
    if spec.bumps is None or i > k:
        return 0.0
    lam_k = (k * np.pi) ** -2.0
    d = float(spec.bumps.dpsi(k, i, np.asarray(v, dtype=float)))
    return float(lam_k ** spec.sigma3 * d / spec.bumps.c4_norm(k))


def lambda22_matrix(spec, n, V):
    """All n eigenvalues at each row of V: shape (B, n)."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    lam = dirichlet_eigenvalues(n)
    base = lam ** spec.alpha2 + lam ** spec.sigma2
    out = np.broadcast_to(base, (V.shape[0], n)).copy()
    if spec.bumps is not None:
        f_max = min(spec.bumps.max_factors, n, V.shape[1])
        factors = bump0(V[:, :f_max])
        cum = np.cumprod(factors, axis=1)  # (B, f_max)
        for k in range(1, n + 1):
            f = min(spec.bumps.factor_count(k), f_max)
            psi_k = cum[:, f - 1] if f >= 1 else np.ones(V.shape[0])
            out[:, k - 1] += lam[k - 1] ** spec.sigma3 * psi_k / spec.bumps.c4_norm(k)
    return out


def lambda22_divergence(spec, n, V):
    """Vector with component k = d/dv_k lambda22_k(v), batched: shape (B, n)."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    out = np.zeros((V.shape[0], n))
    if spec.bumps is None:
        return out
    lam = dirichlet_eigenvalues(n)
    f_max = min(spec.bumps.max_factors, n, V.shape[1])
    vals = bump0(V[:, :f_max])
    slopes = bump1(V[:, :f_max])
    for k in range(1, f_max + 1):
        prod = slopes[:, k - 1].copy()
        for j in range(spec.bumps.factor_count(k)):
            if j != k - 1:
                prod = prod * vals[:, j]
        out[:, k - 1] = lam[k - 1] ** spec.sigma3 * prod / spec.bumps.c4_norm(k)
    return out


def apply_Qpow(exponent, v):
    """Scale coordinate k by lam_k^exponent."""
    v = np.asarray(v, dtype=float)
    lam = dirichlet_eigenvalues(v.shape[-1])
    return v * lam ** float(exponent)


# ---------------------------------------------------------------------------
# Exponent-regime report


@dataclass(frozen=True)
class Condition:
    name: str
    group: str
    lhs: float
    rhs: float
    relation: str  # one of >=, >, <=, <
    note: str = ""

    @property
    def strict(self):
        return self.relation in (">", "<")

    @property
    def passed(self):
        gap = self.lhs - self.rhs
        if self.relation == ">=":
            return gap >= -_TOL
        if self.relation == ">":
            return gap > _TOL
        if self.relation == "<=":
            return -gap >= -_TOL
        if self.relation == "<":
            return -gap > _TOL
        raise ValueError(f"unknown relation {self.relation!r}")

    def as_dict(self):
        return {
            "name": self.name,
            "group": self.group,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "relation": self.relation,
            "strict": self.strict,
            "pass": bool(self.passed),
            "note": self.note,
        }


_GROUP_TITLES = {
    "m_dissipativity": "essential m-dissipativity / martingale problem",
    "process": "invariant Hunt process, weak solutions, infinite lifetime",
    "hypocoercivity": "semigroup hypocoercivity",
    "ergodicity": "ergodicity with algebraic rate (all of the above)",
}


@dataclass(frozen=True)
class RegimeReport:
    conditions: tuple
    verdicts: dict
    extras: dict
    notes: tuple = ()

    def failing(self, group=None):
        return [c for c in self.conditions
                if not c.passed and (group is None or c.group == group)]

    def as_dict(self):
        return {
            "conditions": [c.as_dict() for c in self.conditions],
            "verdicts": {k: bool(v) for k, v in self.verdicts.items()},
            "extras": self.extras,
            "notes": list(self.notes),
        }

    def to_json(self, indent=2):
        return json.dumps(self.as_dict(), indent=indent)

    def to_table(self):
        lines = []
        width = max(len(c.name) for c in self.conditions) + 2
        for group in ("m_dissipativity", "process", "hypocoercivity", "ergodicity"):
            members = [c for c in self.conditions if c.group == group]
            verdict = "PASS" if self.verdicts[group] else "FAIL"
            lines.append(f"[{verdict}] {_GROUP_TITLES[group]}")
            for c in members:
                mark = "ok  " if c.passed else "FAIL"
                lines.append(
                    f"  {mark} {c.name:<{width}} lhs={c.lhs:<12.6g} "
                    f"{c.relation} rhs={c.rhs:<12.6g}")
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines)


def _search_admissible(spec, beta_given, gamma_given, alpha_given):
    """Pick (alpha, beta, gamma) satisfying the auxiliary battery when possible.

    alpha is scanned over a geometric grid; beta and then gamma are set to
    their binding lower bounds plus a small slack, honoring the order
    "choose beta, then gamma large enough".
    """
    a1, a2, s1, s2, s3 = spec.exponents()
    mn = min(s2, a2)
    slack = 1e-9
    alpha = alpha_given
    if alpha is None:
        need = max(1.0 / (2.0 * a1) + 0.5 + slack, 2.0 * ((mn / 2.0 - s1) / a1 + 1.0))
        alpha = next((c for c in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0) if c >= need), 64.0)
    beta = beta_given
    if beta is None:
        beta = max(1.0 / (2.0 * a2) + mn / a2 + slack,
                   2.0 * (1.0 - mn / (2.0 * a2)),
                   2.0 * (1.0 - s3 / (2.0 * a2)))
    gamma = gamma_given
    if gamma is None:
        gamma = max(1.0 / (4.0 * a2) + 0.5 + slack,
                    (beta + 1.0 / (2.0 * a2) + mn / a2) / 4.0 + slack)
    return float(alpha), float(beta), float(gamma)


def check_regime(spec, phi, extras=None):
    """Evaluate every exponent inequality and aggregate the four verdicts.

    extras is an optional tuple (alpha, beta, gamma, theta1); missing entries
    (None or a shorter tuple) are filled in by the admissibility search and
    the default theta1 = 2.
    """
    a1, a2, s1, s2, s3 = spec.exponents()
    mn = min(s2, a2)

    parsed = [None, None, None, None]
    if extras is not None:
        seq = list(extras)
        if len(seq) > 4:
            raise ConfigError(f"extras takes at most 4 entries, got {len(seq)}")
        for i, val in enumerate(seq):
            parsed[i] = None if val is None else float(val)
    searched = parsed[0] is None or parsed[1] is None or parsed[2] is None
    alpha, beta, gamma = _search_admissible(spec, parsed[1], parsed[2], parsed[0])
    theta1 = 2.0 if parsed[3] is None else parsed[3]

    rows = []

    def add(name, group, lhs, rhs, relation, note=""):
        rows.append(Condition(name, group, float(lhs), float(rhs), relation, note))

    g = "m_dissipativity"
    add("sigma2 >= 0", g, s2, 0.0, ">=")
    add("sigma3 >= min(sigma2, alpha2)/2", g, s3, mn / 2.0, ">=")
    add("2*sigma1 - min(sigma2, alpha2) >= 1/2", g, 2.0 * s1 - mn, 0.5, ">=")
    add("alpha > 1/(2*alpha1) + 1/2", g, alpha, 1.0 / (2.0 * a1) + 0.5, ">")
    add("alpha >= 2*((min(sigma2, alpha2)/2 - sigma1)/alpha1 + 1)", g,
        alpha, 2.0 * ((mn / 2.0 - s1) / a1 + 1.0), ">=")
    add("beta > 1/(2*alpha2) + min(sigma2, alpha2)/alpha2", g,
        beta, 1.0 / (2.0 * a2) + mn / a2, ">")
    add("beta >= max(2*(1 - min/(2*alpha2)), 2*(1 - sigma3/(2*alpha2)))", g,
        beta, max(2.0 * (1.0 - mn / (2.0 * a2)), 2.0 * (1.0 - s3 / (2.0 * a2))), ">=")
    add("gamma > 1/(4*alpha2) + 1/2", g, gamma, 1.0 / (4.0 * a2) + 0.5, ">")
    add("4*gamma - beta > 1/(2*alpha2) + min(sigma2, alpha2)/alpha2", g,
        4.0 * gamma - beta, 1.0 / (2.0 * a2) + mn / a2, ">")
    add("sigma1 >= alpha2*gamma", g, s1, a2 * gamma, ">=")

    g = "process"
    add("alpha1/2 + sigma1 - alpha2/2 > 1/2", g, a1 / 2.0 + s1 - a2 / 2.0, 0.5, ">")
    add("-alpha1/2 + sigma1 + alpha2/2 > 1/2", g, -a1 / 2.0 + s1 + a2 / 2.0, 0.5, ">")
    add("sigma2 > 1/2", g, s2, 0.5, ">")
    add("sigma3 > 1/2", g, s3, 0.5, ">")
    add("2*sigma1 >= alpha2", g, 2.0 * s1, a2, ">=")

    g = "hypocoercivity"
    has_split = phi.convex_part is not None and (
        phi.perturbation is None or math.isfinite(phi.osc))
    add("phi splits as convex + bounded-oscillation part", g,
        1.0 if has_split else 0.0, 1.0, ">=",
        note="structural: convex part present, perturbation oscillation finite")
    add("2*sigma1 - alpha2 > 0", g, 2.0 * s1 - a2, 0.0, ">")
    add("2*sigma1 - alpha2 <= alpha1/2", g, 2.0 * s1 - a2, a1 / 2.0, "<=")
    add("sigma2 >= alpha2", g, s2, a2, ">=")
    add("sigma3 >= 3*alpha2/2", g, s3, 1.5 * a2, ">=")
    add("theta1 > 1", g, theta1, 1.0, ">")

    verdicts = {}
    for group in ("m_dissipativity", "process", "hypocoercivity"):
        verdicts[group] = all(c.passed for c in rows if c.group == group)
    verdicts["ergodicity"] = all(verdicts.values())

    notes = []
    x = 2.0 * s1 - a2
    if 0.0 < x < a1:
        eps = x / (a1 - x)
        inside = "inside (0,1)" if eps < 1.0 else "at or beyond the boundary epsilon=1"
        notes.append(f"resolvent-power exponent epsilon = {eps:.6g}, {inside} "
                     "(informational, not part of the verdicts)")
    else:
        notes.append("resolvent-power exponent undefined: 2*sigma1 - alpha2 "
                     f"= {x:.6g} outside (0, alpha1)")
    if searched:
        notes.append(f"auxiliary exponents from admissibility search: "
                     f"alpha={alpha:.6g}, beta={beta:.6g}, gamma={gamma:.6g}")

    extras_used = {"alpha": alpha, "beta": beta, "gamma": gamma,
                   "theta1": theta1, "searched": searched}
    return RegimeReport(conditions=tuple(rows), verdicts=verdicts,
                        extras=extras_used, notes=tuple(notes))


# ---------------------------------------------------------------------------
# Operator-assumption audit


@dataclass(frozen=True)
class AssumptionRow:
    name: str
    lhs: float
    rhs: float
    passed: bool
    note: str = ""

    def as_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "pass": bool(self.passed), "note": self.note}


@dataclass(frozen=True)
class KAssumptionReport:
    rows: tuple
    constants: dict
    n: int

    @property
    def all_pass(self):
        return all(r.passed for r in self.rows)

    def as_dict(self):
        return {"n": self.n, "rows": [r.as_dict() for r in self.rows],
                "constants": self.constants, "all_pass": bool(self.all_pass)}

    def to_json(self, indent=2):
        return json.dumps(self.as_dict(), indent=indent)

    def to_table(self):
        lines = [f"operator assumption audit at truncation n={self.n}"]
        for r in self.rows:
            mark = "ok  " if r.passed else "FAIL"
            lines.append(f"  {mark} {r.name:<44} lhs={r.lhs:<12.6g} rhs={r.rhs:<12.6g}"
                         + (f"  [{r.note}]" if r.note else ""))
        lines.append("constants: " + ", ".join(
            f"{k}={v:.6g}" for k, v in self.constants.items()))
        return "\n".join(lines)


def check_K_assumptions(spec, n, mc_budget, phi=None, seed=0):
    """Probe the operator assumptions at truncation n with mc_budget samples.

    Monte Carlo draws come from the velocity marginal N(0, diag(lam^alpha2)).
    Returns a report with one row per checked assumption and the measured
    constants (C1, C2, M22 and the Poincare-type constants).
    """
    from .hypocoercivity import compute_cA, compute_cS

    if n < 1:
        raise ConfigError(f"truncation must be >= 1, got {n}")
    if mc_budget < 100:
        raise ConfigError(f"mc_budget must be >= 100, got {mc_budget}")
    if phi is None:
        phi = phi_zero()
    a2, s2, s3 = spec.alpha2, spec.sigma2, spec.sigma3
    lam = dirichlet_eigenvalues(n)
    rng = substream(seed, 301)
    V = rng.standard_normal((int(mc_budget), n)) * np.sqrt(lam ** a2)

    rows = []
    constants = {}

    # K0: pointwise lower bound by the elliptic floor diag(lam^alpha2)
    lam22 = lambda22_matrix(spec, n, V)
    slack0 = float(np.min(lam22 - lam ** a2))
    rows.append(AssumptionRow(
        "K0: lam22_k(v) >= lam_k^alpha2 on samples", slack0, 0.0, slack0 >= -_TOL))

    # K2(i): natural split K1 = diag(lam^alpha2 + lam^sigma2), so the scaled
    # norm has entries (1 + lam_k^(sigma2-alpha2))^2; bounded by 4 exactly
    # when sigma2 >= alpha2 (the entry at the smallest mode binds)
    entries = (1.0 + lam ** (s2 - a2)) ** 2
    c1_nat = float(np.max(entries))
    note1 = "" if s2 >= a2 else "exponent negative: sup grows without bound in k"
    rows.append(AssumptionRow(
        "K2(i): |Q2^-1/2 K1* Q2^-1 K1 Q2^-1/2| <= 4", c1_nat, 4.0,
        s2 >= a2 and c1_nat <= 4.0 + _TOL, note1))
    constants["C1"] = c1_nat

    # K2(ii): state-dependent part K2(v) = diag(lam^sigma3 psi_k/|psi_k|)
    if spec.bumps is None:
        c2bar_sup = 0.0
        C2 = 0.0
    else:
        bump_part = (lam22 - lam ** a2 - lam ** s2)  # lam^sigma3 psi/|psi|
        ratio = bump_part / lam ** a2
        c2bar = np.max(lam ** -a2 * ratio ** 2, axis=1)  # lam^(2 sigma3 - 3 alpha2) (psi/|psi|)^2
        c2bar_sup = float(np.max(c2bar))
        C2 = float(np.mean(c2bar * np.sum(V * V, axis=1)))
    rows.append(AssumptionRow(
        "K2(ii): sup_v |Q2^-1/2 K2(v)* Q2^-2 K2(v) Q2^-1/2| <= 1",
        c2bar_sup, 1.0, c2bar_sup <= 1.0 + _TOL))
    constants["C2"] = C2

    # K2(iii): square-summable scaled derivative sequence and its second moment
    div = lambda22_divergence(spec, n, V)  # component j = d_j lam22_j(v)
    alpha_seq = lam ** (-a2 / 2.0) * div
    norm_v = np.sqrt(np.sum(V * V, axis=1))
    envelope = 2.0 * (2.0 + norm_v)[:, None] * lam ** (s3 - a2 / 2.0)
    slack_env = float(np.min(envelope - np.abs(alpha_seq)))
    rows.append(AssumptionRow(
        "K2(iii): |alpha22_j(v)| <= 2(2+|v|) lam_j^(sigma3-alpha2/2)",
        slack_env, 0.0, slack_env >= -_TOL))
    M22 = float(np.mean(np.sum(alpha_seq ** 2, axis=1)))
    constants["M22"] = M22

    # tail of the envelope: sum_j lam_j^(2 sigma3 - alpha2) must converge;
    # lam_j^e = (j pi)^(-2e) is summable iff 2e > 1
    e = 2.0 * s3 - a2
    partials = []
    for mult in (4, 8, 16, 32, 64):
        jj = np.arange(1, mult * n + 1, dtype=float)
        partials.append(float(np.sum((jj * np.pi) ** (-2.0 * e))))
    growth = partials[-1] / partials[-2]
    rows.append(AssumptionRow(
        "K2(iii): envelope tail exponent 2*(2*sigma3 - alpha2) > 1",
        2.0 * e, 1.0, 2.0 * e > 1.0,
        note=f"partial sums at N=4n..64n: {partials[0]:.5g} -> {partials[-1]:.5g} "
             f"(last doubling ratio {growth:.4g})"))

    # K3/K4: Poincare-type constants
    cS = compute_cS(spec)
    cA = compute_cA(spec, phi)
    constants["cS"] = cS
    constants["cA"] = cA.value
    rows.append(AssumptionRow("K3: Poincare constant cS positive", cS, 0.0, cS > 0.0))
    rows.append(AssumptionRow(
        "K4: coupling constant cA positive", cA.value, 0.0, cA.value > 0.0,
        note="vanishing spectral gap flagged" if cA.vanishing_gap else ""))

    # K6: trace bound by the constant envelope
    tr = np.sum(lam22, axis=1)
    k22_bound = float(np.sum(lam ** a2 + lam ** s2 + lam ** s3))
    tr_max = float(np.max(tr))
    rows.append(AssumptionRow(
        "K6: tr K22(v) <= sum_k (lam^a2 + lam^s2 + lam^s3)",
        tr_max, k22_bound, tr_max <= k22_bound + _TOL,
        note="constant envelope is integrable for any probability measure"))

    return KAssumptionReport(rows=tuple(rows), constants=constants, n=int(n))
