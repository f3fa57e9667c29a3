"""Explicit convergence-rate constants and the experiments that test them.

Four scalar constants control the exponential decay rate of the semigroup:
c_S from the Poincare inequality of the velocity Gaussian, c_A from the
coupling operator and the oscillation of the bounded potential
perturbation, c_1 from the splitting of the velocity coefficient block
into its constant and state-dependent parts, and c_Phi2 bounding the
perturbation Hessian against the coupling covariance. The decay rate is

    theta2 = 1/2 * (theta1 - 1)/theta1
             * min(c_S, c_1) / ( s * (1 + (1 + c_A)/(2 c_A) * s)
                                 + 1/2 * c_A/(1 + c_A) )
             * c_A/(1 + c_A),         s = 1 + c_1 + sqrt(8 + c_Phi2/4),

valid for any prefactor theta1 > 1, and the time-average error of an
ergodic observable g obeys

    (1/sqrt(t)) * sqrt( (2 theta1/theta2)
                        * (1 - (1 - e^(-t theta2))/(t theta2)) )
                * |g - mean(g)|.

The two estimators at the bottom confront those bounds with nested and
long-run Monte Carlo over the Galerkin dynamics.
"""

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._rng import substream
from .coefficients import lambda22_divergence, lambda22_matrix
from .errors import ConfigError, ContractViolationError
from .kolmogorov import sample_gibbs_states
from .sde import DEFAULT_SCHEME, _run_ensemble, _value_on_state
from .spectral import dirichlet_eigenvalues

_TOL = 1e-12


def compute_cS(spec, n=64, lower=None):
    """Poincare constant of the velocity block.

    The diffusion block is bounded below by diag(lam_k^alpha2), which is
    exactly the covariance of the velocity Gaussian, so the default ratio
    scan gives omega22 = 1 and cS = 1/lam_1^alpha2. An explicit diagonal
    lower bound can be passed to override the default floor.
    """
    lam2 = dirichlet_eigenvalues(n) ** spec.alpha2
    if lower is None:
        lower = lam2
    lower = np.asarray(lower, dtype=float)
    if lower.shape != (n,) or np.any(lower <= 0.0):
        raise ConfigError(f"diagonal lower bound must be {n} positive entries")
    omega22 = float(np.min(lower / lam2))
    return omega22 / float(lam2[0])


@dataclass(frozen=True)
class CAResult:
    value: float
    omega12: float
    exponent: float
    minimizer_k: int
    n: int
    vanishing_gap: bool

    def __float__(self):
        return self.value


def compute_cA(spec, phi, n=64):
    """Coupling constant c_A = omega12 / (lam_1^alpha1 e^osc).

    The coupling quadratic form has diagonal values lam_k^(2 sigma1 -
    alpha2), so omega12 is the minimum over k = 1..n of
    lam_k^(2 sigma1 - alpha2 - alpha1). A positive exponent makes that
    minimum run away to zero with k; the minimizer sitting at k = n is
    flagged as a vanishing spectral gap.
    """
    lam = dirichlet_eigenvalues(n)
    exponent = 2.0 * spec.sigma1 - spec.alpha2 - spec.alpha1
    vals = lam ** exponent
    kmin = int(np.argmin(vals))
    omega12 = float(vals[kmin])
    vanishing = n > 1 and kmin == n - 1
    if vanishing:
        warnings.warn(
            "coupling exponent 2*sigma1 - alpha2 - alpha1 is positive: the "
            "spectral gap vanishes as the truncation grows", RuntimeWarning,
            stacklevel=2)
    value = omega12 / (float(lam[0]) ** spec.alpha1 * math.exp(phi.osc))
    return CAResult(value=value, omega12=omega12, exponent=exponent,
                    minimizer_k=kmin + 1, n=n, vanishing_gap=vanishing)


@dataclass(frozen=True)
class C1Result:
    c1: float
    C1: float
    C2: float
    M22: float
    c2bar_sup: float
    tail_exponent: float
    tail_summable: bool
    note: str = ""

    def __iter__(self):
        yield self.c1
        yield self.C1
        yield self.C2
        yield self.M22


def compute_c1(spec, mc_budget, seed, n=8):
    """Split constants of the velocity coefficient block.

    The constant part diag(lam^alpha2 + lam^sigma2) has scaled norm
    (1 + lam_1^(sigma2 - alpha2))^2, which stays below 4 exactly when
    sigma2 >= alpha2 and blows up along k otherwise. The state-dependent
    part is the bump family; its C2 moment and the squared ell2 norm M22
    of the scaled divergence sequence are Monte-Carlo averages over the
    velocity Gaussian. Only the first three divergence components are ever
    nonzero, so the truncation is exact for n >= 3.
    """
    if mc_budget < 1000:
        raise ConfigError(f"budget must be at least 1000, got {mc_budget}")
    if n < 1:
        raise ConfigError(f"truncation must be >= 1, got {n}")
    lam = dirichlet_eigenvalues(n)
    a2, s2, s3 = spec.alpha2, spec.sigma2, spec.sigma3
    notes = []
    if s2 >= a2 - _TOL:
        C1 = float((1.0 + lam[0] ** (s2 - a2)) ** 2)
    else:
        C1 = math.inf
        notes.append("sigma2 < alpha2: constant-part norm unbounded in k")
    tail_exponent = 2.0 * (2.0 * s3 - a2)
    tail_summable = tail_exponent > 1.0
    if not tail_summable:
        notes.append(
            "divergence envelope tail not square-summable: "
            f"2*(2*sigma3 - alpha2) = {tail_exponent:.4g} <= 1")
    if spec.bumps is None:
        C2 = 0.0
        M22 = 0.0
        c2bar_sup = 0.0
    else:
        rng = substream(seed, 71)
        V = rng.standard_normal((int(mc_budget), n)) * np.sqrt(lam ** a2)
        lam22 = lambda22_matrix(spec, n, V)
        bump = lam22 - (lam ** a2 + lam ** s2)
        c2bar = np.max(lam ** (-3.0 * a2) * bump ** 2, axis=1)
        c2bar_sup = float(np.max(c2bar))
        C2 = float(np.mean(c2bar * np.sum(V * V, axis=1)))
        div = lambda22_divergence(spec, n, V)
        M22 = float(np.mean(np.sum(lam ** -a2 * div ** 2, axis=1)))
    c1 = 0.5 * (math.sqrt(C1) + math.sqrt(C2) + math.sqrt(M22))
    return C1Result(c1=c1, C1=C1, C2=C2, M22=M22, c2bar_sup=c2bar_sup,
                    tail_exponent=tail_exponent, tail_summable=tail_summable,
                    note="; ".join(notes))


@dataclass(frozen=True)
class HypocConstants:
    c_S: float
    c_A: float
    c_Phi2: float
    C1: float
    C2: float
    M22: float
    c1: float
    theta1: float

    def __post_init__(self):
        for name in ("c_S", "c_A"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive")
        for name in ("c_Phi2", "C1", "C2", "M22"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0.0):
                raise ConfigError(f"{name} must be finite and nonnegative")
        expected = 0.5 * (math.sqrt(self.C1) + math.sqrt(self.C2)
                          + math.sqrt(self.M22))
        if abs(self.c1 - expected) > 1e-12 * max(1.0, expected):
            raise ContractViolationError(
                f"c1 = {self.c1} does not match (sqrt(C1)+sqrt(C2)+sqrt(M22))/2 "
                f"= {expected}")
        if not self.theta1 > 1.0:
            raise ConfigError(f"theta1 must exceed 1, got {self.theta1}")

    @classmethod
    def from_components(cls, c_S, c_A, c_Phi2, C1, C2, M22, theta1=2.0):
        c1 = 0.5 * (math.sqrt(C1) + math.sqrt(C2) + math.sqrt(M22))
        return cls(c_S=c_S, c_A=c_A, c_Phi2=c_Phi2, C1=C1, C2=C2, M22=M22,
                   c1=c1, theta1=theta1)

    def as_dict(self):
        return {"c_S": self.c_S, "c_A": self.c_A, "c_Phi2": self.c_Phi2,
                "C1": self.C1, "C2": self.C2, "M22": self.M22,
                "c1": self.c1, "theta1": self.theta1,
                "theta2": theta2(self.theta1, self)}

    def to_json(self, path=None):
        text = json.dumps(self.as_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def compute_constants(spec, phi, theta1=2.0, mc_budget=20000, seed=0, n=8,
                      k_scan=64):
    """Assemble the full constant set for a coefficient/potential pair.

    c_Phi2 is sup|phi2''| times the norm of the coupling covariance, whose
    diagonal values are lam_k^(2 sigma1 - alpha2); with the structural
    condition 2 sigma1 - alpha2 > 0 the norm is attained at k = 1.
    """
    c_S = compute_cS(spec, n=k_scan)
    ca = compute_cA(spec, phi, n=k_scan)
    parts = compute_c1(spec, mc_budget, seed, n=max(n, 4))
    lam = dirichlet_eigenvalues(k_scan)
    e2 = 2.0 * spec.sigma1 - spec.alpha2
    if e2 >= 0.0:
        norm_c = float(lam[0] ** e2)
    else:
        norm_c = float(lam[-1] ** e2)
        warnings.warn(
            "2*sigma1 - alpha2 is negative: the coupling covariance is "
            "unbounded and c_Phi2 is reported at the scan truncation",
            RuntimeWarning, stacklevel=2)
    c_Phi2 = phi.d2_perturbation_sup * norm_c
    return HypocConstants.from_components(
        c_S=c_S, c_A=ca.value, c_Phi2=c_Phi2, C1=parts.C1, C2=parts.C2,
        M22=parts.M22, theta1=theta1)


def theta2(theta1, constants):
    """Decay rate from the constant set, exactly as displayed."""
    if not theta1 > 1.0:
        raise ConfigError(f"theta1 must exceed 1, got {theta1}")
    c_S, c_A, c1, c_Phi2 = (constants.c_S, constants.c_A, constants.c1,
                            constants.c_Phi2)
    for name, val in (("c_S", c_S), ("c_A", c_A), ("c1", c1)):
        if not (math.isfinite(val) and val > 0.0):
            raise ConfigError(f"{name} must be positive and finite, got {val}")
    if c_Phi2 < 0.0:
        raise ConfigError(f"c_Phi2 must be nonnegative, got {c_Phi2}")
    s = 1.0 + c1 + math.sqrt(8.0 + c_Phi2 / 4.0)
    frac = c_A / (1.0 + c_A)
    denom = s * (1.0 + (1.0 + c_A) / (2.0 * c_A) * s) + 0.5 * frac
    return 0.5 * (theta1 - 1.0) / theta1 * min(c_S, c1) / denom * frac


def ergodic_bound(t, theta1, theta2_, norm_g_centered):
    """Time-average error bound (1/sqrt(t)) sqrt((2 theta1/theta2) h) |g|_c
    with h = 1 - (1 - e^(-t theta2))/(t theta2); a three-term series
    replaces h below t*theta2 = 1e-6, where the direct form cancels badly.
    """
    if not t > 0.0:
        raise ConfigError(f"time must be positive, got {t}")
    if not theta1 > 1.0:
        raise ConfigError(f"theta1 must exceed 1, got {theta1}")
    if not theta2_ > 0.0:
        raise ConfigError(f"theta2 must be positive, got {theta2_}")
    if norm_g_centered < 0.0:
        raise ConfigError("the centered norm cannot be negative")
    x = t * theta2_
    if x < 1e-6:
        h = x * (0.5 - x / 6.0 + x * x / 24.0)
    else:
        h = 1.0 + math.expm1(-x) / x
    return math.sqrt(2.0 * theta1 / theta2_ * h / t) * norm_g_centered


@dataclass(frozen=True)
class DecayPoint:
    t: float
    estimate: float
    se: float
    bound: float


@dataclass(frozen=True)
class DecayCurve:
    points: tuple
    mu_f: float
    norm_f: float
    constants: HypocConstants
    rate: float
    excluded: int
    degenerate: bool
    note: str = ""

    def __iter__(self):
        return iter(self.points)

    def to_csv(self, path=None):
        lines = ["t,estimate,SE,bound"]
        for p in self.points:
            lines.append(",".join(repr(float(x))
                                  for x in (p.t, p.estimate, p.se, p.bound)))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def estimate_decay(system, f, times, outer, inner, seed, theta1=2.0,
                   constants=None, dt=1e-3, scheme=DEFAULT_SCHEME,
                   mc_budget=20000):
    """Nested Monte-Carlo estimate of |T_t f - mean(f)| in L2 of the Gibbs
    measure, one row per requested time.

    Outer states come from the reweighted Gaussian; each spawns `inner`
    paths whose endpoint mean m_i estimates (T_t f)(w_i). The naive average
    of (m_i - mean)^2 is biased upward by the inner noise, so the unbiased
    s_i^2/inner is subtracted per state (and the reference-mean variance on
    top), then the root is taken after clipping at zero. The companion
    column is theta1 e^(-theta2 t) |f - mean(f)|.
    """
    times = [float(t) for t in times]
    if any(t < 0.0 for t in times):
        raise ConfigError("decay times must be nonnegative")
    if sorted(times) != times:
        raise ConfigError("decay times must be sorted ascending")
    if outer < 2 or inner < 2:
        raise ConfigError("need at least 2 outer states and 2 inner paths")
    n = system.n
    gibbs = sample_gibbs_states(system.ctx, outer, seed,
                                min_proposals=max(4 * outer, 4096))
    mu_f, mu_se, _ = gibbs.reference(f)
    norm_f = gibbs.centered_norm(f, mu_f)
    if constants is None:
        constants = compute_constants(system.spec, system.ctx.phi,
                                      theta1=theta1, mc_budget=mc_budget,
                                      seed=seed, n=max(n, 4))
    rate = theta2(constants.theta1, constants)
    step_of = {t: (0 if t == 0.0 else max(1, int(round(t / dt)))) for t in times}
    snaps, _, alive = _run_ensemble(
        system, np.repeat(gibbs.states, inner, axis=0), dt,
        max(step_of.values()), scheme, seed,
        snapshot_steps=sorted(set(step_of.values())),
        collect=lambda Z: _value_on_state(f, Z, n))
    mask = alive.reshape(outer, inner)
    counts = mask.sum(axis=1)
    valid = counts >= 2
    points = []
    for t in times:
        vals = np.where(mask, snaps[step_of[t]].reshape(outer, inner), np.nan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            m = np.nanmean(vals, axis=1)
            s2 = np.nanvar(vals, axis=1, ddof=1)
        q = (m - mu_f) ** 2 - np.where(counts > 0, s2 / np.maximum(counts, 1), 0.0)
        q = q[valid] - mu_se ** 2
        est2 = float(np.mean(q))
        se_q = float(np.std(q, ddof=1) / math.sqrt(q.size)) if q.size > 1 else 0.0
        est = math.sqrt(max(est2, 0.0))
        scale = max(est, math.sqrt(se_q) if se_q > 0.0 else 0.0)
        se_est = se_q / (2.0 * scale) if scale > 0.0 else 0.0
        bound = constants.theta1 * math.exp(-rate * t) * norm_f
        points.append(DecayPoint(t=t, estimate=est, se=se_est, bound=bound))
    excluded = int(outer * inner - alive.sum())
    note = "" if valid.all() else (
        f"{int((~valid).sum())} outer state(s) dropped after path blow-ups")
    return DecayCurve(points=tuple(points), mu_f=mu_f, norm_f=norm_f,
                      constants=constants, rate=rate, excluded=excluded,
                      degenerate=gibbs.degenerate, note=note)


@dataclass(frozen=True)
class ErgodicEstimate:
    value: float
    se: float
    reference: float
    reference_se: float
    reps: int
    excluded: int

    def __iter__(self):
        yield self.value
        yield self.se


def estimate_ergodic_error(system, g, t, reps, seed, dt=1e-3,
                           scheme=DEFAULT_SCHEME):
    """Root-mean-square error of the time average of g over [0, t].

    Each of the `reps` trajectories starts from the reweighted Gaussian,
    accumulates the running mean of g along its own path, and contributes
    one squared deviation from the importance-sampling reference mean.
    """
    if not t > 0.0:
        raise ConfigError(f"time must be positive, got {t}")
    if reps < 30:
        raise ConfigError(f"need at least 30 repetitions, got {reps}")
    n = system.n
    gibbs = sample_gibbs_states(system.ctx, reps, seed,
                                min_proposals=max(4 * reps, 65536))
    mu_g, mu_se, _ = gibbs.reference(g)
    steps = max(1, int(round(t / dt)))
    _, accum, alive = _run_ensemble(
        system, gibbs.states, dt, steps, scheme, seed,
        accumulate=lambda Z: _value_on_state(g, Z, n))
    err = accum[alive] - mu_g
    if err.size < 2:
        raise ConfigError("too few surviving repetitions for an error bar")
    sq = err ** 2
    rms = math.sqrt(float(np.mean(sq)))
    se_sq = float(np.std(sq, ddof=1) / math.sqrt(sq.size))
    scale = max(rms, math.sqrt(se_sq) if se_sq > 0.0 else 0.0)
    se = se_sq / (2.0 * scale) if scale > 0.0 else 0.0
    return ErgodicEstimate(value=rms, se=se, reference=mu_g, reference_se=mu_se,
                           reps=reps, excluded=int(reps - alive.sum()))
