"""The generator, its pieces, and Monte-Carlo identity audits.

For a state w = (u, v) and a finitely based cylinder function f the
symmetric part and the antisymmetric part of the generator read, with all
operators diagonal in the sine basis,

    S f = sum_k lam22_k(v) d2f/dv_k^2
          + sum_k (d lam22_k/dv_k) df/dv_k
          - sum_k v_k lam_k^(-alpha2) lam22_k(v) df/dv_k,

    A f = sum_k u_k lam_k^(sigma1-alpha1) df/dv_k
          + sum_k (grad Phi_n(u))_k lam_k^sigma1 df/dv_k
          - sum_k v_k lam_k^(sigma1-alpha2) df/du_k,

and L = S - A. The carre du champ is Gamma(f, g) =
sum_k lam22_k(v) df/dv_k dg/dv_k. Expectations against the Gibbs measure
(density proportional to exp(-Phi_n(u)) against the product Gaussian) are
computed by self-normalized importance sampling with jackknife errors, and
audit_identities turns the structural identities (symmetry, antisymmetry,
dissipativity, invariance, integration by parts, the first-order bound)
into pass/fail rows with Monte-Carlo error bars.
"""

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._rng import substream
from .coefficients import lambda22_divergence, lambda22_matrix
from .errors import ConfigError, ContractViolationError
from .potential import (DEFAULT_QUAD_NODES, Phi_n, Phi_n_m, RegularizationSpec,
                        grad_Phi_n, grad_Phi_n_m)
from .spectral import dirichlet_eigenvalues

_SAMPLE_CHUNK = 8192

PHI_VARIANTS = ("zero", "raw", "regularized")


@dataclass(frozen=True)
class OperatorContext:
    """Everything needed to apply the generator at truncation n.

    phi_variant selects the drift/weight functional: "zero" drops the
    potential, "raw" uses Phi_n, "regularized" uses the damped companion
    with index reg_index. With diagonal coefficient blocks every truncation
    is invariant, so the compatible block size for n is n itself.
    """

    spec: object
    n: int
    phi: object
    phi_variant: str = "raw"
    reg: Optional[RegularizationSpec] = None
    reg_index: int = 1
    quad_nodes: int = DEFAULT_QUAD_NODES

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"truncation must be >= 1, got {self.n}")
        if self.phi_variant not in PHI_VARIANTS:
            raise ConfigError(
                f"phi_variant must be one of {PHI_VARIANTS}, got {self.phi_variant!r}")
        if self.phi_variant == "regularized" and self.reg is None:
            object.__setattr__(self, "reg", RegularizationSpec.for_potential(self.phi))

    def potential_values(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        if self.phi_variant == "zero":
            return np.zeros(U.shape[0])
        if self.phi_variant == "raw":
            return np.atleast_1d(Phi_n(self.phi, U, self.n, self.quad_nodes))
        return np.atleast_1d(
            Phi_n_m(self.phi, self.reg, self.reg_index, U, self.n, self.quad_nodes))

    def potential_grad(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        if self.phi_variant == "zero":
            return np.zeros_like(U[:, :self.n])
        if self.phi_variant == "raw":
            g = grad_Phi_n(self.phi, U, self.n, self.quad_nodes)
        else:
            g = grad_Phi_n_m(self.phi, self.reg, self.reg_index, U, self.n,
                             self.quad_nodes)
        return np.atleast_2d(g)[:, :self.n]


def _unpack_state(ctx, w):
    u, v = w
    U = np.atleast_2d(np.asarray(u, dtype=float))
    V = np.atleast_2d(np.asarray(v, dtype=float))
    squeeze = np.ndim(u) == 1
    if U.shape[1] != ctx.n or V.shape[1] != ctx.n:
        raise ContractViolationError(
            f"state dimension {U.shape[1]}x{V.shape[1]} does not match truncation {ctx.n}")
    return U, V, squeeze


def _check_based(ctx, f):
    if f.base_dim > ctx.n:
        raise ContractViolationError(
            f"cylinder function based on {f.base_dim} modes exceeds truncation {ctx.n}")


def _dy_stack(f, U, V, n):
    cols = [f.dy_value(k, U, V) for k in range(1, n + 1)]
    return np.stack(cols, axis=1)


def _dx_stack(f, U, V, n):
    cols = [f.dx_value(k, U, V) for k in range(1, n + 1)]
    return np.stack(cols, axis=1)


def apply_S(ctx, f, w):
    """Symmetric part of the generator at state(s) w = (u, v)."""
    _check_based(ctx, f)
    U, V, squeeze = _unpack_state(ctx, w)
    lam = dirichlet_eigenvalues(ctx.n)
    lam22 = lambda22_matrix(ctx.spec, ctx.n, V)
    div = lambda22_divergence(ctx.spec, ctx.n, V)
    dy = _dy_stack(f, U, V, ctx.n)
    dyy = np.stack([f.dyy_value(k, k, U, V) for k in range(1, ctx.n + 1)], axis=1)
    out = np.sum(lam22 * dyy, axis=1)
    out += np.sum(div * dy, axis=1)
    out -= np.sum(V * lam ** -ctx.spec.alpha2 * lam22 * dy, axis=1)
    return float(out[0]) if squeeze else out


def apply_A_Phi(ctx, f, w):
    """Antisymmetric part of the generator, including the potential drift."""
    _check_based(ctx, f)
    U, V, squeeze = _unpack_state(ctx, w)
    lam = dirichlet_eigenvalues(ctx.n)
    dy = _dy_stack(f, U, V, ctx.n)
    dx = _dx_stack(f, U, V, ctx.n)
    out = np.sum(U * lam ** (ctx.spec.sigma1 - ctx.spec.alpha1) * dy, axis=1)
    if ctx.phi_variant != "zero":
        grad = ctx.potential_grad(U)
        out += np.sum(grad * lam ** ctx.spec.sigma1 * dy, axis=1)
    out -= np.sum(V * lam ** (ctx.spec.sigma1 - ctx.spec.alpha2) * dx, axis=1)
    return float(out[0]) if squeeze else out


def apply_L_Phi(ctx, f, w):
    """Full generator L = S - A."""
    s = apply_S(ctx, f, w)
    a = apply_A_Phi(ctx, f, w)
    return s - a


def carre_du_champ(ctx, f, g, w):
    """Gamma(f, g) = sum_k lam22_k(v) df/dv_k dg/dv_k."""
    _check_based(ctx, f)
    _check_based(ctx, g)
    U, V, squeeze = _unpack_state(ctx, w)
    lam22 = lambda22_matrix(ctx.spec, ctx.n, V)
    dyf = _dy_stack(f, U, V, ctx.n)
    dyg = _dy_stack(g, U, V, ctx.n)
    out = np.sum(lam22 * dyf * dyg, axis=1)
    return float(out[0]) if squeeze else out


# ---------------------------------------------------------------------------
# Gibbs-measure Monte Carlo


def sample_product_gaussian(ctx, count, seed, stream=7):
    """Draw count states from the product Gaussian, chunk-stable in count."""
    lam = dirichlet_eigenvalues(ctx.n)
    su = np.sqrt(lam ** ctx.spec.alpha1)
    sv = np.sqrt(lam ** ctx.spec.alpha2)
    U = np.empty((count, ctx.n))
    V = np.empty((count, ctx.n))
    done = 0
    chunk = 0
    while done < count:
        take = min(_SAMPLE_CHUNK, count - done)
        rng = substream(seed, stream, chunk)
        block = rng.standard_normal((2, _SAMPLE_CHUNK, ctx.n))
        U[done:done + take] = block[0, :take] * su
        V[done:done + take] = block[1, :take] * sv
        done += take
        chunk += 1
    return U, V


@dataclass(frozen=True)
class MCEstimate:
    value: float
    se: float
    ess: float
    degenerate: bool

    def __iter__(self):
        yield self.value
        yield self.se


def _weighted_stats(weights, values):
    """Self-normalized estimate with delete-one jackknife standard error."""
    sw = float(np.sum(weights))
    est = float(np.sum(weights * values) / sw)
    # delete-one perturbations in closed form:
    # est_(-i) - est = -w_i (h_i - est) / (sw - w_i)
    with np.errstate(divide="ignore", invalid="ignore"):
        deltas = -weights * (values - est) / (sw - weights)
    nsamp = len(weights)
    if np.all(np.isfinite(deltas)):
        se = float(np.sqrt((nsamp - 1) / nsamp * np.sum(deltas ** 2)))
    else:
        # one weight carries (almost) the whole sum: deleting it destroys
        # the estimate, so the honest jackknife error is infinite
        se = math.inf
    ess = float(sw ** 2 / np.sum(weights ** 2))
    return est, se, ess


def mu_phi_expectation(ctx, h, budget, seed):
    """Estimate the Gibbs expectation of h by importance sampling.

    h is a cylinder function or a callable (U, V) -> (B,). Returns an
    MCEstimate; the degenerate flag is set when the effective sample size
    drops below 1% of the budget.
    """
    if budget < 1000:
        raise ConfigError(f"budget must be at least 1000, got {budget}")
    U, V = sample_product_gaussian(ctx, int(budget), seed)
    logw = -ctx.potential_values(U)
    weights = np.exp(logw - np.max(logw))  # self-normalized: shift is free
    values = h.value(U, V) if hasattr(h, "value") else np.asarray(h(U, V), dtype=float)
    est, se, ess = _weighted_stats(weights, values)
    return MCEstimate(value=est, se=se, ess=ess, degenerate=ess < 0.01 * budget)


@dataclass(frozen=True)
class GibbsSample:
    """Start states resampled from the reweighted Gaussian, plus the raw
    proposal pool so callers can form importance-sampling reference means
    from the same draw."""
    states: np.ndarray          # (count, 2n) rows [u, v]
    proposals_u: np.ndarray     # (pool, n)
    proposals_v: np.ndarray     # (pool, n)
    weights: np.ndarray         # (pool,) unnormalized
    ess: float
    degenerate: bool

    def reference(self, h):
        """Self-normalized estimate of the Gibbs mean of h from the pool."""
        values = (h.value(self.proposals_u, self.proposals_v)
                  if hasattr(h, "value")
                  else np.asarray(h(self.proposals_u, self.proposals_v), dtype=float))
        return _weighted_stats(self.weights, values)

    def centered_norm(self, h, mean):
        """Self-normalized estimate of the centered L2 norm of h."""
        values = (h.value(self.proposals_u, self.proposals_v)
                  if hasattr(h, "value")
                  else np.asarray(h(self.proposals_u, self.proposals_v), dtype=float))
        second = _weighted_stats(self.weights, (values - mean) ** 2)[0]
        return math.sqrt(max(second, 0.0))


def sample_gibbs_states(ctx, count, seed, min_proposals=4096, stream=41):
    """Draw approximate start states from the Gibbs measure.

    Proposals come from the product Gaussian; multinomial resampling with
    the e^{-Phi} weights keeps the resampled rows exchangeable, which the
    nested estimators downstream rely on for their standard errors.
    """
    if count < 1:
        raise ConfigError(f"state count must be >= 1, got {count}")
    pool = max(4 * int(count), int(min_proposals))
    U, V = sample_product_gaussian(ctx, pool, seed, stream=stream)
    logw = -ctx.potential_values(U)
    logw = logw - np.max(logw)
    weights = np.exp(logw)
    ess = float(np.sum(weights) ** 2 / np.sum(weights ** 2))
    degenerate = ess < 0.01 * pool
    rng = substream(seed, stream, 999)
    idx = rng.choice(pool, size=int(count), replace=True, p=weights / np.sum(weights))
    states = np.concatenate([U[idx], V[idx]], axis=1)
    return GibbsSample(states=states, proposals_u=U, proposals_v=V,
                       weights=weights, ess=ess, degenerate=degenerate)


# ---------------------------------------------------------------------------
# Identity audits


@dataclass(frozen=True)
class AuditRow:
    pair_id: str
    identity: str
    gap: float
    se: float
    passed: bool
    note: str = ""

    def as_dict(self):
        return {"pair": self.pair_id, "identity": self.identity, "gap": self.gap,
                "se": self.se, "verdict": "pass" if self.passed else "fail",
                "note": self.note}


@dataclass(frozen=True)
class AuditReport:
    rows: tuple
    budget: int

    @property
    def all_pass(self):
        return all(r.passed for r in self.rows)

    def to_json(self, indent=2):
        return json.dumps({"budget": self.budget, "all_pass": bool(self.all_pass),
                           "rows": [r.as_dict() for r in self.rows]}, indent=indent)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["pair", "identity", "gap", "se", "verdict"])
        for r in self.rows:
            writer.writerow([r.pair_id, r.identity, repr(r.gap), repr(r.se),
                             "pass" if r.passed else "fail"])
        return buf.getvalue()

    def to_table(self):
        lines = [f"identity audit, budget {self.budget} per pair"]
        for r in self.rows:
            mark = "ok  " if r.passed else "FAIL"
            lines.append(f"  {mark} {r.pair_id:<12} {r.identity:<18} "
                         f"gap={r.gap:+.3e}  se={r.se:.3e}")
        return "\n".join(lines)


def audit_identities(ctx, battery, budget, seed, ibp_index=1):
    """Monte-Carlo audit of the structural identities over a pair battery.

    battery is a list of (pair_id, f, g). Two-sided identities pass when
    |gap| <= 3 SE; inequalities pass when gap <= 3 SE.
    """
    if not battery:
        raise ConfigError("audit battery must be nonempty")
    if budget < 1000:
        raise ConfigError(f"budget must be at least 1000, got {budget}")
    lam = dirichlet_eigenvalues(ctx.n)
    rows = []
    for pair_pos, (pair_id, f, g) in enumerate(battery):
        U, V = sample_product_gaussian(ctx, int(budget), seed, stream=11 + pair_pos)
        logw = -ctx.potential_values(U)
        weights = np.exp(logw - np.max(logw))

        fv = f.value(U, V)
        gv = g.value(U, V)
        Sf = apply_S(ctx, f, (U, V))
        Sg = apply_S(ctx, g, (U, V))
        Af = apply_A_Phi(ctx, f, (U, V))
        Ag = apply_A_Phi(ctx, g, (U, V))
        Lf = Sf - Af

        def emit(identity, z, one_sided=False, note=""):
            est, se, ess = _weighted_stats(weights, z)
            ok = est <= 3.0 * se if one_sided else abs(est) <= 3.0 * se
            if ess < 0.01 * budget:
                note = (note + "; " if note else "") + f"degenerate ESS {ess:.0f}"
            rows.append(AuditRow(pair_id, identity, est, se, bool(ok), note))

        emit("symmetry", Sf * gv - fv * Sg)
        emit("antisymmetry", Af * gv + fv * Ag)
        if np.max(np.abs(Lf)) == 0.0:
            rows.append(AuditRow(pair_id, "dissipativity", 0.0, 0.0, True,
                                 "L f vanishes identically"))
        else:
            emit("dissipativity", fv * Lf, one_sided=True)
        emit("invariance", Lf)

        i = ibp_index
        dxf = f.dx_value(i, U, V)
        dxg = g.dx_value(i, U, V)
        drift = U[:, i - 1] * lam[i - 1] ** -ctx.spec.alpha1
        resid = dxf * gv + fv * dxg - drift * fv * gv
        if ctx.phi_variant != "zero":
            resid = resid - ctx.potential_grad(U)[:, i - 1] * fv * gv
        emit("ibp_residual", resid, note=f"direction {i}")

        gamma_ff = carre_du_champ(ctx, f, f, (U, V))
        emit("first_order_bound", gamma_ff - 0.5 * (fv ** 2 + Lf ** 2),
             one_sided=True)
    return AuditReport(rows=tuple(rows), budget=int(budget))
