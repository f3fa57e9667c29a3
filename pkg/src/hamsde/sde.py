"""Time stepping for the Galerkin truncation of the degenerate system.

The truncated SDE lives on R^n x R^n and reads, mode by mode,

    dx_k = lam_k^(sigma1 - alpha2) y_k dt,
    dy_k = ( -lam_k^(sigma1 - alpha1) x_k
             + d lam22_k/dy_k (y)
             - lam22_k(y) lam_k^(-alpha2) y_k
             - lam_k^sigma1 (grad Phi(x))_k ) dt
           + sqrt(2 lam22_k(y)) dW^k_t,

so the position block x is noise free and the velocity block y carries a
diagonal, state-dependent diffusion. Two integrators: plain Euler-Maruyama
and a semi-implicit variant that inverts the constant linear drift mode by
mode, which keeps the stiff friction lam22/lam^alpha2 stable at moderate
dt. The divergence term, the bump part of the friction, and the potential
gradient stay explicit in both schemes.
"""

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ._rng import substream
from .coefficients import lambda22_divergence, lambda22_matrix
from .cylinder import ExpQuad, PolyCylinder
from .errors import BlowUpError, ConfigError, ContractViolationError
from .spectral import dirichlet_eigenvalues

SCHEMES = ("euler_maruyama", "semi_implicit_linear")
DEFAULT_SCHEME = "semi_implicit_linear"
BLOWUP_NORM = 1e8

# normals buffered per generator call inside the path loops
_NOISE_BUDGET = 1 << 20


def _exp_weighted_quadrature(vals, times, lam):
    """int e^(-lam t) v(t) dt with v piecewise linear through (times, vals).

    The exponential factor is integrated exactly on each interval, so a
    constant path integrates to (e^(-lam a) - e^(-lam b))/lam with no
    curvature bias; a plain trapezoid rule overshoots the bound-saturating
    probes by the convexity of e^(-lam t).
    """
    t = np.asarray(times, dtype=float)
    h = np.diff(t)
    ea = np.exp(-lam * t[:-1])
    diff = ea * -np.expm1(-lam * h)          # e^(-lam a) - e^(-lam b) > 0
    eb = ea - diff
    slope_w = diff / (lam * lam * h) - eb / lam
    w_lo = diff / lam - slope_w
    w_hi = slope_w
    return vals[:, :-1] @ w_lo + vals[:, 1:] @ w_hi


@dataclass(frozen=True)
class SimConfig:
    """Stepper settings. horizon == 0 is allowed and means 'no stepping'."""

    dt: float = 1e-3
    horizon: float = 1.0
    scheme: str = DEFAULT_SCHEME
    seed: int = 0
    paths: int = 1
    save_every: int = 0  # 0 picks a stride that keeps ~2048 snapshots

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.horizon != 0.0 and self.horizon < self.dt:
            raise ConfigError(
                f"horizon must be 0 or at least dt, got {self.horizon} < {self.dt}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.paths < 1:
            raise ConfigError(f"path count must be >= 1, got {self.paths}")
        if self.save_every < 0:
            raise ConfigError(f"save_every must be >= 0, got {self.save_every}")

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))


class GalerkinSystem:
    """Drift and diffusion of the truncated SDE with cached gain arrays.

    States are flat vectors z = (x_1..x_n, y_1..y_n). All public callables
    accept a single state (2n,) or a batch (B, 2n) and mirror the shape.
    """

    def __init__(self, ctx, n):
        self.ctx = ctx
        self.n = int(n)
        spec = ctx.spec
        lam = dirichlet_eigenvalues(self.n)
        self.lam = lam
        self.x_gain = lam ** (spec.sigma1 - spec.alpha2)
        self.y_gain = lam ** (spec.sigma1 - spec.alpha1)
        self.grad_gain = lam ** spec.sigma1
        self.qinv2 = lam ** -spec.alpha2
        self.floor22 = lam ** spec.alpha2 + lam ** spec.sigma2
        self.base_friction = self.floor22 * self.qinv2
        self._inverse_cache = {}
        self._eigen_scale = None

    @property
    def spec(self):
        return self.ctx.spec

    def _split(self, Z):
        Z = np.asarray(Z, dtype=float)
        squeeze = Z.ndim == 1
        Z2 = np.atleast_2d(Z)
        if Z2.shape[1] != 2 * self.n:
            raise ContractViolationError(
                f"state width {Z2.shape[1]} does not match 2n = {2 * self.n}")
        return Z2[:, :self.n], Z2[:, self.n:], squeeze

    def drift(self, Z):
        X, Y, squeeze = self._split(Z)
        lam22 = lambda22_matrix(self.spec, self.n, Y)
        div = lambda22_divergence(self.spec, self.n, Y)
        grad = self.ctx.potential_grad(X)
        bx = self.x_gain * Y
        by = (-self.y_gain * X + div - lam22 * self.qinv2 * Y
              - self.grad_gain * grad)
        out = np.concatenate([bx, by], axis=1)
        return out[0] if squeeze else out

    def diffusion(self, Y):
        """Diagonal diffusion entries sqrt(2 lam22_k(y)) of the y block."""
        Y2 = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.sqrt(2.0 * lambda22_matrix(self.spec, self.n, Y2))
        return out[0] if np.ndim(Y) == 1 else out

    def linear_inverse(self, dt):
        """Entries of (I - dt*M)^-1 for the per-mode constant drift blocks
        M_k = [[0, xg_k], [-yg_k, -c_k]], as four arrays (i00, i01, i10, i11)."""
        key = float(dt)
        cached = self._inverse_cache.get(key)
        if cached is None:
            c = self.base_friction
            det = (1.0 + dt * c) + dt * dt * self.x_gain * self.y_gain
            cached = ((1.0 + dt * c) / det, dt * self.x_gain / det,
                      -dt * self.y_gain / det, 1.0 / det)
            self._inverse_cache[key] = cached
        return cached

    def linear_eigen_scale(self):
        """Largest per-mode eigenvalue magnitude of the constant drift."""
        if self._eigen_scale is None:
            worst = 0.0
            for k in range(self.n):
                m = np.array([[0.0, self.x_gain[k]],
                              [-self.y_gain[k], -self.base_friction[k]]])
                worst = max(worst, float(np.max(np.abs(np.linalg.eigvals(m)))))
            self._eigen_scale = worst
        return self._eigen_scale


def assemble(ctx, n):
    """Build the truncated system at level n from an operator context.

    The context's truncation must be at least n; a larger context is
    reduced, which is exact because every block is diagonal in the sine
    basis.
    """
    if n < 1:
        raise ConfigError(f"truncation must be >= 1, got {n}")
    if ctx.n < n:
        raise ContractViolationError(
            f"context truncation {ctx.n} is below the requested level {n}")
    if ctx.n > n:
        ctx = replace(ctx, n=n)
    return GalerkinSystem(ctx, n)


def _advance(system, Z, dt, noise, scheme):
    """One update of a batch (B, 2n) given standard normal noise (B, n)."""
    n = system.n
    X = Z[:, :n]
    Y = Z[:, n:]
    lam22 = lambda22_matrix(system.spec, n, Y)
    div = lambda22_divergence(system.spec, n, Y)
    grad = system.ctx.potential_grad(X)
    shock = np.sqrt(2.0 * lam22 * dt) * noise
    if scheme == "euler_maruyama":
        Xn = X + dt * (system.x_gain * Y)
        Yn = Y + dt * (-system.y_gain * X + div - lam22 * system.qinv2 * Y
                       - system.grad_gain * grad) + shock
    else:
        i00, i01, i10, i11 = system.linear_inverse(dt)
        bump = lam22 - system.floor22
        ry = Y + dt * (div - bump * system.qinv2 * Y
                       - system.grad_gain * grad) + shock
        Xn = i00 * X + i01 * ry
        Yn = i10 * X + i11 * ry
    return np.concatenate([Xn, Yn], axis=1)


def _check_stability(system, dt):
    scale = system.linear_eigen_scale()
    if dt * scale >= 0.5:
        warnings.warn(
            f"dt = {dt} times the stiffest linear mode ({scale:.4g}) is >= 0.5; "
            "expect visible discretization bias or instability",
            RuntimeWarning, stacklevel=3)


def step(system, state, dt, noise, scheme=DEFAULT_SCHEME, index=None):
    """Advance one state (or a batch) by a single time step.

    noise holds standard normals for the y block, shape (n,) matching the
    state (or (B, n) for a batch). Raises BlowUpError when the update
    leaves the finite ball; the optional index is attached to the error.
    """
    if not dt > 0.0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    state = np.asarray(state, dtype=float)
    squeeze = state.ndim == 1
    Z = np.atleast_2d(state)
    noise2 = np.atleast_2d(np.asarray(noise, dtype=float))
    if Z.shape[1] != 2 * system.n or noise2.shape != (Z.shape[0], system.n):
        raise ContractViolationError(
            f"state/noise shapes {Z.shape}/{noise2.shape} do not match "
            f"truncation {system.n}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = _advance(system, Z, dt, noise2, scheme)
    bad = ~np.isfinite(out).all(axis=1)
    bad |= np.max(np.abs(np.where(np.isfinite(out), out, np.inf)), axis=1) > BLOWUP_NORM
    if bad.any():
        raise BlowUpError(
            f"{int(bad.sum())} state(s) left the |z| <= {BLOWUP_NORM:g} ball",
            step=index)
    return out[0] if squeeze else out


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    n: int

    def __len__(self):
        return len(self.times)

    def to_csv(self, path):
        cols = (["t"] + [f"x_{k}" for k in range(1, self.n + 1)]
                + [f"y_{k}" for k in range(1, self.n + 1)])
        lines = [",".join(cols)]
        for t, row in zip(self.times, self.states):
            lines.append(",".join([repr(float(t))] + [repr(float(x)) for x in row]))
        text = "\n".join(lines) + "\n"
        if path is None:
            return text
        with open(path, "w") as fh:
            fh.write(text)
        return text


def simulate_path(system, w0, config):
    """Integrate a single path from w0 and keep snapshots on a stride.

    Deterministic given config.seed. The first and last states are always
    kept. Blow-up raises with the model time in the message and the step
    index on the error.
    """
    w0 = np.asarray(w0, dtype=float).reshape(-1)
    if w0.size != 2 * system.n:
        raise ContractViolationError(
            f"start state has {w0.size} entries, expected {2 * system.n}")
    steps = config.steps
    if steps == 0:
        return Trajectory(times=np.array([0.0]), states=w0[None].copy(), n=system.n)
    _check_stability(system, config.dt)
    stride = config.save_every or max(1, steps // 2048)
    rng = substream(config.seed, 21, 0)
    block = max(1, _NOISE_BUDGET // system.n)
    buffer = rng.standard_normal((block, system.n))
    pos = 0
    Z = w0[None].copy()
    times = [0.0]
    states = [w0.copy()]
    with np.errstate(over="ignore", invalid="ignore"):
        for idx in range(1, steps + 1):
            if pos == block:
                buffer = rng.standard_normal((block, system.n))
                pos = 0
            Z = _advance(system, Z, config.dt, buffer[pos:pos + 1], config.scheme)
            pos += 1
            if not np.isfinite(Z).all() or np.max(np.abs(Z)) > BLOWUP_NORM:
                raise BlowUpError(
                    f"path blew up at t = {idx * config.dt:.6g}", step=idx)
            if idx % stride == 0 or idx == steps:
                times.append(idx * config.dt)
                states.append(Z[0].copy())
    return Trajectory(times=np.array(times), states=np.array(states), n=system.n)


def _run_ensemble(system, Z0, dt, n_steps, scheme, seed, stream=23,
                  snapshot_steps=(), collect=None, accumulate=None):
    """March a batch of paths with shared vectorized noise.

    Rows whose update leaves the finite ball are zeroed, frozen, and
    dropped from the alive mask; callers exclude them when reducing.
    Returns (snapshots, accum, alive): snapshots maps step index to the
    collected array (or raw state copies when collect is None), accum is
    the running mean of `accumulate` over steps 1..n_steps.
    """
    Z = np.array(Z0, dtype=float, copy=True)
    if Z.ndim != 2 or Z.shape[1] != 2 * system.n:
        raise ContractViolationError(
            f"ensemble shape {Z.shape} does not match truncation {system.n}")
    nbatch = Z.shape[0]
    alive = np.ones(nbatch, dtype=bool)
    want = {int(s) for s in snapshot_steps}
    grab = (lambda A: A.copy()) if collect is None else collect
    snapshots = {}
    if 0 in want:
        snapshots[0] = np.asarray(grab(Z), dtype=float)
    accum = np.zeros(nbatch) if accumulate is not None else None
    rng = substream(seed, stream)
    block = max(1, _NOISE_BUDGET // max(nbatch * system.n, 1))
    buffer = rng.standard_normal((block, nbatch, system.n))
    pos = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for idx in range(1, n_steps + 1):
            if pos == block:
                buffer = rng.standard_normal((block, nbatch, system.n))
                pos = 0
            Z = _advance(system, Z, dt, buffer[pos], scheme)
            pos += 1
            ok = np.isfinite(Z).all(axis=1)
            ok &= np.max(np.abs(np.where(np.isfinite(Z), Z, np.inf)), axis=1) <= BLOWUP_NORM
            if not ok.all():
                Z[~ok] = 0.0
                alive &= ok
            if accumulate is not None:
                accum += np.asarray(accumulate(Z), dtype=float)
            if idx in want:
                snapshots[idx] = np.asarray(grab(Z), dtype=float)
    if accum is not None:
        accum = accum / n_steps
    return snapshots, accum, alive


def _value_on_state(f, Z, n):
    return np.asarray(f.value(Z[:, :n], Z[:, n:]), dtype=float)


@dataclass(frozen=True)
class SemigroupEstimate:
    value: float
    se: float
    paths: int
    excluded: int

    def __iter__(self):
        yield self.value
        yield self.se


def estimate_semigroup(system, f, t, w0, paths, seed, dt=1e-3,
                       scheme=DEFAULT_SCHEME):
    """Monte-Carlo estimate of (T_t f)(w0) over `paths` trajectories."""
    if t < 0:
        raise ConfigError(f"time must be nonnegative, got {t}")
    if paths < 1:
        raise ConfigError(f"path count must be >= 1, got {paths}")
    w0 = np.asarray(w0, dtype=float).reshape(-1)
    if w0.size != 2 * system.n:
        raise ContractViolationError(
            f"start state has {w0.size} entries, expected {2 * system.n}")
    if t == 0:
        exact = float(_value_on_state(f, w0[None], system.n)[0])
        return SemigroupEstimate(value=exact, se=0.0, paths=paths, excluded=0)
    _check_stability(system, dt)
    steps = max(1, int(round(t / dt)))
    Z0 = np.tile(w0, (paths, 1))
    snaps, _, alive = _run_ensemble(
        system, Z0, dt, steps, scheme, seed,
        snapshot_steps=(steps,), collect=lambda Z: _value_on_state(f, Z, system.n))
    vals = snaps[steps][alive]
    if vals.size == 0:
        raise BlowUpError("every path left the finite ball", step=steps)
    value = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return SemigroupEstimate(value=value, se=se, paths=paths,
                             excluded=int(paths - vals.size))


def _sup_norm_of(g):
    """Sup norm for the probe functions whose bound is obvious; None says
    the contraction check does not apply (polynomials are unbounded)."""
    if isinstance(g, ExpQuad):
        if all(a >= 0.0 for a in g.a) and all(b >= 0.0 for b in g.b):
            return abs(g.scale)
        return None
    if isinstance(g, PolyCylinder) and g.degree == 0:
        d = max(g.base_dim, 1)
        z = np.zeros((1, d))
        return abs(float(g.value(z, z)[0]))
    return None


@dataclass(frozen=True)
class ResolventEstimate:
    value: float
    se: float
    lam: float
    sup_norm: Optional[float]
    within_bound: Optional[bool]
    paths: int
    excluded: int
    note: str = ""

    def __float__(self):
        return self.value

    def __iter__(self):
        yield self.value
        yield self.se


def estimate_resolvent(system, g, lam, w0, paths, t_max=None, seed=0,
                       dt=1e-3, scheme=DEFAULT_SCHEME):
    """Estimate the resolvent integral int_0^t_max e^(-lam t) T_t g(w0) dt.

    Each path's g-values are interpolated linearly on a geometric time grid
    snapped to the step size and integrated against the exact exponential
    weight, then the per-path integrals are averaged, so the standard error
    reflects true path-to-path scatter. The neglected tail is below e^-10
    times the sup norm over lam by the t_max precheck.
    """
    if not lam > 0.0:
        raise ConfigError(f"resolvent parameter must be positive, got {lam}")
    if t_max is None:
        t_max = 10.0 / lam
    if lam * t_max < 10.0 - 1e-12:
        raise ConfigError(
            f"tail truncation requires lam*t_max >= 10, got {lam * t_max:.4g}")
    if paths < 2:
        raise ConfigError(f"need at least 2 paths for an error bar, got {paths}")
    w0 = np.asarray(w0, dtype=float).reshape(-1)
    if w0.size != 2 * system.n:
        raise ContractViolationError(
            f"start state has {w0.size} entries, expected {2 * system.n}")
    _check_stability(system, dt)
    nodes = np.geomspace(max(dt, t_max / 1000.0), t_max, 64)
    step_ids = sorted({max(1, int(round(t / dt))) for t in nodes})
    times = np.array([0.0] + [s * dt for s in step_ids])
    Z0 = np.tile(w0, (paths, 1))
    snaps, _, alive = _run_ensemble(
        system, Z0, dt, step_ids[-1], scheme, seed,
        snapshot_steps=step_ids, collect=lambda Z: _value_on_state(g, Z, system.n))
    g0 = float(_value_on_state(g, w0[None], system.n)[0])
    vals = np.empty((paths, len(times)))
    vals[:, 0] = g0
    for j, s in enumerate(step_ids, start=1):
        vals[:, j] = snaps[s]
    per_path = _exp_weighted_quadrature(vals, times, lam)
    per_path = per_path[alive]
    if per_path.size < 2:
        raise BlowUpError("too few surviving paths for the resolvent probe",
                          step=step_ids[-1])
    value = float(np.mean(per_path))
    se = float(np.std(per_path, ddof=1) / math.sqrt(per_path.size))
    sup = _sup_norm_of(g)
    within = None
    note = "sup-norm check skipped: probe not known to be bounded"
    if sup is not None:
        within = abs(value) <= sup / lam + 3.0 * se + 1e-12
        note = f"tail beyond t_max bounded by {math.exp(-lam * t_max) * sup / lam:.3g}"
    return ResolventEstimate(value=value, se=se, lam=lam, sup_norm=sup,
                             within_bound=within, paths=paths,
                             excluded=int(paths - per_path.size), note=note)
