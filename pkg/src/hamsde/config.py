"""Experiment configuration: one frozen dataclass, INI round-trips, presets.

The config file is a plain key/value text file with the six sections below;
every field has a default, so a file only needs the keys it overrides.
Floats are serialized with repr, which round-trips exactly, and the config
hash is the sha256 of the canonical serialization, so any two configs that
behave the same hash the same.
"""

import configparser
import hashlib
import io
from dataclasses import dataclass, fields

from .coefficients import BumpFamily, CoefficientSpec
from .errors import ConfigError
from .kolmogorov import PHI_VARIANTS, OperatorContext
from .potential import BUILTIN_POTENTIALS, RegularizationSpec, make_potential
from .sde import DEFAULT_SCHEME, SCHEMES, SimConfig, assemble

_SECTIONS = (
    ("experiment", ("name", "n", "seed", "theta1", "out_dir")),
    ("coefficients", ("alpha1", "alpha2", "sigma1", "sigma2", "sigma3",
                      "bump_factors")),
    ("potential", ("potential", "a1", "b", "phi_variant", "reg_m", "reg_q")),
    ("simulation", ("dt", "horizon", "scheme", "paths", "save_every")),
    ("budgets", ("mc_budget", "outer", "inner", "reps", "quad_nodes")),
    ("probes", ("decay_times", "ergodic_times", "resolvent_lambda",
                "beta", "gamma", "alpha_admissible")),
)

_POTENTIAL_PARAMS = {
    "zero": (),
    "quadratic": ("a1",),
    "subquadratic": ("a1",),
    "cos-bump": ("a1", "b"),
    "quartic": (),
}

_TUPLE_FIELDS = ("decay_times", "ergodic_times")
_STR_FIELDS = ("name", "out_dir", "potential", "phi_variant", "scheme")
_INT_FIELDS = ("n", "seed", "bump_factors", "reg_m", "reg_q", "paths",
               "save_every", "mc_budget", "outer", "inner", "reps",
               "quad_nodes")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    n: int = 4
    seed: int = 2024
    theta1: float = 2.0
    out_dir: str = "runs"

    alpha1: float = 1.2
    alpha2: float = 0.9
    sigma1: float = 0.75
    sigma2: float = 0.9
    sigma3: float = 1.35
    bump_factors: int = 3

    potential: str = "quadratic"
    a1: float = 0.5
    b: float = 1.5
    phi_variant: str = "raw"
    reg_m: int = 1
    reg_q: int = 0  # 0 picks the exponent from the growth metadata

    dt: float = 1e-3
    horizon: float = 10.0
    scheme: str = DEFAULT_SCHEME
    paths: int = 16
    save_every: int = 0

    mc_budget: int = 200000
    outer: int = 512
    inner: int = 256
    reps: int = 64
    quad_nodes: int = 256

    decay_times: tuple = (0.0, 1.0, 2.0, 5.0, 10.0)
    ergodic_times: tuple = (10.0, 100.0, 1000.0)
    resolvent_lambda: float = 1.0
    beta: float = 0.0  # 0 = not pinned, let the admissibility search pick
    gamma: float = 0.0
    alpha_admissible: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"truncation must be >= 1, got {self.n}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed}")
        if self.potential not in BUILTIN_POTENTIALS:
            raise ConfigError(
                f"unknown potential {self.potential!r}; "
                f"available: {sorted(BUILTIN_POTENTIALS)}")
        if self.phi_variant not in PHI_VARIANTS:
            raise ConfigError(
                f"phi_variant must be one of {PHI_VARIANTS}, got {self.phi_variant!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        for key in ("mc_budget", "outer", "inner", "reps", "quad_nodes", "paths"):
            if getattr(self, key) < 1:
                raise ConfigError(f"budget {key} must be positive, got {getattr(self, key)}")
        if self.bump_factors < 0 or self.reg_m < 1 or self.reg_q < 0:
            raise ConfigError("bump_factors/reg_m/reg_q out of range")
        if self.reg_q and (self.reg_q % 2 or self.reg_q < 2):
            raise ConfigError(f"damping exponent must be even and >= 2, got {self.reg_q}")
        object.__setattr__(self, "decay_times",
                           tuple(float(t) for t in self.decay_times))
        object.__setattr__(self, "ergodic_times",
                           tuple(float(t) for t in self.ergodic_times))

    # -- builders ----------------------------------------------------------

    def coefficient_spec(self):
        bumps = BumpFamily(max_factors=self.bump_factors) if self.bump_factors else None
        return CoefficientSpec(alpha1=self.alpha1, alpha2=self.alpha2,
                               sigma1=self.sigma1, sigma2=self.sigma2,
                               sigma3=self.sigma3, bumps=bumps)

    def phi(self):
        params = {k: getattr(self, k) for k in _POTENTIAL_PARAMS[self.potential]}
        return make_potential(self.potential, **params)

    def regularization(self, phi=None):
        if self.phi_variant != "regularized":
            return None
        if self.reg_q:
            return RegularizationSpec(q=self.reg_q)
        return RegularizationSpec.for_potential(phi if phi is not None else self.phi())

    def context(self):
        phi = self.phi()
        return OperatorContext(spec=self.coefficient_spec(), n=self.n, phi=phi,
                               phi_variant=self.phi_variant,
                               reg=self.regularization(phi),
                               reg_index=self.reg_m, quad_nodes=self.quad_nodes)

    def system(self):
        return assemble(self.context(), self.n)

    def sim_config(self):
        return SimConfig(dt=self.dt, horizon=self.horizon, scheme=self.scheme,
                         seed=self.seed, paths=self.paths,
                         save_every=self.save_every)

    def regime_extras(self):
        """(alpha, beta, gamma, theta1) with zeros mapped to 'not pinned'."""
        return (self.alpha_admissible or None, self.beta or None,
                self.gamma or None, self.theta1)

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        coerced = {key: _coerce(key, value) for key, value in data.items()}
        return cls(**coerced)

    def to_ini(self, path=None):
        parser = configparser.ConfigParser(interpolation=None)
        for section, keys in _SECTIONS:
            parser[section] = {key: _format(getattr(self, key)) for key in keys}
        buf = io.StringIO()
        parser.write(buf)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_ini(cls, source):
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(source) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {source}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {source}: {exc}") from exc
        section_of = {section: keys for section, keys in _SECTIONS}
        data = {}
        for section in parser.sections():
            if section not in section_of:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser[section].items():
                if key not in section_of[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                data[key] = value
        return cls.from_dict(data)

    @property
    def config_hash(self):
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:12]


def _format(value):
    if isinstance(value, tuple):
        return ",".join(repr(float(x)) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key, value):
    if not isinstance(value, str):
        return value
    try:
        if key in _TUPLE_FIELDS:
            return tuple(float(part) for part in value.split(",") if part.strip())
        if key in _INT_FIELDS:
            return int(value)
        if key in _STR_FIELDS:
            return value
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"cannot parse config value {key} = {value!r}") from exc


PRESETS = {
    "ou-linear": ExperimentConfig(
        name="ou-linear", alpha1=1.0, alpha2=1.0, sigma1=1.0, sigma2=1.0,
        sigma3=1.5, bump_factors=0, potential="zero", phi_variant="zero"),
    "convex-quadratic": ExperimentConfig(name="convex-quadratic"),
    "paper-final-remark": ExperimentConfig(
        name="paper-final-remark", potential="quartic",
        phi_variant="regularized",
        beta=1.5694444444444444, gamma=0.8055555555555556),
    "nonconvex-perturbed": ExperimentConfig(
        name="nonconvex-perturbed", potential="cos-bump", phi_variant="raw"),
}


def preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return PRESETS[name]
