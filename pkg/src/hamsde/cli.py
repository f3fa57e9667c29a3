"""Command line front end: six subcommands over one declarative config.

    hamsde <command> (--config FILE | --preset NAME) [--out DIR] [--seed N]

Every command writes its data files plus a manifest JSON carrying the
config hash; rerunning into a directory that holds results for a different
config is refused rather than silently mixed. Exit codes: 0 success,
1 verdict failure, 2 numerical failure (blow-up or degenerate estimate),
3 configuration error.
"""

import argparse
import json
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import check_K_assumptions, check_regime
from .config import PRESETS, ExperimentConfig, preset
from .cylinder import PolyCylinder, default_audit_battery
from .errors import BlowUpError, ConfigError, DegenerateEstimateError
from .hypocoercivity import (compute_constants, ergodic_bound, estimate_decay,
                             estimate_ergodic_error, theta2)
from .kolmogorov import sample_gibbs_states, sample_product_gaussian, audit_identities
from .sde import simulate_path

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_NUMERIC = 2
EXIT_CONFIG = 3

_DUMP_ROWS = 4096  # sample rows written to CSV; diagnostics use the full budget


def _hash_line(cfg):
    return f"# config {cfg.config_hash}"


def _write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _write_json(path, payload):
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _state_csv(cfg, U, V):
    n = U.shape[1]
    cols = ([f"u_{k}" for k in range(1, n + 1)]
            + [f"v_{k}" for k in range(1, n + 1)])
    lines = [_hash_line(cfg), ",".join(cols)]
    for row_u, row_v in zip(U, V):
        lines.append(",".join(repr(float(x)) for x in list(row_u) + list(row_v)))
    return "\n".join(lines) + "\n"


def _refuse_on_mismatch(out, cfg):
    for mf in sorted(out.glob("manifest_*.json")):
        try:
            recorded = json.loads(mf.read_text()).get("config_hash")
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"unreadable manifest {mf}: {exc}") from exc
        if recorded != cfg.config_hash:
            raise ConfigError(
                f"output dir {out} holds results for config {recorded}; "
                f"refusing to mix with {cfg.config_hash}")


def _write_manifest(out, cfg, command, files):
    payload = {
        "command": command,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "files": sorted(files),
        "versions": {"package": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in cfg.to_dict().items()},
    }
    _write_json(out / f"manifest_{command}.json", payload)


def cmd_sample(cfg, out):
    ctx = cfg.context()
    U, V = sample_product_gaussian(ctx, cfg.mc_budget, cfg.seed)
    logw = -ctx.potential_values(U)
    weights = np.exp(logw - np.max(logw))
    total = float(np.sum(weights))
    ess = float(total ** 2 / np.sum(weights ** 2))
    top = np.sort(weights)[::-1]
    top_share = float(np.sum(top[:max(1, len(top) // 100)]) / total)
    rows = min(cfg.mc_budget, _DUMP_ROWS)
    _write_text(out / "gaussian_samples.csv", _state_csv(cfg, U[:rows], V[:rows]))
    gibbs = sample_gibbs_states(ctx, rows, cfg.seed)
    n = ctx.n
    _write_text(out / "gibbs_states.csv",
                _state_csv(cfg, gibbs.states[:, :n], gibbs.states[:, n:]))
    diagnostics = {
        "config_hash": cfg.config_hash,
        "budget": cfg.mc_budget,
        "dumped_rows": rows,
        "ess": ess,
        "ess_ratio": ess / cfg.mc_budget,
        "max_weight_share": float(np.max(weights) / total),
        "top_percent_share": top_share,
        "resampler_ess": gibbs.ess,
        "degenerate": bool(gibbs.degenerate),
    }
    _write_json(out / "sample_diagnostics.json", diagnostics)
    _write_manifest(out, cfg, "sample",
                    ["gaussian_samples.csv", "gibbs_states.csv",
                     "sample_diagnostics.json"])
    print(f"dumped {rows} Gaussian and Gibbs states to {out} "
          f"(ESS {ess:.1f} of {cfg.mc_budget})")
    if gibbs.degenerate:
        raise DegenerateEstimateError(
            "importance weights collapsed while resampling Gibbs states")
    return EXIT_OK


def cmd_check(cfg, out):
    spec = cfg.coefficient_spec()
    phi = cfg.phi()
    regime = check_regime(spec, phi, cfg.regime_extras())
    kreport = check_K_assumptions(spec, n=cfg.n,
                                  mc_budget=min(cfg.mc_budget, 50000),
                                  phi=phi, seed=cfg.seed)
    _write_json(out / "regime_report.json",
                {"config_hash": cfg.config_hash, **regime.as_dict()})
    _write_json(out / "k_assumptions.json",
                {"config_hash": cfg.config_hash, **kreport.as_dict()})
    _write_manifest(out, cfg, "check",
                    ["regime_report.json", "k_assumptions.json"])
    print(regime.to_table())
    print()
    print(kreport.to_table())
    ok = all(regime.verdicts.values()) and kreport.all_pass
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_audit(cfg, out):
    ctx = cfg.context()
    report = audit_identities(ctx, default_audit_battery(cfg.n),
                              budget=cfg.mc_budget, seed=cfg.seed)
    _write_text(out / "audit_report.csv", _hash_line(cfg) + "\n" + report.to_csv())
    _write_json(out / "audit_report.json",
                {"config_hash": cfg.config_hash, **json.loads(report.to_json())})
    _write_manifest(out, cfg, "audit", ["audit_report.csv", "audit_report.json"])
    print(report.to_table())
    return EXIT_OK if report.all_pass else EXIT_VERDICT


def cmd_simulate(cfg, out):
    system = cfg.system()
    trajectory = simulate_path(system, np.zeros(2 * cfg.n), cfg.sim_config())
    _write_text(out / "trajectory.csv",
                _hash_line(cfg) + "\n" + trajectory.to_csv(None))
    summary = {
        "config_hash": cfg.config_hash,
        "steps": cfg.sim_config().steps,
        "snapshots": len(trajectory),
        "final_state": [float(x) for x in trajectory.states[-1]],
    }
    _write_json(out / "trajectory_summary.json", summary)
    _write_manifest(out, cfg, "simulate",
                    ["trajectory.csv", "trajectory_summary.json"])
    print(f"simulated {cfg.sim_config().steps} steps, "
          f"{len(trajectory)} snapshots -> {out / 'trajectory.csv'}")
    return EXIT_OK


def cmd_decay(cfg, out):
    system = cfg.system()
    f = PolyCylinder.coordinate_v(1, min(cfg.n, 2))
    curve = estimate_decay(system, f, list(cfg.decay_times), cfg.outer,
                           cfg.inner, cfg.seed, theta1=cfg.theta1, dt=cfg.dt,
                           scheme=cfg.scheme,
                           mc_budget=min(cfg.mc_budget, 50000))
    _write_text(out / "decay_curve.csv", _hash_line(cfg) + "\n" + curve.to_csv(None))
    payload = {"config_hash": cfg.config_hash, "theta2": curve.rate,
               "norm_f": curve.norm_f, "mu_f": curve.mu_f,
               "excluded_paths": curve.excluded, "note": curve.note,
               **json.loads(curve.constants.to_json())}
    _write_json(out / "decay_constants.json", payload)
    _write_manifest(out, cfg, "decay", ["decay_curve.csv", "decay_constants.json"])
    for p in curve:
        print(f"t={p.t:<8g} estimate={p.estimate:.6g} se={p.se:.2g} "
              f"bound={p.bound:.6g}")
    if curve.degenerate:
        raise DegenerateEstimateError(
            "importance weights collapsed while sampling decay start states")
    return EXIT_OK


def cmd_ergodic(cfg, out):
    system = cfg.system()
    v1 = PolyCylinder.coordinate_v(1, min(cfg.n, 2))
    g = v1 * v1
    constants = compute_constants(system.spec, system.ctx.phi,
                                  theta1=cfg.theta1,
                                  mc_budget=min(cfg.mc_budget, 50000),
                                  seed=cfg.seed, n=max(cfg.n, 4))
    rate = theta2(cfg.theta1, constants)
    pool = sample_gibbs_states(system.ctx, 1, cfg.seed, min_proposals=65536)
    mu_g = pool.reference(g)[0]
    norm_g = pool.centered_norm(g, mu_g)
    rows = []
    for t in cfg.ergodic_times:
        est, se = estimate_ergodic_error(system, g, t, cfg.reps, cfg.seed,
                                         dt=cfg.dt, scheme=cfg.scheme)
        rows.append((t, est, se, ergodic_bound(t, cfg.theta1, rate, norm_g)))
        print(f"t={t:<8g} rms={est:.6g} se={se:.2g} bound={rows[-1][3]:.6g}")
    lines = [_hash_line(cfg), "t,estimate,SE,bound"]
    for row in rows:
        lines.append(",".join(repr(float(x)) for x in row))
    _write_text(out / "ergodic_error.csv", "\n".join(lines) + "\n")
    positive = [(t, est) for t, est, _, _ in rows if est > 0.0]
    slope = None
    if len(positive) >= 2:
        ts, es = zip(*positive)
        slope = float(np.polyfit(np.log10(ts), np.log10(es), 1)[0])
    _write_json(out / "ergodic_slope.json",
                {"config_hash": cfg.config_hash, "slope": slope,
                 "points": len(positive), "theta2": rate,
                 "norm_g_centered": norm_g, "reference_mean": mu_g})
    _write_manifest(out, cfg, "ergodic",
                    ["ergodic_error.csv", "ergodic_slope.json"])
    if slope is not None:
        print(f"log-log slope over {len(positive)} points: {slope:.4f}")
    return EXIT_OK


_COMMANDS = {
    "sample": cmd_sample,
    "check": cmd_check,
    "audit": cmd_audit,
    "simulate": cmd_simulate,
    "decay": cmd_decay,
    "ergodic": cmd_ergodic,
}


def _load_config(args):
    if args.config is not None and args.preset is not None:
        raise ConfigError("pass either --config or --preset, not both")
    if args.config is not None:
        cfg = ExperimentConfig.from_ini(args.config)
    elif args.preset is not None:
        cfg = preset(args.preset)
    else:
        raise ConfigError("one of --config or --preset is required")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; remap to the config slot."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"config error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def main(argv=None):
    parser = _Parser(
        prog="hamsde",
        description="Galerkin simulator and verification harness for the "
                    "degenerate spectral Hamiltonian SDE")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", type=Path, default=None,
                       help="path to an INI config file")
        p.add_argument("--preset", choices=sorted(PRESETS), default=None,
                       help="built-in scenario name")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default: out_dir from the config)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the experiment seed")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        out = args.out if args.out is not None else Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _refuse_on_mismatch(out, cfg)
        return _COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUpError, DegenerateEstimateError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
