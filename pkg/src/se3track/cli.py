"""Command-line entry point.

Subcommands:
  run    batch Monte-Carlo simulation for one or all policies
  check  self-verification batteries (fast or full)
  fig1   the three-policy comparison experiment at full scale

Config files are flat INI-style key = value text; section headers group the
keys but are not significant.  CLI flags override file values.  Exit codes:
0 success, 1 configuration error, 2 episode-failure rate above threshold.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import time
from dataclasses import fields, replace

import numpy as np

from .errors import ConfigError, Se3TrackError
from .report import emit_policy_outputs, write_manifest
from .scenario import POLICIES, ScenarioConfig, monte_carlo
from .verify import run_checks

FAILURE_RATE_THRESHOLD = 0.05


def _coerce(name: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            return tuple(float(part) for part in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"key {name!r}: {exc}") from exc


def load_config(path: str) -> ScenarioConfig:
    """Parse a key = value config file into a ScenarioConfig.

    Unknown keys and malformed values raise ConfigError with the offending
    key; syntax errors carry the parser's line number.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_string("[top]\n" + fh.read(), source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    type_of = {}
    for f in fields(ScenarioConfig):
        default = getattr(ScenarioConfig, f.name, None)
        type_of[f.name] = type(default) if default is not None else str
    overrides = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in type_of:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
            overrides[key] = _coerce(key, raw, type_of[key])
    try:
        return ScenarioConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        updates["n_epochs"] = args.epochs
    if getattr(args, "mc_runs", None) is not None:
        updates["mc_runs"] = args.mc_runs
    if args.threads is not None:
        updates["threads"] = args.threads
    return replace(cfg, **updates) if updates else cfg


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        cfg = _apply_overrides(cfg, args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    policies = POLICIES if args.policy == "all" else (args.policy,)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    failures = {}
    try:
        for policy in policies:
            agg = monte_carlo(replace(cfg, policy=policy))
            emit_policy_outputs(args.out, agg, figures=not args.no_figures)
            failures[policy] = agg.failures
            print(
                f"{policy}: {agg.n_runs} runs ok, {agg.failures} failed, "
                f"final logdet bound {agg.logdet_cpcrb_T[-1]:.3f}"
            )
    except Se3TrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_manifest(
        os.path.join(args.out, "manifest.json"),
        cfg,
        policies=list(policies),
        failures=failures,
        duration_s=round(time.perf_counter() - t0, 3),
    )
    rate = max(failures.values()) / cfg.mc_runs
    if rate >= FAILURE_RATE_THRESHOLD:
        print(f"warning: episode failure rate {rate:.1%}", file=sys.stderr)
        return 2
    return 0


def cmd_check(args) -> int:
    results = run_checks(args.level)
    width = max(len(r.name) for r in results)
    all_ok = True
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.seconds:7.1f}s  {r.detail}")
        all_ok &= r.ok
    return 0 if all_ok else 1


def cmd_fig1(args) -> int:
    """Three-policy comparison with the published scenario parameters; emits
    two CSV panels per policy plus rendered figures and the manifest."""
    cfg = ScenarioConfig()
    cfg = _apply_overrides(cfg, args)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    failures = {}
    summary = {}
    try:
        for policy in POLICIES:
            agg = monte_carlo(replace(cfg, policy=policy))
            emit_policy_outputs(args.out, agg, figures=not args.no_figures)
            failures[policy] = agg.failures
            summary[policy] = {
                "final_logdet_bound": float(agg.logdet_cpcrb_T[-1]),
                "angle_rmse_final50": float(
                    np.mean([agg.rmse_phi[-50:].mean(), agg.rmse_theta[-50:].mean()])
                ),
            }
            print(
                f"{policy}: final logdet {summary[policy]['final_logdet_bound']:.3f}, "
                f"late angle RMSE {summary[policy]['angle_rmse_final50']:.4f} rad"
            )
    except Se3TrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_manifest(
        os.path.join(args.out, "manifest.json"),
        cfg,
        policies=list(POLICIES),
        failures=failures,
        summary=summary,
        duration_s=round(time.perf_counter() - t0, 3),
    )
    if max(failures.values()) / cfg.mc_runs >= FAILURE_RATE_THRESHOLD:
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="se3track",
        description="UAV radar target tracking on SE(3) with bound-driven control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="Monte-Carlo batch simulation")
    run_p.add_argument("--config", help="key = value config file")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--policy", default="all", choices=POLICIES + ("all",))
    run_p.add_argument("--epochs", type=int)
    run_p.add_argument("--mc-runs", dest="mc_runs", type=int)
    run_p.add_argument("--threads", type=int, default=None)
    run_p.add_argument("--out", default="out")
    run_p.add_argument("--no-figures", action="store_true")
    run_p.set_defaults(func=cmd_run)

    check_p = sub.add_parser("check", help="verification batteries")
    check_p.add_argument("--level", default="fast", choices=("fast", "full"))
    check_p.set_defaults(func=cmd_check)

    fig_p = sub.add_parser("fig1", help="three-policy comparison experiment")
    fig_p.add_argument("--seed", type=int)
    fig_p.add_argument("--epochs", type=int)
    fig_p.add_argument("--mc-runs", dest="mc_runs", type=int)
    fig_p.add_argument("--threads", type=int, default=None)
    fig_p.add_argument("--out", default="fig1")
    fig_p.add_argument("--no-figures", action="store_true")
    fig_p.set_defaults(func=cmd_fig1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
