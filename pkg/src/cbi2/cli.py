"""Command line entry point.

    cbi2 run <config> [--seed S] [--jobs J] [--out DIR] [--key value ...]
    cbi2 simulate|estimate|mc-consistency|mc-clt|laplace-check [--key value ...]

Kind subcommands start from built-in defaults (diagonal unit model); any
config key can be overridden as ``--model.a1 2.0`` or ``--n_grid 500,2000``.
Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 estimator or
model failure (with a one-line diagnostic on stderr).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional

from .estimate import EstimationError
from .experiments import (
    ConfigParseError,
    build_experiment,
    parse_config_text,
    run_experiment,
)
from .model import ModelError
from .simulate import SimulationError

_KIND_COMMANDS = {
    "simulate": "simulate",
    "estimate": "estimate",
    "mc-consistency": "mc_consistency",
    "mc-clt": "mc_clt",
    "laplace-check": "laplace_check",
}


def _collect_overrides(pairs: list[str]) -> dict[str, str]:
    """Turn leftover ``--key value`` pairs into config overrides."""
    out: dict[str, str] = {}
    i = 0
    while i < len(pairs):
        token = pairs[i]
        if not token.startswith("--"):
            raise ConfigParseError(f"expected --key, got {token!r}")
        key = token[2:]
        if "=" in key:
            key, _, value = key.partition("=")
        else:
            if i + 1 >= len(pairs):
                raise ConfigParseError(f"missing value for --{key}")
            i += 1
            value = pairs[i]
        out[key] = value
        i += 1
    return out


def _named_overrides(args: argparse.Namespace) -> dict[str, str]:
    out = {}
    if args.seed is not None:
        out["seed"] = str(args.seed)
    if args.jobs is not None:
        out["jobs"] = str(args.jobs)
    if args.out is not None:
        out["out_dir"] = args.out
    return out


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cbi2",
        description="Simulation and conditional least squares estimation for "
        "the coupled two-factor square-root diffusion.",
    )
    parser.add_argument("command", choices=["run", *_KIND_COMMANDS])
    parser.add_argument("config", nargs="?", help="config file (run command only)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument(
        "--jobs", type=int, default=None,
        help="worker processes for replicates (default: available parallelism)",
    )
    parser.add_argument("--out", default=None, help="output directory")
    args, extra = parser.parse_known_args(argv)

    try:
        overrides = _collect_overrides(extra)
        overrides.update(_named_overrides(args))
        if args.command == "run":
            if not args.config:
                raise ConfigParseError("run requires a config file path")
            kv = parse_config_text(Path(args.config).read_text())
            if "jobs" not in kv:
                overrides.setdefault("jobs", str(os.cpu_count() or 1))
            exp = build_experiment(kv, overrides)
        else:
            if args.config is not None:
                raise ConfigParseError(
                    f"unexpected positional argument {args.config!r}"
                )
            overrides.setdefault("jobs", str(os.cpu_count() or 1))
            exp = build_experiment(
                {"kind": _KIND_COMMANDS[args.command]}, overrides
            )
        artifacts = run_experiment(exp)
    except ConfigParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (EstimationError, ModelError, SimulationError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    for path in artifacts:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
