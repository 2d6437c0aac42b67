"""``entrans <experiment> --config cfg.json [--out path] [--format csv|json] [--verify]``.

Every config key can also be given as a flag; flags win over the file.
Exit codes: 0 success, 2 configuration error, 3 numerical or truncation
error, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, EntransError, InvariantViolation, MonotonicityViolation
from .errors import TruncationError
from .experiments import DEFAULT_GRIDS, EXPERIMENTS, SweepConfig, read_json, render, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INVARIANT = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # route usage errors through the common exit-code mapping
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="entrans", description="Entanglement sweeps for two-mode light through lossy and amplifying devices.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--verify", action="store_true", default=None, help="re-check every 20th row against oracles")
    p.add_argument("--workers", type=int)
    g = p.add_argument_group("grid")
    g.add_argument("--start", type=float)
    g.add_argument("--stop", type=float)
    g.add_argument("--steps", type=int)
    s = p.add_argument_group("state and device")
    s.add_argument("--psi-kind", dest="psi_kind")
    s.add_argument("--phi-kind", dest="phi_kind")
    s.add_argument("--zeta", type=float)
    s.add_argument("--n-th", dest="n_th", type=float)
    s.add_argument("--sigma", type=int, choices=(1, -1))
    s.add_argument("--T1", type=float)
    s.add_argument("--T2", type=float)
    s.add_argument("--R", type=float)
    s.add_argument("--field-cutoff", dest="field_cutoff", type=int)
    s.add_argument("--device-cutoff", dest="device_cutoff", type=int)
    s.add_argument("--measure")
    s.add_argument("--input", help="state file for channel-apply")
    return p


_GRID_FLAGS = ("start", "stop", "steps")
_SKIP = {"config", "experiment", *_GRID_FLAGS}


def config_from_args(args: argparse.Namespace) -> SweepConfig:
    data: dict = {}
    if args.config:
        data = read_json(args.config)
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
        if data.get("experiment", args.experiment) != args.experiment:
            raise ConfigError(f"{args.config} is for {data['experiment']!r}, not {args.experiment!r}")
    data["experiment"] = args.experiment
    for key, value in vars(args).items():
        if key not in _SKIP and value is not None:
            data[key] = value
    flags = {k: getattr(args, k) for k in _GRID_FLAGS if getattr(args, k) is not None}
    if flags:
        grid = data.get("grid")
        base = dict(grid) if isinstance(grid, dict) else {}
        if not base and data["experiment"] in DEFAULT_GRIDS:
            base = dict(zip(_GRID_FLAGS, DEFAULT_GRIDS[data["experiment"]]))
        base.update(flags)
        data["grid"] = base
    return SweepConfig.from_mapping(data)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        text = render(run(cfg), cfg.format)
        if cfg.out:
            Path(cfg.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except (InvariantViolation, MonotonicityViolation) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (TruncationError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, DomainError, EntransError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
