"""Command line entry point: ``mfmarket run|figure|validate|analytic``.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analytic import MixtureParams, closed_form_density, mixture_density, predicted_alpha
from .config import ConfigError, load_config
from .experiment import FIGURES, reproduce_figure, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:num`` (linear) or ``log:start:stop:num`` (geometric)."""
    parts = text.split(":")
    try:
        if parts[0] == "log" and len(parts) == 4:
            start, stop, num = float(parts[1]), float(parts[2]), int(parts[3])
            if start <= 0 or stop <= 0:
                raise ValueError("geometric grid needs positive bounds")
            grid = np.geomspace(start, stop, num)
        elif len(parts) == 3:
            grid = np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
        else:
            raise ValueError("expected start:stop:num or log:start:stop:num")
    except ValueError as exc:
        raise ConfigError("grid", f"{text!r}: {exc}") from None
    if len(grid) < 1:
        raise ConfigError("grid", f"{text!r} is empty")
    return grid


def _override(spec, args):
    model = spec.model
    if args.seed is not None:
        model = replace(model, seed=args.seed)
    kwargs = {"model": model}
    if args.realizations is not None:
        kwargs["realizations"] = args.realizations
    if args.workers is not None:
        kwargs["workers"] = args.workers
    if args.out is not None:
        kwargs["output_dir"] = Path(args.out)
    return replace(spec, **kwargs)


def _print_summary(result, out, quiet):
    if quiet:
        return
    print(f"wrote {len(result.files)} files to {out}")
    tails = result.summary.get("tail_estimate", {})
    for name, entry in tails.items():
        print(f"  {name:17s} alpha = {entry['mean']:.3f} +- {entry['sd']:.3f}  "
              f"(k = {entry['k']}, realizations = {entry['realizations']})")


def cmd_run(args) -> int:
    spec = _override(load_config(args.config), args)
    result = run_experiment(spec)
    _print_summary(result, spec.output_dir, args.quiet)
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = _override(load_config(args.config), args)
    if not args.quiet:
        print(f"{args.config}: ok ({spec.realizations} realization(s), analyses: {', '.join(sorted(spec.analyses))})")
    return EXIT_OK


def cmd_figure(args) -> int:
    out = Path(args.out or args.name)
    result = reproduce_figure(args.name, out, seed=args.seed, realizations=args.realizations,
                              workers=args.workers or 1)
    _print_summary(result, out, args.quiet)
    return EXIT_OK


def cmd_analytic(args) -> int:
    if not args.zeta > 0:
        raise ConfigError("zeta", f"must be positive, got {args.zeta}")
    r = parse_grid(args.grid)
    closed = closed_form_density(r, args.zeta)
    mixture = mixture_density(r, MixtureParams(args.zeta, args.n_max))
    lines = ["r,closed_form,mixture"] + [f"{a!r},{b!r},{c!r}" for a, b, c in
                                        zip(r.tolist(), np.atleast_1d(closed).tolist(),
                                            np.atleast_1d(mixture).tolist())]
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analytic.csv").write_text(text)
        meta = {"zeta_v": args.zeta, "n_max": args.n_max, "predicted_alpha": predicted_alpha(args.zeta)}
        (out / "manifest.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        if not args.quiet:
            print(f"wrote {out / 'analytic.csv'}; predicted alpha = {predicted_alpha(args.zeta)!r}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--workers", type=int, help="parallel realizations")
    common.add_argument("--out", help="output directory")
    common.add_argument("--realizations", type=int, help="number of realizations (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="mfmarket", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run the experiment described by a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", parents=[common], help="check a config file without running it")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("figure", parents=[common], help="reproduce the data behind a figure")
    p.add_argument("name", choices=sorted(FIGURES))
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("analytic", parents=[common], help="tabulate the analytic return densities")
    p.add_argument("--zeta", type=float, required=True, help="volume CCDF exponent")
    p.add_argument("--grid", required=True, help="r grid: start:stop:num or log:start:stop:num")
    p.add_argument("--n-max", type=int, default=10_000, help="truncation of the finite mixture")
    p.set_defaults(func=cmd_analytic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors are validation errors
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
