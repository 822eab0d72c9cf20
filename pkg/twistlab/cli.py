###############################################################################
### Imports
###############################################################################
import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from twistlab.complete_intersections import family_catalog, parity_condition, smoothness_scan
from twistlab.config import build_config, configure_logging, load_context
from twistlab.errors import BadShapeError, ConfigError, TwistlabError
from twistlab.linalg_paths import (
    CommutingPair,
    max_norm,
    negative_parity,
    canonical_pair,
    path_commutator_residual,
    synth_commuting_path,
)
from twistlab.local_flows import collar_commutator_class, twist_profile
from twistlab.pipeline import run_verify_family
from twistlab.report import plain, summarize
from twistlab.spin_lift import SOLoop, generator_loops, lift_loop

###############################################################################
### Logger Instance
###############################################################################
logger = logging.getLogger(__name__)

###############################################################################
### Constants
###############################################################################
SUBCOMMANDS = ("verify-family", "spin-class", "path-synth", "scan-smoothness", "twist-demo", "parity-check")


###############################################################################
### Classes
###############################################################################
@dataclass
class CommandResult:
    exit_code: int
    text: str
    payload: object = field(default_factory=dict)

    def json(self):
        return json.dumps(plain(self.payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


###############################################################################
### Functions
###############################################################################
def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error reading {what} file {path}: {str(e)}")
        raise ConfigError(f"Cannot read {what} file {path}: {str(e)}")


def _int_list(text, what):
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise BadShapeError(f"{what} must be comma-separated integers, got {text!r}")


def _family_overrides(args):
    params = json.loads(args.params) if getattr(args, "params", None) else None
    return {
        "family": getattr(args, "family", None),
        "params": params,
        "family_file": getattr(args, "file", None),
        "samples": args.samples,
        "seed": args.seed,
        "grid": args.grid,
    }


def verify_family_command(args, context):
    config = build_config(context, args.config, _family_overrides(args))
    report = run_verify_family(config)
    return CommandResult(report.exit_code, summarize(report), report)


def scan_smoothness_command(args, context):
    config = build_config(context, args.config, _family_overrides(args))
    params = dict(config.params)
    family = config.family
    if config.family_file:
        family, params["path"] = "custom", config.family_file
    system = family_catalog(family, params)
    report = smoothness_scan(
        system,
        config.samples,
        seed=config.seed,
        sigma_threshold=config.tolerances.sigma_threshold,
        workers=config.workers,
    )
    lines = [
        f"samples converged: {report.samples_tested}/{report.samples_requested}",
        f"min sigma: {report.min_singular_value:.6e}",
        f"failures: {len(report.failures)}",
    ]
    for name, entry in report.special_point_results.items():
        lines.append(f"  {name}: {entry}")
    return CommandResult(0 if report.passed else 1, "\n".join(lines), report.as_dict())


def _load_loop(path):
    data = _read_json(path, "loop")
    if isinstance(data, dict):
        return SOLoop(np.asarray(data["times"], dtype=float), np.asarray(data["values"], dtype=float))
    values = np.asarray(data, dtype=float)
    return SOLoop(np.linspace(0.0, 1.0, len(values)), values)


def spin_class_command(args, context):
    grid = args.grid or context.get("constants", {}).get("loop_grid", 2048)
    if args.generator_commutator:
        if args.n is None:
            raise ConfigError("--generator-commutator needs --n")
        loop = generator_loops(args.n, grid)[2]
    elif args.loop:
        loop = _load_loop(args.loop)
    else:
        raise ConfigError("spin-class needs --generator-commutator or --loop")
    sign = lift_loop(loop)
    payload = {"n": loop.n, "samples": len(loop.times), "sign": sign}
    return CommandResult(0, str(sign), payload)


def path_synth_command(args, context):
    grid = args.grid or context.get("constants", {}).get("path_grid", 1024)
    if args.identity:
        if args.n is None:
            raise ConfigError("--identity needs --n")
        pair = CommutingPair(np.eye(args.n), np.eye(args.n))
    elif args.pair:
        data = _read_json(args.pair, "pair")
        pair = CommutingPair(data["a"], data["c"], data.get("tol", 1e-8))
    else:
        raise ConfigError("path-synth needs --identity or --pair")
    alpha, gamma = synth_commuting_path(pair, grid)
    nu = negative_parity(pair)
    model = canonical_pair(pair.n, nu)
    payload = {
        "n": pair.n,
        "nu": nu,
        "samples": len(alpha.times),
        "commutator_residual": path_commutator_residual(alpha, gamma),
        "endpoint_error": max(max_norm(alpha.values[-1] - model.a), max_norm(gamma.values[-1] - model.c)),
        "min_det": float(min(np.min(np.linalg.det(alpha.values)), np.min(np.linalg.det(gamma.values)))),
    }
    text = "\n".join(f"{key}: {value}" for key, value in payload.items())
    return CommandResult(0, text, payload)


def twist_demo_command(args, context):
    grid = args.grid or context.get("constants", {}).get("loop_grid", 2048)
    n = args.n or 3
    profile = twist_profile(n, grid=grid)

    def commutator(t):
        k, i = profile.rho_k(t), profile.rho_i(t)
        return k @ i @ k.T @ i.T

    times = np.linspace(1.0, 4.0, grid + 1)
    samples = [commutator(t) for t in times]
    sign = collar_commutator_class(profile, grid)
    lines = [f"{t:.6f} " + " ".join(f"{value:+.6f}" for value in sample.ravel()) for t, sample in zip(times, samples)]
    lines.append(f"class: {sign}")
    payload = {"n": n, "times": times, "samples": samples, "class": sign}
    return CommandResult(0, "\n".join(lines), payload)


def parity_check_command(args, context):
    n_tuple = _int_list(args.n_tuple, "--n")
    rows = [_int_list(row, "--d") for row in args.d.split(";") if row.strip()]
    feasible = parity_condition(n_tuple, rows)
    payload = {"n": n_tuple, "d": rows, "feasible": feasible}
    return CommandResult(0, str(feasible), payload)


COMMANDS = {
    "verify-family": verify_family_command,
    "spin-class": spin_class_command,
    "path-synth": path_synth_command,
    "scan-smoothness": scan_smoothness_command,
    "twist-demo": twist_demo_command,
    "parity-check": parity_check_command,
}


def _common_flags(parser):
    parser.add_argument("--json", action="store_true", help="Print the machine-readable result")
    parser.add_argument("--out", help="Write the JSON result to this file")
    parser.add_argument("--log-level", choices=("debug", "info", "warning", "error"))


def _grid_flag(parser):
    parser.add_argument("--grid", type=int, help="Path or loop grid size")


def _family_flags(parser):
    parser.add_argument("--config", help="JSON file with pipeline settings")
    parser.add_argument("--family", choices=("Xd", "X2mn", "qA", "custom"))
    parser.add_argument("--params", help='Family parameters as JSON, e.g. \'{"d": 4, "n": 3}\'')
    parser.add_argument("--file", help="Polynomial file (one polynomial per line)")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--samples", type=int, help="Smoothness samples")
    _grid_flag(parser)


def build_parser():
    parser = argparse.ArgumentParser(prog="twistlab", description="Boundary Dehn twist verification tools")
    subparsers = parser.add_subparsers(dest="command", required=True)

    verify = subparsers.add_parser("verify-family", help="Run the full verification chain")
    _family_flags(verify)
    scan = subparsers.add_parser("scan-smoothness", help="Monte Carlo smoothness scan")
    _family_flags(scan)

    spin = subparsers.add_parser("spin-class", help="Spin lift sign of a loop in SO(n)")
    spin.add_argument("--generator-commutator", action="store_true")
    spin.add_argument("--n", type=int)
    spin.add_argument("--loop", help="JSON file: list of matrices or {times, values}")
    _grid_flag(spin)

    synth = subparsers.add_parser("path-synth", help="Commuting path to the canonical pair")
    synth.add_argument("--identity", action="store_true")
    synth.add_argument("--n", type=int)
    synth.add_argument("--pair", help='JSON file {"a": [[...]], "c": [[...]]}')
    _grid_flag(synth)

    demo = subparsers.add_parser("twist-demo", help="Collar commutator loop and its class")
    demo.add_argument("--n", type=int)
    _grid_flag(demo)

    parity = subparsers.add_parser("parity-check", help="Multidegree parity condition")
    parity.add_argument("--n", dest="n_tuple", required=True, help="Factor dimensions, e.g. 1,1,1")
    parity.add_argument("--d", required=True, help="Degree rows, e.g. '2,2,2;3,1,1'")

    for subparser in subparsers.choices.values():
        _common_flags(subparser)
    return parser


def run_subcommand(name, args, context=None):
    """
    Runs one subcommand.

    :param name: One of SUBCOMMANDS.
    :param args: Parsed argparse namespace.
    :param context: Parsed context (loaded when omitted).
    :return: CommandResult
    """
    if name not in COMMANDS:
        raise ConfigError(f"Unknown subcommand {name!r}")
    context = load_context() if context is None else context
    logger.info(f"Running subcommand {name}")
    return COMMANDS[name](args, context)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        context = load_context()
        configure_logging(context, args.log_level)
        result = run_subcommand(args.command, args, context)
    except (TwistlabError, np.linalg.LinAlgError, json.JSONDecodeError, KeyError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"error: {str(e)}", file=sys.stderr)
        return 2
    rendered = result.json()
    print(rendered if args.json else result.text, end="" if args.json else "\n")
    if args.out:
        Path(args.out).write_text(rendered)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
