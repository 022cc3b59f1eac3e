"""Command line entry point: ``fsmpc run`` and ``fsmpc verify``.

Exit codes: 0 success, 1 property or solver failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .analysis import check_envelope, envelope_params
from .artifacts import summary_text, write_csv, write_svg
from .config import OUTPUT_DIR_ENV, PRESETS, ConfigError, load_config
from .controller import mpc_run
from .exceptions import NoValidStepError, NumericDomainError, PreconditionError
from .ocp import obstacle_activation
from .verify import SUITES, run_suite

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2

logger = logging.getLogger("fsmpc")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _config_error(exc: ConfigError) -> int:
    for loc, msg in exc.errors:
        print(f"config error: {loc}: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def run_experiment(cfg, out_dir=None, name: str = "run") -> int:
    spec, p, cost = cfg.spec(), cfg.params(), cfg.cost_config()
    out = cfg.resolve_output_dir(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        log = mpc_run(
            cfg.x0(), spec, cost, p, cfg.plant.kind, cfg.horizon_steps,
            substeps=cfg.plant.substeps, opts=cfg.solver_options(), stop_norm=cfg.stop_norm,
        )
    except (NumericDomainError, NoValidStepError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    env = check_envelope(log, envelope_params(spec))
    after_first = log.states[log.flexible_steps[0]:]
    activation = 0.0
    if len(after_first):
        activation = max((float(np.max(obstacle_activation(after_first, e))) for e in cost.obstacles), default=0.0)
    extra = {"max_obstacle_activation_after_first_iteration": format(activation, ".17g")}
    write_csv(log, out / f"{name}.csv")
    write_svg(log.states, cost.obstacles, out / f"{name}.svg", title=name)
    (out / f"{name}_summary.txt").write_text(summary_text(log, env, name=name, extra=extra), encoding="utf-8")
    final = float(np.linalg.norm(log.states[-1]))
    print(f"{name}: {log.n_steps} steps, {len(log.iteration_marks)} iterations, final |x| = {final:.3e}, artifacts in {out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.config is None and args.preset is None:
        print("config error: run needs --config and/or --preset", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, preset=args.preset)
    except ConfigError as exc:
        return _config_error(exc)
    return run_experiment(cfg, args.out, name=args.preset or "run")


def _cmd_verify(args) -> int:
    overrides = {}
    for key in ("alpha", "N"):
        if getattr(args, key) is not None:
            overrides.setdefault("egdclf", {})[key] = getattr(args, key)
    if args.condition is not None:
        overrides.setdefault("egdclf", {})["condition"] = args.condition
    if args.h is not None:
        overrides["model"] = {"h": args.h}
    spec = None
    if overrides or args.config is not None:
        try:
            spec = load_config(args.config, overrides=overrides).spec()
        except ConfigError as exc:
            return _config_error(exc)
    try:
        report = run_suite(args.suite, spec=spec, samples=args.samples, seed=args.seed, workers=args.workers)
    except PreconditionError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(report, indent=2, default=_json_default))
    return EXIT_OK if report["passed"] else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsmpc", description="Flexible-step MPC for the force/torque unicycle.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a closed-loop experiment and write CSV, SVG and summary")
    run.add_argument("--config", help="YAML experiment config")
    run.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment; --config values override it")
    run.add_argument("--out", help=f"output directory (default: ${OUTPUT_DIR_ENV} or ./fsmpc-out)")
    run.set_defaults(func=_cmd_run)

    ver = sub.add_parser("verify", help="run property suites and print a JSON report")
    ver.add_argument("--suite", choices=[*SUITES, "all"], default="all")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--samples", type=int, help="sample count (suite specific default)")
    ver.add_argument("--workers", type=int, default=1)
    ver.add_argument("--config", help="YAML config whose egdclf/model sections define the spec")
    ver.add_argument("--condition", type=int, choices=(1, 2))
    ver.add_argument("--alpha", type=float)
    ver.add_argument("--N", type=int)
    ver.add_argument("--h", type=float)
    ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if getattr(args, "samples", None) is not None and args.samples < 1:
        print("config error: --samples must be positive", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
