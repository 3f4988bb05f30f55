"""Command line entry point: ``gammaruin <command> --config FILE``.

Commands: ``validate``, ``constants``, ``ruin``, ``passages``, ``compare``
and ``all``.  Exit codes: 0 success, 2 configuration error, 3 numerical
assumption violation, 4 path budget exhausted.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .asymptotics import BracketFailure, RegimeMismatch
from .config import ConfigError, build_model, load_config
from .mc_estimators import GridResolutionError, InfeasibleGrid
from .path_sampler import CholeskyFailure, EmbeddingNotPSD
from .report import BudgetExhausted, resolve_constants, run
from .variance_models import validate_assumptions

__all__ = ["main", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERICAL", "EXIT_BUDGET"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_BUDGET = 0, 2, 3, 4

_STAGES = {
    "constants": ("constants",),
    "ruin": ("ruin",),
    "passages": ("passages",),
    "compare": ("constants", "ruin", "theory", "compare"),
    "all": ("constants", "ruin", "theory", "compare", "passages"),
}
_NUMERICAL = (BracketFailure, RegimeMismatch, GridResolutionError, InfeasibleGrid, CholeskyFailure, EmbeddingNotPSD)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gammaruin", description="Ruin of Gaussian risk processes with tax.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment TOML file")
    common.add_argument("--seed-override", type=int, default=None, help="replace [mc] seed")
    common.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    common.add_argument("--out", default=None, help="output directory (default: [output] dir)")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check the config and the model assumptions")
    for name, text in (("constants", "resolve or estimate the constants"), ("ruin", "Monte Carlo ruin probabilities"),
                       ("passages", "conditional passage times"), ("compare", "theory versus simulation table"),
                       ("all", "every stage")):
        sub.add_parser(name, parents=[common], help=text)
    return p


def _validate(cfg) -> int:
    model = build_model(cfg.model)
    report = validate_assumptions(model)
    for chk in report.checks:
        status = "ok  " if chk.passed else "FAIL"
        print(f"{status} {chk.name}: {chk.detail}")
    resolve_constants(cfg, model, estimate=False)
    if not report.passed:
        print(f"{len(report.failed())} assumption check(s) failed", file=sys.stderr)
        return EXIT_NUMERICAL
    print("configuration valid")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed_override)
        if args.command == "validate":
            return _validate(cfg)
        man = run(cfg, args.out, _STAGES[args.command], workers=max(1, args.workers))
        print(json.dumps({"body_hash": man["body_hash"], "files": sorted(man["files"])}, indent=2))
        return EXIT_OK
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExhausted as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except _NUMERICAL as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
