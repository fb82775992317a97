#!/usr/bin/env python3
"""
Run one congested-clique experiment and print its JSON (or CSV) document.

    clique_run.py triangles --input fixtures/graphs/k4.txt --verify
    clique_run.py apsp --mode approx --delta 0.05 --input g.txt
    clique_run.py scaling --target mm-semiring --sizes 8 27 64

Exit codes: 0 success, 2 when a detect command finds nothing, 1 on error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

# Add package directory to path to import modules
package_dir = Path(__file__).parent.parent
sys.path.insert(0, str(package_dir))

from config import load_settings
from experiment import (
    APSP_MODES, EXIT_ERROR, SCALING_TARGETS, SEMIRINGS, SUBCOMMANDS,
    ExperimentConfig, render_document, run_experiment,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Congested clique experiments")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--input", type=Path, help="edge list, or matrix file for mm")
    parser.add_argument("--right", type=Path, help="right operand for mm (default: the input)")
    parser.add_argument("--n", type=int, help="node count override / witness-test size")
    parser.add_argument("--directed", action="store_true")
    parser.add_argument("--allow-self-loops", action="store_true", help="girth-directed only")
    parser.add_argument("--semiring", choices=sorted(SEMIRINGS), default="minplus")
    parser.add_argument("--k", type=int, default=3, help="cycle length for kcycle")
    parser.add_argument("--M", type=int, help="weight / distance bound")
    parser.add_argument("--delta", type=float, help="per-squaring accuracy for approximate APSP")
    parser.add_argument("--rho", type=float, help="girth exponent in (0, 1]")
    parser.add_argument("--loglog-cutoff", action="store_true", help="girth cutoff max(3, ⌈log log n⌉)")
    parser.add_argument("--mode", choices=APSP_MODES, default="semiring")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--format", dest="output_format", choices=("json", "csv"), default="json")
    parser.add_argument("--backend", default=None, help="semiring3d | bilinear:L | auto")
    parser.add_argument("--trials", type=int, help="colourings per k, or trials per scaling size")
    parser.add_argument("--witness-c", type=float)
    parser.add_argument("--target", choices=SCALING_TARGETS, default="mm-semiring")
    parser.add_argument("--sizes", type=int, nargs="*", default=[])
    parser.add_argument("--with-routes", action="store_true")
    parser.add_argument("--verify", action="store_true", help="compare against the centralised oracle")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    try:
        settings = load_settings()
        logging.basicConfig(
            level=getattr(logging, settings.log_level, logging.WARNING),
            stream=sys.stderr,
            format="%(asctime)s %(name)s %(levelname)s %(message)s",
        )
        options = vars(args)
        if options["backend"] is None:
            options["backend"] = settings.backend
        cfg = ExperimentConfig(**options)
        doc, _, code = run_experiment(cfg)
        print(render_document(doc, cfg.output_format))
        return code

    except Exception as e:
        error_result = {
            "success": False,
            "error": str(e),
            "error_type": type(e).__name__,
            "subcommand": args.subcommand,
        }
        print(json.dumps(error_result))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
