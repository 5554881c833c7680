import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from commands.config import EXIT_ERROR, Command, RunConfig
from commands.estimate import cmd_estimate
from commands.roc import cmd_roc
from commands.simulate import cmd_simulate
from commands.stability import cmd_stability
from services.errors import NetworkError
from services.methods import parse_methods
from services.netgen import ScenarioGrid, Topology, TopologyKind, parse_topology

logger = logging.getLogger("networks")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _comma_list(kind):
    def parse(text: str) -> list:
        try:
            return [kind(part.strip()) for part in text.split(",") if part.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _methods(text: str):
    try:
        return parse_methods(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _folds(text: str):
    if text.strip().lower() == "loo":
        return "loo"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k expects an integer or 'loo', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--methods", type=_methods, default=None,
                        help="comma list of shrink,pls,ridge,lasso,adalasso (default: all)")
    common.add_argument("--k", type=_folds, default=5, help="CV folds, or 'loo' (default 5)")
    common.add_argument("--fdr", type=float, default=0.2, help="local fdr threshold (default 0.2)")
    common.add_argument("--seed", type=int, default=None, help="root seed (default 0, or the grid's root_seed)")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True,
                        help="standardize genes before estimation (default on)")
    common.add_argument("--cap-genes", type=int, default=2000,
                        help="refuse lasso/adalasso above this many genes; 0 disables (default 2000)")
    common.add_argument("--db", default=None, help="SQLAlchemy URL to record results, e.g. sqlite:///study.db")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-q", "--quiet", action="store_true")

    scenario = argparse.ArgumentParser(add_help=False)
    scenario.add_argument("--grid", type=Path, default=None, help="ScenarioGrid JSON file")
    scenario.add_argument("--p", type=int, default=None, help="genes per network (default 100)")
    scenario.add_argument("--n", type=_comma_list(int), default=None, help="comma list of sample sizes")
    scenario.add_argument("--reps", type=int, default=None, help="replications per cell (default 20)")
    scenario.add_argument("--densities", type=_comma_list(float), default=None, help="comma list of densities")
    scenario.add_argument("--topology", type=_comma_list(str), default=None,
                          help="comma list such as clusters:2,stars:3")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--header", action="store_true", help="first CSV row holds gene labels")

    parser = argparse.ArgumentParser(prog="networks", description="Regularized partial-correlation gene networks")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common, scenario], help="run the simulation study")
    roc = sub.add_parser("roc", parents=[common, scenario], help="ROC curves over the fdr threshold")
    roc.add_argument("--thresholds", type=_comma_list(float), default=None,
                     help="comma list of fdr thresholds (default 0,0.05,..,1)")
    estimate = sub.add_parser("estimate", parents=[common, data], help="estimate networks from a CSV file")
    estimate.add_argument("data", type=Path)
    stability = sub.add_parser("stability", parents=[common, data], help="subsampling stability (Fleiss' kappa)")
    stability.add_argument("data", type=Path, nargs="+")
    stability.add_argument("--R", type=int, default=10, help="subsamples (default 10)")
    stability.add_argument("--drop", type=float, default=0.1, help="fraction left out per subsample (default 0.1)")
    return parser


def grid_from_args(args) -> ScenarioGrid:
    grid = ScenarioGrid.from_json(args.grid) if args.grid else ScenarioGrid()
    updates = {}
    if args.p is not None:
        updates["p"] = args.p
    if args.n is not None:
        updates["sample_sizes"] = args.n
    if args.reps is not None:
        updates["replications"] = args.reps
    if args.seed is not None:
        updates["root_seed"] = args.seed
    topologies = [Topology(kind=TopologyKind.DENSITY, value=d) for d in args.densities or []]
    topologies += [parse_topology(text) for text in args.topology or []]
    if topologies:
        updates["topologies"] = topologies
    # re-validate so flag values get the same checks as the JSON file
    return ScenarioGrid.model_validate(dict(grid.model_dump(), **updates))


def config_from_args(args, seed: int) -> RunConfig:
    fields = dict(
        command=Command(args.command),
        k=args.k,
        fdr_threshold=args.fdr,
        seed=seed,
        jobs=args.jobs,
        out=args.out,
        standardize=args.standardize,
        cap_genes=args.cap_genes,
        db=args.db,
    )
    if args.methods:
        fields["methods"] = args.methods
    if getattr(args, "thresholds", None):
        fields["thresholds"] = args.thresholds
    if hasattr(args, "header"):
        fields["header"] = args.header
    if hasattr(args, "R"):
        fields.update(R=args.R, drop_fraction=args.drop)
    return RunConfig(**fields)


def configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    try:
        grid = grid_from_args(args) if args.command in ("simulate", "roc") else None
        seed = grid.root_seed if grid is not None else (args.seed or 0)
        config = config_from_args(args, seed)
    except (ValidationError, ValueError, OSError) as exc:
        parser.error(str(exc))

    logger.info("%s started (seed %d)", config.command.value, config.seed)
    try:
        if config.command is Command.SIMULATE:
            code = cmd_simulate(config, grid)
        elif config.command is Command.ROC:
            code = cmd_roc(config, grid)
        elif config.command is Command.ESTIMATE:
            code = cmd_estimate(config, args.data)
        else:
            code = cmd_stability(config, args.data)
    except (NetworkError, OSError) as exc:
        logger.error("%s failed: %s", config.command.value, exc)
        return EXIT_ERROR
    logger.info("%s finished with exit code %d; results in %s", config.command.value, code, config.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
