import argparse
import sys
from pathlib import Path

import pandas as pd

from src.config import config
from src.game import GameError
from src.gadgets import SWEEP_KINDS, gadget_action_sweep, gadget_values, resolved_actions, write_sweep
from src.games import build_game, ce_coin_model
from src.harness import ExperimentConfig, run_experiment
from src.logger import get_context_logger, get_logger
from src.results import ResultsTable
from src.visualizer import Visualizer

logger = get_logger(__name__)

DEMO_P_GRID = ("0.499999", "0.5", "0.500001")


def parse_arguments(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(prog="cdlr", description="Continual depth-limited resolving experiments")
    parser.add_argument("--skip-viz", action="store_true", help="Skip visualization generation")
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="Run one algorithm against one opponent")
    solve.add_argument("--game", required=True, help="Game selector, e.g. leduc or ce_rounds:4")
    solve.add_argument("--algo", required=True, help="Algorithm spec, e.g. cdbr:2 or cdrnr:0.5:by_round")
    solve.add_argument("--opponent", required=True, help="Opponent spec: cfr:<iters> or random:<seed>")
    solve.add_argument("--p", type=float, help="Mixing probability for cdrnr / rnr without one in --algo")
    solve.add_argument("--depth", type=int, help="Lookahead in own actions (by_own_actions:<depth>)")
    solve.add_argument("--vf", help="Value function spec (optimal, limited:<n>, noisy:<eps>:<seed>)")
    solve.add_argument("--iters", type=int, help="CFR+ iterations per resolve step")
    solve.add_argument("--out", type=str, required=True, help="Output directory")

    sweep = commands.add_parser("sweep", help="Run an experiment file")
    sweep.add_argument("--config", required=True, help="Flat key=value experiment file")

    demo = commands.add_parser("gadget-demo", help="Exact gadget counterexamples")
    demo.add_argument("--game", choices=("ce_coin", "ce_gadget"), default="ce_coin")
    demo.add_argument("--out", type=str, help="Output directory for the sweep CSV")

    bounds = commands.add_parser("check-bounds", help="Check the guarantees of an existing run")
    bounds.add_argument("--run", required=True, help="Run directory or results.csv")
    bounds.add_argument("--budget", type=float, help="Allowed numerical slack")

    plot = commands.add_parser("plot", help="Render charts for an existing run")
    plot.add_argument("--run", required=True, help="Run directory or results.csv")
    return parser.parse_args(argv)


def _solve_experiment(args) -> ExperimentConfig:
    algo = args.algo
    if args.p is not None and algo in ("cdrnr", "rnr"):
        algo = f"{algo}:{args.p:g}"
    kwargs = {"game": args.game, "opponents": args.opponent, "algorithms": algo}
    if args.depth is not None:
        kwargs["scheme"] = f"by_own_actions:{args.depth}"
    if args.vf:
        kwargs["vf_kind"] = args.vf
    if args.iters:
        kwargs["iterations"] = args.iters
    return ExperimentConfig(output_dir=Path(args.out), **kwargs)


def _print_results(frame: pd.DataFrame, output_dir: Path) -> None:
    print("\n" + "=" * 60)
    print("RUN COMPLETE!")
    print("=" * 60)
    cells = frame[frame["opponent"] != "a"]
    print(f"Cells: {len(cells)} ({(cells['error'] != '').sum()} failed)")
    for row in frame[frame["opponent"] == "a"].itertuples(index=False):
        print(f"  {row.algorithm:<28} gain {row.gain:+.6f}   exploitability {row.exploitability:.6f}")
    print(f"\nResults saved to: {output_dir}")
    print("=" * 60)


def _run(experiment: ExperimentConfig, args, ctx_logger) -> int:
    ctx_logger = ctx_logger.bind(game=experiment.game, output_dir=str(experiment.output_dir))
    frame = run_experiment(experiment)
    table = ResultsTable(frame)
    problems = table.check_bounds(experiment.error_budget)
    table.write_dat(experiment.output_dir / "dat")
    if not args.skip_viz:
        visualizer = Visualizer(experiment.output_dir)
        visualizer.create_gain_exploitability_chart(table.aggregate())
        visualizer.create_tradeoff_chart(table.cells)
    _print_results(frame, experiment.output_dir)
    failed = (frame["error"].fillna("") != "").any()
    for problem in problems:
        ctx_logger.error(f"Bound violated: {problem}")
        print(f"Bound violated: {problem}")
    return 1 if problems or failed else 0


def _gadget_demo(args, ctx_logger) -> int:
    if args.game == "ce_coin":
        table = gadget_values(build_game("ce_coin"), ce_coin_model(), {"U:?": "P"})
        print(table.assign(estimate=table["estimate"].astype(str),
                           reference=table["reference"].astype(str),
                           error=table["error"].astype(str)).to_string(index=False))
        kept = table[table["construction"] == "trunk_kept"]
        return 0 if (kept["error"] == 0).all() else 1

    tree = build_game("ce_gadget")
    sweeps = []
    for kind in SWEEP_KINDS:
        frame = gadget_action_sweep(tree, kind, DEMO_P_GRID)
        frame.insert(0, "kind", kind)
        frame["resolved"] = resolved_actions(frame)
        sweeps.append(frame)
    sweep = pd.concat(sweeps, ignore_index=True)
    print(sweep.to_string(index=False))
    output_dir = Path(args.out) if args.out else config.paths.output_dir
    path = write_sweep(sweep, output_dir / "gadget_sweep.csv")
    ctx_logger.info(f"Sweep written to {path}")
    if not args.skip_viz:
        Visualizer(output_dir).create_sweep_chart(sweep)
    kept = sweep[sweep["kind"] == "trunk_kept"]["resolved"].tolist()
    gadgets_pure_c = (sweep[sweep["kind"] != "trunk_kept"]["resolved"] == "c").any()
    return 0 if kept == ["b", "c", "a"] and not gadgets_pure_c else 1


def main(argv=None):
    """Main execution function."""
    args = parse_arguments(argv)

    run_id = f"run_{pd.Timestamp.now().strftime('%Y%m%d_%H%M%S')}"
    ctx_logger = get_context_logger(__name__, {"run_id": run_id}).bind(command=args.command)
    ctx_logger.info(f"Starting cdlr {args.command}")

    try:
        if args.command == "solve":
            return _run(_solve_experiment(args), args, ctx_logger)

        if args.command == "sweep":
            return _run(ExperimentConfig.from_file(args.config), args, ctx_logger)

        if args.command == "gadget-demo":
            return _gadget_demo(args, ctx_logger)

        if args.command == "check-bounds":
            table = ResultsTable.load(args.run)
            violations = table.check_bounds(args.budget)
            for violation in violations:
                print(f"Bound violated: {violation}")
            print(f"{len(table.cells)} cells checked, {len(violations)} violations")
            return 1 if violations else 0

        if args.command == "plot":
            table = ResultsTable.load(args.run)
            run_dir = Path(args.run) if Path(args.run).is_dir() else Path(args.run).parent
            visualizer = Visualizer(run_dir)
            paths = [visualizer.create_gain_exploitability_chart(table.aggregate()),
                     visualizer.create_tradeoff_chart(table.cells)]
            for path in filter(None, paths):
                print(path)
            return 0

    except GameError as e:
        ctx_logger.error(f"{type(e).__name__}: {e}")
        print(f"\nError: {e}")
        return 1

    except FileNotFoundError as e:
        ctx_logger.error(f"File not found: {e}")
        print(f"\nError: {e}")
        return 1

    except Exception as e:
        ctx_logger.error(f"Unexpected error: {e}", exc_info=True)
        print(f"\nUnexpected error: {e}")
        print("Check the logs for more details.")
        return 1

    return 1


if __name__ == "__main__":
    sys.exit(main())
