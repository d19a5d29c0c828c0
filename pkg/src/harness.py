"""
experiment harness: opponents, algorithm specs and result tables.
// what this file handles //

- opponent generation (short CFR+ runs, seeded random strategies)
- algorithm spec strings (br, lbr, cdbr:<k>, cdrnr:<p>:<scheme>, rnr:<p>, cdrnr_vf:<vf>)
- running every (opponent x algorithm) cell, optionally in a process pool
- gain / exploitability / bound columns, aggregate rows and the game-value manifest
"""

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .cfr import ConfigurationError, SolveConfig, solve, solve_game_value
from .config import config, read_experiment_file
from .game import (
    BehavioralStrategy,
    GameError,
    GameTree,
    ParameterError,
    Player,
    best_response,
    exploitability,
    gain,
)
from .games import build_game, parse_game
from .lbr import lbr_policy
from .logger import get_context_logger, get_logger
from .resolving import (
    ResolveDiagnostics,
    StepRecord,
    TheoremBounds,
    cdbr,
    cdrnr,
    make_partitioning,
    make_rnr,
    solve_rnr,
    theorem1_slack,
    theorem2_bound,
)
from .valuefn import make_value_function

logger = get_logger(__name__)

RESULT_COLUMNS = ["game", "opponent", "algorithm", "p", "depth", "gain", "exploitability",
                  "theorem1_slack", "theorem2_bound", "error", "seed"]
TIMING_COLUMNS = ["game", "opponent", "algorithm", "wall_time_s"]
AGGREGATE = "a"
GUARANTEED = ("cdbr", "cdrnr", "cdrnr_vf", "rnr")
DEFAULT_SCHEME = "by_own_actions:2"


# ─── opponents ──────────────────────────────────────────────────────────


def gen_opponent_cfr(tree: GameTree, iterations: int, seed: int = 0) -> BehavioralStrategy:
    """DOWN's average strategy after `iterations` CFR+ iterations; the seed is recorded only."""
    if iterations < 1:
        raise ParameterError(f"Opponent iterations must be at least 1, got {iterations}")
    result = solve(tree, SolveConfig(iterations=iterations))
    logger.debug(f"Generated CFR opponent on {tree.name}: {iterations} iterations, seed {seed}")
    return result.average_strategy.sigma_down


def gen_opponent_random(tree: GameTree, seed: int, player: Player = Player.DOWN) -> BehavioralStrategy:
    """Uniform point of each infoset's simplex, drawn in sorted key order from a seeded generator."""
    rng = np.random.default_rng(seed)
    infosets = sorted(tree.player_infosets(player), key=lambda i: i.key)
    return BehavioralStrategy(player, {i.key: rng.dirichlet(np.ones(i.size)) for i in infosets})


def make_opponent(tree: GameTree, spec: str) -> BehavioralStrategy:
    """Opponent from `cfr:<iterations>` or `random:<seed>`."""
    kind, _, argument = spec.partition(":")
    try:
        value = int(argument)
    except ValueError:
        raise ConfigurationError(f"Malformed opponent spec {spec!r}") from None
    if kind == "cfr":
        return gen_opponent_cfr(tree, value)
    if kind == "random":
        return gen_opponent_random(tree, value)
    raise ConfigurationError(f"Unknown opponent kind {kind!r} in {spec!r}")


# ─── algorithms ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class AlgorithmSpec:
    """Parsed algorithm id; `text` is the id written to result rows."""

    text: str
    kind: str
    p: Optional[float] = None
    scheme: Optional[str] = None
    vf: str = "optimal"

    @property
    def depth(self) -> Optional[int]:
        if self.scheme and self.scheme.startswith("by_own_actions:"):
            return int(self.scheme.split(":", 1)[1])
        return None


def _probability(text: str, spec: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise ConfigurationError(f"Malformed p in {spec!r}") from None
    if not 0 <= p <= 1:
        raise ParameterError(f"p must lie in [0, 1] in {spec!r}")
    return p


def _scheme(text: str) -> str:
    if text.isdigit():
        return f"by_own_actions:{text}"
    return text


def parse_algorithm(spec: str, scheme: str = DEFAULT_SCHEME, vf: str = "optimal",
                    p_default: float = 0.5) -> AlgorithmSpec:
    """
    Parse one algorithm id.

    `cdbr:<k>` and the scheme part of `cdrnr:<p>:<scheme>` accept a bare
    lookahead (`2`) or a full scheme (`by_round`, `by_own_actions:3`).
    """
    kind, _, rest = spec.partition(":")
    if kind in ("br", "lbr"):
        if rest:
            raise ConfigurationError(f"{kind} takes no argument: {spec!r}")
        return AlgorithmSpec(spec, kind)
    if kind == "cdbr":
        return AlgorithmSpec(spec, kind, 1.0, _scheme(rest or scheme), vf)
    if kind == "cdrnr":
        p_text, _, scheme_text = rest.partition(":")
        if not p_text:
            raise ConfigurationError(f"cdrnr needs p: {spec!r}")
        return AlgorithmSpec(spec, kind, _probability(p_text, spec), _scheme(scheme_text or scheme), vf)
    if kind == "rnr":
        return AlgorithmSpec(spec, kind, _probability(rest, spec))
    if kind == "cdrnr_vf":
        if not rest:
            raise ConfigurationError(f"cdrnr_vf needs a value function: {spec!r}")
        return AlgorithmSpec(spec, kind, p_default, scheme, rest)
    raise ConfigurationError(f"Unknown algorithm {spec!r}")


def expand_algorithms(specs: Sequence[str], p_grid: Sequence[float]) -> List[str]:
    """Replace a `*` p in `cdrnr:*:...` / `rnr:*` with every value of the grid."""
    out = []
    for spec in specs:
        parts = spec.split(":")
        if len(parts) > 1 and parts[1] == "*":
            out.extend(":".join([parts[0], f"{p:g}"] + parts[2:]) for p in p_grid)
        else:
            out.append(spec)
    return out


# ─── configuration and rows ─────────────────────────────────────────────


def _split(value: Union[str, Sequence], cast=str) -> Tuple:
    if isinstance(value, str):
        return tuple(cast(v.strip()) for v in value.split(",") if v.strip())
    return tuple(cast(v) for v in value)


@dataclass
class ExperimentConfig:
    game: str
    opponents: Tuple[str, ...]
    algorithms: Tuple[str, ...]
    iterations: int = field(default_factory=lambda: config.solver.iterations)
    output_dir: Path = field(default_factory=lambda: config.paths.output_dir)
    p_grid: Tuple[float, ...] = field(default_factory=lambda: config.harness.p_grid)
    vf_kind: str = field(default_factory=lambda: config.solver.vf_kind)
    vf_tolerance: float = field(default_factory=lambda: config.solver.vf_tolerance)
    workers: int = field(default_factory=lambda: config.harness.workers)
    scheme: str = DEFAULT_SCHEME
    seed: int = 0
    error_budget: float = field(default_factory=lambda: config.harness.error_budget)

    def __post_init__(self) -> None:
        self.p_grid = _split(self.p_grid, float)
        self.opponents = _split(self.opponents)
        self.algorithms = tuple(expand_algorithms(_split(self.algorithms), self.p_grid))
        self.output_dir = Path(self.output_dir)

    def validate(self) -> None:
        parse_game(self.game)
        if not self.opponents or not self.algorithms:
            raise ConfigurationError("An experiment needs at least one opponent and one algorithm")
        if self.iterations < 1:
            raise ParameterError(f"Iterations must be positive, got {self.iterations}")
        if any(not 0 <= p < 1 for p in self.p_grid):
            raise ParameterError(f"p grid values must lie in [0, 1): {self.p_grid}")
        for opponent in self.opponents:
            kind, _, argument = opponent.partition(":")
            if kind not in ("cfr", "random") or not argument.isdigit():
                raise ConfigurationError(f"Malformed opponent spec {opponent!r}")
        for algorithm in self.algorithms:
            parse_algorithm(algorithm, self.scheme, self.vf_kind)

    def algorithm(self, spec: str) -> AlgorithmSpec:
        return parse_algorithm(spec, self.scheme, self.vf_kind)

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "ExperimentConfig":
        """Build from flat keys (`game`, `opponents`, `algorithms`, `vf.kind`, ...)."""
        known = {
            "game": str, "opponents": str, "algorithms": str, "iterations": int, "output_dir": Path,
            "p_grid": str, "vf.kind": str, "vf.tolerance": float, "workers": int, "scheme": str,
            "depth": int, "seed": int, "error_budget": float,
        }
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigurationError(f"Unknown experiment keys: {', '.join(unknown)}")
        for required in ("game", "opponents", "algorithms"):
            if required not in values:
                raise ConfigurationError(f"Experiment file misses {required!r}")
        kwargs = {}
        for key, value in values.items():
            try:
                parsed = known[key](value)
            except ValueError:
                raise ConfigurationError(f"Malformed value for {key}: {value!r}") from None
            if key == "depth":
                kwargs["scheme"] = f"by_own_actions:{parsed}"
            elif key.startswith("vf."):
                kwargs["vf_" + key[3:]] = parsed
            else:
                kwargs[key] = parsed
        experiment = cls(**kwargs)
        experiment.validate()
        return experiment

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        return cls.from_mapping(read_experiment_file(Path(path)))


@dataclass
class ResultRow:
    game: str
    opponent: str
    algorithm: str
    p: Optional[float] = None
    depth: Optional[int] = None
    gain: float = math.nan
    exploitability: float = math.nan
    theorem1_slack: float = math.nan
    theorem2_bound: float = math.nan
    error: str = ""
    seed: int = 0
    wall_time_s: float = 0.0

    @property
    def failed(self) -> bool:
        return bool(self.error)

    def record(self) -> Dict[str, object]:
        values = asdict(self)
        return {c: values[c] for c in RESULT_COLUMNS}


# ─── cells ──────────────────────────────────────────────────────────────


def load_manifest(output_dir: Path) -> Dict[str, object]:
    path = Path(output_dir) / config.paths.manifest_name
    if not path.exists():
        return {"game_values": {}}
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        logger.warning(f"Ignoring unreadable manifest {path}: {e}")
        return {"game_values": {}}


def game_value(selector: str, output_dir: Optional[Path] = None) -> float:
    """Game value to UP, cached in the run manifest when `output_dir` is given."""
    if output_dir is None:
        return solve_game_value(build_game(selector))
    manifest = load_manifest(output_dir)
    cached = manifest.setdefault("game_values", {}).get(selector)
    if cached is not None:
        return float(cached)
    value = solve_game_value(build_game(selector))
    manifest["game_values"][selector] = value
    path = Path(output_dir) / config.paths.manifest_name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return value


def _rnr_strategy(tree: GameTree, model: BehavioralStrategy, p: float,
                  iterations: int) -> Tuple[BehavioralStrategy, ResolveDiagnostics]:
    """Whole-game restricted response as a single resolve step, so its solve error enters the bounds."""
    rnr = make_rnr(tree, model, p)
    started = time.perf_counter()
    strategy, result = solve_rnr(rnr, iterations)
    eps = max(result.final_exploitability_estimate, result.regret_bound)
    diagnostics = ResolveDiagnostics("rnr", "whole_game", p)
    diagnostics.records.append(StepRecord(
        step=0, piece=0, level=0, solved_nodes=len(rnr.tree), border_infosets=0, leave_infosets=0,
        eps_r=eps, wall_time_s=time.perf_counter() - started,
    ))
    return strategy, diagnostics


def compute_strategy(
    tree: GameTree,
    algorithm: AlgorithmSpec,
    model: BehavioralStrategy,
    iterations: int,
    vf_tolerance: Optional[float] = None,
) -> Tuple[BehavioralStrategy, Optional[ResolveDiagnostics]]:
    """UP's strategy produced by `algorithm` against `model`, with resolve diagnostics if any."""
    if algorithm.kind == "br":
        strategy, _ = best_response(tree, model, Player.UP)
        return strategy, None
    if algorithm.kind == "lbr":
        return lbr_policy(tree, model), None
    if algorithm.kind == "rnr":
        return _rnr_strategy(tree, model, algorithm.p, iterations)
    partitioning = make_partitioning(tree, algorithm.scheme)
    settings = config.solver if vf_tolerance is None else replace(config.solver, vf_tolerance=vf_tolerance)
    vf = make_value_function(algorithm.vf, tree, settings=settings)
    if algorithm.kind == "cdbr":
        return cdbr(tree, model, partitioning, vf, iterations)
    return cdrnr(tree, model, algorithm.p, partitioning, vf, iterations)


def run_cell(experiment: ExperimentConfig, opponent: str, algorithm_text: str, value: float) -> ResultRow:
    """One (opponent, algorithm) cell; failures become error rows."""
    algorithm = experiment.algorithm(algorithm_text)
    row = ResultRow(experiment.game, opponent, algorithm_text, algorithm.p, algorithm.depth, seed=experiment.seed)
    ctx = get_context_logger(__name__, {"game": experiment.game, "opponent": opponent, "algorithm": algorithm_text})
    started = time.perf_counter()
    try:
        tree = build_game(experiment.game)
        model = make_opponent(tree, opponent)
        strategy, diagnostics = compute_strategy(tree, algorithm, model, experiment.iterations,
                                                 experiment.vf_tolerance)
        row.gain = float(gain(tree, strategy, model, value))
        row.exploitability = float(exploitability(tree, strategy, value))
        p = 1.0 if algorithm.p is None else algorithm.p
        if diagnostics is not None:
            bounds = TheoremBounds.from_diagnostics(diagnostics, p=p)
        else:
            bounds = TheoremBounds(p=p, eps_v=0.0, eps_r=0.0, steps=0)
        row.theorem1_slack = float(theorem1_slack(row.gain + value, bounds, value))
        if algorithm.p is not None:
            row.theorem2_bound = float(theorem2_bound(row.gain, bounds))
        ctx.info(f"Cell done: gain {row.gain:.6f}, exploitability {row.exploitability:.6f}")
    except GameError as e:
        row.error = f"{type(e).__name__}: {e}"
        ctx.error(f"Cell failed: {row.error}")
    except Exception as e:
        row.error = f"{type(e).__name__}: {e}"
        ctx.error(f"Cell crashed: {row.error}", exc_info=True)
    row.wall_time_s = time.perf_counter() - started
    return row


def _cell(args: Tuple[ExperimentConfig, str, str, float]) -> ResultRow:
    return run_cell(*args)


def aggregate_rows(rows: Sequence[ResultRow]) -> List[ResultRow]:
    """Per algorithm: mean gain and exploitability over the successful opponents."""
    out = []
    by_algorithm: Dict[str, List[ResultRow]] = {}
    for row in rows:
        if not row.failed:
            by_algorithm.setdefault(row.algorithm, []).append(row)
    for algorithm, members in sorted(by_algorithm.items()):
        first = members[0]
        out.append(ResultRow(
            first.game, AGGREGATE, algorithm, first.p, first.depth,
            gain=float(np.mean([r.gain for r in members])),
            exploitability=float(np.mean([r.exploitability for r in members])),
            theorem1_slack=float(np.min([r.theorem1_slack for r in members])),
            theorem2_bound=float(np.mean([r.theorem2_bound for r in members])),
            seed=first.seed,
        ))
    return out


def check_rows(rows: Sequence[ResultRow], budget: float) -> List[str]:
    """Rows breaking a bound beyond `budget`, as messages."""
    problems = []
    for row in rows:
        if row.failed or row.opponent == AGGREGATE:
            continue
        kind = row.algorithm.split(":", 1)[0]
        if kind not in GUARANTEED:
            continue
        if row.theorem1_slack < -budget:
            problems.append(f"{row.opponent}/{row.algorithm}: model-gain slack {row.theorem1_slack:.3e}")
        if math.isfinite(row.theorem2_bound) and row.exploitability > row.theorem2_bound + budget:
            problems.append(f"{row.opponent}/{row.algorithm}: exploitability {row.exploitability:.3e} "
                            f"above bound {row.theorem2_bound:.3e}")
    return problems


def run_experiment(experiment: ExperimentConfig) -> pd.DataFrame:
    """
    Run every (opponent, algorithm) cell and write results.csv and timings.csv.

    Rows are sorted by (opponent, algorithm) and followed by the aggregate
    rows, so identical configurations give identical result files.
    """
    experiment.validate()
    output_dir = experiment.output_dir
    output_dir.mkdir(parents=True, exist_ok=True)
    value = game_value(experiment.game, output_dir)
    tasks = [(experiment, o, a, value) for o in experiment.opponents for a in experiment.algorithms]
    logger.info(f"Running {len(tasks)} cells on {experiment.game} with {experiment.workers} workers")
    if experiment.workers > 1:
        with ProcessPoolExecutor(max_workers=experiment.workers) as pool:
            rows = list(pool.map(_cell, tasks))
    else:
        rows = [_cell(task) for task in tasks]
    rows.sort(key=lambda r: (r.opponent, r.algorithm))
    rows.extend(aggregate_rows(rows))

    frame = pd.DataFrame([r.record() for r in rows], columns=RESULT_COLUMNS)
    frame.to_csv(output_dir / "results.csv", index=False)
    timings = pd.DataFrame([[r.game, r.opponent, r.algorithm, r.wall_time_s] for r in rows
                            if r.opponent != AGGREGATE], columns=TIMING_COLUMNS)
    timings.to_csv(output_dir / "timings.csv", index=False)
    for problem in check_rows(rows, experiment.error_budget):
        logger.error(f"Bound violated: {problem}")
    failures = sum(r.failed for r in rows)
    if failures:
        logger.warning(f"{failures} cells failed; see the error column")
    logger.info(f"Wrote {len(frame)} rows to {output_dir / 'results.csv'}")
    return frame
