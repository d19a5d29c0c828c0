"""
unit tests for the experiment harness.
"""

import json
import math
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from src.cfr import ConfigurationError
from src.config import config
from src.game import ParameterError, Player
from src.harness import (
    AGGREGATE,
    RESULT_COLUMNS,
    TIMING_COLUMNS,
    ExperimentConfig,
    ResultRow,
    aggregate_rows,
    check_rows,
    expand_algorithms,
    game_value,
    gen_opponent_random,
    load_manifest,
    make_opponent,
    parse_algorithm,
    run_cell,
    run_experiment,
)

KUHN_VALUE = -1 / 18


def seed_manifest(output_dir, values):
    output_dir.mkdir(parents=True, exist_ok=True)
    (output_dir / "manifest.json").write_text(json.dumps({"game_values": values}))


class TestAlgorithmSpecs:
    """test cases for algorithm id parsing."""

    @pytest.mark.parametrize("spec, kind, p, scheme", [
        ("br", "br", None, None),
        ("lbr", "lbr", None, None),
        ("cdbr", "cdbr", 1.0, "by_own_actions:2"),
        ("cdbr:3", "cdbr", 1.0, "by_own_actions:3"),
        ("cdbr:by_round", "cdbr", 1.0, "by_round"),
        ("cdrnr:0.25", "cdrnr", 0.25, "by_own_actions:2"),
        ("cdrnr:0.25:by_round", "cdrnr", 0.25, "by_round"),
        ("cdrnr:0.75:1", "cdrnr", 0.75, "by_own_actions:1"),
        ("rnr:0.1", "rnr", 0.1, None),
    ])
    def test_parse(self, spec, kind, p, scheme):
        algorithm = parse_algorithm(spec)
        assert (algorithm.text, algorithm.kind, algorithm.p, algorithm.scheme) == (spec, kind, p, scheme)

    def test_depth(self):
        assert parse_algorithm("cdbr:3").depth == 3
        assert parse_algorithm("cdbr:by_round").depth is None
        assert parse_algorithm("br").depth is None

    def test_value_function_variant(self):
        algorithm = parse_algorithm("cdrnr_vf:limited:10", p_default=0.3)
        assert (algorithm.kind, algorithm.vf, algorithm.p) == ("cdrnr_vf", "limited:10", 0.3)

    @pytest.mark.parametrize("spec", ["br:1", "cdrnr", "cdrnr:x", "rnr:", "cdrnr_vf", "dqn"])
    def test_malformed(self, spec):
        with pytest.raises(ConfigurationError):
            parse_algorithm(spec)

    def test_p_out_of_range(self):
        with pytest.raises(ParameterError):
            parse_algorithm("cdrnr:1.5")

    def test_expand_grid(self):
        expanded = expand_algorithms(["cdrnr:*:2", "rnr:*", "br"], (0.1, 0.5))
        assert expanded == ["cdrnr:0.1:2", "cdrnr:0.5:2", "rnr:0.1", "rnr:0.5", "br"]


class TestOpponents:
    """test cases for opponent generation."""

    def test_cfr_opponent(self, kuhn):
        model = make_opponent(kuhn, "cfr:5")
        assert model.owner is Player.DOWN
        model.require_complete(kuhn)

    def test_random_opponent_is_seeded(self, kuhn):
        first = make_opponent(kuhn, "random:3")
        again = make_opponent(kuhn, "random:3")
        other = make_opponent(kuhn, "random:4")
        assert all(np.array_equal(first[k], again[k]) for k in first.keys())
        assert any(not np.allclose(first[k], other[k]) for k in first.keys())

    def test_random_opponent_is_a_strategy(self, leduc):
        model = gen_opponent_random(leduc, seed=0)
        model.require_complete(leduc)
        assert all(v.sum() == pytest.approx(1.0) for _, v in model.items())

    def test_random_up_strategy(self, kuhn):
        assert gen_opponent_random(kuhn, seed=1, player=Player.UP).owner is Player.UP

    @pytest.mark.parametrize("spec", ["random:x", "mixed:1", "cfr"])
    def test_malformed(self, kuhn, spec):
        with pytest.raises(ConfigurationError):
            make_opponent(kuhn, spec)

    def test_zero_iterations(self, kuhn):
        with pytest.raises(ParameterError):
            make_opponent(kuhn, "cfr:0")


class TestExperimentConfig:
    """test cases for experiment configuration."""

    def test_splits_strings(self, temp_dir):
        experiment = ExperimentConfig(game="kuhn", opponents="cfr:5, random:0", algorithms="br,rnr:*",
                                      p_grid="0.1,0.5", output_dir=str(temp_dir))
        assert experiment.opponents == ("cfr:5", "random:0")
        assert experiment.p_grid == (0.1, 0.5)
        assert experiment.algorithms == ("br", "rnr:0.1", "rnr:0.5")
        assert experiment.output_dir == temp_dir

    def test_factory_defaults_validate(self, experiment_factory):
        experiment_factory().validate()

    @pytest.mark.parametrize("overrides, error", [
        ({"game": "chess"}, ParameterError),
        ({"opponents": ()}, ConfigurationError),
        ({"opponents": ("cfr:x",)}, ConfigurationError),
        ({"iterations": 0}, ParameterError),
        ({"p_grid": (0.5, 1.0)}, ParameterError),
        ({"algorithms": ("dqn",)}, ConfigurationError),
    ])
    def test_validate(self, experiment_factory, overrides, error):
        with pytest.raises(error):
            experiment_factory(**overrides).validate()

    def test_from_mapping(self, temp_dir):
        experiment = ExperimentConfig.from_mapping({
            "game": "leduc", "opponents": "cfr:2", "algorithms": "cdbr,cdrnr:0.5",
            "depth": "3", "vf.kind": "limited:20", "vf.tolerance": "1e-4",
            "iterations": "300", "output_dir": str(temp_dir),
        })
        assert experiment.scheme == "by_own_actions:3"
        assert experiment.vf_kind == "limited:20"
        assert experiment.vf_tolerance == 1e-4
        assert experiment.iterations == 300
        assert experiment.algorithm("cdrnr:0.5").vf == "limited:20"

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="Unknown experiment keys: colour"):
            ExperimentConfig.from_mapping({"game": "kuhn", "opponents": "cfr:5", "algorithms": "br",
                                           "colour": "red"})

    def test_missing_key(self):
        with pytest.raises(ConfigurationError, match="misses 'algorithms'"):
            ExperimentConfig.from_mapping({"game": "kuhn", "opponents": "cfr:5"})

    def test_malformed_value(self):
        with pytest.raises(ConfigurationError, match="iterations"):
            ExperimentConfig.from_mapping({"game": "kuhn", "opponents": "cfr:5", "algorithms": "br",
                                           "iterations": "many"})

    def test_from_file(self, temp_dir):
        path = temp_dir / "experiment.env"
        path.write_text("# quick Kuhn run\ngame=kuhn\nopponents=cfr:5\nalgorithms=br,cdbr:1\n"
                        f"output_dir={temp_dir / 'run'}\n")
        experiment = ExperimentConfig.from_file(path)
        assert experiment.algorithms == ("br", "cdbr:1")
        assert experiment.output_dir == temp_dir / "run"

    def test_missing_file(self, temp_dir):
        with pytest.raises(FileNotFoundError):
            ExperimentConfig.from_file(temp_dir / "absent.env")


class TestRows:
    """test cases for result rows, aggregates and bound checks."""

    def test_record_columns(self, row_factory):
        row = row_factory()
        assert list(row.record()) == RESULT_COLUMNS
        assert not row.failed
        assert row_factory(error="GameError: boom").failed

    def test_aggregate_skips_failures(self, row_factory):
        rows = [row_factory(gain=0.1, exploitability=0.2), row_factory(gain=0.3, exploitability=0.4),
                row_factory(error="GameError: boom", gain=math.nan)]
        (aggregate,) = aggregate_rows(rows)
        assert aggregate.opponent == AGGREGATE
        assert aggregate.gain == pytest.approx(0.2)
        assert aggregate.exploitability == pytest.approx(0.3)

    def test_aggregate_per_algorithm(self, row_factory):
        rows = [row_factory(algorithm="rnr:0.5"), row_factory(algorithm="br", p=None)]
        assert [r.algorithm for r in aggregate_rows(rows)] == ["br", "rnr:0.5"]

    def test_check_flags_negative_slack(self, row_factory):
        problems = check_rows([row_factory(theorem1_slack=-0.1)], budget=1e-3)
        assert len(problems) == 1
        assert "model-gain slack" in problems[0]

    def test_check_flags_exploitability(self, row_factory):
        problems = check_rows([row_factory(exploitability=0.2, theorem2_bound=0.1)], budget=1e-3)
        assert len(problems) == 1
        assert "above bound" in problems[0]

    def test_check_within_budget(self, row_factory):
        assert check_rows([row_factory(theorem1_slack=-1e-4)], budget=1e-3) == []

    def test_check_ignores_unguaranteed_and_unbounded(self, row_factory):
        rows = [row_factory(algorithm="br", theorem1_slack=-1.0),
                row_factory(algorithm="cdbr:2", p=1.0, theorem2_bound=math.inf, exploitability=5.0)]
        assert check_rows(rows, budget=1e-3) == []


class TestManifest:
    """test cases for the cached game values."""

    def test_cached_value_is_used(self, temp_dir):
        seed_manifest(temp_dir, {"kuhn": 0.25})
        assert game_value("kuhn", temp_dir) == 0.25

    def test_value_is_written(self, temp_dir):
        value = game_value("ce_coin", temp_dir)
        assert value == pytest.approx(0.0, abs=1e-4)
        assert load_manifest(temp_dir)["game_values"]["ce_coin"] == value

    def test_unreadable_manifest(self, temp_dir):
        (temp_dir / "manifest.json").write_text("{not json")
        assert load_manifest(temp_dir) == {"game_values": {}}


class TestRuns:
    """test cases for single cells and whole experiments."""

    def test_best_response_cell(self, experiment_factory, temp_dir):
        experiment = experiment_factory(output_dir=temp_dir)
        row = run_cell(experiment, "cfr:5", "br", KUHN_VALUE)
        assert not row.failed
        assert row.gain >= 0
        assert row.theorem1_slack == pytest.approx(row.gain)
        assert math.isnan(row.theorem2_bound)

    def test_unsupported_cell_becomes_error_row(self, experiment_factory, temp_dir):
        experiment = experiment_factory(output_dir=temp_dir, algorithms=("lbr",))
        row = run_cell(experiment, "random:0", "lbr", KUHN_VALUE)
        assert row.error.startswith("UnsupportedDomainError")
        assert math.isnan(row.gain)

    def test_unexpected_failure_becomes_error_row(self, experiment_factory, temp_dir):
        experiment = experiment_factory(output_dir=temp_dir)
        with patch("src.harness.compute_strategy", side_effect=ValueError("singular matrix")):
            row = run_cell(experiment, "random:0", "cdbr:2", KUHN_VALUE)
        assert row.error == "ValueError: singular matrix"
        assert row.failed
        assert math.isnan(row.gain)

    def test_run_writes_tables(self, experiment_factory, temp_dir):
        seed_manifest(temp_dir, {"kuhn": KUHN_VALUE})
        experiment = experiment_factory(output_dir=temp_dir, opponents=("cfr:5", "random:0"),
                                        algorithms=("br", "cdbr:1", "rnr:0.5", "lbr"), iterations=50)
        frame = run_experiment(experiment)

        assert list(frame.columns) == RESULT_COLUMNS
        cells = frame[frame["opponent"] != AGGREGATE]
        assert len(cells) == 8
        assert cells[["opponent", "algorithm"]].values.tolist() == sorted(cells[["opponent", "algorithm"]]
                                                                          .values.tolist())
        assert frame[frame["opponent"] == AGGREGATE]["algorithm"].tolist() == ["br", "cdbr:1", "rnr:0.5"]
        assert (cells[cells["algorithm"] == "lbr"]["error"] != "").all()

        timings = pd.read_csv(temp_dir / "timings.csv")
        assert list(timings.columns) == TIMING_COLUMNS
        assert len(timings) == 8
        assert len(pd.read_csv(temp_dir / "results.csv")) == len(frame)

    @pytest.mark.slow
    def test_identical_runs_give_identical_results(self, experiment_factory, temp_dir):
        frames = []
        for name in ("first", "second"):
            seed_manifest(temp_dir / name, {"kuhn": KUHN_VALUE})
            experiment = experiment_factory(output_dir=temp_dir / name, opponents=("random:1",),
                                            algorithms=("cdrnr:0.5:1", "br"), iterations=100)
            run_experiment(experiment)
            frames.append((temp_dir / name / "results.csv").read_text())
        assert frames[0] == frames[1]


@pytest.mark.slow
class TestBoundSweep:
    """cdrnr over the p grid on Leduc, Goofspiel5 and Liar's Dice against a mixed opponent pool."""

    GAMES = ("leduc", "goofspiel5", "liars_dice")
    OPPONENTS = ("cfr:2", "cfr:5", "cfr:10", "cfr:34", "random:0", "random:1", "random:2")

    @pytest.fixture(scope="class")
    def sweep(self, tmp_path_factory):
        frames = []
        for game in self.GAMES:
            experiment = ExperimentConfig(game=game, opponents=self.OPPONENTS, algorithms=("cdrnr:*",),
                                          iterations=300, output_dir=tmp_path_factory.mktemp(game))
            frames.append(run_experiment(experiment))
        frame = pd.concat(frames, ignore_index=True)
        return frame[frame["opponent"] != AGGREGATE]

    def test_enough_runs_without_failures(self, sweep):
        assert len(sweep) >= 100
        assert (sweep["error"] == "").all()

    def test_no_bound_violations(self, sweep):
        rows = [ResultRow(**record) for record in sweep.to_dict("records")]
        assert check_rows(rows, config.harness.error_budget) == []

    def test_converged_runs_never_lose(self, sweep):
        # theorem1_slack - gain is the declared error; small errors leave no room below the game value
        converged = sweep[sweep["theorem1_slack"] - sweep["gain"] <= 1e-3]
        assert (converged["gain"] >= -1e-3).all()

    def test_even_weight_exploitability_stays_below_half_the_gain(self, sweep):
        even = sweep[(sweep["game"] == "leduc") & (sweep["p"] == 0.5)]
        assert (even["exploitability"] <= even["gain"] + config.harness.error_budget).all()
        assert np.median(even["exploitability"]) < np.median(even["gain"]) / 2
