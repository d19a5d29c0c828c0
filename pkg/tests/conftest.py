"""
pytest test suite
"""

import shutil
import tempfile
from fractions import Fraction
from pathlib import Path
from unittest.mock import Mock, patch

import factory
import pytest

from src.game import Player, StrategyProfile, TreeBuilder, uniform_strategy
from src.games import build_game, ce_coin_model, ce_gadget_model, ce_mp_model
from src.harness import ExperimentConfig, ResultRow
from src.visualizer import Visualizer


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long solver runs (Leduc sweeps, 10^4-iteration trunks)")


@pytest.fixture
def temp_dir():
    """create a temporary directory for test files."""
    temp_path = Path(tempfile.mkdtemp())
    yield temp_path
    shutil.rmtree(temp_path)


# ─── games ──────────────────────────────────────────────────────────────


@pytest.fixture(scope="session")
def kuhn():
    return build_game("kuhn")


@pytest.fixture(scope="session")
def leduc():
    return build_game("leduc")


@pytest.fixture(scope="session")
def goofspiel():
    return build_game("goofspiel5")


@pytest.fixture(scope="session")
def liars_dice():
    return build_game("liars_dice")


@pytest.fixture(scope="session")
def ce_coin():
    return build_game("ce_coin")


@pytest.fixture(scope="session")
def ce_gadget():
    return build_game("ce_gadget")


@pytest.fixture(scope="session")
def ce_mp():
    return build_game("ce_mp")


@pytest.fixture(scope="session")
def ce_rounds():
    return build_game("ce_rounds:3")


@pytest.fixture
def coin_model():
    return ce_coin_model()


@pytest.fixture
def gadget_model():
    return ce_gadget_model()


@pytest.fixture
def mp_model():
    return ce_mp_model()


@pytest.fixture
def kuhn_uniform(kuhn):
    return StrategyProfile(uniform_strategy(kuhn, Player.UP), uniform_strategy(kuhn, Player.DOWN))


@pytest.fixture
def matching_pennies():
    """UP picks heads or tails, DOWN guesses blind; UP wins 1 on a mismatch."""
    b = TreeBuilder("pennies")
    root = b.add(-1, None, Player.UP, actions=("h", "t"))
    for coin in ("h", "t"):
        down = b.add(root, coin, Player.DOWN, actions=("h", "t"), observations=(coin, "?"))
        for guess in ("h", "t"):
            b.add(down, guess, Player.TERMINAL, utility=Fraction(int(coin != guess)),
                  observations=(f"{coin}{guess}", f"?{guess}"))
    return b.build()


# ─── factories ──────────────────────────────────────────────────────────


class ExperimentConfigFactory(factory.Factory):
    class Meta:
        model = ExperimentConfig

    game = "kuhn"
    opponents = ("cfr:5", "random:0")
    algorithms = ("br", "cdbr:2", "cdrnr:0.5")
    iterations = 200
    output_dir = factory.LazyFunction(lambda: Path(tempfile.mkdtemp()))
    p_grid = (0.1, 0.5, 0.9)
    vf_kind = "optimal"
    workers = 1
    seed = 0


class ResultRowFactory(factory.Factory):
    class Meta:
        model = ResultRow

    game = "kuhn"
    opponent = factory.Sequence(lambda n: f"cfr:{n + 1}")
    algorithm = "cdrnr:0.5"
    p = 0.5
    depth = 2
    gain = 0.05
    exploitability = 0.01
    theorem1_slack = 0.05
    theorem2_bound = 0.05
    error = ""
    seed = 0


@pytest.fixture
def experiment_factory():
    return ExperimentConfigFactory


@pytest.fixture
def row_factory():
    return ResultRowFactory


@pytest.fixture
def sample_visualizer(temp_dir):
    """create a visualizer with temporary output directory."""
    return Visualizer(temp_dir)


@pytest.fixture
def mock_matplotlib():
    """mock matplotlib to prevent actual plot generation during tests."""
    with patch('matplotlib.pyplot.close') as mock_close, \
         patch('matplotlib.pyplot.subplots') as mock_subplots:
        mock_fig = Mock()
        mock_ax = Mock()
        mock_subplots.return_value = (mock_fig, mock_ax)

        yield {
            'close': mock_close,
            'subplots': mock_subplots,
            'fig': mock_fig,
            'ax': mock_ax
        }
