"""
Results module for experiment tables.

Loads results.csv files written by the harness, validates them,
aggregates per algorithm, checks bounds and exports gnuplot .dat files.
"""

import math
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd

from .config import config
from .harness import AGGREGATE, GUARANTEED, RESULT_COLUMNS
from .logger import get_logger

logger = get_logger(__name__)


class ResultsTable:
    """
    Experiment results for one or more runs.

    Wraps the results.csv rows; aggregate rows (opponent `a`) are kept
    apart from the per-opponent rows.
    """

    def __init__(self, frame: Optional[pd.DataFrame] = None):
        self.frame: Optional[pd.DataFrame] = None
        if frame is not None:
            self.frame = self._validate(frame.copy())
        logger.debug("Results table initialized")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ResultsTable":
        """
        Load a results.csv file (or the one inside a run directory).
        """
        path = Path(path)
        if path.is_dir():
            path = path / "results.csv"
        logger.info(f"Loading results from {path}")
        try:
            frame = pd.read_csv(path, keep_default_na=True)
        except FileNotFoundError as e:
            logger.error(f"Results file not found: {e}")
            raise
        except pd.errors.EmptyDataError as e:
            logger.error(f"Empty results file: {e}")
            raise ValueError(f"Empty results file: {e}")
        return cls(frame)

    @staticmethod
    def _validate(frame: pd.DataFrame) -> pd.DataFrame:
        missing = [c for c in RESULT_COLUMNS if c not in frame.columns]
        if missing:
            raise ValueError(f"Results are missing columns: {', '.join(missing)}")
        frame["error"] = frame["error"].fillna("").astype(str)
        for column in ("gain", "exploitability", "theorem1_slack", "theorem2_bound"):
            frame[column] = pd.to_numeric(frame[column], errors="coerce")
        logger.info(f"Validated {len(frame)} result rows")
        return frame

    def _require(self) -> pd.DataFrame:
        if self.frame is None:
            raise ValueError("No results loaded. Call load() first.")
        return self.frame

    @property
    def cells(self) -> pd.DataFrame:
        """Successful per-opponent rows."""
        frame = self._require()
        return frame[(frame["opponent"] != AGGREGATE) & (frame["error"] == "")]

    @property
    def failures(self) -> pd.DataFrame:
        frame = self._require()
        return frame[frame["error"] != ""]

    def aggregate(self) -> pd.DataFrame:
        """
        Mean gain and exploitability per algorithm over the successful cells.

        Returns:
            DataFrame indexed by algorithm, ordered by mean gain
        """
        cells = self.cells
        if cells.empty:
            logger.warning("No successful cells to aggregate")
            return pd.DataFrame()
        stats = cells.groupby("algorithm").agg(
            gain=("gain", "mean"),
            gain_std=("gain", "std"),
            exploitability=("exploitability", "mean"),
            exploitability_max=("exploitability", "max"),
            opponents=("opponent", "nunique"),
        )
        return stats.sort_values("gain", ascending=False)

    def check_bounds(self, budget: Optional[float] = None) -> List[str]:
        """
        Rows whose model gain or exploitability break their guarantee.

        Args:
            budget: slack allowed for numerical error (defaults to the harness error budget)

        Returns:
            one message per violation; empty when every bound holds
        """
        budget = config.harness.error_budget if budget is None else budget
        violations = []
        for row in self.cells.itertuples(index=False):
            if row.algorithm.split(":", 1)[0] not in GUARANTEED:
                continue
            if row.theorem1_slack < -budget:
                violations.append(f"{row.opponent} {row.algorithm}: model-gain slack {row.theorem1_slack:.3e}")
            if math.isfinite(row.theorem2_bound) and row.exploitability > row.theorem2_bound + budget:
                violations.append(f"{row.opponent} {row.algorithm}: exploitability {row.exploitability:.3e} "
                                  f"exceeds bound {row.theorem2_bound:.3e}")
        if violations:
            logger.warning(f"{len(violations)} bound violations")
        else:
            logger.info("All bounds hold")
        return violations

    def write_dat(self, output_dir: Union[str, Path]) -> List[Path]:
        """
        One gnuplot-friendly whitespace table per algorithm (opponent, gain, exploitability).
        """
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for algorithm, group in self.cells.groupby("algorithm", sort=True):
            path = output_dir / f"{algorithm.replace(':', '_')}.dat"
            lines = ["# opponent gain exploitability"]
            lines += [f"{o} {g:.9g} {e:.9g}" for o, g, e in
                      zip(group["opponent"], group["gain"], group["exploitability"])]
            path.write_text("\n".join(lines) + "\n")
            paths.append(path)
        logger.info(f"Wrote {len(paths)} .dat files to {output_dir}")
        return paths

    def get_summary(self) -> Dict:
        frame = self._require()
        cells = self.cells
        return {
            "games": sorted(frame["game"].unique().tolist()),
            "total_rows": len(frame),
            "cells": len(cells),
            "failures": len(self.failures),
            "algorithms": sorted(cells["algorithm"].unique().tolist()),
            "opponents": sorted(cells["opponent"].unique().tolist()),
            "best_gain": float(cells["gain"].max()) if not cells.empty else math.nan,
        }
