"""
Visualization module for resolving experiments.

Creates charts from results tables and gadget sweeps: gain and
exploitability per algorithm, the p trade-off curve of restricted
responses, and resolved-action probabilities over p.
"""

from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

from .config import config  # noqa: E402
from .logger import get_logger  # noqa: E402

logger = get_logger(__name__)

plt.style.use('seaborn-v0_8')
sns.set_palette("husl")


class Visualizer:
    """
    Creates visualizations for experiment results.

    Every create_* method saves one PNG and returns its path, or an empty
    string when there is nothing to draw.
    """

    def __init__(self, output_dir: Optional[Union[str, Path]] = None):
        self.figure_size = config.figure_size
        self.dpi = config.dpi
        self.output_dir = Path(output_dir) if output_dir is not None else config.paths.output_dir
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"Visualizer initialized - Output dir: {self.output_dir}")

    def _save(self, fig, save_path: Optional[Union[str, Path]], default_name: str) -> str:
        fig.tight_layout()
        path = Path(save_path) if save_path is not None else self.output_dir / default_name
        fig.savefig(path, dpi=self.dpi, bbox_inches='tight')
        plt.close(fig)
        return str(path)

    def create_gain_exploitability_chart(self, aggregate: pd.DataFrame,
                                         save_path: Optional[str] = None) -> str:
        """
        Grouped bars of mean gain and mean exploitability per algorithm.

        Args:
            aggregate: ResultsTable.aggregate() output (indexed by algorithm)
            save_path: Optional custom save path

        Returns:
            Path to saved visualization file
        """
        if aggregate.empty:
            logger.warning("No aggregate results provided for visualization")
            return ""

        logger.info("Creating gain/exploitability chart")
        fig, ax = plt.subplots(figsize=self.figure_size)
        x = np.arange(len(aggregate))
        width = 0.4
        ax.bar(x - width / 2, aggregate["gain"], width, label="gain",
               yerr=aggregate["gain_std"].fillna(0) if "gain_std" in aggregate else None)
        ax.bar(x + width / 2, aggregate["exploitability"], width, label="exploitability")
        ax.axhline(0, color="black", linewidth=0.8)
        ax.set_xticks(x)
        ax.set_xticklabels(aggregate.index, rotation=45, ha='right')
        ax.set_ylabel("Utility")
        ax.set_title("Mean gain against the models and exploitability")
        ax.legend()

        path = self._save(fig, save_path, "gain_exploitability.png")
        logger.info(f"Gain/exploitability chart saved to: {path}")
        return path

    def create_tradeoff_chart(self, cells: pd.DataFrame, save_path: Optional[str] = None) -> str:
        """
        Mean gain against mean exploitability for every algorithm with a p,
        one line per algorithm family, annotated with p.
        """
        with_p = cells.dropna(subset=["p"])
        if with_p.empty:
            logger.warning("No results with p for the trade-off chart")
            return ""

        logger.info("Creating trade-off chart")
        family = with_p["algorithm"].str.split(":").str[0]
        means = (with_p.assign(family=family)
                 .groupby(["family", "p"])[["gain", "exploitability"]].mean()
                 .reset_index())
        fig, ax = plt.subplots(figsize=self.figure_size)
        for name, group in means.groupby("family"):
            group = group.sort_values("p")
            ax.plot(group["exploitability"], group["gain"], marker="o", label=name)
            for _, row in group.iterrows():
                ax.annotate(f"p={row['p']:g}", (row["exploitability"], row["gain"]),
                            xytext=(5, 5), textcoords='offset points', fontsize=8)
        ax.set_xlabel("Exploitability")
        ax.set_ylabel("Gain")
        ax.set_title("Gain / exploitability trade-off")
        ax.legend()

        path = self._save(fig, save_path, "tradeoff.png")
        logger.info(f"Trade-off chart saved to: {path}")
        return path

    def create_sweep_chart(self, sweeps: pd.DataFrame, save_path: Optional[str] = None) -> str:
        """
        Resolved-action probabilities over p, one panel per gadget kind.

        Args:
            sweeps: concatenated gadget sweeps with a `kind` column
        """
        if sweeps.empty:
            logger.warning("No sweep data provided for visualization")
            return ""

        logger.info("Creating gadget sweep chart")
        kinds = list(dict.fromkeys(sweeps["kind"]))
        fig, axes = plt.subplots(1, len(kinds), figsize=(6 * len(kinds), 5), squeeze=False, sharey=True)
        actions = [c for c in sweeps.columns if c.startswith("action_")]
        for ax, kind in zip(axes[0], kinds):
            frame = sweeps[sweeps["kind"] == kind].sort_values("p")
            for column in actions:
                ax.plot(frame["p"], frame[column], marker=".", label=column.split("_", 1)[1])
            ax.set_title(kind)
            ax.set_xlabel("p")
            ax.set_ylim(-0.05, 1.05)
        axes[0][0].set_ylabel("Probability")
        axes[0][-1].legend(title="action")

        path = self._save(fig, save_path, "gadget_sweep.png")
        logger.info(f"Sweep chart saved to: {path}")
        return path
