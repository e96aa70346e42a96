"""Tool for running benchmark cells and writing their statistics."""

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from rich.table import Table

from ..config import NODE_PARALLEL_MODES, SERIAL_MODES, RunConfig
from ..core.controller import RunStats, Solution, run

logger = logging.getLogger(__name__)

# Column order of the CSV output
CSV_COLUMNS = (
    "mode",
    "p_steps",
    "p_nodes",
    "outer_iters",
    "linear_solves_total",
    "gmres_iters_total",
    "messages",
    "converged",
)
FORMATS = ("csv", "json")


@dataclass
class ExperimentRecord:
    """One benchmark cell: its configuration and its statistics."""
    config: RunConfig
    stats: RunStats
    solution: Optional[Solution] = field(default=None, repr=False, compare=False)

    @property
    def converged(self) -> bool:
        return self.stats.converged

    def row(self) -> Dict[str, Any]:
        summary = self.stats.summary()
        return {column: summary[column] for column in CSV_COLUMNS}

    def detail(self) -> Dict[str, Any]:
        """Per-step and per-iteration statistics with the config echo."""
        stats = self.stats
        return {
            **self.row(),
            "config": self.config.to_dict(),
            "messages_by_kind": stats.messages,
            "node_gmres": list(stats.node_gmres),
            "group_gmres": list(stats.group_gmres),
            "blocks": [
                {
                    "block": block.block,
                    "iterations": block.iterations,
                    "converged": block.converged,
                    "residual_history": [float(r) for r in block.residual_history],
                    "messages": dict(block.messages),
                }
                for block in stats.blocks
            ],
            "steps": [
                {
                    "step": step.step,
                    "block": step.block,
                    "iterations": step.iterations,
                    "residual": float(step.residual),
                    "converged": step.converged,
                    "messages_sent": step.messages_sent,
                    "messages_received": step.messages_received,
                    "fine": vars(step.fine).copy(),
                    "coarse": vars(step.coarse).copy(),
                }
                for step in stats.steps
            ],
        }


def divisors(n: int) -> List[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def admissible_layouts(config: RunConfig, fixed_block: bool = False) -> List[Tuple[int, int]]:
    """All ``(p_steps, p_nodes)`` cells of a grid sweep for ``config.mode``.

    Args:
        config: Base configuration.
        fixed_block: Keep ``config.block_size`` and spread it over the
            step-workers, instead of one block per ``p_steps`` steps.
    """
    if config.mode in SERIAL_MODES:
        return [(1, 1)]
    steps = divisors(config.block_size if fixed_block else config.total_steps)
    nodes = divisors(config.num_nodes) if config.mode in NODE_PARALLEL_MODES else [1]
    return [(p_steps, p_nodes) for p_steps in steps for p_nodes in nodes]


class ExperimentTool:
    """Runs benchmark cells and formats their statistics."""

    def __init__(self, keep_solutions: bool = False):
        """Initialize the experiment tool.

        Args:
            keep_solutions: Keep the node values of every cell in its record.
        """
        self.keep_solutions = keep_solutions

    def run_cell(self, config: RunConfig) -> ExperimentRecord:
        """Run one configuration.

        Raises:
            ExperimentError: Wrapping any failure, with the config echo.
        """
        logger.info(
            "Running %s on %s with p_steps=%d, p_nodes=%d",
            config.mode, config.problem, config.p_steps, config.p_nodes
        )
        try:
            solution, stats = run(config)
        except Exception as error:
            raise ExperimentError(
                f"Run failed: {error}", config=config.to_dict()
            ) from error
        return ExperimentRecord(config, stats, solution if self.keep_solutions else None)

    def run_experiment(
        self,
        config: RunConfig,
        modes: Optional[Sequence[str]] = None,
        sweep: bool = False,
        fixed_block: bool = False
    ) -> List[ExperimentRecord]:
        """Run one record per (mode, p_steps, p_nodes) cell.

        Args:
            config: Base configuration.
            modes: Modes to run, ``config.mode`` by default.
            sweep: Run every admissible layout instead of the configured one.
            fixed_block: See ``admissible_layouts``.

        Returns:
            Records in mode order, then by ``p_steps`` and ``p_nodes``.
        """
        records = []
        for mode in modes or [config.mode]:
            base = self._for_mode(config, mode)
            if sweep:
                layouts = admissible_layouts(base, fixed_block)
            else:
                layouts = [(base.p_steps, base.p_nodes)]
            for p_steps, p_nodes in layouts:
                changes = {"p_steps": p_steps, "p_nodes": p_nodes}
                if fixed_block:
                    changes["block_size"] = base.block_size
                records.append(self.run_cell(base.replace(**changes)))
        return records

    @staticmethod
    def _for_mode(config: RunConfig, mode: str) -> RunConfig:
        if mode == config.mode:
            return config
        if mode in SERIAL_MODES:
            return config.replace(mode=mode, p_steps=1, p_nodes=1, block_size=1)
        p_nodes = config.p_nodes if mode in NODE_PARALLEL_MODES else 1
        return config.replace(mode=mode, p_nodes=p_nodes, block_size=config.block_size)

    def format_stats(self, records: Sequence[ExperimentRecord], fmt: str = "csv") -> str:
        """CSV rows or a JSON document of ``records``, byte-stable across reruns.

        Raises:
            ValueError: If ``fmt`` is unknown.
        """
        if fmt == "csv":
            buffer = io.StringIO()
            writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for record in records:
                writer.writerow(record.row())
            return buffer.getvalue()
        if fmt == "json":
            document = {"columns": list(CSV_COLUMNS), "records": [r.detail() for r in records]}
            return json.dumps(document, indent=2, sort_keys=True) + "\n"
        raise ValueError(f"Unknown stats format '{fmt}', expected one of {FORMATS}")

    def emit_stats(
        self,
        records: Sequence[ExperimentRecord],
        path: Union[str, Path],
        fmt: Optional[str] = None
    ) -> Path:
        """Write ``records`` to ``path``; the format defaults to the file suffix."""
        path = Path(path)
        fmt = fmt or path.suffix.lstrip(".").lower()
        path.write_text(self.format_stats(records, fmt))
        logger.info("Wrote %d records to %s", len(records), path)
        return path

    def heatmap(
        self,
        records: Sequence[ExperimentRecord],
        mode: str,
        value: str = "linear_solves_total"
    ) -> Tuple[List[int], List[int], np.ndarray]:
        """Pivot of ``value`` over ``p_steps`` (rows) and ``p_nodes`` (columns).

        Missing cells are NaN.
        """
        rows = [r.row() for r in records if r.stats.mode == mode]
        steps = sorted({row["p_steps"] for row in rows})
        nodes = sorted({row["p_nodes"] for row in rows})
        table = np.full((len(steps), len(nodes)), np.nan)
        for row in rows:
            table[steps.index(row["p_steps"]), nodes.index(row["p_nodes"])] = row[value]
        return steps, nodes, table

    def summary_table(self, records: Sequence[ExperimentRecord]) -> Table:
        """Console table with one line per record."""
        table = Table(title="pfasst-er results")
        for column in CSV_COLUMNS:
            table.add_column(column, justify="left" if column == "mode" else "right")
        for record in records:
            row = record.row()
            row["converged"] = "yes" if row["converged"] else "[red]no[/red]"
            table.add_row(*(str(row[column]) for column in CSV_COLUMNS))
        return table


class ExperimentError(RuntimeError):
    """Exception raised when a benchmark cell fails.

    Attributes:
        config: The configuration of the failed cell.
    """

    def __init__(self, message: str, config: Optional[Dict[str, Any]] = None):
        super().__init__(f"{message} (config: {config})" if config else message)
        self.config = config
