"""Markdown tables and the JSON run document."""

from __future__ import annotations

import json
from datetime import datetime, timezone
from typing import Mapping, Sequence

from . import __version__
from .decomposition import GAP_FIELDS, GapDecomposition, TrialAggregate

GAP_HEADER = ("Performance Gap", "Hardness Gap", "Difference Gap")


def pct(x: float) -> str:
    s = f"{100.0 * x:.1f}"
    return "0.0" if s == "-0.0" else s


def pct_pm(agg: TrialAggregate) -> str:
    if agg.degenerate:
        return pct(agg.mean)
    return f"{pct(agg.mean)} ± {pct(agg.std)}"


def gap_table(rows: Sequence[tuple[str, Mapping[str, TrialAggregate]]], first_col: str = "Model/Run") -> str:
    """One line per (label, aggregates) in the fixed gap column order."""
    out = [
        "| " + " | ".join((first_col,) + GAP_HEADER) + " |",
        "|" + "---|" * (1 + len(GAP_HEADER)),
    ]
    for label, agg in rows:
        out.append("| " + " | ".join([label] + [pct_pm(agg[f]) for f in GAP_FIELDS]) + " |")
    return "\n".join(out) + "\n"


def decomposition_row(d: GapDecomposition) -> dict:
    return {k: float(v) for k, v in d.to_dict().items()}


def run_document(command: str, config: Mapping, master_seed: int | None, results: Mapping, stamp: bool = False) -> dict:
    return {
        "command": command,
        "config": dict(config),
        "master_seed": master_seed,
        "tool_version": __version__,
        # wall clock only on request so reruns stay byte-identical
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds") if stamp else None,
        "results": dict(results),
    }


def dumps(doc: Mapping) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
