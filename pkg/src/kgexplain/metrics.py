"""Evaluation protocol: Hits@k, MRR, mean rank difference, and reports.

Hits@k follows the inclusive convention (rank <= k) and is reported both
as a count and as a percentage. The mean rank difference (after minus
before) is checked against its algebraic twin, the difference of mean
ranks, on every call. Equal-rank cohorts restrict a table to rows sharing
one starting rank so reciprocal-rank differences become comparable.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, KgExplainError
from .explainers import ExplanationRun
from .kg import KnowledgeGraph, Triple
from .pareto import non_dominated

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
DEFAULT_HITS_KS = (1, 2, 10)

PER_TRIPLE_CSV_COLUMNS = (
    "subject",
    "relation",
    "object",
    "rank_before",
    "rank_after",
    "reciprocal_before",
    "reciprocal_after",
    "changed",
)


class RankRow(NamedTuple):
    triple: Triple
    rank_before: int
    rank_after: int


@dataclass(frozen=True)
class RankTable:
    """Before/after ranks for an evaluation set, optionally cohort-tagged."""

    rows: tuple[RankRow, ...]
    cohort: str | None = None

    def __post_init__(self) -> None:
        seen = set()
        for row in self.rows:
            if row.rank_before < 1 or row.rank_after < 1:
                raise DomainError(f"ranks must be >= 1, got {row}")
            if row.triple in seen:
                raise DomainError(f"duplicate triple in rank table: {row.triple}")
            seen.add(row.triple)

    def __len__(self) -> int:
        return len(self.rows)

    def ranks(self, which: str) -> np.ndarray:
        if which == "before":
            return np.asarray([r.rank_before for r in self.rows], dtype=np.float64)
        if which == "after":
            return np.asarray([r.rank_after for r in self.rows], dtype=np.float64)
        raise DomainError(f"which must be 'before' or 'after', got {which!r}")


def hits_at_k(table: RankTable, k: int, which: str = "after", fraction: bool = False):
    """Rows whose selected rank is at most k, as a count or a fraction."""
    if k < 1:
        raise DomainError("k must be >= 1")
    if not table.rows:
        raise DomainError("hits@k is undefined on an empty table")
    count = int((table.ranks(which) <= k).sum())
    return count / len(table) if fraction else count


def mrr(table: RankTable, which: str = "after") -> float:
    """Mean reciprocal rank over the table."""
    if not table.rows:
        raise DomainError("MRR is undefined on an empty table")
    return float((1.0 / table.ranks(which)).mean())


def m_delta_r(table: RankTable) -> float:
    """Mean of per-row rank differences (after minus before).

    Verified on every call against the difference of mean ranks; the two
    must agree to 1e-12.
    """
    if not table.rows:
        raise DomainError("mean rank difference is undefined on an empty table")
    before = table.ranks("before")
    after = table.ranks("after")
    mean_of_diffs = float((after - before).mean())
    diff_of_means = float(after.mean() - before.mean())
    if abs(mean_of_diffs - diff_of_means) > 1e-12:
        raise KgExplainError(
            "mean-of-differences and difference-of-means disagree beyond 1e-12"
        )
    return mean_of_diffs


def cohort_filter(table: RankTable, rank_value: int) -> RankTable:
    """Rows whose starting rank equals the given value, tagged as a cohort."""
    rows = tuple(r for r in table.rows if r.rank_before == rank_value)
    if not rows:
        logger.warning("cohort rank=%d is empty", rank_value)
    return RankTable(rows=rows, cohort=f"rank-{rank_value}")


def _sig6(x: float) -> float:
    return float(f"{x:.6g}")


def _as_payload(run, kg: KnowledgeGraph) -> dict:
    if isinstance(run, ExplanationRun):
        return run.to_payload(kg)
    return run


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated metrics plus the per-triple breakdown."""

    mrr_before: float
    mrr_after: float
    hits: dict
    m_delta_r: float
    mean_explanation_length: float | None
    per_triple_delta: tuple[int, ...]
    max_delta: dict
    cohort: str | None
    n_triples: int

    def to_payload(self) -> dict:
        full = {
            "mrr_before": repr(self.mrr_before),
            "mrr_after": repr(self.mrr_after),
            "m_delta_r": repr(self.m_delta_r),
        }
        if self.mean_explanation_length is not None:
            full["mean_explanation_length"] = repr(self.mean_explanation_length)
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "n_triples": self.n_triples,
            "cohort": self.cohort,
            "mrr_before": _sig6(self.mrr_before),
            "mrr_after": _sig6(self.mrr_after),
            "m_delta_r": _sig6(self.m_delta_r),
            "mean_explanation_length": (
                _sig6(self.mean_explanation_length)
                if self.mean_explanation_length is not None
                else None
            ),
            "hits": self.hits,
            "per_triple_delta": list(self.per_triple_delta),
            "max_delta": self.max_delta,
            "full_precision": full,
        }


def build_metrics_report(
    table: RankTable,
    runs: Sequence = (),
    kg: KnowledgeGraph | None = None,
    ks: Iterable[int] = DEFAULT_HITS_KS,
) -> MetricsReport:
    """Compute the aggregate metrics for a table and its explanation runs."""
    if not table.rows:
        raise DomainError("cannot build a metrics report from an empty table")
    hits = {}
    for k in ks:
        hits[str(k)] = {
            "count_before": hits_at_k(table, k, "before"),
            "count_after": hits_at_k(table, k, "after"),
            "pct_before": _sig6(100.0 * hits_at_k(table, k, "before", fraction=True)),
            "pct_after": _sig6(100.0 * hits_at_k(table, k, "after", fraction=True)),
        }
    deltas = [int(r.rank_after - r.rank_before) for r in table.rows]
    worst = max(range(len(deltas)), key=lambda i: deltas[i])
    max_delta = {
        "value": deltas[worst],
        "triple": list(table.rows[worst].triple),
    }
    if kg is not None:
        max_delta["labels"] = list(kg.label_triple(table.rows[worst].triple))

    mean_length = None
    if runs:
        lengths = []
        for run in runs:
            payload = _as_payload(run, kg)
            if payload.get("best"):
                lengths.append(payload["best"]["length"])
        if lengths:
            mean_length = float(np.mean(lengths))

    return MetricsReport(
        mrr_before=mrr(table, "before"),
        mrr_after=mrr(table, "after"),
        hits=hits,
        m_delta_r=m_delta_r(table),
        mean_explanation_length=mean_length,
        per_triple_delta=tuple(deltas),
        max_delta=max_delta,
        cohort=table.cohort,
        n_triples=len(table),
    )


def emit_report(
    table: RankTable,
    runs: Sequence,
    kg: KnowledgeGraph,
    out_dir: str | Path,
    ks: Iterable[int] = DEFAULT_HITS_KS,
    prefix: str = "report",
) -> dict[str, Path]:
    """Write the metrics JSON, the per-triple CSV, and the front CSV.

    Runs must describe predictions present in the table. Returns the paths
    written, keyed ``json``, ``per_triple``, and ``pareto``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payloads = [_as_payload(run, kg) for run in runs]
    table_triples = {row.triple for row in table.rows}
    for payload in payloads:
        pred = Triple(*payload["prediction"]["ids"])
        if pred not in table_triples:
            raise DomainError(f"run prediction {pred} is missing from the rank table")

    report = build_metrics_report(table, payloads, kg, ks)
    json_path = out_dir / f"{prefix}.json"
    json_path.write_text(
        json.dumps(report.to_payload(), indent=2, sort_keys=True), encoding="utf-8"
    )

    per_triple_path = out_dir / f"{prefix}_per_triple.csv"
    with per_triple_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PER_TRIPLE_CSV_COLUMNS)
        for row in table.rows:
            labels = kg.label_triple(row.triple)
            writer.writerow(
                [
                    labels[0],
                    labels[1],
                    labels[2],
                    row.rank_before,
                    row.rank_after,
                    f"{1.0 / row.rank_before:.6g}",
                    f"{1.0 / row.rank_after:.6g}",
                    int(row.rank_after != row.rank_before),
                ]
            )

    pareto_path = out_dir / f"{prefix}_pareto.csv"
    with pareto_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["length", "psi", "triples"])
        for payload in payloads:
            for point in payload.get("front", ()):
                triples = point.get("triples")
                writer.writerow(
                    [
                        point["length"],
                        f"{point['psi']:.6g}",
                        ";".join(",".join(map(str, t)) for t in triples) if triples else "",
                    ]
                )

    return {"json": json_path, "per_triple": per_triple_path, "pareto": pareto_path}


def comparison_table(summaries: Sequence[dict]) -> list[dict]:
    """Rows sorted by mean rank difference with non-dominated rows flagged.

    Each summary needs ``algorithm``, ``mean_length``, and ``m_delta_r``.
    Dominance treats shorter mean length and higher mean rank difference as
    better, through the same check the front construction uses.
    """
    if not summaries:
        return []
    points = [(float(s["mean_length"]), float(s["m_delta_r"])) for s in summaries]
    flags = non_dominated(points)
    rows = []
    for summary, flag in zip(summaries, flags):
        row = dict(summary)
        row["pareto_optimal"] = bool(flag)
        rows.append(row)
    rows.sort(key=lambda r: (-float(r["m_delta_r"]), float(r["mean_length"])))
    return rows
