"""Run summaries, per-weight fitness coefficients and heuristic ranking tables."""
from __future__ import annotations

import csv
import io
import math
import statistics
from typing import Iterable, Sequence

TOP_K = (10, 25, 100, 250, 500)
STATISTICS = ("mean", "median", "best")


def fitness_structure_coefficient(mae: float, weight_count: int) -> float:
    """How much fitness each weight buys: ``(1 - MAE) / weight_count``."""
    if weight_count < 1:
        raise ValueError("weight_count must be >= 1")
    if mae < 0:
        raise ValueError("MAE must be non-negative")
    return (1.0 - mae) / weight_count


def describe(values: Sequence[float]) -> dict:
    values = [float(v) for v in values]
    if not values:
        return {"count": 0, "mean": None, "median": None, "best": None, "worst": None, "std": None}
    return {
        "count": len(values),
        "mean": statistics.fmean(values),
        "median": statistics.median(values),
        "best": min(values),
        "worst": max(values),
        "std": statistics.pstdev(values) if len(values) > 1 else 0.0,
    }


def size_stats(values: Sequence[float], possible: int) -> dict:
    """Min/max/avg/std of a genome size plus the reduction relative to the colony."""
    values = [float(v) for v in values]
    if not values:
        return {"min": None, "max": None, "avg": None, "std": None, "reduce_pct": None}
    avg = statistics.fmean(values)
    return {
        "min": min(values),
        "max": max(values),
        "avg": avg,
        "std": statistics.pstdev(values) if len(values) > 1 else 0.0,
        "reduce_pct": reduction_percent(avg, possible),
    }


def reduction_percent(size: float, possible: int) -> float | None:
    if possible <= 0 or size == 0:
        return None
    return 100.0 * (1.0 - size / possible)


def summarize_runs(best_fitness: Sequence[float], genomes: Sequence[dict],
                   possible_edges: int, possible_recurrent: int) -> dict:
    """Statistics over repeats: final best fitness and size of each best genome."""
    return {
        "fitness": describe(best_fitness),
        "nodes": size_stats([g["nodes"] for g in genomes], 0),
        "edges": size_stats([g["edges"] for g in genomes], possible_edges),
        "rec_edges": size_stats([g["rec_edges"] for g in genomes], possible_recurrent),
        "coefficient": describe([
            fitness_structure_coefficient(max(f, 0.0), g["weights"])
            for f, g in zip(best_fitness, genomes) if g["weights"] > 0 and math.isfinite(f)
        ]),
    }


def _ordered(summaries: Sequence[dict], stat: str) -> list[dict]:
    usable = [s for s in summaries if s["fitness"].get(stat) is not None]
    return sorted(usable, key=lambda s: (s["fitness"][stat], s["name"]))


def rank_heuristics(summaries: Iterable[dict], top_k: Sequence[int] = TOP_K) -> dict:
    """Count, per heuristic label, appearances among the top-K experiments.

    Each summary needs ``name``, ``labels`` (heuristic labels used),
    optional ``solo`` (true when the experiment applied a single heuristic)
    and ``fitness`` with ``mean``/``median``/``best``. Lower fitness ranks
    higher; ties break on ``name`` so the result ignores input order.
    """
    summaries = list(summaries)
    labels = sorted({label for s in summaries for label in s["labels"]})
    table = {label: {} for label in labels}
    for stat in STATISTICS:
        ordered = _ordered(summaries, stat)
        for k in top_k:
            top = ordered[:k]
            for label in labels:
                hits = [s for s in top if label in s["labels"]]
                table[label][(k, stat)] = (len(hits), sum(1 for s in hits if s.get("solo")))
    return {"labels": labels, "top_k": list(top_k), "table": table}


def ranking_csv(ranking: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["heuristic"] + [f"top{k}_{stat}" for k in ranking["top_k"] for stat in STATISTICS])
    for label in ranking["labels"]:
        cells = ranking["table"][label]
        writer.writerow([label] + [
            f"{cells[(k, stat)][0]}({cells[(k, stat)][1]})"
            for k in ranking["top_k"] for stat in STATISTICS
        ])
    return buf.getvalue()
