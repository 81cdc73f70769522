"""Aggregation of per-slot run records over repetitions."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

from .runner import RunRecord, fmt

SUMMARY_COLUMNS = (
    "method", "slot", "reps",
    "mean_avg_regret", "se_avg_regret",
    "mean_edc", "se_edc",
    "mean_avg_edc", "se_avg_edc",
)


@dataclass
class SummaryRow:
    method: str
    slot: int
    reps: int
    mean_avg_regret: float
    se_avg_regret: float
    mean_edc: float
    se_edc: float
    mean_avg_edc: float
    se_avg_edc: float

    def row(self) -> list[str]:
        vals = (self.mean_avg_regret, self.se_avg_regret, self.mean_edc, self.se_edc,
                self.mean_avg_edc, self.se_avg_edc)
        return [self.method, str(self.slot), str(self.reps), *(fmt(v) for v in vals)]


def _fields(rec: Union[RunRecord, Mapping]) -> tuple:
    if isinstance(rec, RunRecord):
        return rec.method, rec.rep, rec.slot, rec.avg_regret, rec.edc_total
    return rec["method"], int(rec["rep"]), int(rec["slot"]), float(rec["avg_regret"]), float(rec["edc_total"])


def mean_se(values) -> tuple[float, float]:
    """Sample mean and standard error (0 for a single value)."""
    v = np.asarray(values, float)
    if v.size == 0:
        raise ValueError("no values")
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def summarize(records: Iterable[Union[RunRecord, Mapping]]) -> list[SummaryRow]:
    """Mean and standard error across repetitions for every (method, slot).

    ``mean_avg_edc`` is the running average EDC over slots ``1..t`` of each
    repetition, averaged over repetitions.  Rows are sorted by method then slot.
    """
    series: dict[tuple, dict[int, tuple]] = defaultdict(dict)
    for rec in records:
        method, rep, slot, avg_regret, edc_total = _fields(rec)
        series[(method, rep)][slot] = (avg_regret, edc_total)
    if not series:
        raise ValueError("cannot summarize an empty record set")

    cells: dict[tuple, list] = defaultdict(list)
    for (method, _), by_slot in series.items():
        total = 0.0
        for slot in sorted(by_slot):
            avg_regret, edc_total = by_slot[slot]
            total += edc_total
            cells[(method, slot)].append((avg_regret, edc_total, total / slot))

    out = []
    for (method, slot) in sorted(cells):
        a = np.array(cells[(method, slot)])
        stats = [mean_se(a[:, k]) for k in range(3)]
        out.append(SummaryRow(method, slot, len(a), *stats[0], *stats[1], *stats[2]))
    return out


def final_rows(summary: Iterable[SummaryRow]) -> dict[str, SummaryRow]:
    """Last-slot row of each method."""
    last: dict[str, SummaryRow] = {}
    for r in summary:
        if r.method not in last or r.slot > last[r.method].slot:
            last[r.method] = r
    return last


def relative_improvement(value: float, reference: float) -> float:
    """Fractional reduction of ``value`` relative to ``reference``, ``(ref - value) / ref``."""
    if reference == 0:
        return 0.0 if value == 0 else float("-inf") if value > 0 else float("inf")
    return (reference - value) / abs(reference)


def relative_differences(summary: Iterable[SummaryRow], metric: str = "mean_avg_regret") -> dict[tuple, float]:
    """Pairwise final-slot improvements ``{(a, b): improvement of a over b}``."""
    last = final_rows(summary)
    out = {}
    for a in last:
        for b in last:
            if a != b:
                out[(a, b)] = relative_improvement(getattr(last[a], metric), getattr(last[b], metric))
    return out


def write_summary(path, summary: Iterable[SummaryRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in summary:
            w.writerow(r.row())
