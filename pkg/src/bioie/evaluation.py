"""Confusion accounting, macro precision/recall/F, percentile-bootstrap
confidence intervals, and comparison-table formatting.

All scores are percents. The designated negative class (index 0 in every
task's label set) is excluded from macro averaging; zero denominators
yield zero rather than NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConfusionCounts",
    "EvalReport",
    "confusion_counts",
    "macro_prf",
    "evaluate_outcomes",
    "harmonic_f",
    "bootstrap_ci",
    "report_table",
    "machine_lines",
]


def harmonic_f(p: float, r: float) -> float:
    return 0.0 if p + r == 0.0 else 2.0 * p * r / (p + r)


@dataclass
class ConfusionCounts:
    label_set: tuple[str, ...]
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    negative_index: int = 0
    n: int = 0


@dataclass
class EvalReport:
    per_class: dict[str, tuple[float, float, float]]
    macro_p: float
    macro_r: float
    macro_f: float
    n: int
    ci: dict[str, tuple[float, float]] = field(default_factory=dict)


def confusion_counts(predictions, gold, label_set,
                     negative_index: int = 0) -> ConfusionCounts:
    """Per-class true/false positive and false negative tallies."""
    preds = np.asarray(predictions, dtype=np.int64)
    golds = np.asarray(gold, dtype=np.int64)
    if preds.shape != golds.shape:
        raise ValueError(
            f"{preds.shape[0]} predictions but {golds.shape[0]} gold labels")
    c = len(label_set)
    for arr, what in ((preds, "prediction"), (golds, "gold label")):
        if arr.size and (arr.min() < 0 or arr.max() >= c):
            raise ValueError(f"{what} outside label set of size {c}")
    tp = np.zeros(c, dtype=np.int64)
    fp = np.zeros(c, dtype=np.int64)
    fn = np.zeros(c, dtype=np.int64)
    for p, g in zip(preds, golds):
        if p == g:
            tp[p] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    return ConfusionCounts(tuple(label_set), tp, fp, fn, negative_index,
                           int(preds.size))


def macro_prf(counts: ConfusionCounts) -> EvalReport:
    """Per-class and macro precision/recall/F in percent. Macro values
    average the evaluated (non-negative) classes; the macro F is the
    harmonic mean of macro P and macro R."""
    per_class = {}
    evaluated_p, evaluated_r = [], []
    for idx, name in enumerate(counts.label_set):
        tp, fp, fn = counts.tp[idx], counts.fp[idx], counts.fn[idx]
        p = 100.0 * tp / (tp + fp) if tp + fp else 0.0
        r = 100.0 * tp / (tp + fn) if tp + fn else 0.0
        per_class[name] = (p, r, harmonic_f(p, r))
        if idx != counts.negative_index:
            evaluated_p.append(p)
            evaluated_r.append(r)
    macro_p = float(np.mean(evaluated_p)) if evaluated_p else 0.0
    macro_r = float(np.mean(evaluated_r)) if evaluated_r else 0.0
    return EvalReport(per_class, macro_p, macro_r, harmonic_f(macro_p, macro_r),
                      counts.n)


def evaluate_outcomes(predictions, gold, label_set,
                      negative_index: int = 0) -> EvalReport:
    return macro_prf(confusion_counts(predictions, gold, label_set,
                                      negative_index))


def bootstrap_ci(outcomes, metric, resamples: int = 1000,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap 95% interval: resample outcomes with
    replacement, recompute `metric` per resample, take the 2.5th and
    97.5th percentiles."""
    items = list(outcomes)
    if not items:
        raise ValueError("bootstrap_ci: empty outcome list")
    rng = np.random.default_rng(seed)
    values = np.empty(resamples)
    n = len(items)
    for r in range(resamples):
        idx = rng.integers(0, n, size=n)
        values[r] = metric([items[i] for i in idx])
    return (float(np.percentile(values, 2.5)),
            float(np.percentile(values, 97.5)))


def report_table(rows: list[tuple[str, EvalReport]],
                 title: str = "") -> str:
    """Aligned text table with one-decimal percent values, deterministic
    for identical inputs."""
    header = ["model", "P(%)", "R(%)", "F(%)", "n"]
    body = [
        [name, f"{rep.macro_p:.1f}", f"{rep.macro_r:.1f}", f"{rep.macro_f:.1f}",
         str(rep.n)]
        for name, rep in rows
    ]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = []
    if title:
        lines.append(title)
    lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines)


def machine_lines(report: EvalReport) -> list[str]:
    """One tab-separated line per class plus a macro line:
    class, P, R, F, CI_low, CI_high (blank CI fields when absent)."""
    lines = []
    for name, (p, r, f) in report.per_class.items():
        lo, hi = report.ci.get(name, ("", ""))
        lo_s = f"{lo:.1f}" if lo != "" else ""
        hi_s = f"{hi:.1f}" if hi != "" else ""
        lines.append(f"{name}\t{p:.1f}\t{r:.1f}\t{f:.1f}\t{lo_s}\t{hi_s}")
    lo, hi = report.ci.get("macro", ("", ""))
    lo_s = f"{lo:.1f}" if lo != "" else ""
    hi_s = f"{hi:.1f}" if hi != "" else ""
    lines.append(f"macro\t{report.macro_p:.1f}\t{report.macro_r:.1f}"
                 f"\t{report.macro_f:.1f}\t{lo_s}\t{hi_s}")
    return lines
