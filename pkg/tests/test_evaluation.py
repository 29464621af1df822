"""Metric arithmetic, bootstrap intervals, and table formatting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bioie.evaluation import (
    EvalReport,
    bootstrap_ci,
    confusion_counts,
    evaluate_outcomes,
    harmonic_f,
    machine_lines,
    macro_prf,
    report_table,
)

LABELS3 = ("null", "A", "B")


class TestConfusionCounts:
    def test_perfect_predictions(self):
        counts = confusion_counts([0, 1, 2, 1], [0, 1, 2, 1], LABELS3)
        assert counts.fp.sum() == 0 and counts.fn.sum() == 0
        assert counts.tp.tolist() == [1, 2, 1]

    def test_all_null_on_positive_gold(self):
        counts = confusion_counts([0] * 4, [1, 1, 2, 2], LABELS3)
        assert counts.tp[1] == 0 and counts.tp[2] == 0
        assert counts.fn[1] == 2 and counts.fn[2] == 2

    def test_three_class_brute_force_tally(self):
        preds = [0, 1, 1, 2, 2, 0, 1]
        gold = [0, 1, 2, 2, 1, 1, 1]
        counts = confusion_counts(preds, gold, LABELS3)
        tp = [0, 0, 0]
        fp = [0, 0, 0]
        fn = [0, 0, 0]
        for p, g in zip(preds, gold):  # exhaustive pair listing
            if p == g:
                tp[p] += 1
            else:
                fp[p] += 1
                fn[g] += 1
        assert counts.tp.tolist() == tp
        assert counts.fp.tolist() == fp
        assert counts.fn.tolist() == fn

    def test_label_outside_set(self):
        with pytest.raises(ValueError):
            confusion_counts([3], [0], LABELS3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion_counts([0, 1], [0], LABELS3)


class TestMacroPrf:
    def test_single_true_positive(self):
        report = evaluate_outcomes([1], [1], ("null", "A"))
        assert report.macro_p == 100.0
        assert report.macro_r == 100.0
        assert report.macro_f == 100.0

    def test_published_f_from_p_r_pathology(self):
        assert abs(harmonic_f(86.9, 83.7) - 85.3) <= 0.05

    def test_published_f_from_p_r_chemical_disease(self):
        assert abs(harmonic_f(61.5, 72.3) - 66.4) <= 0.15

    def test_zero_division_guard(self):
        counts = confusion_counts([0, 0], [1, 1], ("null", "A"))
        report = macro_prf(counts)
        assert report.macro_p == 0.0
        assert report.macro_r == 0.0
        assert report.macro_f == 0.0

    def test_null_class_excluded_from_macro(self):
        # null predicted perfectly, class A never found: macro must be 0
        report = evaluate_outcomes([0, 0, 0], [0, 0, 1], ("null", "A"))
        assert report.macro_f == 0.0
        assert report.per_class["null"][0] > 0

    def test_order_invariance(self):
        rng = np.random.default_rng(0)
        preds = rng.integers(0, 3, 60)
        gold = rng.integers(0, 3, 60)
        a = evaluate_outcomes(preds, gold, LABELS3)
        perm = rng.permutation(60)
        b = evaluate_outcomes(preds[perm], gold[perm], LABELS3)
        assert a == b

    @given(st.floats(0.1, 100), st.floats(0.1, 100))
    @settings(max_examples=80, deadline=None)
    def test_f_between_min_and_max(self, p, r):
        f = harmonic_f(p, r)
        assert min(p, r) - 1e-9 <= f <= max(p, r) + 1e-9

    def test_f_symmetric(self):
        assert harmonic_f(30.0, 70.0) == harmonic_f(70.0, 30.0)


class TestBootstrapCi:
    def accuracy(self, outcomes):
        return float(np.mean([p == g for p, g in outcomes]))

    def test_degenerate_identical_outcomes(self):
        outcomes = [(1, 1)] * 20
        lo, hi = bootstrap_ci(outcomes, self.accuracy, resamples=200, seed=0)
        assert lo == hi == 1.0

    def test_fixed_seed_reproducible(self):
        rng = np.random.default_rng(1)
        outcomes = list(zip(rng.integers(0, 2, 100), rng.integers(0, 2, 100)))
        a = bootstrap_ci(outcomes, self.accuracy, seed=7)
        b = bootstrap_ci(outcomes, self.accuracy, seed=7)
        assert a == b

    def test_interval_contains_point_estimate(self):
        rng = np.random.default_rng(2)
        outcomes = [(int(rng.random() < 0.7), 1) for _ in range(200)]
        lo, hi = bootstrap_ci(outcomes, self.accuracy, resamples=1000, seed=3)
        point = self.accuracy(outcomes)
        assert lo <= point <= hi
        # direct enumeration with the same generator reproduces the interval
        gen = np.random.default_rng(3)
        values = []
        for _ in range(1000):
            idx = gen.integers(0, 200, size=200)
            values.append(self.accuracy([outcomes[i] for i in idx]))
        assert (lo, hi) == (float(np.percentile(values, 2.5)),
                            float(np.percentile(values, 97.5)))

    def test_empty_outcomes(self):
        with pytest.raises(ValueError):
            bootstrap_ci([], self.accuracy)


def _report(f=50.0):
    return EvalReport({"A": (f, f, f)}, f, f, f, n=10)


class TestReportTable:
    def test_single_row(self):
        table = report_table([("model", _report())])
        assert len(table.splitlines()) == 2
        assert "50.0" in table

    def test_identical_reports_identical_rows(self):
        table = report_table([("a", _report()), ("b", _report())])
        rows = table.splitlines()[1:]
        assert rows[0].split()[1:] == rows[1].split()[1:]

    def test_ablation_suite_has_seven_rows_in_order(self):
        from bioie.pipeline import ABLATION_VARIANTS
        rows = [(v, _report(float(i))) for i, v in enumerate(ABLATION_VARIANTS)]
        lines = report_table(rows).splitlines()[1:]
        assert len(lines) == 7
        assert [line.split()[0] for line in lines] == list(ABLATION_VARIANTS)

    def test_machine_lines_format(self):
        report = _report()
        report.ci["macro"] = (40.0, 60.0)
        lines = machine_lines(report)
        assert lines[-1] == "macro\t50.0\t50.0\t50.0\t40.0\t60.0"
        assert all(len(line.split("\t")) == 6 for line in lines)
