import numpy as np
import pytest

from mguard import evaluation as ev
from mguard.data import LABEL_ANOMALOUS, LABEL_NORMAL, LABEL_UNLABELED
from mguard.errors import DataError
from mguard.rng import Rng


def pairwise_auc_oracle(scores, labels):
    """O(n^2) comparison count: anomalous above normal scores 1, ties 1/2."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = 0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 2
            elif p == n:
                wins += 1
    return wins / (2 * len(pos) * len(neg))


class TestConfusion:
    def test_perfect_agreement(self):
        cm = ev.confusion([1] * 5 + [0] * 5, [1] * 5 + [0] * 5)
        assert (cm.tp, cm.fp, cm.fn, cm.tn) == (5, 0, 0, 5)

    def test_all_predicted_normal(self):
        cm = ev.confusion([0] * 6, [1, 1, 1, 0, 0, 0])
        assert cm.fn == 3 and cm.tn == 3 and cm.tp == 0 and cm.fp == 0

    def test_mixed_case_matches_enumeration(self):
        verdicts = [1, 0, 1, 1, 0, 0, 1, 0]
        labels = [1, 1, 0, 1, 0, 1, 0, 0]
        cm = ev.confusion(verdicts, labels)
        pairs = list(zip(verdicts, labels))
        assert cm.tp == sum(1 for v, l in pairs if v == 1 and l == 1) == 2
        assert cm.fp == sum(1 for v, l in pairs if v == 1 and l == 0) == 2
        assert cm.fn == sum(1 for v, l in pairs if v == 0 and l == 1) == 2
        assert cm.tn == sum(1 for v, l in pairs if v == 0 and l == 0) == 2

    def test_unlabeled_excluded_and_counted(self):
        cm = ev.confusion([1, 0, 1], [LABEL_ANOMALOUS, LABEL_UNLABELED, LABEL_UNLABELED])
        assert cm.tp == 1 and cm.total == 1 and cm.n_unlabeled == 2

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            ev.confusion([1], [1, 0])


class TestMetrics:
    def test_arithmetic_oracle_case(self):
        rep = ev.metrics(ev.ConfusionMatrix(tp=88, fp=12, fn=11, tn=89))
        assert rep.precision == pytest.approx(0.88)
        assert rep.recall == pytest.approx(88 / 99)
        assert rep.accuracy == pytest.approx(0.885)
        assert rep.specificity == pytest.approx(89 / 101)

    def test_perfect_matrix(self):
        rep = ev.metrics(ev.ConfusionMatrix(tp=10, fp=0, fn=0, tn=10))
        for name in ("accuracy", "precision", "recall", "f1", "specificity"):
            assert getattr(rep, name) == 1.0
        assert not rep.flags

    def test_reported_operating_point_formula_consistency(self):
        # integer matrix consistent with the published operating point at its
        # stated rounding (a formula check, not a training target)
        rep = ev.metrics(ev.ConfusionMatrix(tp=11867, fp=1618, fn=1466, tn=15080))
        assert round(rep.accuracy, 4) == 0.8973
        assert round(rep.precision, 2) == 0.88
        assert round(rep.recall, 2) == 0.89
        assert round(rep.f1, 2) == 0.89
        assert round(rep.specificity, 2) == 0.90

    def test_zero_denominators_flagged(self):
        rep = ev.metrics(ev.ConfusionMatrix(tp=0, fp=0, fn=3, tn=7))
        assert rep.precision == 0.0 and rep.f1 == 0.0
        assert any("precision" in f for f in rep.flags)
        assert any("f1" in f for f in rep.flags)

    def test_f1_harmonic_identity(self):
        rep = ev.metrics(ev.ConfusionMatrix(tp=7, fp=3, fn=2, tn=11))
        assert rep.f1 == pytest.approx(
            2 * rep.precision * rep.recall / (rep.precision + rep.recall)
        )


class TestRocAuc:
    def test_perfect_separation(self):
        assert ev.roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_perfect_inversion(self):
        assert ev.roc_auc([0.9, 0.8, 0.1, 0.2], [0, 0, 1, 1]) == 0.0

    def test_six_point_case_matches_pairwise_oracle(self):
        scores = [0.3, 0.7, 0.7, 0.2, 0.9, 0.5]
        labels = [0, 1, 0, 0, 1, 1]
        assert ev.roc_auc(scores, labels) == pytest.approx(
            pairwise_auc_oracle(scores, labels), abs=1e-12
        )

    def test_all_ties_is_half(self):
        assert ev.roc_auc([0.5] * 6, [1, 0, 1, 0, 1, 0]) == 0.5

    def test_random_labels_center_on_half(self):
        rng = Rng(11)
        total = 0.0
        trials = 300
        for k in range(trials):
            scores = rng.spawn(k).uniform(0, 1, (40,)).astype(np.float64)
            labels = (rng.spawn(10_000 + k).uniform(0, 1, (40,)) > 0.5).astype(int)
            if labels.sum() in (0, 40):
                labels[0] = 1 - labels[0]
            total += ev.roc_auc(scores, labels.tolist())
        assert abs(total / trials - 0.5) < 0.02

    def test_matches_pairwise_oracle_exactly_on_random_instances(self):
        rng = Rng(12)
        for k in range(40):
            n = 10 + rng.spawn(k).integer(60)
            r = rng.spawn(1000 + k)
            scores = np.round(r.uniform(0, 1, (n,)).astype(np.float64), 2)  # force ties
            labels = (r.uniform(0, 1, (n,)) > 0.6).astype(int)
            if labels.sum() == 0:
                labels[0] = 1
            if labels.sum() == n:
                labels[0] = 0
            assert ev.roc_auc(scores, labels.tolist()) == pairwise_auc_oracle(
                scores.tolist(), labels.tolist()
            )

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            ev.roc_auc([0.1, 0.2], [1, 1])


class TestRender:
    def test_report_deterministic(self):
        rep = ev.metrics(ev.ConfusionMatrix(tp=3, fp=1, fn=2, tn=8), 0.91, "abc123")
        assert ev.render_report(rep) == ev.render_report(rep)
        text = ev.render_report(rep)
        assert "tp=3 fp=1 fn=2 tn=8" in text
        assert "abc123" in text

    def test_written_files(self, tmp_path):
        rep = ev.metrics(ev.ConfusionMatrix(tp=3, fp=1, fn=2, tn=8), 0.75)
        paths = ev.write_report_files(tmp_path, rep)
        assert (tmp_path / "report.txt").exists()
        metrics_csv = (tmp_path / "metrics.csv").read_text().splitlines()
        assert metrics_csv[0] == "metric,value"
        confusion_csv = (tmp_path / "confusion.csv").read_text().splitlines()
        assert confusion_csv[1].startswith("true_anomalous,3,2")
