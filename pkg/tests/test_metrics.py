import numpy as np
import pytest

from mixmode.grammar import Label, ThinkingMode, canonical_response, parse
from mixmode.metrics import (
    CSV_COLUMNS,
    EvalRecord,
    MetricReport,
    compute_metrics,
    render_report,
    report_from_json,
)

MODES = list(ThinkingMode)


def record(truth, answer, i=0, mode=ThinkingMode.QUICK_RESPONSE):
    if answer is None:
        parsed = parse("nothing parseable here")
    else:
        parsed = parse(canonical_response(mode, answer))
    return EvalRecord(sample_id=i, truth=truth, parsed=parsed)


def random_records(rng, n):
    records = []
    for i in range(n):
        truth = Label.FAKE if rng.random() < 0.5 else Label.REAL
        roll = rng.random()
        answer = None if roll < 0.15 else (Label.FAKE if roll < 0.6 else Label.REAL)
        mode = MODES[rng.integers(3)]
        records.append(record(truth, answer, i, mode))
    return records


def brute_force(records):
    """Independent confusion counting: missing answers predict 'real'."""
    tp = fp = fn = tn = 0
    for r in records:
        predicted = r.parsed.answer if r.parsed.answer is not None else Label.REAL
        if r.truth is Label.FAKE and predicted is Label.FAKE:
            tp += 1
        elif r.truth is Label.REAL and predicted is Label.FAKE:
            fp += 1
        elif r.truth is Label.FAKE and predicted is Label.REAL:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    accuracy = (tp + tn) / len(records)
    return accuracy, f1, precision, recall, (tp, fp, fn, tn)


class TestComputeMetrics:
    def test_all_correct_is_all_ones(self):
        records = [record(Label.FAKE, Label.FAKE, 0), record(Label.REAL, Label.REAL, 1)]
        report = compute_metrics(records)
        assert (report.accuracy, report.f1, report.precision, report.recall) == (1, 1, 1, 1)

    def test_worked_confusion_example(self):
        records = [
            record(Label.FAKE, Label.FAKE, 0),
            record(Label.FAKE, Label.FAKE, 1),
            record(Label.REAL, Label.FAKE, 2),
            record(Label.FAKE, Label.REAL, 3),
        ]
        report = compute_metrics(records)
        assert (report.tp, report.fp, report.fn, report.tn) == (2, 1, 1, 0)
        assert report.precision == pytest.approx(2 / 3)
        assert report.recall == pytest.approx(2 / 3)
        assert report.f1 == pytest.approx(2 / 3)

    def test_missing_answer_counts_as_negative_prediction(self):
        report = compute_metrics([record(Label.FAKE, None, 0), record(Label.REAL, None, 1)])
        assert (report.tp, report.fp, report.fn, report.tn) == (0, 0, 1, 1)
        assert report.accuracy == 0.5

    def test_f1_zero_exactly_when_no_true_positives(self):
        report = compute_metrics([record(Label.FAKE, Label.REAL, 0)])
        assert report.tp == 0 and report.f1 == 0.0

    def test_matches_brute_force_on_random_records(self, rng):
        for _ in range(200):
            records = random_records(rng, int(rng.integers(1, 40)))
            report = compute_metrics(records)
            accuracy, f1, precision, recall, confusion = brute_force(records)
            assert report.accuracy == accuracy
            assert report.f1 == f1
            assert report.precision == precision
            assert report.recall == recall
            assert (report.tp, report.fp, report.fn, report.tn) == confusion

    def test_permutation_invariance(self, rng):
        records = random_records(rng, 25)
        shuffled = list(records)
        rng.shuffle(shuffled)
        assert compute_metrics(records) == compute_metrics(shuffled)

    def test_avg_tokens_is_mean_token_count(self):
        records = [
            record(Label.FAKE, Label.FAKE, 0, ThinkingMode.QUICK_RESPONSE),
            record(Label.FAKE, Label.FAKE, 1, ThinkingMode.PROSPECTIVE_SIMULATION),
        ]
        report = compute_metrics(records)
        assert report.avg_tokens == pytest.approx((6 + 181) / 2)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics([])


class TestRenderReport:
    @pytest.fixture
    def report(self, rng):
        return compute_metrics(random_records(rng, 30))

    def test_json_round_trip(self, report):
        text = render_report(report, "json", metadata={"config_hash": "cafe"})
        back, metadata = report_from_json(text)
        assert back == report
        assert metadata == {"config_hash": "cafe"}

    def test_csv_header_fixed(self, report):
        text = render_report(report, "csv")
        assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
        assert text.splitlines()[0].startswith("accuracy,f1,precision,recall,avg_tokens")

    def test_csv_metadata_appended(self, report):
        text = render_report(report, "csv", metadata={"config_hash": "cafe"})
        header, row = text.splitlines()
        assert header.endswith(",config_hash")
        assert row.endswith(",cafe")

    def test_table_lists_the_five_metric_names(self, report):
        table = render_report(report, "table")
        for name in ("accuracy", "f1", "precision", "recall", "avg_tokens"):
            assert name in table

    def test_unknown_format_rejected(self, report):
        with pytest.raises(ValueError):
            render_report(report, "xml")

    def test_rendering_is_deterministic(self, report):
        assert render_report(report, "json") == render_report(report, "json")
