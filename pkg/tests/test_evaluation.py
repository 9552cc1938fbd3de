"""Tests for calibration, the certain/uncertain confusion matrix,
threshold sweeps, classic metrics, histograms, and the reliability SVG.

All fixtures fabricate UncertaintyEstimate objects directly so that
every checked number is independent of the sampling machinery.
"""

import math

import numpy as np
import pytest

from frauduq.errors import DataError, ValidationError
from frauduq.evaluation import (
    build_report,
    classic_metrics,
    compute_ece,
    entropy_histogram_csv,
    export_entropy_histogram,
    render_reliability_svg,
    report_to_dict,
    threshold_sweep,
    threshold_table_csv,
    uq_confusion,
    uq_metrics,
)
from frauduq.uncertainty import UncertaintyEstimate


def est(p_class1, entropy_norm=None):
    """Fabricate an estimate with confidence max(p, 1-p)."""
    probs = np.array([1.0 - p_class1, p_class1])
    if entropy_norm is None:
        terms = [q * math.log(q) for q in probs if q > 0.0]
        entropy_norm = -sum(terms) / math.log(2)
    return UncertaintyEstimate(
        mean_probs=probs,
        predicted_class=int(p_class1 > 0.5),
        entropy_raw=entropy_norm * math.log(2),
        entropy_norm=entropy_norm,
    )


# --- ECE -----------------------------------------------------------------------


def test_ece_two_bin_hand_example():
    """Four samples, two buckets: ECE computed by hand.

    Bucket (0.5,0.6]: confidences .55/.60, accuracy 1/2 -> gap |0.5-0.575|.
    Bucket (0.9,1.0]: confidences .95/1.0, accuracy 1 -> gap |1-0.975|.
    """
    estimates = [est(0.55), est(0.4), est(0.95), est(1.0)]
    labels = [1, 1, 1, 1]  # second sample predicts 0 -> wrong
    bins = compute_ece(estimates, labels, m_bins=10)
    assert bins.ece == pytest.approx(0.5 * 0.075 + 0.5 * 0.025, abs=1e-12)
    assert bins.total == 4
    by_count = {b.count for b in bins.bins}
    assert by_count == {0, 2}


def test_ece_bin_assignment_edges():
    """Bins are (lower, upper]: confidence exactly 0.5 lands in (0.4, 0.5]."""
    cases = [
        (0.5, 4),   # ceil(5)-1
        (0.51, 5),
        (1.0, 9),
        (0.91, 9),
        (0.9, 8),
    ]
    for conf, expected_bin in cases:
        bins = compute_ece([est(conf)], [1], m_bins=10)
        filled = [i for i, b in enumerate(bins.bins) if b.count]
        assert filled == [expected_bin], f"confidence {conf}"


def test_ece_maximally_miscalibrated_is_half_exactly():
    """Confidence 1.0 everywhere, accuracy one half -> ECE = 0.5 exactly."""
    estimates = [est(1.0) for _ in range(40)]
    labels = [1, 0] * 20
    bins = compute_ece(estimates, labels, m_bins=10)
    assert bins.ece == 0.5


def test_ece_perfectly_calibrated_predictor_is_small():
    """Correctness probability equals stated confidence -> ECE near 0."""
    rng = np.random.default_rng(99)
    estimates, labels = [], []
    for _ in range(4000):
        conf = float(rng.uniform(0.5, 1.0))
        estimates.append(est(conf))
        labels.append(1 if rng.random() < conf else 0)
    bins = compute_ece(estimates, labels, m_bins=10)
    assert bins.ece < 0.03


def test_ece_rejects_empty_and_bad_bins():
    with pytest.raises(ValidationError):
        compute_ece([est(0.9)], [1], m_bins=0)
    with pytest.raises(DataError):
        compute_ece([], [], m_bins=10)
    with pytest.raises(DataError):
        compute_ece([est(0.9)], [1, 0], m_bins=10)


# --- UQ confusion matrix ----------------------------------------------------------


def fixture_counts(tc, tu, fu, fc, threshold=0.4):
    """Fabricate estimates realizing exact TC/TU/FU/FC counts."""
    certain_h, uncertain_h = threshold / 2, (1 + threshold) / 2
    estimates, labels = [], []
    for _ in range(tc):  # correct & certain
        estimates.append(est(0.9, entropy_norm=certain_h))
        labels.append(1)
    for _ in range(tu):  # incorrect & uncertain
        estimates.append(est(0.9, entropy_norm=uncertain_h))
        labels.append(0)
    for _ in range(fu):  # correct & uncertain
        estimates.append(est(0.9, entropy_norm=uncertain_h))
        labels.append(1)
    for _ in range(fc):  # incorrect & certain
        estimates.append(est(0.9, entropy_norm=certain_h))
        labels.append(0)
    return estimates, labels


def test_worked_fixture_metrics():
    """TC=8, TU=1, FU=1, FC=0 -> UAcc 0.9, USen 1.0, USpe 8/9, UPre 0.5."""
    estimates, labels = fixture_counts(8, 1, 1, 0)
    c = uq_confusion(estimates, labels, 0.4)
    assert (c.tc, c.tu, c.fu, c.fc) == (8, 1, 1, 0)
    m = uq_metrics(c)
    assert m.uacc == pytest.approx(0.9)
    assert m.usen == pytest.approx(1.0)
    assert m.uspe == pytest.approx(0.889, abs=1e-3)
    assert m.upre == pytest.approx(0.5)


def test_zero_denominators_are_none_not_nan():
    estimates, labels = fixture_counts(5, 0, 0, 0)
    m = uq_metrics(uq_confusion(estimates, labels, 0.4))
    assert m.uacc == 1.0
    assert m.usen is None  # no incorrect predictions at all
    assert m.upre is None  # no uncertain predictions at all
    assert m.uspe == 1.0

    estimates, labels = fixture_counts(0, 0, 3, 0)
    m = uq_metrics(uq_confusion(estimates, labels, 0.4))
    assert m.uspe == 0.0 and m.usen is None and m.upre == 0.0


def test_boundary_entropy_counts_as_certain():
    e = [est(0.9, entropy_norm=0.4)]
    c = uq_confusion(e, [1], threshold=0.4)
    assert c.tc == 1 and c.fu == 0


def test_confusion_brute_force_recount():
    """Vector implementation vs a per-sample loop on random fixtures."""
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        threshold = float(rng.random())
        estimates, labels = [], []
        for _ in range(n):
            p = float(rng.uniform(0.0, 1.0))
            h = float(rng.random())
            estimates.append(est(p, entropy_norm=h))
            labels.append(int(rng.integers(0, 2)))
        c = uq_confusion(estimates, labels, threshold)

        tc = tu = fu = fc = 0
        for e, y in zip(estimates, labels):
            correct = e.predicted_class == y
            certain = e.entropy_norm <= threshold
            if correct and certain:
                tc += 1
            elif not correct and not certain:
                tu += 1
            elif correct:
                fu += 1
            else:
                fc += 1
        assert (c.tc, c.tu, c.fu, c.fc) == (tc, tu, fu, fc)
        assert c.total == n


# --- sweeps --------------------------------------------------------------------


def test_sweep_certain_count_monotone_and_grid_checked():
    rng = np.random.default_rng(11)
    estimates = [est(float(rng.uniform()), entropy_norm=float(rng.random()))
                 for _ in range(60)]
    labels = [int(rng.integers(0, 2)) for _ in range(60)]
    confusions, metrics = threshold_sweep(estimates, labels)
    assert len(confusions) == 9 and len(metrics) == 9
    certain_counts = [c.tc + c.fc for c in confusions]
    assert certain_counts == sorted(certain_counts)

    with pytest.raises(ValidationError):
        threshold_sweep(estimates, labels, thresholds=(0.5, 0.3))
    with pytest.raises(ValidationError):
        threshold_sweep(estimates, labels, thresholds=())


def test_sweep_high_threshold_uacc_tracks_accuracy():
    """At threshold 0.9 nearly every point is flagged certain, so UAcc
    collapses towards plain accuracy: the only leakage is correct-but-very-
    uncertain points, which a converged model keeps rare. Checked on a
    trained ensemble over well-separated blobs.
    """
    from frauduq.data import split_train_test, synth_generate
    from frauduq.network import NetworkConfig
    from frauduq.uncertainty import EnsembleSpec, predict_table, train_ensemble

    table = synth_generate(400, 6, 4.0, noise_seed=11)
    train_t, test_t = split_train_test(table, 0.7, seed=11)
    base = NetworkConfig(input_units=6, hidden_units=(32, 16, 8), dropout_rate=0.3,
                         epochs=100, batch_size=64, learning_rate=5e-3, seed=0)
    spec = EnsembleSpec(members=5, width_ranges=((24, 48), (12, 24), (6, 12)),
                        base=base, master_seed=11)
    members = train_ensemble(spec, train_t)
    estimates = predict_table("ensemble", members, test_t.features, 1, seed=11)
    confusions, metrics = threshold_sweep(estimates, list(test_t.labels))
    accuracy = classic_metrics(estimates, list(test_t.labels)).accuracy
    assert confusions[-1].threshold == pytest.approx(0.9)
    assert metrics[-1].uacc >= accuracy - 0.01


# --- classic metrics ---------------------------------------------------------------


def test_classic_metrics_hand_fixture():
    """3 TP, 1 FN, 2 TN, 2 FP with fraud=1 positive."""
    estimates = [est(0.9)] * 3 + [est(0.1)] + [est(0.2)] * 2 + [est(0.8)] * 2
    labels = [1, 1, 1, 1, 0, 0, 0, 0]
    m = classic_metrics(estimates, labels)
    assert m.accuracy == pytest.approx(5 / 8)
    assert m.sensitivity == pytest.approx(3 / 4)
    assert m.specificity == pytest.approx(2 / 4)
    assert m.precision == pytest.approx(3 / 5)


# --- histogram -----------------------------------------------------------------------


def test_classic_metrics_everything_predicted_genuine():
    # degenerate predictor: no positive calls at all -> precision undefined
    estimates = [est(0.1)] * 4
    labels = [1, 1, 0, 0]
    m = classic_metrics(estimates, labels)
    assert m.accuracy == pytest.approx(0.5)
    assert m.sensitivity == pytest.approx(0.0)
    assert m.specificity == pytest.approx(1.0)
    assert m.precision is None


def test_entropy_histogram_counts_and_means():
    estimates = [est(0.9, entropy_norm=h) for h in (0.1, 0.3, 0.6, 0.9)]
    labels = [1, 1, 0, 0]  # first two correct, last two wrong
    hist = export_entropy_histogram(estimates, labels, bins=4)
    assert hist.correct_counts == (1, 1, 0, 0)
    assert hist.incorrect_counts == (0, 0, 1, 1)
    assert hist.mean_entropy_correct == pytest.approx(0.2)
    assert hist.mean_entropy_incorrect == pytest.approx(0.75)


def test_entropy_histogram_empty_group_is_none():
    estimates = [est(0.9, entropy_norm=0.2)]
    hist = export_entropy_histogram(estimates, [1], bins=5)
    assert hist.mean_entropy_incorrect is None
    assert sum(hist.correct_counts) == 1


# --- report / rendering ----------------------------------------------------------------


def full_report():
    rng = np.random.default_rng(3)
    estimates = [est(float(rng.uniform()), entropy_norm=float(rng.random()))
                 for _ in range(50)]
    labels = [int(rng.integers(0, 2)) for _ in range(50)]
    return build_report("mcd", estimates, labels)


def test_report_serializes_with_na_markers():
    report = full_report()
    obj = report_to_dict(report, meta={"seed": 1})
    from frauduq.container import dumps_canonical

    text = dumps_canonical(obj)  # must be JSON-serializable as-is
    assert '"method": "mcd"' in text

    csv = threshold_table_csv(report, meta={"seed": 1})
    lines = csv.splitlines()
    assert lines[1] == "threshold,tc,tu,fu,fc,uacc,usen,uspe,upre"
    assert len(lines) == 2 + 9

    hist_csv = entropy_histogram_csv(report)
    assert hist_csv.splitlines()[1] == "bin_lower,bin_upper,correct_count,incorrect_count"


def test_csv_uses_na_for_undefined_ratios():
    estimates, labels = fixture_counts(4, 0, 0, 0)
    report = build_report("mcd", estimates, labels)
    csv = threshold_table_csv(report)
    row = [line for line in csv.splitlines() if line.startswith("0.4,")][0]
    assert ",NA" in row


def test_reliability_svg_is_byte_deterministic(tmp_path):
    report = full_report()
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    meta = {"seed": 7, "config_digest": "abc123"}
    render_reliability_svg(report.calibration, a, meta)
    render_reliability_svg(report.calibration, b, meta)
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert "<svg" in text and "ECE" in text and "</svg>" in text
    # first line stamps the format version and provenance
    first = text.splitlines()[0]
    assert "version=1" in first and "seed=7" in first and "config_digest=abc123" in first


def test_reliability_svg_handles_empty_bins(tmp_path):
    # two occupied bins, eight empty ones: must render without NaNs
    estimates = [est(0.55), est(0.95)]
    report = build_report("mcd", estimates, [1, 1])
    out = tmp_path / "sparse.svg"
    render_reliability_svg(report.calibration, out)
    text = out.read_text()
    assert "nan" not in text.lower()
    assert text.count("<rect") >= 11  # frame + one bar per bin
