import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skyaug.evalmetrics import (
    ConfusionMatrix,
    LEAK_FOOTNOTE,
    confusion,
    evaluate_model,
    format_report,
    optimal_threshold,
    prf,
    roc_curve,
    write_report_csv,
    write_roc_csv,
)
from skyaug.pls import fit_pls2, images_to_design, maps_to_design


class TestConfusion:

    def test_hand_counts(self):
        scores = np.array([0.9, 0.8, 0.7, 0.6, 0.1])
        gt = np.array([True, True, True, False, True])
        cm = confusion(scores, gt, thr=0.5)
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == (3, 1, 0, 1)

    def test_threshold_is_inclusive(self):
        cm = confusion(np.array([0.5]), np.array([True]), thr=0.5)
        assert cm.tp == 1

    def test_minus_inf_predicts_everything(self):
        scores = np.array([0.1, 0.9])
        gt = np.array([False, True])
        cm = confusion(scores, gt, thr=-np.inf)
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == (1, 1, 0, 0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            confusion(np.zeros(3), np.zeros(4, dtype=bool), 0.0)


class TestRoc:

    def test_perfect_scores(self):
        gt = np.array([True, True, False, False])
        curve = roc_curve(np.array([0.9, 0.8, 0.2, 0.1]), gt)
        assert curve.auc == pytest.approx(1.0)

    def test_inverted_scores(self):
        gt = np.array([True, True, False, False])
        curve = roc_curve(np.array([0.1, 0.2, 0.8, 0.9]), gt)
        assert curve.auc == pytest.approx(0.0)

    def test_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(0)
        scores = rng.random(50)
        gt = rng.random(50) > 0.5
        curve = roc_curve(scores, gt)
        assert curve.points[0] == (np.inf, 0.0, 0.0)
        assert curve.points[-1] == (-np.inf, 1.0, 1.0)
        fpr = [p[1] for p in curve.points]
        tpr = [p[2] for p in curve.points]
        assert all(b >= a for a, b in zip(fpr, fpr[1:]))
        assert all(b >= a for a, b in zip(tpr, tpr[1:]))

    def test_points_match_confusion(self):
        rng = np.random.default_rng(1)
        scores = rng.random(40)
        gt = rng.random(40) > 0.4
        pos, neg = int(gt.sum()), int((~gt).sum())
        curve = roc_curve(scores, gt)
        for thr, fpr, tpr in curve.points[1:-1]:
            cm = confusion(scores, gt, thr)
            assert fpr == pytest.approx(cm.fp / neg)
            assert tpr == pytest.approx(cm.tp / pos)

    def test_tied_scores_collapse_to_one_point(self):
        scores = np.array([0.5, 0.5, 0.5, 0.5])
        gt = np.array([True, False, True, False])
        curve = roc_curve(scores, gt)
        assert len(curve.points) == 3
        assert curve.points[1] == (0.5, 1.0, 1.0)
        assert curve.auc == pytest.approx(0.5)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(2)
        scores = rng.standard_normal(60)
        gt = rng.random(60) > 0.5
        a = roc_curve(scores, gt).auc
        b = roc_curve(3.0 * scores + 7.0, gt).auc
        c = roc_curve(np.tanh(scores), gt).auc
        assert a == pytest.approx(b) and a == pytest.approx(c)

    def test_single_class_undefined(self):
        with pytest.raises(ValueError, match="single class"):
            roc_curve(np.array([0.1, 0.2]), np.array([True, True]))

    def test_csv(self, tmp_path):
        gt = np.array([True, False])
        curve = roc_curve(np.array([0.9, 0.1]), gt)
        p = tmp_path / "roc.csv"
        write_roc_csv(curve, p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "threshold,fpr,tpr"
        assert lines[1] == "inf,0.0,0.0"
        assert lines[-1] == "-inf,1.0,1.0"


class TestOptimalThreshold:

    def test_perfect_separation(self):
        gt = np.array([True, True, False, False])
        curve = roc_curve(np.array([0.9, 0.8, 0.2, 0.1]), gt)
        choice = optimal_threshold(curve)
        assert choice.criterion_value == pytest.approx(1.0)
        assert choice.thr == pytest.approx(0.8)

    def test_hand_built_curve(self):
        from skyaug.evalmetrics import RocCurve
        points = [(np.inf, 0.0, 0.0), (2.0, 0.1, 0.4), (1.0, 0.2, 0.9),
                  (0.25, 0.6, 1.0), (-np.inf, 1.0, 1.0)]
        choice = optimal_threshold(RocCurve(points=points, auc=0.0))
        assert choice.thr == pytest.approx(1.0)
        assert choice.criterion_value == pytest.approx(0.7)

    def test_tie_takes_larger_threshold(self):
        from skyaug.evalmetrics import RocCurve
        points = [(np.inf, 0.0, 0.0), (2.0, 0.1, 0.6), (1.0, 0.4, 0.9),
                  (-np.inf, 1.0, 1.0)]
        choice = optimal_threshold(RocCurve(points=points, auc=0.0))
        assert choice.thr == pytest.approx(2.0)

    def test_uninformative_scores(self):
        scores = np.full(10, 0.5)
        gt = np.arange(10) % 2 == 0
        choice = optimal_threshold(roc_curve(scores, gt))
        assert choice.criterion_value == pytest.approx(0.0)
        assert choice.thr == np.inf


class TestPrf:

    def test_hand_case(self):
        p, r, f = prf(ConfusionMatrix(tp=3, fp=1, tn=0, fn=1))
        assert p == pytest.approx(0.75)
        assert r == pytest.approx(0.75)
        assert f == pytest.approx(0.75)

    def test_no_predictions_no_positives(self):
        assert prf(ConfusionMatrix(0, 0, 5, 0)) == (0.0, 0.0, 0.0)

    def test_no_true_positives(self):
        p, r, f = prf(ConfusionMatrix(0, 3, 2, 4))
        assert (p, r, f) == (0.0, 0.0, 0.0)

    @given(tp=st.integers(0, 50), fp=st.integers(0, 50),
           tn=st.integers(0, 50), fn=st.integers(0, 50))
    @settings(max_examples=200)
    def test_bounds_and_betweenness(self, tp, fp, tn, fn):
        p, r, f = prf(ConfusionMatrix(tp, fp, tn, fn))
        assert 0.0 <= p <= 1.0 and 0.0 <= r <= 1.0 and 0.0 <= f <= 1.0
        if p > 0 and r > 0:
            assert min(p, r) - 1e-12 <= f <= max(p, r) + 1e-12


def separable_model_fixture():
    """Images that are their own maps scaled to 255: the regressor recovers
    the map exactly, so every derived metric is known."""
    rng = np.random.default_rng(7)
    maps = [rng.random((4, 4)) > 0.5 for _ in range(6)]
    images = [(m * 255).astype(np.uint8) for m in maps]
    X = images_to_design(images)
    Y = maps_to_design(maps)
    model = fit_pls2(X, Y, n_comp=5)
    return model, (X, Y), images, maps


class TestEvaluateModel:

    def test_perfect_model(self):
        model, train, images, maps = separable_model_fixture()
        report, curves = evaluate_model(model, train, images, maps)
        assert report.r2_train == pytest.approx(1.0, abs=1e-8)
        assert report.r2_test == pytest.approx(1.0, abs=1e-8)
        assert report.mean_precision == pytest.approx(1.0)
        assert report.mean_recall == pytest.approx(1.0)
        assert report.mean_f_score == pytest.approx(1.0)
        assert len(report.rows) == 6
        assert all(c is not None for c in curves)
        assert all(not r.degenerate for r in report.rows)

    def test_single_image_means(self):
        # pooled R² needs row variance; per_image keeps a one-image set legal
        model, train, images, maps = separable_model_fixture()
        report, _ = evaluate_model(model, train, images[:1], maps[:1],
                                   r2_mode="per_image")
        assert len(report.rows) == 1
        assert report.mean_f_score == report.rows[0].f_score

    def test_degenerate_all_cloud(self):
        model, train, images, maps = separable_model_fixture()
        img = np.full((4, 4), 255, dtype=np.uint8)
        gt = np.ones((4, 4), dtype=bool)
        report, curves = evaluate_model(model, train, [img, images[0]],
                                        [gt, maps[0]])
        assert curves[0] is None and curves[1] is not None
        row = report.rows[0]
        assert row.degenerate and not report.rows[1].degenerate
        # min-score threshold predicts everything: recall is forced to 1
        assert row.recall == pytest.approx(1.0)
        assert row.precision == pytest.approx(1.0)

    def test_degenerate_all_sky(self):
        model, train, images, maps = separable_model_fixture()
        img = np.zeros((4, 4), dtype=np.uint8)
        gt = np.zeros((4, 4), dtype=bool)
        report, curves = evaluate_model(model, train, [img, images[0]],
                                        [gt, maps[0]])
        row = report.rows[0]
        assert curves[0] is None and row.degenerate
        assert row.thr == np.inf
        assert (row.precision, row.recall, row.f_score) == (0.0, 0.0, 0.0)

    def test_report_csv(self, tmp_path):
        model, train, images, maps = separable_model_fixture()
        report, _ = evaluate_model(model, train, images, maps)
        p = tmp_path / "metrics.csv"
        write_report_csv(report, p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "image,precision,recall,f_score,thr,degenerate"
        assert len(lines) == 8
        assert lines[-1].startswith("mean,")

    def test_format_report(self):
        model, train, images, maps = separable_model_fixture()
        report, _ = evaluate_model(model, train, images, maps)
        text = format_report("baseline", report)
        assert text.startswith("[baseline]")
        assert "f_score = 1.0000" in text
        assert "6 test images" in text

    def test_footnote_mentions_leak(self):
        assert "ground truth" in LEAK_FOOTNOTE
