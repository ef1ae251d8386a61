"""Metrics tests: hand-derived values, brute-force oracle equivalence, and
rank-dependence properties."""

import json
from pathlib import Path

import numpy as np
import pytest

from litedet import metrics
from litedet.metrics import (
    Detection,
    GTBox,
    ap_11point,
    evaluate,
    iou,
    match_detections,
    mean_ap,
    precision_recall,
)

import oracles

FIXTURE = Path(metrics.__file__).parent / "data" / "eval_fixture"


def det(conf, box, cls=0, img="a"):
    return Detection(img, cls, conf, box)


def gt(box, cls=0, img="a"):
    return GTBox(img, cls, box)


class TestIoU:
    def test_identical(self):
        assert iou((0.5, 0.5, 0.2, 0.2), (0.5, 0.5, 0.2, 0.2)) == 1.0

    def test_disjoint(self):
        assert iou((0.2, 0.2, 0.1, 0.1), (0.8, 0.8, 0.1, 0.1)) == 0.0

    def test_corner_overlap_one_seventh(self):
        # xyxy [0,0,2,2] vs [1,1,3,3] as center boxes
        a = (1.0, 1.0, 2.0, 2.0)
        b = (2.0, 2.0, 2.0, 2.0)
        assert iou(a, b) == pytest.approx(1 / 7, abs=1e-12)

    def test_matches_independent_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = tuple(rng.uniform(0.1, 0.9, 2)) + tuple(rng.uniform(0.05, 0.5, 2))
            b = tuple(rng.uniform(0.1, 0.9, 2)) + tuple(rng.uniform(0.05, 0.5, 2))
            assert iou(a, b) == oracles.naive_iou(a, b)
            assert 0.0 <= iou(a, b) <= 1.0


class TestMatching:
    def test_no_detections(self):
        tp, matched = match_detections([], [gt((0.5, 0.5, 0.2, 0.2))], 0.5)
        assert tp.size == 0
        assert not matched.any()

    def test_exact_cover(self):
        box = (0.5, 0.5, 0.2, 0.2)
        tp, matched = match_detections([det(0.9, box)], [gt(box)], 0.5)
        assert tp.tolist() == [True]
        assert matched.tolist() == [True]

    def test_greedy_first_takes_the_gt(self):
        # higher-confidence detection with lower IoU still wins the only GT
        g = gt((0.5, 0.5, 0.4, 0.4))
        d1 = det(0.9, (0.56, 0.5, 0.4, 0.4))   # IoU ~ 0.58
        d2 = det(0.8, (0.53, 0.5, 0.4, 0.4))   # IoU ~ 0.74
        tp, _ = match_detections([d1, d2], [g], 0.5)
        assert tp.tolist() == [True, False]

    def test_confidence_tie_keeps_input_order(self):
        g = gt((0.5, 0.5, 0.2, 0.2))
        d1 = det(0.7, (0.5, 0.5, 0.2, 0.2))
        d2 = det(0.7, (0.5, 0.5, 0.2, 0.2))
        tp, _ = match_detections([d1, d2], [g], 0.5)
        assert tp.tolist() == [True, False]

    def test_iou_tie_takes_lowest_gt_index(self):
        box = (0.5, 0.5, 0.2, 0.2)
        g1, g2 = gt(box), gt(box)
        tp, matched = match_detections([det(0.9, box)], [g1, g2], 0.5)
        assert matched.tolist() == [True, False]


class TestPrecisionRecall:
    def test_examples(self):
        assert precision_recall(3, 1, 0)[0] == 0.75
        assert precision_recall(0, 0, 5) == (0.0, 0.0)
        assert precision_recall(5, 0, 5)[1] == 0.5


class TestAP:
    def test_perfect_ranking(self):
        assert ap_11point([True, True, True], 3) == 1.0

    def test_no_detections(self):
        assert ap_11point([], 5) == 0.0

    def test_hand_derived_fixture(self):
        # 2 GT, ranked flags (TP, FP, TP):
        # interpolated precision 1.0 for r <= 0.5, 2/3 above
        ap = ap_11point([True, False, True], 2)
        assert abs(ap - (6 * 1.0 + 5 * (2 / 3)) / 11) < 1e-12
        assert ap == pytest.approx(0.8485, abs=1e-4)

    def test_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            flags = rng.uniform(size=rng.integers(0, 8)) < 0.5
            n_gt = int(rng.integers(0, 6))
            assert 0.0 <= ap_11point(flags, n_gt) <= 1.0

    def test_rejects_negative_gt(self):
        with pytest.raises(ValueError):
            ap_11point([True], -1)


class TestMeanAP:
    def test_single_class(self):
        assert mean_ap([0.7]) == 0.7

    def test_two_classes(self):
        assert mean_ap([1.0, 0.0]) == 0.5
        ap = (6 * 1.0 + 5 * (2 / 3)) / 11
        assert mean_ap([ap, 1.0]) == pytest.approx((ap + 1.0) / 2, abs=1e-12)

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="empty"):
            mean_ap([])


def random_instance(rng):
    """Small random evaluation instance with a healthy TP/FP mix."""
    images = [f"im{i}" for i in range(int(rng.integers(1, 6)))]
    classes = list(range(int(rng.integers(1, 4))))
    gts, dets = [], []
    n_boxes = int(rng.integers(1, 13))
    n_gt = int(rng.integers(0, n_boxes + 1))
    for _ in range(n_gt):
        img = images[int(rng.integers(len(images)))]
        cls = classes[int(rng.integers(len(classes)))]
        box = (rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75),
               rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4))
        gts.append(GTBox(img, cls, box))
    for _ in range(n_boxes - n_gt):
        img = images[int(rng.integers(len(images)))]
        cls = classes[int(rng.integers(len(classes)))]
        if gts and rng.uniform() < 0.6:
            src = gts[int(rng.integers(len(gts)))]
            jitter = rng.uniform(-0.08, 0.08, 2)
            box = (src.box[0] + jitter[0], src.box[1] + jitter[1], src.box[2], src.box[3])
            img = src.image_id
            cls = src.class_id if rng.uniform() < 0.8 else cls
        else:
            box = (rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75),
                   rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4))
        dets.append(Detection(img, cls, float(rng.uniform()), box))
    return dets, gts


def random_separated_instance(rng):
    """Instance whose ground-truth boxes sit in distinct grid cells and never
    overlap each other."""
    images = [f"im{i}" for i in range(int(rng.integers(1, 4)))]
    cells = [(0.125 + 0.25 * i, 0.125 + 0.25 * j) for i in range(4) for j in range(4)]
    gts, dets = [], []
    for img in images:
        picks = rng.permutation(len(cells))[: int(rng.integers(1, 4))]
        for p in picks:
            cx, cy = cells[int(p)]
            box = (cx, cy, float(rng.uniform(0.1, 0.18)), float(rng.uniform(0.1, 0.18)))
            gts.append(GTBox(img, int(rng.integers(0, 2)), box))
    for g in gts:
        if rng.uniform() < 0.8:
            jitter = rng.uniform(-0.02, 0.02, 2)
            box = (g.box[0] + jitter[0], g.box[1] + jitter[1], g.box[2], g.box[3])
            dets.append(Detection(g.image_id, g.class_id, float(rng.uniform()), box))
        if rng.uniform() < 0.3:
            box = (rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.1, 0.1)
            dets.append(Detection(g.image_id, g.class_id, float(rng.uniform()), box))
    return dets, gts


class TestEvaluate:
    def test_perfect_detector(self):
        gts = [gt((0.3, 0.3, 0.2, 0.2), img="a"), gt((0.6, 0.6, 0.2, 0.2), cls=1, img="b")]
        dets = [det(1.0, g.box, cls=g.class_id, img=g.image_id) for g in gts]
        report = evaluate(dets, gts)
        assert report.precision == 1.0 and report.recall == 1.0 and report.mean_ap == 1.0

    def test_empty_detections(self):
        report = evaluate([], [gt((0.5, 0.5, 0.2, 0.2))])
        assert report.precision == 0.0 and report.recall == 0.0 and report.mean_ap == 0.0

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(250):
            dets, gts = random_instance(rng)
            report = evaluate(dets, gts, iou_thr=0.5)
            want_map, want_aps = oracles.naive_mean_ap(dets, gts, iou_thr=0.5)
            got_aps = {c.class_id: c.ap for c in report.classes if c.n_gt > 0}
            assert got_aps == want_aps
            assert report.mean_ap == want_map

    def test_ap_invariant_under_monotone_confidence_rescale(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            dets, gts = random_instance(rng)
            rescaled = [
                Detection(d.image_id, d.class_id, 0.25 + d.confidence / 2, d.box)
                for d in dets
            ]
            a = evaluate(dets, gts).mean_ap
            b = evaluate(rescaled, gts).mean_ap
            assert a == b

    def test_duplicating_a_detection_never_increases_ap(self):
        """With pairwise-disjoint ground truths, a duplicate can never claim a
        second box (its IoU with any other GT is < 0.5 < thr), so it is an FP
        once its GT is matched and AP cannot rise.  (With overlapping ground
        truths a duplicate may legitimately match the next unmatched box, so
        the property is stated under this separation precondition.)"""
        rng = np.random.default_rng(13)
        for _ in range(50):
            dets, gts = random_separated_instance(rng)
            if not dets:
                continue
            dup = dets[int(rng.integers(len(dets)))]
            before = evaluate(dets, gts, iou_thr=0.6).mean_ap
            after = evaluate(dets + [dup], gts, iou_thr=0.6).mean_ap
            assert after <= before + 1e-15

    def test_fixed_threshold_policy(self):
        box = (0.5, 0.5, 0.2, 0.2)
        dets = [det(0.9, box), det(0.3, (0.1, 0.1, 0.1, 0.1))]
        report = evaluate(dets, [gt(box)], policy="fixed:0.5")
        assert report.threshold == 0.5
        assert report.precision == 1.0 and report.recall == 1.0

    def test_unknown_policy_rejected(self):
        with pytest.raises(ValueError, match="policy"):
            evaluate([], [], policy="best-effort")
        with pytest.raises(ValueError, match="threshold"):
            evaluate([], [], policy="fixed:high")

    def test_spurious_class_gets_row_but_not_map_weight(self):
        box = (0.5, 0.5, 0.2, 0.2)
        dets = [det(1.0, box, cls=0), det(0.9, box, cls=7)]
        report = evaluate(dets, [gt(box, cls=0)])
        assert {c.class_id for c in report.classes} == {0, 7}
        assert report.mean_ap == 1.0  # class 7 has no ground truth


class TestFixture:
    def test_fixture_matches_committed_oracle_values(self):
        gts = metrics.load_ground_truth(FIXTURE / "gt")
        dets = metrics.load_detections(FIXTURE / "det")
        expected = json.loads((FIXTURE / "expected.json").read_text())
        report = evaluate(dets, gts, iou_thr=expected["iou_threshold"], policy=expected["policy"])
        assert report.mean_ap == expected["mean_ap"]
        for c in report.classes:
            assert c.ap == expected["per_class_ap"][str(c.class_id)]
        assert report.threshold == expected["threshold"]
        assert report.precision == expected["precision"]
        assert report.recall == expected["recall"]

    def test_fixture_still_matches_live_oracle(self):
        gts = metrics.load_ground_truth(FIXTURE / "gt")
        dets = metrics.load_detections(FIXTURE / "det")
        want_map, _ = oracles.naive_mean_ap(dets, gts, iou_thr=0.5)
        assert evaluate(dets, gts).mean_ap == want_map


class TestIO:
    def test_ground_truth_clipping(self, tmp_path):
        (tmp_path / "im.txt").write_text("0 0.05 0.5 0.2 0.2\n")
        boxes = metrics.load_ground_truth(tmp_path)
        cx, cy, w, h = boxes[0].box
        assert cx == pytest.approx(0.075) and w == pytest.approx(0.15)
        assert cy == 0.5 and h == pytest.approx(0.2)

    def test_degenerate_box_rejected(self, tmp_path):
        (tmp_path / "im.txt").write_text("0 -0.5 0.5 0.2 0.2\n")
        with pytest.raises(ValueError, match="no area"):
            metrics.load_ground_truth(tmp_path)

    def test_bad_confidence_rejected(self, tmp_path):
        (tmp_path / "im.txt").write_text("0 1.5 0.5 0.5 0.2 0.2\n")
        with pytest.raises(ValueError, match="confidence"):
            metrics.load_detections(tmp_path)

    def test_field_count_error_carries_line(self, tmp_path):
        (tmp_path / "im.txt").write_text("0 0.5 0.5 0.2\n")
        with pytest.raises(ValueError, match="im.txt:1"):
            metrics.load_ground_truth(tmp_path)

    def test_csv_and_markdown(self, tmp_path):
        gts = metrics.load_ground_truth(FIXTURE / "gt")
        dets = metrics.load_detections(FIXTURE / "det")
        report = evaluate(dets, gts)
        csv_path = tmp_path / "report.csv"
        metrics.write_eval_csv(report, csv_path)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "class,tp,fp,fn,precision,recall,ap"
        assert lines[-1].startswith("mAP,")
        assert float(lines[-1].split(",")[1]) == pytest.approx(report.mean_ap, abs=1e-6)
        md = metrics.format_markdown(report)
        assert "| class |" in md and "mAP" in md
