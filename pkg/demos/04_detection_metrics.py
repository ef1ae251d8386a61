"""Detection-metric walkthrough: IoU matching, the 11-point interpolated AP,
and a full evaluation of the bundled three-image fixture.
"""

import json

from litedet import metrics
from litedet.metrics import Detection, GTBox, ap_11point, evaluate, iou, match_detections

# --- IoU and greedy matching ----------------------------------------------------
a = (0.5, 0.5, 0.2, 0.2)
b = (0.55, 0.5, 0.2, 0.2)
print("IoU of identical boxes:", iou(a, a))
print("IoU of shifted boxes  :", round(iou(a, b), 4))

gt = [GTBox("im", 0, a)]
dets = [
    Detection("im", 0, 0.9, (0.56, 0.5, 0.3, 0.3)),  # confident, sloppier box
    Detection("im", 0, 0.8, (0.51, 0.5, 0.2, 0.2)),  # tighter but ranked second
]
tp, matched = match_detections(dets, gt, iou_thr=0.5)
print("greedy flags (confidence order wins):", tp.tolist())

# --- 11-point interpolated AP ----------------------------------------------------
# two ground truths, ranking TP, FP, TP:
# precision is 1.0 up to recall 0.5 and 2/3 beyond -> (6*1 + 5*2/3) / 11
ap = ap_11point([True, False, True], n_gt=2)
print("\nAP for ranking (TP, FP, TP) with 2 GT:", round(ap, 6),
      "=", "(6*1 + 5*2/3)/11")

# --- the bundled fixture ----------------------------------------------------------
fixture = metrics.__file__.rsplit("/", 1)[0] + "/data/eval_fixture"
gts = metrics.load_ground_truth(f"{fixture}/gt")
detections = metrics.load_detections(f"{fixture}/det")
report = evaluate(detections, gts, iou_thr=0.5, policy="max-f1")
expected = json.load(open(f"{fixture}/expected.json"))

print("\nfixture evaluation:")
for c in report.classes:
    print(f"  class {c.class_id}: GT={c.n_gt} TP={c.tp} FP={c.fp} FN={c.fn} "
          f"P={c.precision:.3f} R={c.recall:.3f} AP={c.ap:.4f}")
print(f"  mAP={report.mean_ap:.6f} at conf>={report.threshold} "
      f"(committed oracle value: {expected['mean_ap']:.6f})")
print("\nmarkdown report:\n")
print(metrics.format_markdown(report))
