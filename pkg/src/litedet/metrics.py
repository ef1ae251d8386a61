"""Detection evaluation: IoU matching, precision/recall, 11-point interpolated
average precision, and mAP.

Box convention: (cx, cy, w, h), normalized to the unit square.  Ground-truth
files hold one `class cx cy w h` line per box; detection files hold
`class confidence cx cy w h`.  Matching is greedy in descending confidence at
a single IoU threshold; ties in confidence keep input order and ties in IoU
take the lowest ground-truth index, so results are fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RECALL_LEVELS = tuple(i / 10 for i in range(11))


@dataclass(frozen=True)
class GTBox:
    image_id: str
    class_id: int
    box: tuple  # (cx, cy, w, h) normalized


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    confidence: float
    box: tuple


@dataclass
class ClassEval:
    class_id: int
    n_gt: int
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    ap: float
    pr_points: list = field(default_factory=list)  # (recall, precision) down the ranking


@dataclass
class EvalReport:
    classes: list
    mean_ap: float
    threshold: float
    precision: float
    recall: float
    policy: str
    iou_threshold: float


def _corners(box):
    cx, cy, w, h = box
    return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2


def iou(a, b):
    """Intersection over union of two (cx, cy, w, h) boxes, in [0, 1]."""
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union if union > 0 else 0.0


def match_detections(dets, gts, iou_thr):
    """Greedy confidence-ordered matching within one class and one image.

    A detection is a true positive iff its best-IoU *unmatched* ground truth
    reaches `iou_thr`; each ground truth matches at most once.  Returns
    (tp flags aligned to the input detection order, per-GT matched flags).
    """
    tp = np.zeros(len(dets), dtype=bool)
    matched = np.zeros(len(gts), dtype=bool)
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    for i in order:
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if matched[j]:
                continue
            v = iou(dets[i].box, gt.box)
            if v > best_iou:  # strict: IoU ties keep the lowest GT index
                best_iou, best_j = v, j
        if best_j >= 0 and best_iou >= iou_thr:
            tp[i] = True
            matched[best_j] = True
    return tp, matched


def precision_recall(tp, fp, fn):
    """P = TP/(TP+FP), R = TP/(TP+FN); 0 when the denominator is 0."""
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    return p, r


def ap_11point(flags, n_gt):
    """Interpolated AP over the 11 uniform recall levels {0.0, 0.1, ..., 1.0}.

    `flags` are per-detection TP booleans already ranked by confidence.  For
    each level the maximum precision among ranking prefixes whose recall
    reaches that level is taken (0 when none does).
    """
    if n_gt < 0:
        raise ValueError(f"ground-truth count must be >= 0, got {n_gt}")
    flags = np.asarray(flags, dtype=bool)
    if n_gt == 0 or flags.size == 0:
        return 0.0
    cum_tp = np.cumsum(flags)
    recalls = cum_tp / n_gt
    precisions = cum_tp / np.arange(1, flags.size + 1)
    total = 0.0
    for r in RECALL_LEVELS:
        mask = recalls >= r
        total += precisions[mask].max() if mask.any() else 0.0
    return total / 11


def mean_ap(aps):
    """Arithmetic mean of per-class APs; an empty class set is rejected."""
    aps = list(aps)
    if not aps:
        raise ValueError("mean AP over an empty class set")
    return sum(aps) / len(aps)


def _ranked_class_flags(dets, gts, class_id, iou_thr):
    """Rank one class's detections by confidence and flag TPs.

    Returns (ranked detection indices into `dets`, tp flags, n_gt).
    """
    det_idx = [i for i, d in enumerate(dets) if d.class_id == class_id]
    gts_c = [g for g in gts if g.class_id == class_id]
    confs = np.array([dets[i].confidence for i in det_idx])
    order = np.argsort(-confs, kind="stable")
    ranked = [det_idx[int(k)] for k in order]

    flags = np.zeros(len(ranked), dtype=bool)
    by_image = {}
    for pos, i in enumerate(ranked):
        by_image.setdefault(dets[i].image_id, []).append(pos)
    for image_id, positions in by_image.items():
        group = [dets[ranked[p]] for p in positions]
        group_gts = [g for g in gts_c if g.image_id == image_id]
        tp, _ = match_detections(group, group_gts, iou_thr)
        for p, f in zip(positions, tp):
            flags[p] = f
    return ranked, flags, len(gts_c)


def evaluate(dets, gts, iou_thr=0.5, policy="max-f1"):
    """Full evaluation over a detection/ground-truth corpus.

    AP and mAP use every detection regardless of confidence.  The single
    reported P/R pair is taken at one confidence threshold: the one maximizing
    micro-averaged F1 (`max-f1`, ties resolved toward the higher threshold) or
    a fixed value (`fixed:<t>`).  mAP averages APs of classes that have ground
    truth; spurious classes still get report rows.
    """
    if policy == "max-f1":
        fixed_thr = None
    elif policy.startswith("fixed:"):
        try:
            fixed_thr = float(policy.split(":", 1)[1])
        except ValueError as e:
            raise ValueError(f"bad threshold in policy {policy!r}") from e
    else:
        raise ValueError(f"unknown threshold policy {policy!r}")

    class_ids = sorted({g.class_id for g in gts} | {d.class_id for d in dets})
    per_class = {}
    for c in class_ids:
        ranked, flags, n_gt = _ranked_class_flags(dets, gts, c, iou_thr)
        confs = np.array([dets[i].confidence for i in ranked])
        per_class[c] = (confs, flags, n_gt)

    total_gt = sum(v[2] for v in per_class.values())

    def counts_at(thr):
        tp = fp = kept = 0
        for confs, flags, _ in per_class.values():
            k = int(np.searchsorted(-confs, -thr, side="right"))
            t = int(np.count_nonzero(flags[:k]))
            tp += t
            kept += k
        fp = kept - tp
        return tp, fp, total_gt - tp

    if fixed_thr is not None:
        threshold = fixed_thr
    else:
        threshold, best_f1 = 1.0, -1.0
        candidates = sorted({d.confidence for d in dets}, reverse=True)
        for t in candidates:
            tp, fp, fn = counts_at(t)
            p, r = precision_recall(tp, fp, fn)
            f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
            if f1 > best_f1:
                best_f1, threshold = f1, t

    rows = []
    gt_class_aps = []
    for c in class_ids:
        confs, flags, n_gt = per_class[c]
        ap = ap_11point(flags, n_gt)
        if n_gt > 0:
            gt_class_aps.append(ap)
        k = int(np.searchsorted(-confs, -threshold, side="right"))
        tp = int(np.count_nonzero(flags[:k]))
        fp = k - tp
        fn = n_gt - tp
        p, r = precision_recall(tp, fp, fn)
        cum_tp = np.cumsum(flags)
        points = list(zip(
            (cum_tp / n_gt).tolist() if n_gt else [0.0] * flags.size,
            (cum_tp / np.arange(1, flags.size + 1)).tolist(),
        ))
        rows.append(ClassEval(c, n_gt, tp, fp, fn, p, r, ap, points))

    tp, fp, fn = counts_at(threshold) if class_ids else (0, 0, 0)
    p, r = precision_recall(tp, fp, fn)
    m_ap = mean_ap(gt_class_aps) if gt_class_aps else 0.0
    return EvalReport(
        classes=rows,
        mean_ap=m_ap,
        threshold=threshold,
        precision=p,
        recall=r,
        policy=policy,
        iou_threshold=iou_thr,
    )


# ---------------------------------------------------------------------------
# file formats


def _clip_box(cx, cy, w, h):
    """Clip box edges to the unit square and re-derive center/size."""
    x1, y1, x2, y2 = _corners((cx, cy, w, h))
    x1, y1 = max(0.0, x1), max(0.0, y1)
    x2, y2 = min(1.0, x2), min(1.0, y2)
    return ((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)


def _parse_lines(path, n_fields):
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != n_fields:
            raise ValueError(f"{path}:{lineno}: expected {n_fields} fields, got {len(parts)}")
        yield lineno, parts


def load_ground_truth(directory):
    """Load `class cx cy w h` label files; the file stem is the image id.

    Boxes are clipped to the unit square on load; boxes that clip to zero
    area are rejected.
    """
    boxes = []
    for path in sorted(Path(directory).glob("*.txt")):
        for lineno, parts in _parse_lines(path, 5):
            cls = int(parts[0])
            box = _clip_box(*(float(v) for v in parts[1:]))
            if box[2] <= 0 or box[3] <= 0:
                raise ValueError(f"{path}:{lineno}: box has no area inside the unit square")
            boxes.append(GTBox(path.stem, cls, box))
    return boxes


def load_detections(directory):
    """Load `class confidence cx cy w h` files; the file stem is the image id."""
    dets = []
    for path in sorted(Path(directory).glob("*.txt")):
        for lineno, parts in _parse_lines(path, 6):
            cls = int(parts[0])
            conf = float(parts[1])
            if not (np.isfinite(conf) and 0.0 <= conf <= 1.0):
                raise ValueError(f"{path}:{lineno}: confidence {conf} outside [0, 1]")
            box = tuple(float(v) for v in parts[2:])
            dets.append(Detection(path.stem, cls, conf, box))
    return dets


def write_eval_csv(report, path):
    lines = ["class,tp,fp,fn,precision,recall,ap"]
    for c in report.classes:
        lines.append(
            f"{c.class_id},{c.tp},{c.fp},{c.fn},"
            f"{c.precision:.6f},{c.recall:.6f},{c.ap:.6f}"
        )
    lines.append(f"mAP,{report.mean_ap:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def format_markdown(report):
    lines = [
        f"| class | GT | TP | FP | FN | P | R | AP@{report.iou_threshold:g} |",
        "|---|---|---|---|---|---|---|---|",
    ]
    for c in report.classes:
        lines.append(
            f"| {c.class_id} | {c.n_gt} | {c.tp} | {c.fp} | {c.fn} "
            f"| {c.precision:.4f} | {c.recall:.4f} | {c.ap:.4f} |"
        )
    lines.append("")
    lines.append(
        f"mAP = **{report.mean_ap:.4f}**; P = {report.precision:.4f}, "
        f"R = {report.recall:.4f} at confidence >= {report.threshold:.4f} "
        f"(policy: {report.policy})"
    )
    return "\n".join(lines) + "\n"
