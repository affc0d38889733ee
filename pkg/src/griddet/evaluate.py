"""Detection metrics: average precision, mAP, and a false-positive taxonomy.

AP uses greedy score-ordered matching at an IoU threshold and the
precision-envelope area under the PR curve (continuous variant by default,
11-point behind a flag). False positives are split into Loc / Sim / BG / Oth
by their overlap with same-class, similar-class, and other-class ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .assign import GroundTruth
from .boxes import Box, iou

FP_CATEGORIES = ("Loc", "Sim", "BG", "Oth")


class InvalidSimilarityGroupsError(ValueError):
    pass


@dataclass(frozen=True)
class DetRecord:
    """One scored detection, as exchanged through detection dumps."""

    image_id: int
    class_label: int
    score: float
    box: Box


@dataclass(frozen=True)
class PRPoint:
    recall: float
    precision: float
    score_threshold: float


@dataclass
class FPBreakdown:
    """Cumulative false-positive category counts over descending-score ranks."""

    ranks: list[int]
    counts: dict[str, list[int]]
    categories: list[str] = field(default_factory=list)  # per FP, score order

    def at_rank(self, k: int) -> dict[str, int]:
        idx = max(i for i, r in enumerate(self.ranks) if r <= k)
        return {cat: self.counts[cat][idx] for cat in FP_CATEGORIES}

    def totals(self) -> dict[str, int]:
        return {cat: (self.counts[cat][-1] if self.ranks else 0)
                for cat in FP_CATEGORIES}


def _score_order(scores: list[float]) -> list[int]:
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def match_detections(detections: list[tuple[int, float, Box]],
                     gts: dict[int, list[Box]],
                     iou_match: float = 0.5) -> list[bool]:
    """Greedy matching in score order for one class.

    A detection is a TP if it overlaps an unmatched ground truth of the same
    image with IoU >= iou_match (highest-IoU unmatched one is consumed);
    duplicates on matched ground truth are FPs. Equal scores break by index.
    Returns one TP flag per detection, in the input order.
    """
    used = {img: [False] * len(boxes) for img, boxes in gts.items()}
    flags = [False] * len(detections)
    for i in _score_order([d[1] for d in detections]):
        img, _, box = detections[i]
        best_j, best_iou = -1, 0.0
        for j, g in enumerate(gts.get(img, [])):
            if used.get(img, [])[j]:
                continue
            v = iou(box, g)
            if v >= iou_match and v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0:
            used[img][best_j] = True
            flags[i] = True
    return flags


def pr_points(detections: list[tuple[int, float, Box]],
              gts: dict[int, list[Box]],
              iou_match: float = 0.5) -> list[PRPoint]:
    """PR curve points in descending score order."""
    n_gt = sum(len(v) for v in gts.values())
    flags = match_detections(detections, gts, iou_match)
    order = _score_order([d[1] for d in detections])
    points = []
    tp = fp = 0
    for i in order:
        if flags[i]:
            tp += 1
        else:
            fp += 1
        recall = tp / n_gt if n_gt > 0 else 0.0
        points.append(PRPoint(recall, tp / (tp + fp), detections[i][1]))
    return points


def average_precision(detections: list[tuple[int, float, Box]],
                      gts: dict[int, list[Box]], iou_match: float = 0.5,
                      eleven_point: bool = False) -> float:
    """Area under the PR curve for one class.

    With no ground truth the AP is 0 (whether or not detections exist).
    """
    n_gt = sum(len(v) for v in gts.values())
    if n_gt == 0 or not detections:
        return 0.0
    points = pr_points(detections, gts, iou_match)
    recalls = np.array([0.0] + [p.recall for p in points])
    precisions = np.array([0.0] + [p.precision for p in points])
    # Monotone precision envelope from the right.
    env = np.maximum.accumulate(precisions[::-1])[::-1]
    if eleven_point:
        levels = np.linspace(0.0, 1.0, 11)
        vals = []
        for r in levels:
            ok = recalls >= r - 1e-12
            vals.append(float(env[ok].max()) if ok.any() else 0.0)
        return float(np.mean(vals))
    ap = 0.0
    for i in range(1, len(recalls)):
        ap += (recalls[i] - recalls[i - 1]) * env[i]
    return float(ap)


def mean_ap(per_class_detections: dict[int, list[tuple[int, float, Box]]],
            per_class_gts: dict[int, dict[int, list[Box]]],
            iou_match: float = 0.5, eleven_point: bool = False) -> float:
    """Unweighted mean AP over classes with at least one ground truth."""
    aps = []
    for cls, gts in per_class_gts.items():
        if sum(len(v) for v in gts.values()) == 0:
            continue
        aps.append(average_precision(per_class_detections.get(cls, []), gts,
                                     iou_match, eleven_point))
    return float(np.mean(aps)) if aps else 0.0


def _split_by_class(detections: list[DetRecord],
                    gts: dict[int, list[GroundTruth]], num_classes: int):
    per_cls_det = {c: [] for c in range(1, num_classes + 1)}
    for d in detections:
        per_cls_det.setdefault(d.class_label, []).append(
            (d.image_id, d.score, d.box))
    per_cls_gt = {c: {} for c in range(1, num_classes + 1)}
    for img, glist in gts.items():
        for g in glist:
            per_cls_gt.setdefault(g.class_label, {})
            per_cls_gt[g.class_label].setdefault(img, []).append(g.box)
    return per_cls_det, per_cls_gt


def evaluate_detections(detections: list[DetRecord],
                        gts: dict[int, list[GroundTruth]], num_classes: int,
                        iou_match: float = 0.5, eleven_point: bool = False):
    """Per-class AP and mAP for a full detection dump.

    Returns (per_class_ap, map_value)."""
    per_cls_det, per_cls_gt = _split_by_class(detections, gts, num_classes)
    per_class_ap = {}
    for c in range(1, num_classes + 1):
        n_gt = sum(len(v) for v in per_cls_gt.get(c, {}).values())
        if n_gt == 0:
            continue
        per_class_ap[c] = average_precision(per_cls_det.get(c, []),
                                            per_cls_gt[c], iou_match,
                                            eleven_point)
    m = float(np.mean(list(per_class_ap.values()))) if per_class_ap else 0.0
    return per_class_ap, m


def fp_breakdown(detections: list[DetRecord],
                 gts: dict[int, list[GroundTruth]],
                 similarity_groups, iou_match: float = 0.5,
                 rank_grid: list[int] | None = None) -> FPBreakdown:
    """Categorize every false positive.

    Loc: overlap >= 0.1 with a same-class ground truth (poor localization or
    a duplicate on an already-matched one). Sim: overlap >= 0.1 with a
    different class of the same similarity group. Oth: overlap >= 0.1 with a
    class of another group. BG: under 0.1 with everything. Precedence is
    Loc > Sim > Oth. Counts are cumulative over descending-score FP ranks.
    """
    classes = sorted(c for g in similarity_groups for c in g)
    if len(classes) != len(set(classes)) or \
            classes != list(range(1, len(classes) + 1)):
        raise InvalidSimilarityGroupsError(
            f"groups must partition 1..K, got {similarity_groups}")
    num_classes = len(classes)
    group_of = {c: gi for gi, g in enumerate(similarity_groups) for c in g}
    per_cls_det, per_cls_gt = _split_by_class(detections, gts, num_classes)

    fps: list[tuple[float, str]] = []
    for c in range(1, num_classes + 1):
        dets = per_cls_det.get(c, [])
        flags = match_detections(dets, per_cls_gt.get(c, {}), iou_match)
        for (img, score, box), is_tp in zip(dets, flags):
            if is_tp:
                continue
            max_same = 0.0
            max_sim = 0.0
            max_oth = 0.0
            for g in gts.get(img, []):
                v = iou(box, g.box)
                if g.class_label == c:
                    max_same = max(max_same, v)
                elif group_of[g.class_label] == group_of[c]:
                    max_sim = max(max_sim, v)
                else:
                    max_oth = max(max_oth, v)
            if max_same >= 0.1:
                cat = "Loc"
            elif max_sim >= 0.1:
                cat = "Sim"
            elif max_oth >= 0.1:
                cat = "Oth"
            else:
                cat = "BG"
            fps.append((score, cat))

    fps.sort(key=lambda t: -t[0])
    cats = [cat for _, cat in fps]
    ranks = rank_grid or list(range(1, len(fps) + 1))
    counts = {cat: [] for cat in FP_CATEGORIES}
    for r in ranks:
        head = cats[:r]
        for cat in FP_CATEGORIES:
            counts[cat].append(sum(1 for c_ in head if c_ == cat))
    return FPBreakdown(list(ranks), counts, cats)


def write_detection_dump(path, detections: list[DetRecord]):
    """Line-delimited JSON records: image id, class, score, box (cx cy w h)."""
    with open(path, "w") as f:
        f.write(json.dumps({"format_version": 1}) + "\n")
        for d in detections:
            f.write(json.dumps({
                "image_id": d.image_id,
                "class": d.class_label,
                "score": d.score,
                "box": [d.box.cx, d.box.cy, d.box.w, d.box.h],
            }) + "\n")


def read_detection_dump(path) -> list[DetRecord]:
    out = []
    with open(path) as f:
        header = json.loads(f.readline())
        if header.get("format_version") != 1:
            raise ValueError(f"unsupported detection dump version in {path}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(DetRecord(rec["image_id"], rec["class"], rec["score"],
                                 Box(*rec["box"])))
    return out


def format_report(per_class_ap: dict[int, float], map_value: float,
                  breakdown: FPBreakdown | None = None) -> str:
    lines = ["detection metrics report", ""]
    for c in sorted(per_class_ap):
        lines.append(f"class {c:>3}  AP = {per_class_ap[c]:.4f}")
    lines.append(f"mAP = {map_value:.4f}")
    if breakdown is not None:
        totals = breakdown.totals()
        lines.append("")
        lines.append("false positives by category (cumulative totals):")
        for cat in FP_CATEGORIES:
            lines.append(f"  {cat:<4} {totals[cat]}")
    return "\n".join(lines) + "\n"
