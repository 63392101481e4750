"""Detection evaluation: IoU, NMS, matching, PR curves, AP and mAP.

Conventions (all deterministic):

* Detections are ranked by descending confidence; equal confidences keep
  input order. When pooling across images the ranking key is
  ``(-confidence, image index, position in image)``.
* Matching is greedy in rank order. A detection takes the unmatched
  same-class truth with the highest IoU that is ``>= iou_thresh``; IoU ties go
  to the lowest truth index. Cross-class matches never happen.
* AP uses all-points interpolation: precision is replaced by its running
  maximum from the right and integrated over recall.
* mAP averages only over classes that have at least one truth.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from canline.geometry import BoundingBox, Detection, TruthBox, area

IOU_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

METRICS_HEADER = ("epoch", "precision", "recall", "map50", "map50_95")

# a ranked detection reduced to what the curves need
Ranked = tuple[float, bool]


class EmptyGroundTruthError(ValueError):
    def __init__(self):
        super().__init__("empty ground truth")


class MetricsTableError(ValueError):
    def __init__(self, reason: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {reason}" if row is not None else reason)


@dataclass(frozen=True)
class MatchOutcome:
    """Match result for one image.

    ``detections`` is in rank order and ``tp[i]`` says whether
    ``detections[i]`` matched a truth.
    """

    detections: list[Detection]
    tp: list[bool]
    num_gt: int
    # truth index matched by each ranked detection, or -1
    matched_gt: list[int] = field(default_factory=list)

    @property
    def tp_count(self) -> int:
        return sum(self.tp)

    @property
    def fp_count(self) -> int:
        return len(self.tp) - self.tp_count

    @property
    def fn_count(self) -> int:
        return self.num_gt - self.tp_count

    def ranked(self) -> list[Ranked]:
        return [(d.confidence, t) for d, t in zip(self.detections, self.tp)]


@dataclass(frozen=True)
class PRPoint:
    recall: float
    precision: float
    confidence: float


@dataclass(frozen=True)
class MetricsReport:
    epoch: int
    precision: float
    recall: float
    map50: float
    map50_95: float


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = area(a) + area(b) - inter
    if union <= 0:
        return 0.0
    return inter / union


def rank_order(dets: Sequence[Detection]) -> list[int]:
    """Indices of ``dets`` by descending confidence, stable on ties."""
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def nms(dets: Sequence[Detection], iou_thresh: float = 0.45) -> list[Detection]:
    """Greedy per-class non-maximum suppression."""
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError(f"iou_thresh must be in (0, 1), got {iou_thresh}")
    kept: list[Detection] = []
    for i in rank_order(dets):
        d = dets[i]
        if all(k.label.name != d.label.name or iou(k.box, d.box) < iou_thresh for k in kept):
            kept.append(d)
    return kept


def match_detections(
    dets: Sequence[Detection], gts: Sequence[TruthBox], iou_thresh: float = 0.5
) -> MatchOutcome:
    if not 0.0 < iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must be in (0, 1], got {iou_thresh}")
    taken = [False] * len(gts)
    ranked, flags, which = [], [], []
    for i in rank_order(dets):
        d = dets[i]
        best, best_iou = -1, 0.0
        for j, g in enumerate(gts):
            if taken[j] or g.label.name != d.label.name:
                continue
            v = iou(d.box, g.box)
            if v >= iou_thresh and v > best_iou:
                best, best_iou = j, v
        if best >= 0:
            taken[best] = True
        ranked.append(d)
        flags.append(best >= 0)
        which.append(best)
    return MatchOutcome(ranked, flags, len(gts), which)


def pr_curve(ranked: Iterable[Ranked], num_gt: int) -> list[PRPoint]:
    if num_gt < 0:
        raise ValueError("num_gt must be >= 0")
    points = []
    tp = 0
    for k, (conf, is_tp) in enumerate(ranked, start=1):
        tp += bool(is_tp)
        recall = tp / num_gt if num_gt else 0.0
        points.append(PRPoint(recall, tp / k, conf))
    return points


def average_precision(curve: Sequence[PRPoint]) -> float:
    if not curve:
        return 0.0
    recall = [0.0] + [p.recall for p in curve]
    precision = [0.0] + [p.precision for p in curve]
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    return sum(
        (recall[i + 1] - recall[i]) * precision[i + 1] for i in range(len(recall) - 1)
    )


def _align(dets_by_image, gts_by_image) -> tuple[list, list]:
    if isinstance(gts_by_image, Mapping) or isinstance(dets_by_image, Mapping):
        dets_by_image = dict(dets_by_image)
        gts_by_image = dict(gts_by_image)
        keys = list(gts_by_image) + [k for k in dets_by_image if k not in gts_by_image]
        return (
            [dets_by_image.get(k, []) for k in keys],
            [gts_by_image.get(k, []) for k in keys],
        )
    dets_by_image, gts_by_image = list(dets_by_image), list(gts_by_image)
    if len(dets_by_image) != len(gts_by_image):
        raise ValueError("detections and ground truth cover a different number of images")
    return dets_by_image, gts_by_image


def pooled_outcomes(
    dets_by_image, gts_by_image, iou_thresh: float
) -> tuple[dict[str, list[Ranked]], dict[str, int]]:
    """Per-class ranked (confidence, tp) lists pooled over images, and truth counts."""
    dets_list, gts_list = _align(dets_by_image, gts_by_image)
    per_class: dict[str, list[Ranked]] = {}
    num_gt: dict[str, int] = {}
    for dets, gts in zip(dets_list, gts_list):
        for g in gts:
            num_gt[g.label.name] = num_gt.get(g.label.name, 0) + 1
        outcome = match_detections(dets, gts, iou_thresh)
        for d, t in zip(outcome.detections, outcome.tp):
            per_class.setdefault(d.label.name, []).append((d.confidence, t))
    for name, ranked in per_class.items():
        ranked.sort(key=lambda r: -r[0])
    return per_class, num_gt


def class_average_precisions(dets_by_image, gts_by_image, iou_thresh: float) -> dict[str, float]:
    per_class, num_gt = pooled_outcomes(dets_by_image, gts_by_image, iou_thresh)
    if not num_gt:
        raise EmptyGroundTruthError()
    return {
        name: average_precision(pr_curve(per_class.get(name, []), n))
        for name, n in num_gt.items()
    }


def map_at(dets_by_image, gts_by_image, iou_thresh: float = 0.5) -> float:
    aps = class_average_precisions(dets_by_image, gts_by_image, iou_thresh)
    return sum(aps.values()) / len(aps)


def map_range(dets_by_image, gts_by_image, thresholds: Sequence[float] = IOU_THRESHOLDS) -> float:
    values = [map_at(dets_by_image, gts_by_image, t) for t in thresholds]
    return sum(values) / len(values)


def precision_confidence_curve(ranked: Iterable[Ranked]) -> list[tuple[float, float]]:
    """(confidence, precision) for every distinct confidence, highest first.

    Precision at ``c`` is computed over all detections with confidence >= c.
    """
    ordered = sorted(ranked, key=lambda r: -r[0])
    out: list[tuple[float, float]] = []
    tp = 0
    for k, (conf, is_tp) in enumerate(ordered, start=1):
        tp += bool(is_tp)
        if k < len(ordered) and ordered[k][0] == conf:
            continue
        out.append((conf, tp / k))
    return out


def precision_confidence_curves(
    per_class: Mapping[str, Sequence[Ranked]],
) -> dict[str, list[tuple[float, float]]]:
    """Per-class curves plus an ``"all"`` curve over every class pooled."""
    pooled = [r for name in per_class for r in per_class[name]]
    curves = {"all": precision_confidence_curve(pooled)}
    for name, ranked in per_class.items():
        curves[name] = precision_confidence_curve(ranked)
    return curves


def precision_recall_at(ranked: Iterable[Ranked], num_gt: int, conf_thresh: float) -> tuple[float, float]:
    kept = [t for c, t in ranked if c >= conf_thresh]
    tp = sum(kept)
    precision = tp / len(kept) if kept else 0.0
    recall = tp / num_gt if num_gt else 0.0
    return precision, recall


def evaluate(dets_by_image, gts_by_image, conf_thresh: float = 0.25) -> dict:
    """Full metric summary: precision/recall at ``conf_thresh`` (IoU 0.5),
    mAP@0.5, mAP@0.5:0.95, per-class AP and the curves at IoU 0.5."""
    per_class, num_gt = pooled_outcomes(dets_by_image, gts_by_image, 0.5)
    if not num_gt:
        raise EmptyGroundTruthError()
    pooled = sorted((r for name in per_class for r in per_class[name]), key=lambda r: -r[0])
    precision, recall = precision_recall_at(pooled, sum(num_gt.values()), conf_thresh)

    ap_by_threshold = [class_average_precisions(dets_by_image, gts_by_image, t) for t in IOU_THRESHOLDS]
    ap50 = ap_by_threshold[0]
    per_class_ap = {
        name: {
            "ap50": ap50[name],
            "ap50_95": sum(aps[name] for aps in ap_by_threshold) / len(ap_by_threshold),
            "num_gt": num_gt[name],
        }
        for name in num_gt
    }
    return {
        "conf_thresh": conf_thresh,
        "precision": precision,
        "recall": recall,
        "map50": sum(ap50.values()) / len(ap50),
        "map50_95": sum(sum(a.values()) / len(a) for a in ap_by_threshold) / len(ap_by_threshold),
        "per_class": per_class_ap,
        "pr_curve": pr_curve(pooled, sum(num_gt.values())),
        "confidence_precision": precision_confidence_curves(per_class),
    }


def curve_csv(rows: Iterable[tuple[float, float]], header: tuple[str, str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for a, b in rows:
        w.writerow([repr(float(a)), repr(float(b))])
    return buf.getvalue()


def _fraction(value: str, name: str, row: int) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise MetricsTableError(f"{name} is not a number: {value!r}", row) from None
    if not 0.0 <= v <= 1.0:
        raise MetricsTableError(f"{name} out of range [0, 1]: {v}", row)
    return v


def ingest_metrics_table(text: str) -> list[MetricsReport]:
    """Parse an ``epoch,precision,recall,map50,map50_95`` CSV. Rows count from 1."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != METRICS_HEADER:
        raise MetricsTableError(f"header must be {','.join(METRICS_HEADER)}")
    reports = []
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(METRICS_HEADER):
            raise MetricsTableError(f"expected {len(METRICS_HEADER)} fields, got {len(row)}", row_no)
        try:
            epoch = int(row[0])
        except ValueError:
            raise MetricsTableError(f"epoch is not an integer: {row[0]!r}", row_no) from None
        values = [_fraction(v.strip(), n, row_no) for v, n in zip(row[1:], METRICS_HEADER[1:])]
        reports.append(MetricsReport(epoch, *values))
    return reports


def format_metrics_table(reports: Sequence[MetricsReport]) -> str:
    lines = [f"{'epoch':>6} {'precision':>10} {'recall':>10} {'map50':>10} {'map50_95':>10}"]
    for r in reports:
        lines.append(
            f"{r.epoch:>6} {r.precision!r:>10} {r.recall!r:>10} {r.map50!r:>10} {r.map50_95!r:>10}"
        )
    return "\n".join(lines)


def summary_line(report: MetricsReport) -> str:
    return (
        f"final epoch {report.epoch}: precision {report.precision!r} recall {report.recall!r} "
        f"map50 {report.map50!r} map50_95 {report.map50_95!r}"
    )
