"""Detection and classification scoring.

Average precision uses the all-point interpolation: the area under the
monotone (running-maximum from the right) precision envelope of the
ranked detection list.  Detection matching is greedy in confidence
order; a detection matches the best-scoring not-yet-matched ground truth
of its image under the chosen criterion, and duplicates on an already
matched ground truth count as false positives.

Two hit criteria are supported: ``iou`` (intersection over union at
least the threshold) and ``inclusion`` (at least the threshold fraction
of the detection's area lies inside the ground truth box, regardless of
the overlap ratio).

Confidence ties are broken by image id and then by rectangle coordinates
so precision-recall curves are deterministic.
"""

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .agent import Episode
from .geometry import Rect, containment_fraction, iou

__all__ = [
    "Detection",
    "MatchCriterion",
    "CostSummary",
    "ClassReport",
    "EvalReport",
    "nms",
    "detection_ap",
    "classification_ap",
    "cost_report",
]


@dataclass(frozen=True)
class Detection:
    image_id: int
    rect: Rect
    confidence: float

    def __post_init__(self):
        if not np.isfinite(self.confidence):
            raise ValueError("detection confidence must be finite")


@dataclass(frozen=True)
class MatchCriterion:
    kind: str  # "iou" or "inclusion"
    threshold: float = 0.5

    def __post_init__(self):
        if self.kind not in ("iou", "inclusion"):
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if not (0.0 < self.threshold <= 1.0):
            raise ValueError("criterion threshold must be in (0, 1]")

    def value(self, gt: Rect, det: Rect) -> float:
        if self.kind == "iou":
            return iou(gt, det)
        return containment_fraction(gt, det)

    def hit(self, gt: Rect, det: Rect) -> bool:
        return self.value(gt, det) >= self.threshold


def nms(detections: Sequence[Detection], threshold: float) -> list[Detection]:
    """Greedy non-maximum suppression for one image's detections."""
    if not (0.0 < threshold <= 1.0):
        raise ValueError("nms threshold must be in (0, 1]")
    pending = sorted(
        detections, key=lambda d: (-d.confidence, d.rect.as_tuple())
    )
    kept: list[Detection] = []
    for det in pending:
        if all(iou(det.rect, k.rect) < threshold for k in kept):
            kept.append(det)
    return kept


def _ranked(detections: Sequence[Detection]) -> list[Detection]:
    return sorted(
        detections,
        key=lambda d: (-d.confidence, d.image_id, d.rect.as_tuple()),
    )


def _envelope_ap(recalls: np.ndarray, precisions: np.ndarray) -> float:
    mrec = np.concatenate([[0.0], recalls, [1.0]])
    mpre = np.concatenate([[0.0], precisions, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


def detection_ap(
    detections: Sequence[Detection],
    ground_truths: Mapping[int, Sequence[Rect]],
    criterion: MatchCriterion,
) -> float | None:
    """AP of the ranked detection list; ``None`` when there is no ground
    truth at all (undefined rather than zero)."""
    total_gt = sum(len(v) for v in ground_truths.values())
    if total_gt == 0:
        return None
    matched: dict[int, set[int]] = {img: set() for img in ground_truths}
    tps = []
    for det in _ranked(detections):
        gts = ground_truths.get(det.image_id, ())
        best_idx = -1
        best_val = 0.0
        for gi, gt in enumerate(gts):
            if gi in matched.get(det.image_id, set()):
                continue
            val = criterion.value(gt, det.rect)
            if val >= criterion.threshold and (best_idx < 0 or val > best_val):
                best_idx, best_val = gi, val
        if best_idx >= 0:
            matched[det.image_id].add(best_idx)
            tps.append(1.0)
        else:
            tps.append(0.0)
    if not tps:
        return 0.0
    tp = np.cumsum(tps)
    ranks = np.arange(1, len(tps) + 1)
    return _envelope_ap(tp / total_gt, tp / ranks)


def classification_ap(
    scores: Mapping[int, float], labels: Mapping[int, int]
) -> float:
    """AP of the ranked image list; ties broken by image id."""
    if set(scores) != set(labels):
        raise ValueError("scores and labels must cover the same images")
    n_pos = sum(1 for v in labels.values() if v == 1)
    if n_pos == 0:
        raise ValueError("classification AP needs at least one positive image")
    order = sorted(scores, key=lambda img: (-scores[img], img))
    hits = np.array([1.0 if labels[img] == 1 else 0.0 for img in order])
    tp = np.cumsum(hits)
    ranks = np.arange(1, len(order) + 1)
    return _envelope_ap(tp / n_pos, tp / ranks)


@dataclass(frozen=True)
class CostSummary:
    mean_fraction: float
    std_fraction: float
    count_speedup: float  # exhaustive region evaluations / sequential ones
    wallclock_speedup: float | None


def cost_report(
    episodes: Sequence[Episode],
    exhaustive_seconds: float | None = None,
    sequential_seconds: float | None = None,
) -> CostSummary:
    """Evaluated-region cost of a sequential run against exhaustive scoring."""
    if not episodes:
        raise ValueError("cost report needs at least one episode")
    fractions = np.array([e.evaluated_fraction for e in episodes])
    total_regions = sum(e.total_regions for e in episodes)
    evaluated = sum(e.evaluated_regions for e in episodes)
    wallclock = None
    if exhaustive_seconds is not None and sequential_seconds:
        wallclock = exhaustive_seconds / sequential_seconds
    return CostSummary(
        mean_fraction=float(fractions.mean()),
        std_fraction=float(fractions.std()),
        count_speedup=total_regions / evaluated,
        wallclock_speedup=wallclock,
    )


@dataclass(frozen=True)
class ClassReport:
    class_id: int
    ap_iou: float | None
    ap_inclusion: float | None
    ap_classification: float
    ap_iou_std: float | None = None
    ap_inclusion_std: float | None = None
    ap_classification_std: float | None = None
    evaluated_fraction: float | None = None
    evaluated_fraction_std: float | None = None
    count_speedup: float | None = None
    wallclock_per_image: float | None = None
    wallclock_speedup: float | None = None


@dataclass(frozen=True)
class EvalReport:
    method: str
    dataset_hash: str
    sequential: bool
    repeats: int
    classes: tuple[ClassReport, ...]

    def mean_row(self) -> ClassReport:
        def agg(field):
            vals = [getattr(c, field) for c in self.classes]
            vals = [v for v in vals if v is not None]
            return float(np.mean(vals)) if vals else None

        return ClassReport(
            class_id=-1,
            ap_iou=agg("ap_iou"),
            ap_inclusion=agg("ap_inclusion"),
            ap_classification=agg("ap_classification"),
            ap_iou_std=agg("ap_iou_std"),
            ap_inclusion_std=agg("ap_inclusion_std"),
            ap_classification_std=agg("ap_classification_std"),
            evaluated_fraction=agg("evaluated_fraction"),
            evaluated_fraction_std=agg("evaluated_fraction_std"),
            count_speedup=agg("count_speedup"),
            wallclock_per_image=agg("wallclock_per_image"),
            wallclock_speedup=agg("wallclock_speedup"),
        )
