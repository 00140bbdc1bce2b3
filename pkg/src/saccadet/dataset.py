"""Synthetic scene generation, bag construction and on-disk persistence.

A scene is a set of axis-aligned candidate regions on the unit canvas,
each carrying a feature vector.  Positive scenes plant three kinds of
appearance signal around a ground-truth box:

* the *signature*: spread over the whole ground-truth box, this is the
  cue a well-localized detector should learn;
* the *pattern*: concentrated on a small sub-part of the box and shared
  across scenes, so a classifier firing on it separates positive from
  negative scenes while localizing only the sub-part;
* the *context*: planted on clutter boxes far from the target, present
  only in positive scenes, so detectors trained on whole-scene bags can
  separate scenes without localizing anything.

A region's appearance component for an emitter with support ``E`` is
``mass * |r & E|^2 / (|r| * |E|)``, which peaks at 1 when the region
matches the support exactly and dilutes symmetrically as the region
grows past the support or shrinks inside it.  The last five feature
components are always the geometric descriptor (center x, center y,
width, height, aspect ratio).

Scenes also carry a simulated fixation subset: roughly one third of the
regions, biased towards regions overlapping the ground truth, always
including at least one region with IoU >= 0.5.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import Rect, containment_fraction, fringe_set, intersection_area, iou

__all__ = [
    "GeneratorConfig",
    "Region",
    "SyntheticImage",
    "Bag",
    "Dataset",
    "DatasetFormatError",
    "MODE_EYE",
    "MODE_IL",
    "MODE_BB",
    "generate",
    "make_bags",
    "save",
    "load",
    "file_hash",
    "calibration_summary",
    "instance_target_labels",
]

GEOMETRY_DESCRIPTOR_SIZE = 5
SPLITS = ("train", "val", "test")

MODE_EYE = "eye"
MODE_IL = "il"
MODE_BB = "bb"

ROLE_CANVAS = "canvas"
ROLE_TARGET = "target"
ROLE_PART = "part"
ROLE_SUBPART = "subpart"
ROLE_FRINGE = "fringe"
ROLE_CONTEXT = "context"
ROLE_CLUTTER = "clutter"

# Structural regions per positive image: canvas + one tight full-extent
# box + contained part-target boxes (still above the detection overlap
# threshold) + contained part boxes (below it) + tiny pattern subparts +
# sloppy oversized fringe + context; everything beyond is clutter.
_N_PART_TARGETS = 3
_N_PARTS = 3
_N_SUBPARTS = 3
_N_FRINGE = 3
_N_CONTEXT = 3
_STRUCTURAL = 2 + _N_PART_TARGETS + _N_PARTS + _N_SUBPARTS + _N_FRINGE + _N_CONTEXT


class DatasetFormatError(Exception):
    """Raised when a dataset file is malformed, truncated or incompatible."""


@dataclass(frozen=True)
class GeneratorConfig:
    images: int = 80
    regions_per_image: tuple[int, int] = (18, 30)
    feature_dim: int = 24
    signature_separation: float = 3.0
    subpart_pattern_strength: float = 3.5
    context_strength: float = 5.0
    noise_scale: float = 0.8
    fixation_fraction: float = 0.34
    fixation_best_bias: float = 0.3  # chance the top-overlap region is fixated
    classes: int = 1
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.regions_per_image
        if self.images < 8:
            raise ValueError("need at least 8 images for stratified splits")
        if not (_STRUCTURAL + 1 <= lo <= hi):
            raise ValueError(
                f"regions_per_image range must satisfy {_STRUCTURAL + 1} <= lo <= hi"
            )
        if self.classes < 1:
            raise ValueError("classes must be at least 1")
        min_dim = GEOMETRY_DESCRIPTOR_SIZE + self.classes + 2
        if self.feature_dim < min_dim:
            raise ValueError(f"feature_dim must be at least {min_dim}")
        for name in ("signature_separation", "subpart_pattern_strength",
                     "context_strength", "noise_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not (0.0 < self.fixation_fraction < 1.0):
            raise ValueError("fixation_fraction must be in (0, 1)")
        if not (0.0 <= self.fixation_best_bias <= 1.0):
            raise ValueError("fixation_best_bias must be in [0, 1]")

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["regions_per_image"] = list(self.regions_per_image)
        return json.dumps(d, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "GeneratorConfig":
        d = json.loads(text)
        d["regions_per_image"] = tuple(d["regions_per_image"])
        return GeneratorConfig(**d)


@dataclass(frozen=True, eq=False)
class Region:
    id: int
    rect: Rect
    features: np.ndarray
    fixated: bool
    role: str

    def __eq__(self, other):
        return (
            isinstance(other, Region)
            and self.id == other.id
            and self.rect == other.rect
            and self.fixated == other.fixated
            and self.role == other.role
            and np.array_equal(self.features, other.features)
        )


@dataclass(frozen=True, eq=False)
class SyntheticImage:
    id: int
    label: int  # +1 when any target class is present, else -1
    class_id: int  # 1..k for positives, 0 for negatives
    split: str
    gt_rects: tuple[Rect, ...]
    regions: tuple[Region, ...]

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ValueError("image label must be -1 or +1")
        if (self.label == 1) != (len(self.gt_rects) > 0):
            raise ValueError("positive images need ground truth, negatives none")

    def __eq__(self, other):
        return (
            isinstance(other, SyntheticImage)
            and self.id == other.id
            and self.label == other.label
            and self.class_id == other.class_id
            and self.split == other.split
            and self.gt_rects == other.gt_rects
            and self.regions == other.regions
        )

    def region_rects(self) -> dict[int, Rect]:
        return {r.id: r.rect for r in self.regions}


@dataclass(frozen=True)
class Bag:
    id: int
    image_id: int
    region_ids: tuple[int, ...]
    label: int

    def __post_init__(self):
        if not self.region_ids:
            raise ValueError("bag must not be empty")
        if self.label not in (-1, 1):
            raise ValueError("bag label must be -1 or +1")


@dataclass(frozen=True, eq=False)
class Dataset:
    config: GeneratorConfig
    images: tuple[SyntheticImage, ...]
    signatures: tuple[np.ndarray, ...]  # one per class, appearance space
    pattern: np.ndarray
    context: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.config == other.config
            and self.images == other.images
            and len(self.signatures) == len(other.signatures)
            and all(np.array_equal(a, b) for a, b in zip(self.signatures, other.signatures))
            and np.array_equal(self.pattern, other.pattern)
            and np.array_equal(self.context, other.context)
        )

    def split(self, name: str) -> list[SyntheticImage]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return [im for im in self.images if im.split == name]

    def region_table(self) -> dict[int, Region]:
        return {r.id: r for im in self.images for r in im.regions}


def _base_box(rng) -> Rect:
    """Common geometric law for ground-truth boxes and clutter boxes."""
    cx = rng.uniform(0.25, 0.75)
    cy = rng.uniform(0.25, 0.75)
    w = rng.uniform(0.18, 0.42)
    h = rng.uniform(0.18, 0.42)
    return Rect(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def _clip_rect(x1, y1, x2, y2) -> Rect | None:
    x1, x2 = max(0.0, x1), min(1.0, x2)
    y1, y2 = max(0.0, y1), min(1.0, y2)
    if x2 - x1 < 1e-3 or y2 - y1 < 1e-3:
        return None
    return Rect(x1, y1, x2, y2)


def _jitter(rng, base: Rect, shift: float, scale: float) -> Rect | None:
    w, h = base.width, base.height
    cx, cy = base.center
    cx += rng.normal(0.0, shift * w)
    cy += rng.normal(0.0, shift * h)
    s = max(0.5, 1.0 + rng.normal(0.0, scale))
    return _clip_rect(cx - s * w / 2, cy - s * h / 2, cx + s * w / 2, cy + s * h / 2)


def _outer_fallback(gt: Rect) -> Rect:
    # Deterministic loose box: 1.3x the ground truth, shifted by 40% of its
    # extent towards the canvas side with the most room (IoU ~0.33,
    # ground-truth coverage of the box ~0.44).
    w, h = 1.3 * gt.width, 1.3 * gt.height
    cx, cy = gt.center
    dx = 0.4 * gt.width if cx <= 0.5 else -0.4 * gt.width
    dy = 0.4 * gt.height if cy <= 0.5 else -0.4 * gt.height
    return Rect(cx + dx - w / 2, cy + dy - h / 2, cx + dx + w / 2, cy + dy + h / 2)


def _far_corner_box(gt: Rect) -> Rect:
    cx, cy = gt.center
    x = 0.88 if cx <= 0.5 else 0.02
    y = 0.88 if cy <= 0.5 else 0.02
    return Rect(x, y, x + 0.1, y + 0.1)


def _positive_geometry(
    rng, n_regions: int
) -> tuple[Rect, Rect, list[tuple[str, Rect]]]:
    gt = _base_box(rng)
    boxes: list[tuple[str, Rect]] = [(ROLE_CANVAS, Rect(0.0, 0.0, 1.0, 1.0))]

    rect = None
    for _ in range(40):
        cand = _jitter(rng, gt, shift=0.02, scale=0.04)
        if cand is not None and iou(gt, cand) >= 0.88:
            rect = cand
            break
    boxes.append((ROLE_TARGET, rect if rect is not None else gt))

    # Contained boxes inside the ground truth: part-targets still clear the
    # 0.5 overlap bar, parts sit just below it.
    for lo_s, hi_s, count, role in (
        (0.78, 0.9, _N_PART_TARGETS, ROLE_TARGET),
        (0.58, 0.68, _N_PARTS, ROLE_PART),
    ):
        for _ in range(count):
            s = rng.uniform(lo_s, hi_s)
            w, h = s * gt.width, s * gt.height
            cx = gt.x1 + w / 2 + rng.uniform(0.0, 1.0) * (gt.width - w)
            cy = gt.y1 + h / 2 + rng.uniform(0.0, 1.0) * (gt.height - h)
            boxes.append((role, Rect(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)))

    fx = rng.uniform(0.32, 0.45)
    fy = rng.uniform(0.32, 0.45)
    px = gt.x1 + rng.uniform(0.0, 1.0 - fx) * gt.width
    py = gt.y1 + rng.uniform(0.0, 1.0 - fy) * gt.height
    pattern_box = Rect(px, py, px + fx * gt.width, py + fy * gt.height)

    targets = [r for role, r in boxes if role == ROLE_TARGET]
    for _ in range(_N_SUBPARTS):
        rect = None
        for _ in range(20):
            cand = _jitter(rng, pattern_box, shift=0.03, scale=0.05)
            if cand is None:
                continue
            if max(containment_fraction(t, cand) for t in targets) >= 0.85:
                rect = cand
                break
        boxes.append((ROLE_SUBPART, rect if rect is not None else pattern_box))

    for _ in range(_N_FRINGE):
        # Sloppy oversized boxes around the ground truth: enough overlap to
        # count as fringe, too loose to score under either hit criterion.
        rect = None
        for _ in range(40):
            s = rng.uniform(1.25, 1.6)
            w, h = s * gt.width, s * gt.height
            cx = gt.center[0] + rng.normal(0.0, 0.25) * gt.width
            cy = gt.center[1] + rng.normal(0.0, 0.25) * gt.height
            cand = _clip_rect(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
            if (
                cand is not None
                and 0.2 <= iou(gt, cand) < 0.42
                and containment_fraction(gt, cand) < 0.45
            ):
                rect = cand
                break
        boxes.append((ROLE_FRINGE, rect if rect is not None else _outer_fallback(gt)))

    for _ in range(_N_CONTEXT):
        rect = None
        for _ in range(30):
            cand = _base_box(rng)
            if intersection_area(gt, cand) == 0.0:
                rect = cand
                break
        boxes.append((ROLE_CONTEXT, rect if rect is not None else _far_corner_box(gt)))

    while len(boxes) < n_regions:
        boxes.append((ROLE_CLUTTER, _base_box(rng)))
    return gt, pattern_box, boxes


def _negative_geometry(rng, n_regions: int) -> list[tuple[str, Rect]]:
    boxes = [(ROLE_CANVAS, Rect(0.0, 0.0, 1.0, 1.0))]
    while len(boxes) < n_regions:
        boxes.append((ROLE_CLUTTER, _base_box(rng)))
    return boxes


def _coverage(region: Rect, support: Rect) -> float:
    inter = intersection_area(region, support)
    return inter * inter / (region.area * support.area)


def _weighted_sample(rng, ids: list[int], weights: np.ndarray, k: int) -> list[int]:
    # Gumbel top-k gives a deterministic weighted draw without replacement.
    if k <= 0:
        return []
    keys = np.log(weights) + rng.gumbel(size=len(ids))
    order = np.argsort(-keys, kind="stable")
    return [ids[i] for i in order[:k]]


def generate(config: GeneratorConfig) -> Dataset:
    """Build a deterministic train/val/test dataset from the config."""
    rng = np.random.default_rng(config.seed)
    m = config.feature_dim - GEOMETRY_DESCRIPTOR_SIZE
    n_directions = config.classes + 2
    q, _ = np.linalg.qr(rng.standard_normal((m, n_directions)))
    signatures = tuple(np.ascontiguousarray(q[:, c]) for c in range(config.classes))
    pattern = np.ascontiguousarray(q[:, config.classes])
    context = np.ascontiguousarray(q[:, config.classes + 1])

    n_pos = config.images // 2
    labels = [1 if i < n_pos else -1 for i in range(config.images)]
    class_ids = [(i % config.classes) + 1 if labels[i] == 1 else 0
                 for i in range(config.images)]
    splits = _assign_splits(labels, class_ids)

    images = []
    region_counter = 0
    lo, hi = config.regions_per_image
    for image_id in range(config.images):
        n_regions = int(rng.integers(lo, hi + 1))
        positive = labels[image_id] == 1
        if positive:
            gt, pattern_box, boxes = _positive_geometry(rng, n_regions)
            gt_rects: tuple[Rect, ...] = (gt,)
            emitters = [
                (gt, config.signature_separation, signatures[class_ids[image_id] - 1]),
                (pattern_box, config.subpart_pattern_strength, pattern),
            ]
            emitters.extend(
                (r, config.context_strength, context)
                for role, r in boxes
                if role == ROLE_CONTEXT
            )
        else:
            boxes = _negative_geometry(rng, n_regions)
            gt_rects = ()
            emitters = []

        order = rng.permutation(len(boxes))
        boxes = [boxes[i] for i in order]

        feats = []
        for role, rect in boxes:
            appearance = rng.normal(0.0, config.noise_scale, size=m)
            for support, mass, direction in emitters:
                cov = _coverage(rect, support)
                if cov > 0.0:
                    appearance = appearance + mass * cov * direction
            tail = np.array(
                [rect.center[0], rect.center[1], rect.width, rect.height,
                 rect.width / rect.height]
            )
            feats.append(np.concatenate([appearance, tail]))

        fixated = _simulate_fixations(rng, config, boxes, gt_rects)

        regions = []
        for idx, (role, rect) in enumerate(boxes):
            regions.append(
                Region(
                    id=region_counter,
                    rect=rect,
                    features=feats[idx],
                    fixated=idx in fixated,
                    role=role,
                )
            )
            region_counter += 1

        images.append(
            SyntheticImage(
                id=image_id,
                label=labels[image_id],
                class_id=class_ids[image_id],
                split=splits[image_id],
                gt_rects=gt_rects,
                regions=tuple(regions),
            )
        )

    return Dataset(
        config=config,
        images=tuple(images),
        signatures=signatures,
        pattern=pattern,
        context=context,
    )


def _assign_splits(labels: list[int], class_ids: list[int]) -> list[str]:
    splits = [""] * len(labels)
    groups: dict[tuple[int, int], list[int]] = {}
    for i, (lab, cid) in enumerate(zip(labels, class_ids)):
        groups.setdefault((lab, cid), []).append(i)
    for members in groups.values():
        g = len(members)
        n_train = int(round(0.5 * g))
        n_val = int(round(0.25 * g))
        if n_train + n_val >= g:  # keep at least one test image per group
            n_val = max(0, g - n_train - 1)
        for pos, image_idx in enumerate(members):
            if pos < n_train:
                splits[image_idx] = "train"
            elif pos < n_train + n_val:
                splits[image_idx] = "val"
            else:
                splits[image_idx] = "test"
    return splits


def _simulate_fixations(rng, config, boxes, gt_rects) -> set[int]:
    n = len(boxes)
    k = int(round(config.fixation_fraction * n))
    k = min(max(k, 1), n - 1)
    ids = list(range(n))
    if not gt_rects:
        chosen = _weighted_sample(rng, ids, np.ones(n), k)
        return set(chosen)

    # Gaze gravitates to parts of the target rather than boxes matching its
    # full extent: weight by how much of the region lies on the target,
    # damped by the region's own size.
    def gaze_weight(rect):
        return max(
            containment_fraction(g, rect) * math.exp(-min(3.0, rect.area / g.area))
            for g in gt_rects
        )

    weights_all = np.array([gaze_weight(rect) for _, rect in boxes])
    best_iou = np.array([max(iou(g, rect) for g in gt_rects) for _, rect in boxes])
    if rng.uniform() < config.fixation_best_bias:
        anchor = int(np.argmax(best_iou))
    else:
        # A weaker but still well-overlapping anchor keeps the fixated
        # pool below the best attainable overlap.
        weak = [i for i in ids if 0.5 <= best_iou[i] <= 0.82]
        if weak:
            anchor = int(weak[rng.integers(len(weak))])
        else:
            anchor = int(np.argmax(best_iou))
    rest = [i for i in ids if i != anchor]
    weights = 0.1 + weights_all[rest]
    chosen = _weighted_sample(rng, rest, weights, k - 1)
    return {anchor, *chosen}


def make_bags(
    images: Sequence[SyntheticImage],
    mode: str,
    target_class: int = 1,
    fringe_threshold: float = 0.2,
) -> tuple[list[Bag], dict[int, int] | None]:
    """Build MIL bags (and, for bb mode, direct instance labels).

    eye: positive bags hold the fixated regions of positive images, plus
    an extra negative bag per positive image with the regions that do not
    touch any fixated region; negative images contribute one all-region
    negative bag.  il: positive bags hold every region.  bb: additionally
    returns instance labels (+1 best-overlap region per ground truth, 0
    for the fringe of those regions, -1 elsewhere).
    """
    if mode not in (MODE_EYE, MODE_IL, MODE_BB):
        raise ValueError(f"unknown supervision mode {mode!r}")

    bags: list[Bag] = []
    labels: dict[int, int] | None = {} if mode == MODE_BB else None
    bag_id = 0

    def add(image_id, ids, label):
        nonlocal bag_id
        if ids:
            bags.append(Bag(id=bag_id, image_id=image_id,
                            region_ids=tuple(sorted(ids)), label=label))
            bag_id += 1

    for image in images:
        all_ids = [r.id for r in image.regions]
        positive = image.class_id == target_class
        if not positive:
            add(image.id, all_ids, -1)
            if labels is not None:
                labels.update({rid: -1 for rid in all_ids})
            continue

        if mode == MODE_EYE:
            fixated = [r for r in image.regions if r.fixated]
            add(image.id, [r.id for r in fixated], 1)
            untouched = [
                r.id
                for r in image.regions
                if not r.fixated
                and all(intersection_area(r.rect, f.rect) == 0.0 for f in fixated)
            ]
            add(image.id, untouched, -1)
        elif mode == MODE_IL:
            add(image.id, all_ids, 1)
        else:  # bb
            add(image.id, all_ids, 1)
            pool = image.region_rects()
            selected = set()
            for gt in image.gt_rects:
                best = min(
                    (r.id for r in image.regions),
                    key=lambda rid: (-iou(gt, pool[rid]), rid),
                )
                selected.add(best)
            excluded = set()
            for rid in selected:
                excluded |= fringe_set(rid, pool, fringe_threshold)
            excluded -= selected
            for rid in all_ids:
                if rid in selected:
                    labels[rid] = 1
                elif rid in excluded:
                    labels[rid] = 0
                else:
                    labels[rid] = -1

    return bags, labels


def instance_target_labels(
    images: Iterable[SyntheticImage], min_iou: float = 0.5
) -> dict[int, int]:
    """Per-region is-a-target labels judged against the ground truth."""
    out = {}
    for image in images:
        for region in image.regions:
            hit = any(iou(g, region.rect) >= min_iou for g in image.gt_rects)
            out[region.id] = 1 if hit else -1
    return out


def calibration_summary(dataset: Dataset) -> dict[str, float]:
    """Fixation statistics over positive images (all splits)."""
    fractions = []
    best_fixated = []
    best_all = []
    for image in dataset.images:
        if image.label != 1:
            continue
        n = len(image.regions)
        fixated = [r for r in image.regions if r.fixated]
        fractions.append(len(fixated) / n)
        best_all.append(
            max(iou(g, r.rect) for g in image.gt_rects for r in image.regions)
        )
        best_fixated.append(
            max(iou(g, r.rect) for g in image.gt_rects for r in fixated)
        )
    return {
        "positive_images": float(len(fractions)),
        "mean_fixated_fraction": float(np.mean(fractions)),
        "mean_best_overlap_fixated": float(np.mean(best_fixated)),
        "mean_best_overlap_all": float(np.mean(best_all)),
    }


DATASET_FORMAT_VERSION = 1


def _fmt_floats(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok]


def save(dataset: Dataset, path) -> None:
    cfg = dataset.config
    lines = [
        f"saccadet-dataset {DATASET_FORMAT_VERSION} dim={cfg.feature_dim} "
        f"seed={cfg.seed} classes={cfg.classes} images={len(dataset.images)}"
    ]
    lines.append(f"config {cfg.to_json()}")
    for c, sig in enumerate(dataset.signatures, start=1):
        lines.append(f"direction signature {c} {_fmt_floats(sig)}")
    lines.append(f"direction pattern - {_fmt_floats(dataset.pattern)}")
    lines.append(f"direction context - {_fmt_floats(dataset.context)}")
    for image in dataset.images:
        gts = "|".join(_fmt_floats(g.as_tuple()) for g in image.gt_rects)
        lines.append(
            f"image {image.id} label={image.label} class={image.class_id} "
            f"split={image.split} gts={gts}"
        )
        for r in image.regions:
            lines.append(
                f"region {r.id} rect={_fmt_floats(r.rect.as_tuple())} "
                f"fixated={int(r.fixated)} role={r.role} "
                f"features={_fmt_floats(r.features)}"
            )
    lines.append("end saccadet-dataset")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _kv(token: str, key: str) -> str:
    if not token.startswith(key + "="):
        raise DatasetFormatError(f"expected {key}=..., got {token!r}")
    return token[len(key) + 1:]


def load(path) -> Dataset:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise DatasetFormatError(f"{path}: empty file")
    head = lines[0].split()
    if head[0] != "saccadet-dataset":
        raise DatasetFormatError(f"{path}: not a dataset file")
    if int(head[1]) != DATASET_FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported format version {head[1]}")
    dim = int(_kv(head[2], "dim"))
    if lines[-1] != "end saccadet-dataset":
        raise DatasetFormatError(f"{path}: truncated file (missing end marker)")

    config = None
    signatures: dict[int, np.ndarray] = {}
    pattern = None
    context = None
    images: list[SyntheticImage] = []
    current: dict | None = None
    regions: list[Region] = []

    def flush():
        nonlocal current, regions
        if current is not None:
            images.append(SyntheticImage(regions=tuple(regions), **current))
        current, regions = None, []

    for ln in lines[1:-1]:
        kind, rest = ln.split(" ", 1)
        if kind == "config":
            config = GeneratorConfig.from_json(rest)
        elif kind == "direction":
            which, tag, data = rest.split(" ", 2)
            vec = np.array(_parse_floats(data))
            if which == "signature":
                signatures[int(tag)] = vec
            elif which == "pattern":
                pattern = vec
            elif which == "context":
                context = vec
            else:
                raise DatasetFormatError(f"{path}: unknown direction {which!r}")
        elif kind == "image":
            flush()
            toks = rest.split()
            gts_text = _kv(toks[4], "gts")
            gt_rects = tuple(
                Rect(*_parse_floats(part)) for part in gts_text.split("|") if part
            )
            current = dict(
                id=int(toks[0]),
                label=int(_kv(toks[1], "label")),
                class_id=int(_kv(toks[2], "class")),
                split=_kv(toks[3], "split"),
                gt_rects=gt_rects,
            )
        elif kind == "region":
            if current is None:
                raise DatasetFormatError(f"{path}: region line outside an image")
            toks = rest.split()
            features = np.array(_parse_floats(_kv(toks[4], "features")))
            if features.shape[0] != dim:
                raise DatasetFormatError(
                    f"{path}: feature dimension mismatch "
                    f"(header says {dim}, region {toks[0]} has {features.shape[0]})"
                )
            regions.append(
                Region(
                    id=int(toks[0]),
                    rect=Rect(*_parse_floats(_kv(toks[1], "rect"))),
                    fixated=bool(int(_kv(toks[2], "fixated"))),
                    role=_kv(toks[3], "role"),
                    features=features,
                )
            )
        else:
            raise DatasetFormatError(f"{path}: unknown record {kind!r}")
    flush()

    if config is None or pattern is None or context is None or not signatures:
        raise DatasetFormatError(f"{path}: missing metadata records")
    if config.feature_dim != dim:
        raise DatasetFormatError(f"{path}: header dim disagrees with config")
    sig_tuple = tuple(signatures[c] for c in sorted(signatures))
    return Dataset(
        config=config,
        images=tuple(images),
        signatures=sig_tuple,
        pattern=pattern,
        context=context,
    )


def file_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
