"""Marker-geometry perception utilities for image-guided steering.

The steering loop observes two catheter-mounted markers and the duct
entry point ("papilla") in the endoscope image plane.  Two vectors are
formed from their centroids — marker1→marker2 along the instrument body
and marker2→papilla toward the target — and the signed angle between
them is the angular correction the controller must drive to zero.  Depth
is unobservable from a single view, so all geometry here is planar; the
projective bias that introduces is a documented limitation, not a bug.

The module also provides detector bookkeeping: per-class best-detection
selection, axis-aligned IoU, greedy precision/recall/F1 evaluation, a
synthetic detection generator (noise-injected stand-in for a learned
detector, so the closed loop can run without images), and a JSON-lines
interchange format for labeled frames.

All functions are pure; per-frame calls are independent and safe to run
in a pipelined loop.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

__all__ = [
    "MarkerClass",
    "BoundingBox",
    "AngleEstimate",
    "NoiseSpec",
    "DetectionMetrics",
    "MatchCounts",
    "centroid",
    "angular_correction",
    "select_best",
    "iou_axis_aligned",
    "evaluate_detector",
    "match_statistics",
    "synth_detect",
    "write_detections_jsonl",
    "read_detections_jsonl",
]


# --- domain types -----------------------------------------------------------


class MarkerClass(Enum):
    """Object classes the detector reports.

    The physical markers are color-coded; color processing is out of
    scope here, so classes are symbolic ids that match the wire format.
    """

    MARKER_1 = "marker1"
    MARKER_2 = "marker2"
    PAPILLA = "papilla"


Point = tuple[float, float]


@dataclass(frozen=True)
class BoundingBox:
    """A detected quadrilateral in pixel coordinates.

    Attributes:
        corners: Four (u, v) pixel points.  Any orientation/order; the
            box is summarized by its centroid and axis-aligned envelope.
        class_id: Which object this detection claims to be.
        confidence: Detector score in [0, 1].
    """

    corners: tuple[Point, Point, Point, Point]
    class_id: MarkerClass
    confidence: float

    def __post_init__(self) -> None:
        if len(self.corners) != 4:
            raise ValueError("a bounding box needs exactly four corners")
        pts = [(float(u), float(v)) for u, v in self.corners]
        if not all(math.isfinite(u) and math.isfinite(v) for u, v in pts):
            raise ValueError("bounding-box corners must be finite")
        if all(p == pts[0] for p in pts[1:]):
            raise ValueError("degenerate bounding box: all corners coincide")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        object.__setattr__(self, "corners", tuple(pts))


@dataclass(frozen=True)
class AngleEstimate:
    """Signed steering correction derived from three image points.

    Attributes:
        theta: Signed angle [rad] from ``v_body`` to ``v_approach``,
            normalized to (−pi, pi].  Positive is counter-clockwise in
            (u, v) coordinates.
        v_body: marker1 → marker2 vector (instrument axis in the image).
        v_approach: marker2 → papilla vector (direction to the target).
    """

    theta: float
    v_body: Point
    v_approach: Point


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model for the synthetic detector.

    Attributes:
        jitter_px: Standard deviation of the isotropic Gaussian pixel
            jitter applied to each emitted box center.
        dropout: Per-object probability that no detection is emitted.
        confidence_mean: Mean of the Gaussian confidence model (clipped
            to [0, 1] after sampling).
        confidence_sd: Standard deviation of the confidence model.
        box_half_size: Half-width [px] of the emitted square boxes.
    """

    jitter_px: float = 0.0
    dropout: float = 0.0
    confidence_mean: float = 0.9
    confidence_sd: float = 0.0
    box_half_size: float = 6.0

    def __post_init__(self) -> None:
        if self.jitter_px < 0.0 or self.confidence_sd < 0.0:
            raise ValueError("noise scales must be non-negative")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must lie in [0, 1]")
        if self.box_half_size <= 0.0:
            raise ValueError("box_half_size must be positive")


class DetectionMetrics(NamedTuple):
    """Precision/recall/F1 triple from detector evaluation."""

    precision: float
    recall: float
    f1: float


class MatchCounts(NamedTuple):
    """Raw match counts underlying a :class:`DetectionMetrics` triple."""

    true_positives: int
    false_positives: int
    false_negatives: int


# --- geometry ---------------------------------------------------------------


def centroid(box: BoundingBox) -> Point:
    """Centroid of a detection as the mean of its four corners.

    Args:
        box: A validated bounding box.

    Returns:
        (u, v) arithmetic mean of the corner coordinates.
    """
    us = [c[0] for c in box.corners]
    vs = [c[1] for c in box.corners]
    return (math.fsum(us) / 4.0, math.fsum(vs) / 4.0)


def angular_correction(m1: Point, m2: Point, papilla: Point) -> AngleEstimate:
    """Signed angle between the instrument axis and the approach vector.

    The body vector runs marker1 → marker2 and the approach vector runs
    marker2 → papilla; the correction is the rotation that would align
    the body with the approach, obtained from the atan2 of their cross
    and dot products.  The construction is translation-invariant,
    rotation-equivariant, and scale-invariant.

    Args:
        m1: First (proximal) marker centroid.
        m2: Second (distal) marker centroid.
        papilla: Target entry-point centroid.

    Returns:
        The :class:`AngleEstimate` with theta in (−pi, pi].

    Raises:
        ValueError: consecutive points coincide, leaving a vector
            undefined.
    """
    v_body = (float(m2[0]) - float(m1[0]), float(m2[1]) - float(m1[1]))
    v_app = (float(papilla[0]) - float(m2[0]), float(papilla[1]) - float(m2[1]))
    if v_body == (0.0, 0.0):
        raise ValueError("marker1 and marker2 coincide; body vector undefined")
    if v_app == (0.0, 0.0):
        raise ValueError("marker2 and papilla coincide; approach vector undefined")
    cross = v_body[0] * v_app[1] - v_body[1] * v_app[0]
    dot = v_body[0] * v_app[0] + v_body[1] * v_app[1]
    theta = math.atan2(cross, dot)
    if theta <= -math.pi:
        theta = math.pi
    return AngleEstimate(theta=theta, v_body=v_body, v_approach=v_app)


# --- detection selection and matching ---------------------------------------


def select_best(
    detections: Sequence[BoundingBox],
) -> dict[MarkerClass, Optional[BoundingBox]]:
    """Retain the highest-confidence detection for each class.

    Ties are broken by earliest index in the input sequence, making the
    selection deterministic for any fixed detection order.

    Args:
        detections: Raw detections from one frame, any classes mixed.

    Returns:
        Mapping from every :class:`MarkerClass` to its best detection,
        or ``None`` where the class was not detected at all.
    """
    best: dict[MarkerClass, Optional[BoundingBox]] = {
        cls: None for cls in MarkerClass
    }
    for det in detections:
        incumbent = best[det.class_id]
        if incumbent is None or det.confidence > incumbent.confidence:
            best[det.class_id] = det
    return best


def _envelope(box: BoundingBox) -> tuple[float, float, float, float]:
    """Axis-aligned envelope (u_min, v_min, u_max, v_max) of a box."""
    us = [c[0] for c in box.corners]
    vs = [c[1] for c in box.corners]
    return (min(us), min(vs), max(us), max(vs))


def iou_axis_aligned(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes' axis-aligned envelopes.

    Boxes are reduced to their axis-aligned envelopes before the
    overlap computation; rotated quadrilaterals are therefore scored
    slightly optimistically, which is the usual evaluation convention.

    Returns:
        IoU in [0, 1]; 0.0 when the union has zero area.
    """
    au0, av0, au1, av1 = _envelope(a)
    bu0, bv0, bu1, bv1 = _envelope(b)
    iw = min(au1, bu1) - max(au0, bu0)
    ih = min(av1, bv1) - max(av0, bv0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (au1 - au0) * (av1 - av0) + (bu1 - bu0) * (bv1 - bv0) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


FrameBoxes = Sequence[BoundingBox]
FramesOrBoxes = Union[Sequence[BoundingBox], Sequence[FrameBoxes]]


def _as_frames(data: FramesOrBoxes) -> list[list[BoundingBox]]:
    """Normalize input to a list of frames (lists of boxes).

    A flat sequence of boxes is treated as a single frame; an empty
    sequence as a single empty frame.
    """
    items = list(data)
    if not items:
        return [[]]
    if all(isinstance(item, BoundingBox) for item in items):
        return [items]  # type: ignore[list-item]
    return [list(frame) for frame in items]  # type: ignore[arg-type]


def _match_frame(
    preds: Sequence[BoundingBox],
    gts: Sequence[BoundingBox],
    iou_threshold: float,
) -> tuple[int, int, int]:
    """Greedy one-to-one matching of one frame; returns (tp, fp, fn).

    Predictions are visited in descending confidence (ties: input
    order); each claims the unmatched same-class ground-truth box of
    highest IoU, provided that IoU reaches the threshold.
    """
    if not gts:
        return 0, len(preds), 0
    if not preds:
        return 0, 0, len(gts)

    gt_env = np.array([_envelope(g) for g in gts], dtype=float)
    gt_area = (gt_env[:, 2] - gt_env[:, 0]) * (gt_env[:, 3] - gt_env[:, 1])
    by_class: dict[MarkerClass, np.ndarray] = {}
    indices: dict[MarkerClass, list[int]] = defaultdict(list)
    for j, g in enumerate(gts):
        indices[g.class_id].append(j)
    for cls, js in indices.items():
        by_class[cls] = np.array(js, dtype=int)

    matched = np.zeros(len(gts), dtype=bool)
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    tp = 0
    for i in order:
        js = by_class.get(preds[i].class_id)
        if js is None:
            continue
        pu0, pv0, pu1, pv1 = _envelope(preds[i])
        env = gt_env[js]
        iw = np.minimum(pu1, env[:, 2]) - np.maximum(pu0, env[:, 0])
        ih = np.minimum(pv1, env[:, 3]) - np.maximum(pv0, env[:, 1])
        inter = np.where((iw > 0.0) & (ih > 0.0), iw * ih, 0.0)
        union = (pu1 - pu0) * (pv1 - pv0) + gt_area[js] - inter
        iou = np.where(union > 0.0, inter / np.maximum(union, 1e-300), 0.0)
        iou[matched[js]] = -1.0
        j_best = int(np.argmax(iou))
        if iou[j_best] >= iou_threshold:
            matched[js[j_best]] = True
            tp += 1
    fp = len(preds) - tp
    fn = len(gts) - tp
    return tp, fp, fn


def match_statistics(
    predictions: FramesOrBoxes,
    ground_truth: FramesOrBoxes,
    iou_threshold: float = 0.5,
) -> MatchCounts:
    """Accumulated TP/FP/FN counts over all frames.

    Args:
        predictions: Detections, as one frame (flat list of boxes) or a
            sequence of frames aligned with ``ground_truth``.
        ground_truth: Labeled boxes with the same shape convention.
        iou_threshold: Minimum envelope IoU for a match, in (0, 1).

    Raises:
        ValueError: threshold outside (0, 1) or frame counts differ.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie strictly inside (0, 1)")
    pred_frames = _as_frames(predictions)
    gt_frames = _as_frames(ground_truth)
    if len(pred_frames) != len(gt_frames):
        raise ValueError(
            f"prediction frames ({len(pred_frames)}) and ground-truth frames "
            f"({len(gt_frames)}) must align"
        )
    tp = fp = fn = 0
    for preds, gts in zip(pred_frames, gt_frames):
        t, f, n = _match_frame(preds, gts, iou_threshold)
        tp += t
        fp += f
        fn += n
    return MatchCounts(tp, fp, fn)


def evaluate_detector(
    predictions: FramesOrBoxes,
    ground_truth: FramesOrBoxes,
    iou_threshold: float = 0.5,
) -> DetectionMetrics:
    """Precision, recall, and F1 of a detector against labeled frames.

    Matching is greedy in descending confidence, one-to-one, and
    class-aware; a prediction whose best available same-class IoU
    reaches the threshold is a true positive.  F1 is the harmonic mean
    of the returned precision and recall (0 when both vanish).

    Args:
        predictions: Detector output (one frame or a frame sequence).
        ground_truth: Labels with the same shape convention.
        iou_threshold: Minimum envelope IoU for a match, in (0, 1).

    Returns:
        The (precision, recall, f1) triple.

    Warns:
        RuntimeWarning: predictions or ground truth are empty, forcing
            the corresponding rate to zero.
    """
    tp, fp, fn = match_statistics(predictions, ground_truth, iou_threshold)
    if tp + fp == 0:
        warnings.warn(
            "no predictions supplied; precision forced to 0",
            RuntimeWarning,
            stacklevel=2,
        )
        precision = 0.0
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        warnings.warn(
            "no ground-truth boxes supplied; recall forced to 0",
            RuntimeWarning,
            stacklevel=2,
        )
        recall = 0.0
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return DetectionMetrics(precision, recall, f1)


# --- synthetic detection ----------------------------------------------------


def synth_detect(
    true_scene: Mapping[MarkerClass, Point],
    noise: NoiseSpec,
    rng: np.random.Generator,
) -> list[BoundingBox]:
    """Generate noisy detections from known object positions.

    Stands in for a learned detector so the steering loop can close in
    simulation: each object present in the scene yields (with
    probability ``1 − dropout``) a square box centered on its true
    projection plus Gaussian pixel jitter, scored by a clipped Gaussian
    confidence model.  Classes are visited in a fixed order so a seeded
    generator reproduces the exact same detections.

    Args:
        true_scene: Projected (u, v) position per object class.
        noise: Noise model parameters.
        rng: Seeded NumPy generator; consumed deterministically.

    Returns:
        Detections for one frame (possibly empty).
    """
    out: list[BoundingBox] = []
    h = noise.box_half_size
    for cls in MarkerClass:
        if cls not in true_scene:
            continue
        drop = rng.uniform()
        du, dv = rng.normal(0.0, 1.0, size=2)
        conf_draw = rng.normal(noise.confidence_mean, 1.0)
        if drop < noise.dropout:
            continue
        u0, v0 = true_scene[cls]
        u = float(u0) + noise.jitter_px * float(du)
        v = float(v0) + noise.jitter_px * float(dv)
        if noise.confidence_sd > 0.0:
            conf = noise.confidence_mean + noise.confidence_sd * (
                float(conf_draw) - noise.confidence_mean
            )
        else:
            conf = noise.confidence_mean
        conf = min(1.0, max(0.0, conf))
        out.append(
            BoundingBox(
                corners=((u - h, v - h), (u + h, v - h), (u + h, v + h), (u - h, v + h)),
                class_id=cls,
                confidence=conf,
            )
        )
    return out


# --- JSON-lines interchange -------------------------------------------------


def _box_to_json(box: BoundingBox) -> dict:
    return {
        "class": box.class_id.value,
        "corners": [[c[0], c[1]] for c in box.corners],
        "confidence": box.confidence,
    }


def _box_from_json(obj: Mapping) -> BoundingBox:
    corners = tuple((float(u), float(v)) for u, v in obj["corners"])
    return BoundingBox(
        corners=corners,  # type: ignore[arg-type]
        class_id=MarkerClass(obj["class"]),
        confidence=float(obj["confidence"]),
    )


def write_detections_jsonl(
    path: Union[str, Path], frames: Iterable[FrameBoxes]
) -> None:
    """Write frames of boxes as JSON lines: {frame, boxes:[...]}."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for i, frame in enumerate(frames):
            record = {"frame": i, "boxes": [_box_to_json(b) for b in frame]}
            fh.write(json.dumps(record) + "\n")


def read_detections_jsonl(path: Union[str, Path]) -> list[list[BoundingBox]]:
    """Read frames of boxes written by :func:`write_detections_jsonl`.

    Frames are returned in ``frame``-index order regardless of the
    physical line order; missing indices are an error.
    """
    records: dict[int, list[BoundingBox]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records[int(obj["frame"])] = [_box_from_json(b) for b in obj["boxes"]]
    if not records:
        return []
    expected = set(range(len(records)))
    if set(records) != expected:
        raise ValueError("frame indices must form a contiguous 0-based range")
    return [records[i] for i in sorted(records)]
