"""Detection-quality scoring with the 50%-overlap matching protocol.

Matching runs in three stages over care ground truth and scored detections:
one-to-one pairs by IoU greedily (descending IoU, ties toward the lower GT
then detection index), then one-to-many groups (one GT covered by several
detections), then many-to-one groups (one detection covering several GTs).
Detections mostly inside a do-not-care region are dropped from scoring
before any matching. Group stages walk candidates in ascending index order.

Precision is detection credit over scored detections, recall is GT credit
over care GTs; an empty denominator reports 1.0 and raises a flag so corpus
reductions can tell convention from evidence.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

from .codec import load_ground_truth
from .geometry import poly_intersection_area, poly_iou, shoelace_area

DEFAULT_IOU_THRESHOLD = 0.5
DEFAULT_COVERAGE_THRESHOLD = 0.5


class Detection(NamedTuple):
    vertices: tuple
    score: float


@dataclass(frozen=True)
class MatchReport:
    """Per-image match outcome; credits and counts feed corpus reduction."""

    precision: float
    recall: float
    f_measure: float
    one_to_one: tuple  # (gt index, det index)
    one_to_many: tuple  # (gt index, (det indices))
    many_to_one: tuple  # ((gt indices), det index)
    unmatched_gt: tuple
    unmatched_det: tuple
    ignored_det: tuple
    gt_credit: float
    det_credit: float
    care_gt_count: int
    scored_det_count: int
    precision_defaulted: bool
    recall_defaulted: bool


@dataclass(frozen=True)
class CorpusSummary:
    """Micro-averaged corpus totals: credits summed before dividing."""

    precision: float
    recall: float
    f_measure: float
    gt_credit: float
    det_credit: float
    care_gt_count: int
    scored_det_count: int
    image_count: int
    precision_defaulted: bool
    recall_defaulted: bool


def f_measure(precision: float, recall: float) -> float:
    if precision + recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _vertices_of(obj):
    """Vertex tuple of a WordQuad, WordBox, or plain 4-point sequence."""
    if hasattr(obj, "vertices"):
        pts = tuple(obj.vertices)
    elif hasattr(obj, "corners"):
        pts = tuple(obj.corners())
    else:
        pts = tuple(obj)
    pts = tuple((float(x), float(y)) for x, y in pts)
    if len(pts) != 4:
        raise ValueError(f"expected 4 vertices, got {len(pts)}")
    return pts


def match_detections(
    gt,
    detections,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    coverage_threshold: float = DEFAULT_COVERAGE_THRESHOLD,
    many_credit: float = 1.0,
) -> MatchReport:
    gt_verts = [_vertices_of(g) for g in gt]
    det_verts = [_vertices_of(d) for d in detections]
    gt_area = [abs(shoelace_area(v)) for v in gt_verts]
    det_area = [abs(shoelace_area(v)) for v in det_verts]
    care = [bool(getattr(g, "care", True)) for g in gt]
    care_idx = [i for i, c in enumerate(care) if c]

    # stage 0: detections mostly inside a do-not-care region are not scored
    ignored_det = []
    scored = []
    for di, dv in enumerate(det_verts):
        swallowed = False
        if det_area[di] > 0.0:
            for gi, c in enumerate(care):
                if c:
                    continue
                inter = poly_intersection_area(dv, gt_verts[gi])
                if inter / det_area[di] > coverage_threshold:
                    swallowed = True
                    break
        if swallowed:
            ignored_det.append(di)
        else:
            scored.append(di)

    inter = {
        (gi, di): poly_intersection_area(gt_verts[gi], det_verts[di])
        for gi in care_idx
        for di in scored
    }
    gt_credit = dict.fromkeys(care_idx, 0.0)
    det_credit = dict.fromkeys(scored, 0.0)

    # stage 1: one-to-one by IoU, greedy descending
    candidates = []
    for gi in care_idx:
        for di in scored:
            iou = poly_iou(gt_verts[gi], det_verts[di])
            if iou > iou_threshold:
                candidates.append((-iou, gi, di))
    one_to_one = []
    for _, gi, di in sorted(candidates):
        if gt_credit[gi] == 0.0 and det_credit[di] == 0.0:
            one_to_one.append((gi, di))
            gt_credit[gi] = 1.0
            det_credit[di] = 1.0

    # stage 2: one unmatched GT covered by >= 2 unmatched detections
    one_to_many = []
    for gi in care_idx:
        if gt_credit[gi] > 0.0 or gt_area[gi] <= 0.0:
            continue
        group = [
            di
            for di in scored
            if det_credit[di] == 0.0
            and det_area[di] > 0.0
            and inter[gi, di] / det_area[di] > coverage_threshold
        ]
        covered = sum(inter[gi, di] for di in group)
        if len(group) >= 2 and covered > coverage_threshold * gt_area[gi]:
            one_to_many.append((gi, tuple(group)))
            gt_credit[gi] = many_credit
            for di in group:
                det_credit[di] = many_credit

    # stage 3: one unmatched detection covering >= 2 unmatched GTs
    many_to_one = []
    for di in scored:
        if det_credit[di] > 0.0 or det_area[di] <= 0.0:
            continue
        group = [
            gi
            for gi in care_idx
            if gt_credit[gi] == 0.0
            and gt_area[gi] > 0.0
            and inter[gi, di] / gt_area[gi] > coverage_threshold
        ]
        covered = sum(inter[gi, di] for gi in group)
        if len(group) >= 2 and covered > coverage_threshold * det_area[di]:
            many_to_one.append((tuple(group), di))
            det_credit[di] = many_credit
            for gi in group:
                gt_credit[gi] = many_credit

    total_gt = sum(gt_credit.values())
    total_det = sum(det_credit.values())
    p_defaulted = len(scored) == 0
    r_defaulted = len(care_idx) == 0
    precision = 1.0 if p_defaulted else total_det / len(scored)
    recall = 1.0 if r_defaulted else total_gt / len(care_idx)
    return MatchReport(
        precision=precision,
        recall=recall,
        f_measure=f_measure(precision, recall),
        one_to_one=tuple(one_to_one),
        one_to_many=tuple(one_to_many),
        many_to_one=tuple(many_to_one),
        unmatched_gt=tuple(gi for gi in care_idx if gt_credit[gi] == 0.0),
        unmatched_det=tuple(di for di in scored if det_credit[di] == 0.0),
        ignored_det=tuple(ignored_det),
        gt_credit=total_gt,
        det_credit=total_det,
        care_gt_count=len(care_idx),
        scored_det_count=len(scored),
        precision_defaulted=p_defaulted,
        recall_defaulted=r_defaulted,
    )


def corpus_summary(reports) -> CorpusSummary:
    reports = list(reports)
    gt_credit = sum(r.gt_credit for r in reports)
    det_credit = sum(r.det_credit for r in reports)
    care = sum(r.care_gt_count for r in reports)
    scored = sum(r.scored_det_count for r in reports)
    p_defaulted = scored == 0
    r_defaulted = care == 0
    precision = 1.0 if p_defaulted else det_credit / scored
    recall = 1.0 if r_defaulted else gt_credit / care
    return CorpusSummary(
        precision=precision,
        recall=recall,
        f_measure=f_measure(precision, recall),
        gt_credit=gt_credit,
        det_credit=det_credit,
        care_gt_count=care,
        scored_det_count=scored,
        image_count=len(reports),
        precision_defaulted=p_defaulted,
        recall_defaulted=r_defaulted,
    )


def parse_detection_line(line: str, where: str = ""):
    """One "x1,y1,...,x4,y4,score" line -> Detection, None when blank."""
    text = line.strip().lstrip("﻿")
    if not text:
        return None
    parts = text.split(",")
    if len(parts) != 9:
        raise ValueError(f"{where}expected 9 comma-separated fields, got {len(parts)}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ValueError(f"{where}non-numeric field in detection line") from None
    verts = tuple((vals[2 * i], vals[2 * i + 1]) for i in range(4))
    return Detection(vertices=verts, score=vals[8])


def format_detection_line(vertices, score: float) -> str:
    flat = [f"{float(v):.2f}" for xy in vertices for v in xy]
    return ",".join(flat + [f"{float(score):.2f}"])


def load_detections(path):
    out = []
    text = Path(path).read_text(encoding="utf-8-sig")
    for ln, line in enumerate(text.splitlines(), start=1):
        det = parse_detection_line(line, where=f"{path}:{ln}: ")
        if det is not None:
            out.append(det)
    return out


def pair_files(gt_dir, det_dir, suffix: str = ".txt"):
    """(stem, gt path, det path) for every stem present in both directories."""
    gts = {p.stem: p for p in sorted(Path(gt_dir).glob("*" + suffix))}
    dets = {p.stem: p for p in sorted(Path(det_dir).glob("*" + suffix))}
    return [(stem, gts[stem], dets[stem]) for stem in sorted(gts) if stem in dets]


def evaluate_corpus(gt_dir, det_dir, **match_kwargs):
    """Match every paired file; returns ([(stem, report)], CorpusSummary)."""
    pairs = pair_files(gt_dir, det_dir)
    per_image = []
    for stem, gt_path, det_path in pairs:
        gt = load_ground_truth(gt_path)
        dets = load_detections(det_path)
        per_image.append((stem, match_detections(gt, dets, **match_kwargs)))
    return per_image, corpus_summary(r for _, r in per_image)
