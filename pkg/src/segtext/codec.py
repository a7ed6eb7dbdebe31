"""Geometry codec between raw head tensors and oriented text segments.

One direction decodes predictions: every sufficiently confident grid pixel
becomes an oriented rectangle positioned relative to its anchor. The other
direction encodes ground-truth word quads into per-scale training targets
(class labels, geometry deltas, link labels, care masks). The two are exact
inverses on word-aligned segments, which the tests lean on heavily.

Head channel layout, in order: 2 class logits (off, on), 5 geometry deltas
(dx, dy, dw, dh, dtheta), 16 within-scale link logits (8 neighbors x 2, each
pair (off, on)), then at every scale except the finest 8 cross-scale link
logits (4 children at the next finer grid x 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ConvexPoly, poly_intersection_area, rect_corners, shoelace_area
from .model import (
    CLASS_CHANNELS,
    CROSS_LINK_CHANNELS,
    GEOMETRY_CHANNELS,
    LINK_CHANNELS,
    ScaleSpec,
)
from .ops import pair_scores

CLASS_SLICE = slice(0, 2)
GEOMETRY_SLICE = slice(2, 7)
LINK_SLICE = slice(7, 23)
CROSS_SLICE = slice(23, 31)

# 8-neighborhood in row-major order, self excluded.
NEIGHBOR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)
# Children of coarse pixel (r, c) sit at (2r+dr, 2c+dc) on the next finer grid.
CHILD_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))

DEFAULT_SIZE_RATIO = 1.5


def canonical_angle(theta: float) -> float:
    """Wrap an angle into (-pi/2, pi/2] (same line direction, w/h preserved)."""
    if -math.pi / 2.0 < theta <= math.pi / 2.0:
        return float(theta)
    return math.pi / 2.0 - (math.pi / 2.0 - theta) % math.pi


@dataclass(frozen=True)
class Segment:
    """Oriented rectangle predicted by one output pixel."""

    cx: float
    cy: float
    w: float
    h: float
    theta: float
    score: float
    scale_index: int
    grid_pos: tuple

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError("segment needs positive width and height")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("segment score must be in [0, 1]")

    def corners(self):
        return rect_corners(self.cx, self.cy, self.w, self.h, self.theta)


@dataclass(frozen=True)
class GeometryDelta:
    dx: float
    dy: float
    dw: float
    dh: float
    dtheta: float

    def __post_init__(self):
        vals = (self.dx, self.dy, self.dw, self.dh, self.dtheta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("geometry deltas must be finite")


@dataclass(frozen=True)
class WordQuad:
    """Ground-truth word: four corners plus a scored/ignored flag."""

    vertices: tuple
    care: bool = True

    def __init__(self, vertices, care=True):
        verts = tuple((float(x), float(y)) for x, y in vertices)
        if len(verts) != 4:
            raise ValueError("word quad needs exactly 4 vertices")
        if abs(shoelace_area(verts)) <= 1e-9:
            raise ValueError("degenerate word quad (area ~ 0)")
        ConvexPoly(verts)  # convexity check
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "care", bool(care))

    @classmethod
    def from_rect(cls, cx, cy, w, h, theta, care=True):
        return cls(rect_corners(cx, cy, w, h, theta), care=care)

    def to_rect(self):
        """Fit (cx, cy, w, h, theta) treating the quad as a near-rectangle.

        Direction comes from the average of the two edges running v0->v1 and
        v3->v2; exact for any true oriented rectangle regardless of which
        corner the listing starts at.
        """
        v = np.asarray(self.vertices, dtype=np.float64)
        cx, cy = v.mean(axis=0)
        d = (v[1] - v[0]) + (v[2] - v[3])
        theta = canonical_angle(math.atan2(d[1], d[0]))
        u = np.array([math.cos(theta), math.sin(theta)])
        n = np.array([-math.sin(theta), math.cos(theta)])
        rel = v - np.array([cx, cy])
        w = float(np.ptp(rel @ u))
        h = float(np.ptp(rel @ n))
        if w <= 0 or h <= 0:
            raise ValueError("degenerate word quad")
        return float(cx), float(cy), w, h, theta


@dataclass(frozen=True)
class HeadMap:
    """Typed view of one scale's raw head tensor."""

    spec: ScaleSpec
    class_logits: np.ndarray
    geometry: np.ndarray
    link_logits: np.ndarray
    cross_link_logits: np.ndarray | None

    def __post_init__(self):
        gh, gw = self.grid_shape
        expect = [
            ("class_logits", self.class_logits, CLASS_CHANNELS),
            ("geometry", self.geometry, GEOMETRY_CHANNELS),
            ("link_logits", self.link_logits, LINK_CHANNELS),
        ]
        if self.spec.has_cross_links:
            if self.cross_link_logits is None:
                raise ValueError("scale expects cross-link channels")
            expect.append(
                ("cross_link_logits", self.cross_link_logits, CROSS_LINK_CHANNELS)
            )
        elif self.cross_link_logits is not None:
            raise ValueError("finest scale carries no cross-link channels")
        for name, arr, ch in expect:
            if arr.shape != (ch, gh, gw):
                raise ValueError(
                    f"{name} has shape {arr.shape}, expected {(ch, gh, gw)}"
                )

    @property
    def grid_shape(self):
        return self.class_logits.shape[1], self.class_logits.shape[2]

    def class_scores(self) -> np.ndarray:
        """(H, W) probability that each pixel is text."""
        return pair_scores(self.class_logits)[0]

    def link_scores(self) -> np.ndarray:
        """(8, H, W) on-probabilities for neighbor links."""
        return pair_scores(self.link_logits)

    def cross_link_scores(self):
        """(4, H, W) on-probabilities for child links, None at the finest."""
        if self.cross_link_logits is None:
            return None
        return pair_scores(self.cross_link_logits)


@dataclass(frozen=True)
class ScaleMaps:
    """All five typed head outputs for one image."""

    heads: tuple

    def __post_init__(self):
        if not self.heads:
            raise ValueError("ScaleMaps needs at least one head")

    def __len__(self):
        return len(self.heads)

    def __getitem__(self, i) -> HeadMap:
        return self.heads[i]

    @classmethod
    def from_raw(cls, raw_heads, scales) -> "ScaleMaps":
        """Slice raw (C,H,W) or (1,C,H,W) head tensors into typed views."""
        if len(raw_heads) != len(scales):
            raise ValueError(
                f"{len(raw_heads)} head tensors for {len(scales)} scales"
            )
        heads = []
        for i, (raw, spec) in enumerate(zip(raw_heads, scales)):
            t = np.asarray(raw)
            if t.ndim == 4:
                if t.shape[0] != 1:
                    raise ValueError("from_raw expects batch size 1")
                t = t[0]
            if t.ndim != 3 or t.shape[0] != spec.head_channels:
                raise ValueError(
                    f"head {i} has shape {t.shape}, expected "
                    f"({spec.head_channels}, H, W)"
                )
            heads.append(
                HeadMap(
                    spec=spec,
                    class_logits=t[CLASS_SLICE],
                    geometry=t[GEOMETRY_SLICE],
                    link_logits=t[LINK_SLICE],
                    cross_link_logits=t[CROSS_SLICE] if spec.has_cross_links else None,
                )
            )
        return cls(tuple(heads))


def decode_scale(head: HeadMap, scale_index: int, seg_threshold: float):
    """Segments for one scale: every pixel scoring >= seg_threshold."""
    a = float(head.spec.receptive_field)
    scores = head.class_scores()
    geo = head.geometry.astype(np.float64)
    rows, cols = np.nonzero(scores >= seg_threshold)
    segments = []
    for r, c in zip(rows.tolist(), cols.tolist()):
        dx, dy, dw, dh, dtheta = (float(g) for g in geo[:, r, c])
        segments.append(
            Segment(
                cx=(c + 0.5) * a + a * dx,
                cy=(r + 0.5) * a + a * dy,
                w=a * math.exp(dw),
                h=a * math.exp(dh),
                theta=canonical_angle(dtheta),
                score=float(scores[r, c]),
                scale_index=scale_index,
                grid_pos=(r, c),
            )
        )
    return segments


def decode_segments(maps: ScaleMaps, seg_threshold: float):
    """All segments across scales, finest scale first, row-major per scale."""
    out = []
    for i, head in enumerate(maps.heads):
        out.extend(decode_scale(head, i, seg_threshold))
    return out


@dataclass(frozen=True)
class ScaleTargets:
    """Training targets for one scale, aligned with its HeadMap grid.

    word_index holds the owning word id (-1 if none) for every pixel,
    including pixels owned by care=False words; class_label is 1 only for
    care-word pixels. Links/cross links carry their own masks: a link sample
    is masked out when either endpoint belongs to an ignored word or when
    the neighbor/child falls off the grid.
    """

    spec: ScaleSpec
    class_label: np.ndarray  # (H, W) int8
    word_index: np.ndarray  # (H, W) int32
    geometry: np.ndarray  # (5, H, W) float64, zero at non-positives
    care: np.ndarray  # (H, W) bool
    link_label: np.ndarray  # (8, H, W) int8
    link_care: np.ndarray  # (8, H, W) bool
    cross_label: np.ndarray | None  # (4, H, W) int8
    cross_care: np.ndarray | None  # (4, H, W) bool

    @property
    def grid_shape(self):
        return self.class_label.shape

    @property
    def positive_count(self) -> int:
        return int(self.class_label.sum())


def _pixel_ownership(words, rects, spec, grid, size_ratio):
    """Assign each anchor its owning word (or -1).

    A word can claim an anchor when the anchor center lies inside the word's
    oriented rectangle and the word height fits the scale's anchor size
    (max ratio <= size_ratio). Contested anchors go to the word whose
    rectangle overlaps the anchor cell most, then to the lower word index.
    """
    gh, gw = grid
    a = float(spec.receptive_field)
    owner = np.full(grid, -1, dtype=np.int32)
    best_area = np.zeros(grid, dtype=np.float64)
    cols = (np.arange(gw) + 0.5) * a
    rows = (np.arange(gh) + 0.5) * a
    ax = np.broadcast_to(cols[None, :], grid)
    ay = np.broadcast_to(rows[:, None], grid)
    for wi, (word, rect) in enumerate(zip(words, rects)):
        wcx, wcy, ww, wh, wth = rect
        if max(a / wh, wh / a) > size_ratio:
            continue
        u, v = math.cos(wth), math.sin(wth)
        t = (ax - wcx) * u + (ay - wcy) * v
        n = -(ax - wcx) * v + (ay - wcy) * u
        inside = (np.abs(t) <= ww / 2.0) & (np.abs(n) <= wh / 2.0)
        contested = inside & (owner >= 0)
        fresh = inside & (owner < 0)
        if np.any(inside):
            word_poly = word.vertices
            for r, c in zip(*np.nonzero(inside)):
                cell = (
                    (c * a, r * a),
                    ((c + 1) * a, r * a),
                    ((c + 1) * a, (r + 1) * a),
                    (c * a, (r + 1) * a),
                )
                area = poly_intersection_area(word_poly, cell)
                if fresh[r, c] or (contested[r, c] and area > best_area[r, c]):
                    owner[r, c] = wi
                    best_area[r, c] = area
    return owner


def encode_scale(words, rects, spec, grid, size_ratio):
    gh, gw = grid
    a = float(spec.receptive_field)
    owner = _pixel_ownership(words, rects, spec, grid, size_ratio)
    care_flags = np.array([w.care for w in words], dtype=bool)
    owned = owner >= 0
    ignored = np.zeros(grid, dtype=bool)
    if len(words):
        ignored[owned] = ~care_flags[owner[owned]]
    positive = owned & ~ignored
    class_label = positive.astype(np.int8)
    care = ~ignored

    geometry = np.zeros((5, gh, gw), dtype=np.float64)
    for r, c in zip(*np.nonzero(positive)):
        wcx, wcy, ww, wh, wth = rects[owner[r, c]]
        ax_c = (c + 0.5) * a
        ay_c = (r + 0.5) * a
        u, v = math.cos(wth), math.sin(wth)
        # Crop the word band to this anchor's footprint along the word axis;
        # the segment center sits on the word's center line.
        t = (ax_c - wcx) * u + (ay_c - wcy) * v
        lo = max(-ww / 2.0, t - a / 2.0)
        hi = min(ww / 2.0, t + a / 2.0)
        tc = (lo + hi) / 2.0
        seg_cx = wcx + tc * u
        seg_cy = wcy + tc * v
        seg_w = hi - lo
        geometry[0, r, c] = (seg_cx - ax_c) / a
        geometry[1, r, c] = (seg_cy - ay_c) / a
        geometry[2, r, c] = math.log(seg_w / a)
        geometry[3, r, c] = math.log(wh / a)
        geometry[4, r, c] = canonical_angle(wth)

    link_label = np.zeros((8, gh, gw), dtype=np.int8)
    link_care = np.zeros((8, gh, gw), dtype=bool)
    for k, (dr, dc) in enumerate(NEIGHBOR_OFFSETS):
        src_r = slice(max(0, -dr), gh - max(0, dr))
        src_c = slice(max(0, -dc), gw - max(0, dc))
        dst_r = slice(max(0, dr), gh + min(0, dr))
        dst_c = slice(max(0, dc), gw + min(0, dc))
        same = (
            positive[src_r, src_c]
            & positive[dst_r, dst_c]
            & (owner[src_r, src_c] == owner[dst_r, dst_c])
        )
        link_label[k, src_r, src_c] = same.astype(np.int8)
        link_care[k, src_r, src_c] = ~ignored[src_r, src_c] & ~ignored[dst_r, dst_c]
    return ScaleTargets(
        spec=spec,
        class_label=class_label,
        word_index=owner,
        geometry=geometry,
        care=care,
        link_label=link_label,
        link_care=link_care,
        cross_label=None,
        cross_care=None,
    )


def encode_ground_truth(
    words,
    scales,
    image_shape,
    size_ratio: float = DEFAULT_SIZE_RATIO,
):
    """Per-scale targets for a list of WordQuads on an image of (H, W) px.

    Grid dims follow the network's shape rule: ceil(dim / stride). Cross
    links live at the coarser scale and point at its 4 children on the next
    finer grid; both endpoints must be positive for the same word.
    """
    img_h, img_w = image_shape
    if img_h < 1 or img_w < 1:
        raise ValueError("image must be at least 1x1")
    rects = [w.to_rect() for w in words]
    targets = []
    for spec in scales:
        grid = (
            -(-img_h // spec.stride),
            -(-img_w // spec.stride),
        )
        targets.append(encode_scale(words, rects, spec, grid, size_ratio))

    # Cross links: scale i (coarse, i >= 1) -> scale i-1 (fine).
    out = []
    for i, tgt in enumerate(targets):
        if not tgt.spec.has_cross_links:
            out.append(tgt)
            continue
        fine = targets[i - 1]
        gh, gw = tgt.grid_shape
        fh, fw = fine.grid_shape
        cross_label = np.zeros((4, gh, gw), dtype=np.int8)
        cross_care = np.zeros((4, gh, gw), dtype=bool)
        coarse_pos = tgt.class_label.astype(bool)
        coarse_ign = ~tgt.care
        fine_pos = fine.class_label.astype(bool)
        fine_ign = ~fine.care
        for k, (dr, dc) in enumerate(CHILD_OFFSETS):
            rr = np.arange(gh) * 2 + dr
            cc = np.arange(gw) * 2 + dc
            valid_r = rr < fh
            valid_c = cc < fw
            vr = np.nonzero(valid_r)[0]
            vc = np.nonzero(valid_c)[0]
            if len(vr) == 0 or len(vc) == 0:
                continue
            sub = np.ix_(vr, vc)
            child = np.ix_(rr[vr], cc[vc])
            same = (
                coarse_pos[sub]
                & fine_pos[child]
                & (tgt.word_index[sub] == fine.word_index[child])
            )
            cross_label[k][sub] = same.astype(np.int8)
            cross_care[k][sub] = ~coarse_ign[sub] & ~fine_ign[child]
        out.append(
            ScaleTargets(
                spec=tgt.spec,
                class_label=tgt.class_label,
                word_index=tgt.word_index,
                geometry=tgt.geometry,
                care=tgt.care,
                link_label=tgt.link_label,
                link_care=tgt.link_care,
                cross_label=cross_label,
                cross_care=cross_care,
            )
        )
    return out


def maps_from_targets(targets, margin: float = 10.0) -> ScaleMaps:
    """Synthesize ideal head outputs from encoded targets.

    Labels become +/-margin logit pairs; geometry channels carry the target
    deltas directly. Masked link samples read as "off". Useful for driving
    the decode/link/combine pipeline without a trained network.
    """
    heads = []
    for tgt in targets:
        gh, gw = tgt.grid_shape
        on = tgt.class_label.astype(np.float64)
        class_logits = np.stack([margin * (1 - 2 * on), margin * (2 * on - 1)])
        link_logits = np.zeros((16, gh, gw))
        for k in range(8):
            lk = tgt.link_label[k].astype(np.float64) * tgt.link_care[k]
            link_logits[2 * k] = margin * (1 - 2 * lk)
            link_logits[2 * k + 1] = margin * (2 * lk - 1)
        cross_logits = None
        if tgt.spec.has_cross_links:
            cross_logits = np.zeros((8, gh, gw))
            for k in range(4):
                ck = tgt.cross_label[k].astype(np.float64) * tgt.cross_care[k]
                cross_logits[2 * k] = margin * (1 - 2 * ck)
                cross_logits[2 * k + 1] = margin * (2 * ck - 1)
        heads.append(
            HeadMap(
                spec=tgt.spec,
                class_logits=class_logits,
                geometry=tgt.geometry.copy(),
                link_logits=link_logits,
                cross_link_logits=cross_logits,
            )
        )
    return ScaleMaps(tuple(heads))


def parse_gt_line(line: str, where: str = "") -> WordQuad | None:
    """One annotation line -> WordQuad, or None for blank lines.

    Accepts "x1,y1,...,x4,y4[,transcription]" quads and two-point
    axis-aligned "xmin,ymin,xmax,ymax[,transcription]" boxes. A
    transcription of ### marks the word as ignored.
    """
    text = line.strip().lstrip("﻿")
    if not text:
        return None
    parts = [p.strip() for p in text.split(",")]
    try:
        # Coordinate count is decided by field count, so transcriptions that
        # happen to be numeric still parse correctly.
        if len(parts) >= 8:
            nums = [float(p) for p in parts[:8]]
            transcription = ",".join(parts[8:])
            verts = [(nums[2 * i], nums[2 * i + 1]) for i in range(4)]
            return WordQuad(verts, care=transcription != "###")
        if len(parts) >= 4:
            x1, y1, x2, y2 = (float(p) for p in parts[:4])
            transcription = ",".join(parts[4:])
            return WordQuad(
                [(x1, y1), (x2, y1), (x2, y2), (x1, y2)],
                care=transcription != "###",
            )
        raise ValueError(f"expected at least 4 coordinates, got {len(parts)}")
    except ValueError as e:
        raise ValueError(f"{where}: bad annotation line {text!r}: {e}") from e


def load_ground_truth(path) -> list:
    """Read an annotation file into WordQuads, reporting file+line on errors."""
    words = []
    with open(path, "r", encoding="utf-8-sig") as f:
        for ln, line in enumerate(f, 1):
            quad = parse_gt_line(line, where=f"{path}:{ln}")
            if quad is not None:
                words.append(quad)
    return words
