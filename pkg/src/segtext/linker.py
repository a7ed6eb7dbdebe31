"""Segment graph construction, connected components, and box combination.

Segments become nodes; a within-scale edge joins neighboring grid pixels
whose link score clears the threshold, and a cross-scale edge joins a coarse
pixel to one of its four children on the next finer grid. Each connected
component is then collapsed into a single oriented word box by averaging
angles, fitting a line through the segment centers, and spanning the
extreme projections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import (
    CHILD_OFFSETS,
    NEIGHBOR_OFFSETS,
    ScaleMaps,
    Segment,
    canonical_angle,
    decode_segments,
)
from .geometry import rect_corners


@dataclass(frozen=True)
class SegmentGraph:
    """Undirected graph over decoded segments."""

    nodes: tuple
    edges: tuple  # (i, j, score) with i < j

    def __post_init__(self):
        n = len(self.nodes)
        seen = set()
        for i, j, _score in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i},{j}) references missing node")
            if i == j:
                raise ValueError("self-loops are not allowed")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)


@dataclass(frozen=True)
class WordBox:
    """Final oriented detection with the mean segment score attached."""

    cx: float
    cy: float
    width: float
    height: float
    theta: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("word box needs positive width and height")

    def corners(self):
        return rect_corners(self.cx, self.cy, self.width, self.height, self.theta)


def build_graph(
    segments, maps: ScaleMaps, link_threshold: float
) -> SegmentGraph:
    """Connect segments that both fired and whose link score passes.

    Within a scale the 8 neighbor channels vote; the two directed
    predictions for a pixel pair are merged by taking their maximum.
    Cross-scale edges use the coarse pixel's 4 child channels.
    """
    index = {(s.scale_index, s.grid_pos): i for i, s in enumerate(segments)}
    edges = {}

    def add_edge(i, j, score):
        key = (min(i, j), max(i, j))
        prev = edges.get(key)
        if prev is None or score > prev:
            edges[key] = score

    link_scores = [head.link_scores() for head in maps.heads]
    cross_scores = [head.cross_link_scores() for head in maps.heads]
    for i, seg in enumerate(segments):
        r, c = seg.grid_pos
        si = seg.scale_index
        for k, (dr, dc) in enumerate(NEIGHBOR_OFFSETS):
            j = index.get((si, (r + dr, c + dc)))
            if j is None:
                continue
            score = float(link_scores[si][k, r, c])
            if score >= link_threshold:
                add_edge(i, j, score)
        if cross_scores[si] is None:
            continue
        for k, (dr, dc) in enumerate(CHILD_OFFSETS):
            j = index.get((si - 1, (2 * r + dr, 2 * c + dc)))
            if j is None:
                continue
            score = float(cross_scores[si][k, r, c])
            if score >= link_threshold:
                add_edge(i, j, score)
    return SegmentGraph(
        nodes=tuple(segments),
        edges=tuple((i, j, s) for (i, j), s in sorted(edges.items())),
    )


def connected_components(graph: SegmentGraph):
    """Partition node indices; explicit stack, so depth never limits size.

    Components come out ordered by their smallest node index, members
    ascending.
    """
    n = len(graph.nodes)
    adjacency = [[] for _ in range(n)]
    for i, j, _score in graph.edges:
        adjacency[i].append(j)
        adjacency[j].append(i)
    seen = [False] * n
    components = []
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        stack = [start]
        comp = []
        while stack:
            node = stack.pop()
            comp.append(node)
            for nb in adjacency[node]:
                if not seen[nb]:
                    seen[nb] = True
                    stack.append(nb)
        components.append(sorted(comp))
    return components


def combine_segments(component) -> WordBox:
    """Collapse one component of segments into an oriented word box.

    The box direction is the circular mean of the segment angles (doubled
    angles, so the +-pi/2 wrap averages correctly); a line with that fixed
    direction is fitted through the centers (reducing to the mean
    perpendicular offset); the box spans the extreme center projections
    padded by half the respective segment widths; height is the mean
    segment height.
    """
    if not component:
        raise ValueError("cannot combine an empty component")
    if len(component) == 1:
        s = component[0]
        return WordBox(s.cx, s.cy, s.w, s.h, canonical_angle(s.theta), s.score)
    sin2 = sum(math.sin(2 * s.theta) for s in component)
    cos2 = sum(math.cos(2 * s.theta) for s in component)
    theta = canonical_angle(0.5 * math.atan2(sin2, cos2))
    u = np.array([math.cos(theta), math.sin(theta)])
    nvec = np.array([-math.sin(theta), math.cos(theta)])
    centers = np.array([[s.cx, s.cy] for s in component], dtype=np.float64)
    along = centers @ u
    offset = float(np.mean(centers @ nvec))
    i_lo = int(np.argmin(along))
    i_hi = int(np.argmax(along))
    lo = along[i_lo] - component[i_lo].w / 2.0
    hi = along[i_hi] + component[i_hi].w / 2.0
    mid = (lo + hi) / 2.0
    center = mid * u + offset * nvec
    height = float(np.mean([s.h for s in component]))
    score = float(np.mean([s.score for s in component]))
    return WordBox(
        cx=float(center[0]),
        cy=float(center[1]),
        width=float(hi - lo),
        height=height,
        theta=theta,
        score=score,
    )


def words_from_maps(
    maps: ScaleMaps,
    seg_threshold: float = 0.5,
    link_threshold: float = 0.5,
    min_component_size: int = 1,
):
    """Full decode -> link -> combine pipeline for one image's maps."""
    segments = decode_segments(maps, seg_threshold)
    graph = build_graph(segments, maps, link_threshold)
    boxes = []
    for comp in connected_components(graph):
        if len(comp) < min_component_size:
            continue
        boxes.append(combine_segments([segments[i] for i in comp]))
    return boxes
