"""Combined hard-example-mined loss over class, link, and geometry outputs.

Every two-way logit pair (pixel class, neighbor links, cross-scale links) at
every scale is one classification sample; all samples share a single
positive/negative pool. The N_h highest-loss care negatives count as hard;
the remaining negatives still contribute through their own averaged term
(they are not zeroed out). Geometry is scored by Huber loss at positive
pixels only.

Total, with sums over the respective sets:

    L = L_p / P_t  +  L_n / N_t  +  2 L_h / (3 N_h)  +  L_geo / P_t
    N_h = min(N_t, max(10, 2 P_t))

Terms with an empty denominator are defined as zero.

Canonical sample order (ties in hard-negative selection break toward the
earlier sample): scales in model order; within a scale the class samples
row-major, then the 8 neighbor-link channels each row-major, then the 4
cross-link channels each row-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import ScaleMaps

DEFAULT_HUBER_DELTA = 1.0


@dataclass(frozen=True)
class LossBreakdown:
    """Raw term sums plus the pool sizes; L carries the combined weights."""

    L: float
    L_p: float
    L_n: float
    L_h: float
    L_geo: float
    P_t: int
    N_t: int
    N_h: int


def hard_negative_count(p_t: int, n_t: int) -> int:
    return min(n_t, max(10, 2 * p_t))


def ohem_select(losses, labels, care):
    """Partition sample indices into (positives, hard negatives, other).

    Hard negatives are the N_h highest-loss care negatives; equal losses
    fall to the lower index. Masked samples land in no partition.
    """
    losses = np.asarray(losses, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    care = np.asarray(care).astype(bool)
    if not (losses.shape == labels.shape == care.shape):
        raise ValueError("losses, labels, and care must have equal length")
    positives = np.nonzero(labels & care)[0]
    negatives = np.nonzero(~labels & care)[0]
    n_h = hard_negative_count(len(positives), len(negatives))
    order = np.argsort(-losses[negatives], kind="stable")
    hard = np.sort(negatives[order[:n_h]])
    other = np.sort(negatives[order[n_h:]])
    return positives, hard, other


def _pair_ce(z0, z1, y):
    """Stable two-way softmax cross-entropy, elementwise float64."""
    m = np.maximum(z0, z1)
    lse = m + np.log(np.exp(z0 - m) + np.exp(z1 - m))
    return lse - np.where(y, z1, z0)


def _check_alignment(maps: ScaleMaps, targets):
    if len(maps) != len(targets):
        raise ValueError(f"{len(maps)} heads vs {len(targets)} target scales")
    for head, tgt in zip(maps.heads, targets):
        if head.spec != tgt.spec:
            raise ValueError("maps and targets disagree on scale layout")
        if head.grid_shape != tgt.grid_shape:
            raise ValueError(
                f"grid mismatch at stride {head.spec.stride}: "
                f"{head.grid_shape} vs {tgt.grid_shape}"
            )


def _flat_samples(maps: ScaleMaps, targets):
    """All classification samples in canonical order, plus scatter indices."""
    z0, z1, y, care = [], [], [], []
    scale_id, ch_off, pix = [], [], []
    for si, (head, tgt) in enumerate(zip(maps.heads, targets)):
        gh, gw = head.grid_shape
        npix = gh * gw
        pixels = np.arange(npix)

        def emit(logit_pair_base, logits, labels, mask):
            z0.append(logits[0].ravel().astype(np.float64))
            z1.append(logits[1].ravel().astype(np.float64))
            y.append(labels.ravel().astype(bool))
            care.append(mask.ravel().astype(bool))
            scale_id.append(np.full(npix, si))
            ch_off.append(np.full(npix, logit_pair_base))
            pix.append(pixels)

        emit(0, head.class_logits, tgt.class_label, tgt.care)
        for k in range(8):
            emit(
                7 + 2 * k,
                head.link_logits[2 * k : 2 * k + 2],
                tgt.link_label[k],
                tgt.link_care[k],
            )
        if head.spec.has_cross_links:
            for k in range(4):
                emit(
                    23 + 2 * k,
                    head.cross_link_logits[2 * k : 2 * k + 2],
                    tgt.cross_label[k],
                    tgt.cross_care[k],
                )
    return (
        np.concatenate(z0),
        np.concatenate(z1),
        np.concatenate(y),
        np.concatenate(care),
        np.concatenate(scale_id),
        np.concatenate(ch_off),
        np.concatenate(pix),
    )


def _geometry_terms(maps, targets, delta):
    """Summed Huber loss at positive pixels and the matching residuals."""
    total = 0.0
    residuals = []
    for head, tgt in zip(maps.heads, targets):
        pos = tgt.class_label.astype(bool)
        r = head.geometry.astype(np.float64) - tgt.geometry
        r[:, ~pos] = 0.0
        a = np.abs(r)
        huber = np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))
        total += float(huber[:, pos].sum())
        residuals.append(r)
    return total, residuals


def combined_loss(
    maps: ScaleMaps, targets, huber_delta: float = DEFAULT_HUBER_DELTA
) -> LossBreakdown:
    _check_alignment(maps, targets)
    z0, z1, y, care, _, _, _ = _flat_samples(maps, targets)
    ce = _pair_ce(z0, z1, y)
    positives, hard, other = ohem_select(ce, y, care)
    p_t = len(positives)
    n_t = int((~y & care).sum())
    n_h = hard_negative_count(p_t, n_t)
    l_p = float(ce[positives].sum())
    l_h = float(ce[hard].sum())
    l_n = float(ce[other].sum())
    l_geo, _ = _geometry_terms(maps, targets, huber_delta)
    total = 0.0
    if p_t > 0:
        total += l_p / p_t + l_geo / p_t
    if n_t > 0:
        total += l_n / n_t
    if n_h > 0:
        total += 2.0 * l_h / (3.0 * n_h)
    return LossBreakdown(
        L=total, L_p=l_p, L_n=l_n, L_h=l_h, L_geo=l_geo,
        P_t=p_t, N_t=n_t, N_h=n_h,
    )


def loss_gradient(
    maps: ScaleMaps, targets, huber_delta: float = DEFAULT_HUBER_DELTA
):
    """d(combined loss)/d(raw head values), one (C,H,W) array per scale.

    Softmax cross-entropy pairs get (p - y) times their sample weight;
    geometry channels get the clamped Huber residual at positive pixels
    times 1/P_t.
    """
    _check_alignment(maps, targets)
    z0, z1, y, care, scale_id, ch_off, pix = _flat_samples(maps, targets)
    ce = _pair_ce(z0, z1, y)
    positives, hard, other = ohem_select(ce, y, care)
    p_t = len(positives)
    n_t = int((~y & care).sum())
    n_h = hard_negative_count(p_t, n_t)

    weights = np.zeros(len(ce), dtype=np.float64)
    if p_t > 0:
        weights[positives] = 1.0 / p_t
    if n_t > 0:
        weights[other] = 1.0 / n_t
    if n_h > 0:
        weights[hard] = 2.0 / (3.0 * n_h)

    m = np.maximum(z0, z1)
    e0 = np.exp(z0 - m)
    e1 = np.exp(z1 - m)
    p_on = e1 / (e0 + e1)
    g_on = (p_on - y.astype(np.float64)) * weights
    grads = []
    _, residuals = _geometry_terms(maps, targets, huber_delta)
    for si, (head, tgt) in enumerate(zip(maps.heads, targets)):
        gh, gw = head.grid_shape
        g = np.zeros((head.spec.head_channels, gh * gw), dtype=np.float64)
        sel = scale_id == si
        np.add.at(g, (ch_off[sel], pix[sel]), -g_on[sel])
        np.add.at(g, (ch_off[sel] + 1, pix[sel]), g_on[sel])
        if p_t > 0:
            clamped = np.clip(residuals[si], -huber_delta, huber_delta)
            g[2:7] = clamped.reshape(5, gh * gw) / p_t
        grads.append(g.reshape(head.spec.head_channels, gh, gw))
    return grads
