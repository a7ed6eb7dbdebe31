import math

import numpy as np
import pytest

from segtext.codec import (
    CHILD_OFFSETS,
    NEIGHBOR_OFFSETS,
    HeadMap,
    ScaleMaps,
    Segment,
    WordQuad,
    canonical_angle,
    decode_segments,
    encode_ground_truth,
    load_ground_truth,
    maps_from_targets,
    parse_gt_line,
)
from segtext.model import DEFAULT_SCALES, ScaleSpec


def flat_head(spec, grid, class_logits=0.0, geometry=0.0):
    gh, gw = grid
    cross = None
    if spec.has_cross_links:
        cross = np.zeros((8, gh, gw))
    return HeadMap(
        spec=spec,
        class_logits=np.full((2, gh, gw), float(class_logits)),
        geometry=np.full((5, gh, gw), float(geometry)),
        link_logits=np.zeros((16, gh, gw)),
        cross_link_logits=cross,
    )


def crop_oracle(rect, a, ax, ay):
    """Scalar re-derivation of the band crop a positive anchor encodes."""
    wcx, wcy, ww, wh, th = rect
    u, v = math.cos(th), math.sin(th)
    t = (ax - wcx) * u + (ay - wcy) * v
    lo = max(-ww / 2.0, t - a / 2.0)
    hi = min(ww / 2.0, t + a / 2.0)
    tc = (lo + hi) / 2.0
    return (wcx + tc * u, wcy + tc * v, hi - lo, wh, th)


class TestCanonicalAngle:
    @pytest.mark.parametrize(
        "theta,want",
        [
            (0.0, 0.0),
            (0.3, 0.3),
            (math.pi / 2, math.pi / 2),
            (-math.pi / 2, math.pi / 2),
            (math.pi / 2 + 0.1, -math.pi / 2 + 0.1),
            (-1.7, math.pi - 1.7),
            (math.pi, 0.0),
        ],
    )
    def test_wraps_into_half_open_range(self, theta, want):
        got = canonical_angle(theta)
        assert -math.pi / 2 < got <= math.pi / 2
        assert got == pytest.approx(want, abs=1e-12)

    def test_idempotent_on_random_angles(self):
        rng = np.random.default_rng(0)
        for theta in rng.uniform(-10, 10, 200):
            once = canonical_angle(theta)
            assert canonical_angle(once) == pytest.approx(once, abs=1e-12)


class TestDecode:
    def test_zero_delta_anchor_identity(self):
        head = flat_head(DEFAULT_SCALES[0], (2, 2))
        head.class_logits[1] += 10.0  # all pixels confidently on
        segs = decode_segments(ScaleMaps((head,)), 0.5)
        s = [x for x in segs if x.grid_pos == (0, 0)][0]
        assert (s.cx, s.cy, s.w, s.h, s.theta) == (4.0, 4.0, 8.0, 8.0, 0.0)
        assert s.score > 0.99

    def test_log_width_delta_doubles_width(self):
        head = flat_head(DEFAULT_SCALES[0], (1, 1))
        head.class_logits[1] += 10.0
        head.geometry[2] += math.log(2.0)
        (s,) = decode_segments(ScaleMaps((head,)), 0.5)
        assert s.w == pytest.approx(16.0, rel=1e-12)
        assert s.h == pytest.approx(8.0, rel=1e-12)

    def test_equal_logits_sit_exactly_on_half_threshold(self):
        head = flat_head(DEFAULT_SCALES[0], (3, 4))
        maps = ScaleMaps((head,))
        assert len(decode_segments(maps, 0.5)) == 12
        assert len(decode_segments(maps, 0.5 + 1e-6)) == 0

    def test_emission_order_is_scale_major_row_major(self):
        heads = tuple(
            flat_head(spec, (2, 2), class_logits=0.0) for spec in DEFAULT_SCALES[:2]
        )
        for h in heads:
            h.class_logits[1] += 5.0
        segs = decode_segments(ScaleMaps(heads), 0.5)
        assert [(s.scale_index, s.grid_pos) for s in segs] == [
            (0, (0, 0)), (0, (0, 1)), (0, (1, 0)), (0, (1, 1)),
            (1, (0, 0)), (1, (0, 1)), (1, (1, 0)), (1, (1, 1)),
        ]


class TestWordQuad:
    def test_rect_roundtrip_over_random_poses(self):
        rng = np.random.default_rng(17)
        for _ in range(300):
            cx, cy = rng.uniform(-50, 50, 2)
            w = rng.uniform(1.0, 80.0)
            h = rng.uniform(1.0, 80.0)
            theta = rng.uniform(-math.pi / 2 + 1e-3, math.pi / 2)
            quad = WordQuad.from_rect(cx, cy, w, h, theta)
            rcx, rcy, rw, rh, rth = quad.to_rect()
            assert (rcx, rcy) == pytest.approx((cx, cy), abs=1e-9)
            assert (rw, rh) == pytest.approx((w, h), abs=1e-9)
            assert rth == pytest.approx(theta, abs=1e-9)

    def test_to_rect_describes_same_rectangle_for_any_starting_corner(self):
        """Rolling the listing by one swaps the w/h roles; geometry is stable."""
        quad = WordQuad.from_rect(10, 20, 30, 8, 0.4)

        def corner_set(q):
            cx, cy, w, h, th = q.to_rect()
            pts = WordQuad.from_rect(cx, cy, w, h, th).vertices
            return sorted((round(x, 6), round(y, 6)) for x, y in pts)

        for k in range(4):
            rolled = WordQuad(quad.vertices[k:] + quad.vertices[:k])
            assert corner_set(rolled) == corner_set(quad)
        half_turn = WordQuad(quad.vertices[2:] + quad.vertices[:2])
        np.testing.assert_allclose(
            np.array(half_turn.to_rect()), np.array(quad.to_rect()), atol=1e-9
        )

    def test_degenerate_and_concave_rejected(self):
        with pytest.raises(ValueError):
            WordQuad([(0, 0), (1, 0), (2, 0), (3, 0)])
        with pytest.raises(ValueError):
            WordQuad([(0, 0), (4, 0), (1, 1), (0, 4)])
        with pytest.raises(ValueError):
            WordQuad([(0, 0), (1, 0), (1, 1)])


class TestEncode:
    def test_matched_anchor_gets_zero_deltas(self):
        word = WordQuad.from_rect(24, 24, 100, 16, 0.0)
        targets = encode_ground_truth([word], DEFAULT_SCALES, (128, 128))
        t16 = targets[1]
        assert t16.class_label[1, 1] == 1
        np.testing.assert_allclose(t16.geometry[:, 1, 1], 0.0, atol=1e-12)

    def test_size_criterion_excludes_distant_scales(self):
        word = WordQuad.from_rect(256, 256, 200, 16, 0.0)
        targets = encode_ground_truth([word], DEFAULT_SCALES, (512, 512))
        assert targets[1].positive_count > 0
        assert targets[0].positive_count == 0  # 16/8 = 2 > 1.5
        for t in targets[2:]:
            assert t.positive_count == 0

    def test_ratio_boundary_is_inclusive(self):
        word = WordQuad.from_rect(64, 64, 120, 12.0, 0.0)  # 12 = 8 * 1.5
        targets = encode_ground_truth([word], DEFAULT_SCALES, (128, 128))
        assert targets[0].positive_count > 0

    def test_links_positive_within_word_negative_across_words(self):
        a = WordQuad.from_rect(24, 24, 48, 16, 0.0)  # cols 0..2 at scale 16
        b = WordQuad.from_rect(72, 24, 48, 16, 0.0)  # cols 3..5
        targets = encode_ground_truth([a, b], DEFAULT_SCALES, (48, 96))
        t = targets[1]
        east = NEIGHBOR_OFFSETS.index((0, 1))
        assert t.word_index[1, 1] == 0 and t.word_index[1, 3] == 1
        assert t.link_label[east, 1, 1] == 1  # (1,1)->(1,2), same word
        assert t.link_label[east, 1, 2] == 0  # (1,2)->(1,3), different words
        assert t.link_care[east, 1, 2]

    def test_edge_pixels_mask_out_of_grid_links(self):
        word = WordQuad.from_rect(24, 24, 100, 16, 0.0)
        t = encode_ground_truth([word], DEFAULT_SCALES, (48, 128))[1]
        west = NEIGHBOR_OFFSETS.index((0, -1))
        north = NEIGHBOR_OFFSETS.index((-1, 0))
        assert not t.link_care[west, 1, 0]
        assert not t.link_care[north, 0, 1]
        assert t.link_care[west, 1, 1]

    def test_cross_links_connect_coarse_parent_to_fine_children(self):
        # h=12 satisfies the 1.5 ratio at both stride 8 and stride 16, and
        # cy=24 puts the band over anchor centers of both grids
        word = WordQuad.from_rect(64, 24, 120, 12.0, 0.0)
        targets = encode_ground_truth([word], DEFAULT_SCALES, (64, 128))
        fine, coarse = targets[0], targets[1]
        assert fine.positive_count > 0 and coarse.positive_count > 0
        assert coarse.cross_label is not None
        rows, cols = np.nonzero(coarse.cross_label.sum(axis=0))
        assert len(rows) > 0
        for k, (dr, dc) in enumerate(CHILD_OFFSETS):
            for r, c in zip(rows, cols):
                if coarse.cross_label[k, r, c]:
                    assert fine.class_label[2 * r + dr, 2 * c + dc] == 1
                    assert fine.word_index[2 * r + dr, 2 * c + dc] == \
                        coarse.word_index[r, c]

    def test_finest_scale_has_no_cross_channels(self):
        word = WordQuad.from_rect(32, 32, 40, 8, 0.0)
        targets = encode_ground_truth([word], DEFAULT_SCALES, (64, 64))
        assert targets[0].cross_label is None
        assert targets[1].cross_label is not None

    def test_ignored_words_mask_pixels_and_links(self):
        word = WordQuad.from_rect(40, 24, 64, 16, 0.0, care=False)
        t = encode_ground_truth([word], DEFAULT_SCALES, (48, 96))[1]
        assert t.positive_count == 0
        owned = t.word_index >= 0
        assert owned.any()
        assert not t.care[owned].any()
        assert t.care[~owned].all()
        east = NEIGHBOR_OFFSETS.index((0, 1))
        r, c = np.argwhere(owned)[0]
        assert not t.link_care[east, r, c]

    def test_contested_pixel_goes_to_larger_overlap_then_lower_index(self):
        big = WordQuad.from_rect(8, 8, 32, 16, 0.0)
        small = WordQuad.from_rect(8, 8, 32, 12.0, 0.0)
        spec = (DEFAULT_SCALES[1],)
        t_small_first = encode_ground_truth([small, big], spec, (16, 16))[0]
        assert t_small_first.word_index[0, 0] == 1  # big wins on overlap area
        t_twice = encode_ground_truth([big, big], spec, (16, 16))[0]
        assert t_twice.word_index[0, 0] == 0  # tie falls to lower index

    def test_each_positive_pixel_has_exactly_one_owner(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            words = [
                WordQuad.from_rect(
                    rng.uniform(40, 216), rng.uniform(40, 216),
                    rng.uniform(30, 80), rng.uniform(11, 23),
                    rng.uniform(-1.4, 1.4),
                )
                for _ in range(3)
            ]
            t = encode_ground_truth(words, DEFAULT_SCALES, (256, 256))[1]
            pos = t.class_label.astype(bool)
            assert (t.word_index[pos] >= 0).all()
            assert (t.geometry[:, ~pos] == 0).all()


class TestRoundTrip:
    """decode(maps_from_targets(encode(...))) must reproduce the band crops."""

    def test_thousand_word_aligned_segments(self):
        rng = np.random.default_rng(99)
        checked = 0
        worst = 0.0
        while checked < 1000:
            spec = DEFAULT_SCALES[int(rng.integers(0, 5))]
            a = float(spec.receptive_field)
            img = int(8 * a)
            h = a * rng.uniform(0.7, 1.45)
            w = rng.uniform(2 * a, 5 * a)
            theta = rng.uniform(-1.5, 1.5)
            cx = rng.uniform(img * 0.35, img * 0.65)
            cy = rng.uniform(img * 0.35, img * 0.65)
            word = WordQuad.from_rect(cx, cy, w, h, theta)
            rect = word.to_rect()
            targets = encode_ground_truth([word], DEFAULT_SCALES, (img, img))
            segs = decode_segments(maps_from_targets(targets), 0.5)
            for s in segs:
                sp = DEFAULT_SCALES[s.scale_index]
                al = float(sp.receptive_field)
                r, c = s.grid_pos
                ax, ay = (c + 0.5) * al, (r + 0.5) * al
                ocx, ocy, ow, oh, oth = crop_oracle(rect, al, ax, ay)
                err = max(
                    abs(s.cx - ocx), abs(s.cy - ocy),
                    abs(s.w - ow), abs(s.h - oh),
                    abs(s.theta - canonical_angle(oth)),
                )
                worst = max(worst, err)
                checked += 1
        assert worst < 1e-5

    def test_vertical_angle_roundtrips_to_canonical_representative(self):
        word = WordQuad.from_rect(32, 32, 14, 48, -math.pi / 2)
        targets = encode_ground_truth([word], DEFAULT_SCALES, (64, 64))
        segs = decode_segments(maps_from_targets(targets), 0.5)
        assert segs
        for s in segs:
            assert s.theta == pytest.approx(math.pi / 2, abs=1e-9)

    def test_decoded_centers_stay_inside_image(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            word = WordQuad.from_rect(
                rng.uniform(60, 196), rng.uniform(60, 196),
                rng.uniform(24, 90), rng.uniform(11, 23),
                rng.uniform(-1.5, 1.5),
            )
            targets = encode_ground_truth([word], DEFAULT_SCALES, (256, 256))
            for s in decode_segments(maps_from_targets(targets), 0.5):
                assert 0 <= s.cx <= 256 and 0 <= s.cy <= 256


class TestScaleMaps:
    def test_from_raw_slices_channels(self):
        rng = np.random.default_rng(5)
        raws = [
            rng.standard_normal((1, spec.head_channels, 4, 6)).astype(np.float32)
            for spec in DEFAULT_SCALES
        ]
        maps = ScaleMaps.from_raw(raws, DEFAULT_SCALES)
        assert len(maps) == 5
        h0 = maps[0]
        np.testing.assert_array_equal(h0.class_logits, raws[0][0, 0:2])
        np.testing.assert_array_equal(h0.geometry, raws[0][0, 2:7])
        np.testing.assert_array_equal(h0.link_logits, raws[0][0, 7:23])
        assert h0.cross_link_logits is None
        np.testing.assert_array_equal(maps[1].cross_link_logits, raws[1][0, 23:31])

    def test_channel_count_mismatch_rejected(self):
        raws = [np.zeros((1, 23, 4, 6))] * 5
        with pytest.raises(ValueError):
            ScaleMaps.from_raw(raws, DEFAULT_SCALES)

    def test_link_scores_shape_and_range(self):
        head = flat_head(DEFAULT_SCALES[1], (3, 3))
        assert head.link_scores().shape == (8, 3, 3)
        assert head.cross_link_scores().shape == (4, 3, 3)
        np.testing.assert_allclose(head.link_scores(), 0.5)


class TestAnnotationParsing:
    def test_quad_line_with_ignore_marker(self):
        q = parse_gt_line("0,0,10,0,10,5,0,5,###")
        assert not q.care
        assert q.vertices[0] == (0.0, 0.0)

    def test_quad_line_with_numeric_transcription(self):
        q = parse_gt_line("0,0,10,0,10,5,0,5,42")
        assert q.care

    def test_two_point_line_expands_to_quad(self):
        q = parse_gt_line("2,3,12,9")
        assert q.vertices == ((2, 3), (12, 3), (12, 9), (2, 9))
        assert q.care

    def test_blank_line_skipped(self):
        assert parse_gt_line("   \n") is None

    def test_bad_line_reports_location(self, tmp_path):
        p = tmp_path / "gt_img_1.txt"
        p.write_text("1,2,3\n", encoding="utf-8")
        with pytest.raises(ValueError, match="gt_img_1.txt:1"):
            load_ground_truth(p)

    def test_file_loading_with_bom_and_blank_lines(self, tmp_path):
        p = tmp_path / "gt.txt"
        p.write_text("﻿0,0,20,0,20,8,0,8,word\n\n1,1,9,7\n", encoding="utf-8")
        words = load_ground_truth(p)
        assert len(words) == 2


class TestSegmentValidation:
    def test_rejects_nonpositive_sizes_and_bad_scores(self):
        with pytest.raises(ValueError):
            Segment(0, 0, 0.0, 1, 0, 0.5, 0, (0, 0))
        with pytest.raises(ValueError):
            Segment(0, 0, 1, 1, 0, 1.5, 0, (0, 0))
