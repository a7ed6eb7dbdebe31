"""PPM codec and resize/normalize/pad pipeline tests."""

import numpy as np
import pytest

from segtext.image import (
    ImageFormatError,
    bilinear_resize,
    draw_polygon,
    map_to_original,
    normalize,
    pad_to_multiple,
    prepare_tensor,
    read_ppm,
    resize_min_side,
    to_nchw,
    write_ppm,
)


def random_image(rng, h, w):
    return rng.integers(0, 256, (h, w, 3), dtype=np.uint8)


class TestPpm:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        img = random_image(rng, 37, 61)
        path = tmp_path / "img.ppm"
        write_ppm(path, img)
        assert np.array_equal(read_ppm(path), img)

    def test_header_comments_are_skipped(self, tmp_path):
        body = bytes([10, 20, 30, 40, 50, 60])
        raw = b"P6\n# camera says hi\n2 1\n# another\n255\n" + body
        path = tmp_path / "c.ppm"
        path.write_bytes(raw)
        img = read_ppm(path)
        assert img.shape == (1, 2, 3)
        assert img[0, 1, 2] == 60

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "p5.ppm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
        with pytest.raises(ImageFormatError, match="P6"):
            read_ppm(path)

    def test_rejects_wide_maxval(self, tmp_path):
        path = tmp_path / "deep.ppm"
        path.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
        with pytest.raises(ImageFormatError, match="maxval"):
            read_ppm(path)

    def test_rejects_truncated_payload(self, tmp_path):
        path = tmp_path / "cut.ppm"
        path.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(ImageFormatError, match="pixel bytes"):
            read_ppm(path)

    def test_rejects_non_numeric_dims(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P6\nwide 2\n255\n" + bytes(12))
        with pytest.raises(ImageFormatError, match="width"):
            read_ppm(path)

    def test_write_requires_uint8(self, tmp_path):
        with pytest.raises(ImageFormatError):
            write_ppm(tmp_path / "f.ppm", np.zeros((4, 4, 3), dtype=np.float32))


class TestBilinearResize:
    def test_same_size_is_identity(self):
        rng = np.random.default_rng(1)
        img = random_image(rng, 24, 17)
        out = bilinear_resize(img, 24, 17)
        assert np.array_equal(out, img.astype(np.float64))

    def test_constant_image_stays_constant(self):
        img = np.full((9, 13, 3), 77, dtype=np.uint8)
        out = bilinear_resize(img, 30, 5)
        assert np.all(out == 77.0)

    def test_hand_computed_upsample(self):
        src = np.array([[0.0, 100.0], [200.0, 300.0]])[:, :, None]
        out = bilinear_resize(src, 4, 4)
        # interior sample mixes all four neighbors at 0.25 fractions
        assert out[1, 1, 0] == pytest.approx(75.0, abs=1e-12)
        # corners clamp to the nearest source pixel
        assert out[0, 0, 0] == 0.0
        assert out[3, 3, 0] == 300.0

    def test_two_to_one_downsample_averages_blocks(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(0, 255, (6, 8, 3))
        out = bilinear_resize(img, 3, 4)
        blocks = img.reshape(3, 2, 4, 2, 3).mean(axis=(1, 3))
        assert np.allclose(out, blocks, atol=1e-12)


class TestResizeMinSide:
    def test_landscape_resize_arithmetic(self):
        img = np.zeros((768, 1024, 3), dtype=np.uint8)
        resized, (fy, fx) = resize_min_side(img, target=512)
        assert resized.shape == (512, 683, 3)
        assert (fy, fx) == (512 / 768, 683 / 1024)

    def test_portrait_resize_arithmetic(self):
        img = np.zeros((1024, 768, 3), dtype=np.uint8)
        resized, _ = resize_min_side(img, target=512)
        assert resized.shape == (683, 512, 3)

    def test_fixed_point_is_bit_exact(self):
        rng = np.random.default_rng(3)
        img = random_image(rng, 512, 700)
        resized, factors = resize_min_side(img, target=512)
        assert factors == (1.0, 1.0)
        assert np.array_equal(resized, img.astype(np.float64))

    def test_small_side_upscales(self):
        img = np.zeros((100, 400, 3), dtype=np.uint8)
        resized, (fy, fx) = resize_min_side(img, target=512)
        assert resized.shape[0] == 512
        assert resized.shape[1] == int(400 * (512 / 100) + 0.5)

    def test_undersized_image_rejected(self):
        with pytest.raises(ImageFormatError, match="smaller"):
            resize_min_side(np.zeros((4, 100, 3), dtype=np.uint8))


class TestNormalizePad:
    def test_normalize_range(self):
        img = np.array([[[0, 127, 255]]], dtype=np.uint8)
        out = normalize(img)
        assert out[0, 0, 0] == -1.0
        assert out[0, 0, 2] == 1.0
        assert abs(out[0, 0, 1]) < 0.005

    def test_pad_extends_bottom_right_with_zeros(self):
        img = np.ones((512, 683, 3))
        out = pad_to_multiple(img, 128)
        assert out.shape == (512, 768, 3)
        assert np.all(out[:, :683] == 1.0)
        assert np.all(out[:, 683:] == 0.0)

    def test_pad_noop_when_already_multiple(self):
        img = np.ones((256, 128, 3))
        assert pad_to_multiple(img, 128) is img

    def test_to_nchw_layout(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(-1, 1, (5, 7, 3))
        t = to_nchw(img)
        assert t.shape == (1, 3, 5, 7)
        assert t.dtype == np.float32
        assert t[0, 2, 4, 6] == np.float32(img[4, 6, 2])


class TestPrepareTensor:
    def test_end_to_end_shapes(self):
        rng = np.random.default_rng(5)
        img = random_image(rng, 768, 1024)
        tensor, (fy, fx) = prepare_tensor(img)
        assert tensor.shape == (1, 3, 512, 768)
        # padded columns stay zero after normalization
        assert np.all(tensor[:, :, :, 683:] == 0.0)
        assert (fy, fx) == (512 / 768, 683 / 1024)

    def test_square_input_needs_no_work(self):
        rng = np.random.default_rng(6)
        img = random_image(rng, 512, 512)
        tensor, factors = prepare_tensor(img)
        assert tensor.shape == (1, 3, 512, 512)
        assert factors == (1.0, 1.0)
        expect = (img.astype(np.float64) / 127.5 - 1.0).transpose(2, 0, 1)
        assert np.allclose(tensor[0], expect, atol=1e-6)

    def test_coordinate_roundtrip_stays_tight(self):
        rng = np.random.default_rng(7)
        _, (fy, fx) = resize_min_side(np.zeros((600, 900, 3), np.uint8), 512)
        for _ in range(100):
            x = rng.uniform(0, 900)
            y = rng.uniform(0, 600)
            forward = (x * fx, y * fy)
            (bx, by), = map_to_original([forward], (fy, fx))
            assert abs(bx - x) < 0.51 and abs(by - y) < 0.51
            assert abs(bx - x) < 1e-9 and abs(by - y) < 1e-9


class TestDrawPolygon:
    def test_marks_edges_and_clips_offscreen(self):
        img = np.zeros((20, 20, 3), dtype=np.uint8)
        draw_polygon(img, [(2, 2), (10, 2), (10, 8), (2, 8)], color=(255, 0, 0))
        assert tuple(img[2, 5]) == (255, 0, 0)
        assert tuple(img[5, 10]) == (255, 0, 0)
        assert tuple(img[5, 5]) == (0, 0, 0)
        # vertices off the canvas must not raise
        draw_polygon(img, [(-5, -5), (30, -5), (30, 30), (-5, 30)])
