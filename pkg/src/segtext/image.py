"""Binary PPM I/O and the deterministic detect-time image pipeline.

Pipeline order is fixed: bilinear resize so the smallest side hits the
target, normalize to [-1, 1] via x/127.5 - 1, then zero-pad bottom/right to
a stride multiple. Padding happens after normalization on purpose: a zero
activation, not a -1, is what propagates least bias through the network.

Resampling uses half-pixel-centered source coordinates with clamped edges,
so a resize to the identical size reproduces the input bit for bit. Box
coordinates map between original and resized space by the per-axis ratio of
actual output to input dims.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

DEFAULT_MIN_SIDE = 512
DEFAULT_PAD_MULTIPLE = 128
MIN_INPUT_SIDE = 8

_WHITESPACE = b" \t\r\n\x0b\x0c"


class ImageFormatError(ValueError):
    """Raised for malformed or unsupported image files."""


def _next_token(data: bytes, pos: int, where: str):
    while pos < len(data):
        ch = data[pos : pos + 1]
        if ch in _WHITESPACE:
            pos += 1
        elif ch == b"#":
            while pos < len(data) and data[pos : pos + 1] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos : pos + 1] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise ImageFormatError(f"{where}: truncated header")
    return data[start:pos], pos


def read_ppm(path) -> np.ndarray:
    """Binary PPM (P6, maxval 255) -> (H, W, 3) uint8."""
    data = Path(path).read_bytes()
    magic, pos = _next_token(data, 0, str(path))
    if magic != b"P6":
        raise ImageFormatError(f"{path}: not a binary PPM (P6), magic {magic!r}")
    fields = []
    for name in ("width", "height", "maxval"):
        tok, pos = _next_token(data, pos, str(path))
        try:
            val = int(tok)
        except ValueError:
            raise ImageFormatError(f"{path}: non-numeric {name} {tok!r}") from None
        if val <= 0:
            raise ImageFormatError(f"{path}: {name} must be positive, got {val}")
        fields.append(val)
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise ImageFormatError(f"{path}: missing whitespace before pixel data")
    pos += 1
    need = width * height * 3
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise ImageFormatError(
            f"{path}: expected {need} pixel bytes, found {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path, pixels) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ImageFormatError(
            f"write_ppm needs (H, W, 3) uint8, got {pixels.dtype} {pixels.shape}"
        )
    h, w = pixels.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())


def bilinear_resize(pixels, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centered bilinear resample with clamped edges, float64."""
    src = np.asarray(pixels, dtype=np.float64)
    if src.ndim != 3:
        raise ValueError(f"expected (H, W, C) pixels, got shape {src.shape}")
    in_h, in_w = src.shape[:2]
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be positive")
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, in_h - 1).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, in_w - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def resize_min_side(pixels, target: int = DEFAULT_MIN_SIDE):
    """Resize so min(H, W) == target, keeping aspect ratio.

    Returns (float64 pixels, (fy, fx)) where fy, fx are the actual
    output/input dimension ratios used for coordinate mapping.
    """
    pixels = np.asarray(pixels)
    in_h, in_w = pixels.shape[:2]
    if min(in_h, in_w) < MIN_INPUT_SIDE:
        raise ImageFormatError(
            f"image {in_w}x{in_h} is smaller than {MIN_INPUT_SIDE} px on a side"
        )
    scale = target / min(in_h, in_w)
    out_h = target if in_h <= in_w else int(in_h * scale + 0.5)
    out_w = target if in_w <= in_h else int(in_w * scale + 0.5)
    if (out_h, out_w) == (in_h, in_w):
        return pixels.astype(np.float64), (1.0, 1.0)
    resized = bilinear_resize(pixels, out_h, out_w)
    return resized, (out_h / in_h, out_w / in_w)


def normalize(pixels) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64) / 127.5 - 1.0


def pad_to_multiple(pixels, multiple: int = DEFAULT_PAD_MULTIPLE) -> np.ndarray:
    """Zero-pad bottom/right so both spatial dims divide by `multiple`."""
    h, w = pixels.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return pixels
    widths = ((0, ph), (0, pw)) + ((0, 0),) * (pixels.ndim - 2)
    return np.pad(pixels, widths, constant_values=0.0)


def to_nchw(pixels) -> np.ndarray:
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) pixels, got shape {pixels.shape}")
    return np.transpose(pixels, (2, 0, 1))[None].astype(np.float32)


def prepare_tensor(
    pixels,
    min_side: int = DEFAULT_MIN_SIDE,
    multiple: int = DEFAULT_PAD_MULTIPLE,
):
    """uint8 image -> ((1, 3, H, W) float32 network input, (fy, fx))."""
    resized, factors = resize_min_side(pixels, target=min_side)
    return to_nchw(pad_to_multiple(normalize(resized), multiple)), factors


def map_to_original(vertices, factors):
    """Vertices found in resized space -> original image coordinates."""
    fy, fx = factors
    return tuple((float(x) / fx, float(y) / fy) for x, y in vertices)


def draw_polygon(pixels, vertices, color=(255, 0, 0)):
    """Draw a closed polygon outline in-place on (H, W, 3) uint8 pixels."""
    h, w = pixels.shape[:2]
    pts = [(float(x), float(y)) for x, y in vertices]
    col = np.asarray(color, dtype=pixels.dtype)
    for i in range(len(pts)):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % len(pts)]
        steps = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
        for t in np.linspace(0.0, 1.0, steps + 1):
            x = int(round(x0 + (x1 - x0) * t))
            y = int(round(y0 + (y1 - y0) * t))
            if 0 <= x < w and 0 <= y < h:
                pixels[y, x] = col
    return pixels
