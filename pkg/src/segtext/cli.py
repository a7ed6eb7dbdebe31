"""Command-line surface: detect, eval, bench, params, gen-weights.

Exit codes: 0 success, 1 usage error, 2 I/O or format error. All commands
are deterministic for identical inputs; detect writes byte-identical
detection files when rerun.
"""

from __future__ import annotations

import argparse
import json
import math
import statistics
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import ScaleMaps
from .evaluate import evaluate_corpus, format_detection_line
from .image import (
    DEFAULT_MIN_SIDE,
    DEFAULT_PAD_MULTIPLE,
    draw_polygon,
    map_to_original,
    prepare_tensor,
    read_ppm,
    write_ppm,
)
from .linker import words_from_maps
from .model import NetworkConfig, build_network, count_parameters
from .weights import load_weights, random_store, save_weights


@dataclass(frozen=True)
class RunConfig:
    """Detect-time knobs; defaults are the documented operating point."""

    seg_threshold: float = 0.5
    link_threshold: float = 0.5
    min_side: int = DEFAULT_MIN_SIDE
    pad_multiple: int = DEFAULT_PAD_MULTIPLE

    def __post_init__(self):
        for name in ("seg_threshold", "link_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.min_side < 128:
            raise ValueError(f"min_side must be at least 128, got {self.min_side}")
        if self.pad_multiple < 1:
            raise ValueError("pad_multiple must be positive")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v) or v <= 0.0:
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return v


def _unit_interval(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


def _int_at_least(minimum: int):
    def parse(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
        if v < minimum:
            raise argparse.ArgumentTypeError(f"must be at least {minimum}, got {v}")
        return v

    return parse


def detect_image(net, pixels, config: RunConfig):
    """(WordBox list in resized space, vertex tuples in original space)."""
    tensor, factors = prepare_tensor(
        pixels, min_side=config.min_side, multiple=config.pad_multiple
    )
    raws = net.forward(tensor)
    maps = ScaleMaps.from_raw(raws, net.config.scales)
    words = words_from_maps(maps, config.seg_threshold, config.link_threshold)
    return words, [map_to_original(w.corners(), factors) for w in words]


def benchmark(net, height: int, width: int, iters: int, warmup: int = 3, seed: int = 0):
    """Forward-pass wall times in ms -> (median, p95, all samples)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 3, height, width)).astype(np.float32)
    for _ in range(warmup):
        net.forward(x)
    times = []
    for _ in range(iters):
        start = time.perf_counter()
        net.forward(x)
        times.append((time.perf_counter() - start) * 1000.0)
    ranked = sorted(times)
    p95 = ranked[max(0, math.ceil(0.95 * len(ranked)) - 1)]
    return statistics.median(times), p95, times


def cmd_detect(args) -> int:
    config = RunConfig(
        seg_threshold=args.seg_thresh,
        link_threshold=args.link_thresh,
        min_side=args.min_side,
    )
    net = build_network(load_weights(args.weights))
    pixels = read_ppm(args.image)
    words, mapped = detect_image(net, pixels, config)
    lines = [
        format_detection_line(verts, w.score) for w, verts in zip(words, mapped)
    ]
    out = Path(args.out) if args.out else Path(Path(args.image).stem + ".txt")
    out.write_text("".join(line + "\n" for line in lines), encoding="ascii")
    print(f"{args.image}: {len(words)} boxes -> {out}")
    if args.annotate:
        canvas = pixels.copy()
        for verts in mapped:
            draw_polygon(canvas, verts)
        write_ppm(args.annotate, canvas)
        print(f"annotated image -> {args.annotate}")
    return 0


def cmd_eval(args) -> int:
    per_image, summary = evaluate_corpus(args.gt_dir, args.det_dir)
    if not per_image:
        print(
            f"error: no GT/detection pairs between {args.gt_dir} and {args.det_dir}",
            file=sys.stderr,
        )
        return 2
    for stem, rep in per_image:
        print(
            f"{stem}: P={rep.precision:.4f} R={rep.recall:.4f} "
            f"F={rep.f_measure:.4f}"
        )
    flags = ""
    if summary.precision_defaulted or summary.recall_defaulted:
        flags = " (empty denominator defaulted to 1.0)"
    print(
        f"corpus [{summary.image_count} images]: P={summary.precision:.4f} "
        f"R={summary.recall:.4f} F={summary.f_measure:.4f}{flags}"
    )
    if args.out:
        payload = {
            "corpus": {
                "precision": summary.precision,
                "recall": summary.recall,
                "f_measure": summary.f_measure,
                "images": summary.image_count,
                "precision_defaulted": summary.precision_defaulted,
                "recall_defaulted": summary.recall_defaulted,
            },
            "images": {
                stem: {
                    "precision": rep.precision,
                    "recall": rep.recall,
                    "f_measure": rep.f_measure,
                }
                for stem, rep in per_image
            },
        }
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="ascii"
        )
    return 0


def cmd_bench(args) -> int:
    if args.weights:
        store = load_weights(args.weights)
    else:
        store = random_store(NetworkConfig(alpha=args.alpha), args.seed)
    net = build_network(store)
    median, p95, _ = benchmark(
        net, args.height, args.width, args.iters, seed=args.seed
    )
    print(
        f"alpha={net.config.alpha:g} input=1x3x{args.height}x{args.width} "
        f"iters={args.iters}"
    )
    print(f"median {median:.1f} ms  p95 {p95:.1f} ms")
    return 0


def cmd_params(args) -> int:
    n = count_parameters(NetworkConfig(alpha=args.alpha))
    print(f"alpha={args.alpha:g}: {n:,} parameters")
    return 0


def cmd_gen_weights(args) -> int:
    store = random_store(NetworkConfig(alpha=args.alpha), args.seed)
    save_weights(args.out, store)
    print(
        f"wrote {args.out}: alpha={args.alpha:g} seed={args.seed} "
        f"({store.n_scalars:,} scalars)"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="segtext",
        description="Multi-scale segment-and-link text detection toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    d = sub.add_parser("detect", help="detect text boxes in a binary PPM image")
    d.add_argument("--weights", required=True, help="weight file to load")
    d.add_argument("--image", required=True, help="input image (binary PPM, P6)")
    d.add_argument(
        "--out", default=None, help="detection file path (default: <image stem>.txt)"
    )
    d.add_argument("--seg-thresh", type=_unit_interval, default=0.5)
    d.add_argument("--link-thresh", type=_unit_interval, default=0.5)
    d.add_argument("--min-side", type=_int_at_least(128), default=DEFAULT_MIN_SIDE)
    d.add_argument(
        "--annotate", default=None, help="also write an annotated PPM here"
    )
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="score a detection corpus against ground truth")
    e.add_argument("--gt-dir", required=True, help="ground-truth annotation directory")
    e.add_argument("--det-dir", required=True, help="detection file directory")
    e.add_argument("--out", default=None, help="also write results as JSON")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="measure forward-pass latency")
    b.add_argument("--weights", default=None, help="weight file (default: random)")
    b.add_argument("--alpha", type=_positive_float, default=1.0)
    b.add_argument("--width", type=_int_at_least(32), default=512)
    b.add_argument("--height", type=_int_at_least(32), default=512)
    b.add_argument("--iters", type=_int_at_least(10), default=10)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    p = sub.add_parser("params", help="report the parameter count for a width")
    p.add_argument("--alpha", type=_positive_float, default=1.0)
    p.set_defaults(func=cmd_params)

    g = sub.add_parser("gen-weights", help="write seeded random weights")
    g.add_argument("--alpha", type=_positive_float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="weight file to write")
    g.set_defaults(func=cmd_gen_weights)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
