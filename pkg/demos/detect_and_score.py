"""End-to-end: plant words, decode them back, score the detection files.

No trained weights ship with the library, so this demo drives the decoder
with ideal maps built from the encoded targets; the point is the plumbing
from maps to detection files to corpus scores.
"""

import tempfile
from pathlib import Path

import numpy as np

from segtext.codec import WordQuad, encode_ground_truth, maps_from_targets
from segtext.evaluate import evaluate_corpus, format_detection_line
from segtext.image import map_to_original, prepare_tensor, write_ppm
from segtext.linker import words_from_maps
from segtext.model import DEFAULT_SCALES


def main():
    root = Path(tempfile.mkdtemp(prefix="segtext_demo_"))
    gt_dir = root / "gt"
    det_dir = root / "det"
    gt_dir.mkdir()
    det_dir.mkdir()

    print("== the resize contract ==")
    rng = np.random.default_rng(0)
    frame = rng.integers(0, 256, (600, 800, 3), dtype=np.uint8)
    write_ppm(root / "frame.ppm", frame)
    tensor, factors = prepare_tensor(frame, min_side=512, multiple=128)
    print(f"600x800 frame -> tensor {tensor.shape}  (min side 512, padded to /128)")
    print(f"axis factors (fy, fx) = ({factors[0]:.4f}, {factors[1]:.4f})")
    net_space = [(100.0, 50.0)]
    print(f"network-space point {net_space[0]} -> original"
          f" {tuple(round(v, 2) for v in map_to_original(net_space, factors)[0])}")

    print()
    print("== plant, decode, write, score ==")
    layouts = {
        "img_1": [
            WordQuad.from_rect(70, 40, 90, 14, 0.1),
            WordQuad.from_rect(180, 100, 80, 22, -0.2),
        ],
        "img_2": [WordQuad.from_rect(120, 80, 140, 36, 0.3)],
    }
    for stem, words in layouts.items():
        targets = encode_ground_truth(words, DEFAULT_SCALES, (160, 256))
        boxes = words_from_maps(maps_from_targets(targets))

        gt_lines = []
        for i, w in enumerate(words):
            flat = ",".join(f"{v:.2f}" for xy in w.vertices for v in xy)
            gt_lines.append(f"{flat},word{i}")
        (gt_dir / f"{stem}.txt").write_text("\n".join(gt_lines) + "\n")

        det_lines = [format_detection_line(b.corners(), b.score) for b in boxes]
        (det_dir / f"{stem}.txt").write_text("\n".join(det_lines) + "\n")
        print(f"{stem}: {len(words)} planted -> {len(boxes)} detected")

    per_image, summary = evaluate_corpus(gt_dir, det_dir)
    print()
    for stem, rep in per_image:
        print(f"{stem}: P={rep.precision:.3f} R={rep.recall:.3f} F={rep.f_measure:.3f}")
    print(
        f"corpus [{summary.image_count} images]: P={summary.precision:.3f}"
        f" R={summary.recall:.3f} F={summary.f_measure:.3f}"
    )
    print(f"\nfiles left in {root} for inspection")


if __name__ == "__main__":
    main()
