"""Tour of the low-level tensor ops the detector is assembled from.

Everything is plain numpy in NCHW layout. Run: python demos/building_blocks.py
"""

import numpy as np

from segtext.ops import ConvParams, conv2d, pair_scores, relu6

rng = np.random.default_rng(0)

print("== plain 3x3 convolution, same padding ==")
x = np.ones((1, 1, 4, 4), dtype=np.float32)
p = ConvParams(np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32))
y = conv2d(x, p)
print(f"input {x.shape} -> output {y.shape}")
print("corner sees a 2x2 window, center a 3x3 window:")
print(y[0, 0])

print()
print("== stride 2 halves each spatial side (ceil division) ==")
x = rng.standard_normal((1, 3, 7, 10)).astype(np.float32)
p = ConvParams(
    rng.standard_normal((8, 3, 3, 3)).astype(np.float32),
    np.zeros(8, np.float32),
    stride=2,
)
print(f"{x.shape} -> {conv2d(x, p).shape}   (7 -> 4, 10 -> 5)")

print()
print("== depthwise + pointwise vs one full convolution ==")
c_in, c_out, k = 32, 64, 3
full = c_out * c_in * k * k
separable = c_in * k * k + c_out * c_in
print(f"full 3x3:        {full:6d} multiplies per output pixel")
print(f"dw 3x3 + pw 1x1: {separable:6d} multiplies per output pixel")
print(f"ratio: {full / separable:.1f}x fewer")

x = rng.standard_normal((1, c_in, 6, 6)).astype(np.float32)
dw = ConvParams(
    rng.standard_normal((c_in, 1, 3, 3)).astype(np.float32),
    np.zeros(c_in, np.float32),
    groups=c_in,
)
pw = ConvParams(
    rng.standard_normal((c_out, c_in, 1, 1)).astype(np.float32),
    np.zeros(c_out, np.float32),
)
y = conv2d(conv2d(x, dw), pw)
print(f"separable stack output: {y.shape}")

print()
print("== relu6 clips both tails ==")
v = np.array([-3.0, 0.0, 2.5, 6.0, 11.0])
print(f"{v} -> {relu6(v)}")

print()
print("== paired-channel softmax turns logit pairs into scores ==")
# channel layout is (off, on); score is the 'on' probability
logits = np.array([0.0, 0.0, 1.0, 3.0]).reshape(4, 1, 1)
scores = pair_scores(logits)
print(f"(off=0, on=0) -> {scores[0, 0, 0]:.3f}   (equal logits sit at 0.5)")
print(f"(off=1, on=3) -> {scores[1, 0, 0]:.3f}   (sigmoid of the logit gap)")
