"""Walk the backbone plan, the width multiplier, and one forward pass."""

import numpy as np

from segtext.model import NetworkConfig, build_plan, count_parameters, scaled_channels
from segtext.model import build_network
from segtext.weights import random_store


def main():
    print("== width multiplier ==")
    print("alpha scales every internal channel count, rounded to multiples of 8")
    for base in (16, 24, 32, 96):
        row = "  ".join(
            f"a={a:g}:{scaled_channels(base, a):4d}" for a in (0.75, 1.0, 2.0)
        )
        print(f"base {base:3d} -> {row}")

    print()
    print("== parameter budget per alpha ==")
    for alpha in (0.75, 1.0, 2.0):
        n = count_parameters(NetworkConfig(alpha=alpha))
        print(f"alpha={alpha:<5g} {n:>12,} parameters")

    print()
    print("== layer plan (alpha=1) ==")
    plan = build_plan(NetworkConfig(alpha=1.0))
    print(f"{len(plan)} layers; first six:")
    for layer in plan[:6]:
        print(f"  {layer}")

    print()
    print("== one forward pass ==")
    config = NetworkConfig(alpha=0.75)
    net = build_network(random_store(config, seed=1))
    x = np.random.default_rng(0).standard_normal((1, 3, 256, 384)).astype(np.float32)
    heads = net.forward(x)
    print(f"input {x.shape}")
    for spec, head in zip(config.scales, heads):
        print(
            f"  stride {spec.receptive_field:>3}: head {head.shape}"
            f"  ({head.shape[1]} channels = 2 class + 5 geometry"
            f" + 16 link{' + 8 cross-link' if spec.has_cross_links else ''})"
        )
    print("random weights, so the score maps are noise; the shapes are the point")


if __name__ == "__main__":
    main()
