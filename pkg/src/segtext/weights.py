"""Weight-file serialization and seeded random weight generation.

File layout (version 1), all integers little-endian u32, floats f32:

    magic "FSTX" | version | alpha | expansion_factor | bn_eps | tensor count
    per tensor: name length, UTF-8 name, rank, dims[rank], payload f32

Tensors are written in the deterministic order of model.parameter_shapes, so
identical stores produce byte-identical files.
"""

from __future__ import annotations

import struct

import numpy as np

from .model import NetworkConfig, WeightStore, parameter_shapes

MAGIC = b"FSTX"
FORMAT_VERSION = 1


class WeightFormatError(ValueError):
    """Raised when a weight file is truncated, mislabeled, or inconsistent."""


def random_store(config: NetworkConfig, seed: int) -> WeightStore:
    """Deterministic pseudo-random weights for testing and benchmarks.

    PRNG: numpy default_rng (PCG64) seeded once with `seed`; tensors drawn
    in parameter_shapes order.  Conv kernels are scaled by sqrt(2/fan_in),
    batch-norm statistics sit near identity (var stays positive), head
    biases start near zero.  Same (config, seed) always yields the same
    store, bit for bit.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".kernel"):
            fan_in = int(np.prod(shape[1:]))
            t = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif name.endswith(".bn.gamma"):
            t = 1.0 + 0.05 * rng.standard_normal(shape)
        elif name.endswith(".bn.var"):
            t = rng.uniform(0.8, 1.2, shape)
        elif name.endswith((".bn.beta", ".bn.mean")):
            t = 0.05 * rng.standard_normal(shape)
        else:  # head bias
            t = 0.01 * rng.standard_normal(shape)
        tensors[name] = t.astype(np.float32)
    return WeightStore(
        alpha=config.alpha,
        expansion_factor=config.expansion_factor,
        bn_eps=config.bn_eps,
        tensors=tensors,
    )


def save_weights(path, store: WeightStore) -> None:
    """Write a validated store in canonical tensor order."""
    store.validate()
    order = parameter_shapes(store.config())
    chunks = [
        MAGIC,
        struct.pack("<IfIfI", FORMAT_VERSION, store.alpha,
                    store.expansion_factor, store.bn_eps, len(order)),
    ]
    for name in order:
        t = np.ascontiguousarray(store.tensors[name], dtype=np.float32)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", t.ndim))
        chunks.append(struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(t.tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def load_weights(path) -> WeightStore:
    with open(path, "rb") as f:
        data = f.read()
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise WeightFormatError(f"{path}: truncated at byte {pos}")
        out = view[pos : pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise WeightFormatError(f"{path}: bad magic, not a weight file")
    version, alpha, expansion, bn_eps, count = struct.unpack("<IfIfI", take(20))
    if version != FORMAT_VERSION:
        raise WeightFormatError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}"
        )
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        if rank > 8:
            raise WeightFormatError(f"{path}: tensor {name} has rank {rank}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        payload = take(4 * n)
        if name in tensors:
            raise WeightFormatError(f"{path}: duplicate tensor {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if pos != len(view):
        raise WeightFormatError(f"{path}: {len(view) - pos} trailing bytes")
    store = WeightStore(
        alpha=alpha, expansion_factor=expansion, bn_eps=bn_eps, tensors=tensors
    )
    try:
        store.validate()
    except ValueError as e:
        raise WeightFormatError(f"{path}: {e}") from e
    return store
