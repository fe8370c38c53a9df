"""Deterministic, order-independent random streams.

Every stream is identified by a :class:`StreamKey` and backed by the
counter-based Philox generator, so any prefix of a stream can be
regenerated on demand, on any worker, in any order, and always yields
the same values.

Gaussian draws use a fixed convention that must never change: raw 64-bit
Philox words are mapped to uniforms in the open interval (0, 1) via
``(word >> 11) * 2^-53 + 2^-54`` and pushed through the inverse normal
CDF (``scipy.special.ndtri``).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.special import ndtri

__all__ = ["StreamKind", "StreamKey", "gaussian_stream", "unit_circle_stream",
           "uniform_stream"]

_MAX_SEED = 2**64
_MAX_LAYER = 2**56


class StreamKind(IntEnum):
    WEIGHTS = 0
    BIAS = 1
    KERNEL = 2
    DIAGONAL = 3
    INPUT_1 = 4
    INPUT_2 = 5
    PERTURBATION = 6


@dataclass(frozen=True)
class StreamKey:
    """Identity of one random stream: (master seed, layer index, kind)."""

    master_seed: int
    layer_index: int
    stream_kind: StreamKind

    def __post_init__(self):
        if not 0 <= self.master_seed < _MAX_SEED:
            raise ValueError(f"master_seed out of range: {self.master_seed}")
        if not 0 <= self.layer_index < _MAX_LAYER:
            raise ValueError(f"layer_index out of range: {self.layer_index}")
        object.__setattr__(self, "stream_kind", StreamKind(self.stream_kind))


def _bit_generator(key: StreamKey) -> np.random.Philox:
    # Philox-4x64 takes a 128-bit key: word 0 is the master seed, word 1
    # packs (layer_index, stream_kind).
    word1 = (key.layer_index << 8) | int(key.stream_kind)
    return np.random.Philox(key=np.array([key.master_seed, word1],
                                         dtype=np.uint64))


def uniform_stream(key: StreamKey, count: int) -> np.ndarray:
    """`count` uniforms in the open interval (0, 1)."""
    if count < 0:
        raise ValueError("count must be non-negative")
    raw = _bit_generator(key).random_raw(count)
    if count == 0:
        return np.empty(0, dtype=np.float64)
    return (raw >> np.uint64(11)) * 2.0**-53 + 2.0**-54


def gaussian_stream(key: StreamKey, count: int) -> np.ndarray:
    """`count` i.i.d. standard normal draws N(0, 1)."""
    return ndtri(uniform_stream(key, count))


def unit_circle_stream(key: StreamKey, count: int) -> np.ndarray:
    """`count` complex values of modulus 1 with phases uniform on [0, 2pi)."""
    theta = uniform_stream(key, count) * (2.0 * np.pi)
    return np.cos(theta) + 1j * np.sin(theta)
