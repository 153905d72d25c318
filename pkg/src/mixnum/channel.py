"""Reproducible channel impairments: AWGN and frame-constant Rayleigh fading."""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .ofdm import TimeFrame

CHANNELS = ("awgn", "rayleigh_block")


class ChannelError(ValueError):
    pass


def _key_part(value) -> int:
    if isinstance(value, str):
        return zlib.crc32(value.encode())
    if isinstance(value, (float, np.floating)):
        return zlib.crc32(repr(float(value)).encode())
    return int(value)


@dataclass(frozen=True)
class RngStream:
    """A named substream of a 64-bit seed.

    Identifiers may be ints, floats or strings; strings and floats are hashed
    with CRC-32 so keys are stable across processes and platforms.
    """

    seed: int
    ids: tuple = ()

    def child(self, *ids) -> "RngStream":
        return RngStream(self.seed, self.ids + ids)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=int(self.seed) & (2**64 - 1),
            spawn_key=tuple(_key_part(v) for v in self.ids),
        )
        return np.random.Generator(np.random.PCG64(seq))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def _unwrap(frame):
    if isinstance(frame, TimeFrame):
        return np.asarray(frame.samples), lambda y: TimeFrame(y, frame.sample_rate_hz)
    return np.asarray(frame), lambda y: y


def complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with total ``variance``."""
    std = np.sqrt(variance / 2.0)
    return std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def awgn(frame, noise_variance: float, rng):
    """Add complex white Gaussian noise of variance ``noise_variance`` per sample."""
    if noise_variance < 0:
        raise ChannelError(f"noise variance must be non-negative, got {noise_variance}")
    y, wrap = _unwrap(frame)
    if noise_variance == 0:
        return wrap(y.astype(complex, copy=True))
    gen = _as_generator(rng)
    return wrap(y + complex_gaussian(gen, y.shape, noise_variance))


def rayleigh_block(frame, rng):
    """Scale each frame (trailing axis) by one unit-power complex Gaussian gain.

    Returns ``(faded, h)``; ``h`` has the frame's batch shape.
    """
    y, wrap = _unwrap(frame)
    gen = _as_generator(rng)
    h = complex_gaussian(gen, y.shape[:-1])
    return wrap(y * np.asarray(h)[..., None]), h


def one_tap_equalize(demodulated, h):
    """Zero-forcing by the known per-frame gain ``h`` (perfect CSI)."""
    h = np.asarray(h)
    if np.any(h == 0):
        raise ChannelError("cannot equalize a zero channel gain")
    return np.asarray(demodulated) / h[..., None]
