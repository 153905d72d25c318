"""Gray-mapped square QAM with unit average symbol energy.

Bit-label convention
--------------------
A symbol carries ``b = log2(order)`` bits, MSB first. The first ``b/2`` bits
select the in-phase level and the last ``b/2`` the quadrature level. Each
half is read as a reflected-binary Gray code ``g``; its binary value
``i = gray_to_binary(g)`` picks the amplitude ``(L - 1) - 2*i`` with
``L = sqrt(order)``, so an all-zero half maps to the most positive level.
Amplitudes are finally divided by ``sqrt(2*(order - 1)/3)``.

The *constellation index* of a point is its bit label read as an unsigned
integer (MSB first), so ``constellation(order)[idx]`` is the point for label
``idx``. Hard decisions are minimum Euclidean distance; ties go to the
smaller constellation index.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64, 256)


class QamOrder(int):
    """A square QAM order from ``SUPPORTED_ORDERS``."""

    def __new__(cls, order):
        if isinstance(order, bool) or int(order) != order or int(order) not in SUPPORTED_ORDERS:
            raise ValueError(f"unsupported QAM order {order!r}; expected one of {SUPPORTED_ORDERS}")
        return super().__new__(cls, int(order))

    @property
    def bits_per_symbol(self) -> int:
        return int(self).bit_length() - 1

    @property
    def side(self) -> int:
        return math.isqrt(int(self))

    @property
    def scale(self) -> float:
        """Divisor giving unit average energy."""
        return math.sqrt(2.0 * (int(self) - 1) / 3.0)


def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


def _binary_to_gray(b: np.ndarray) -> np.ndarray:
    return b ^ (b >> 1)


def _bits_to_ints(bits: np.ndarray, width: int) -> np.ndarray:
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits.reshape(-1, width).astype(np.int64) @ weights


def _ints_to_bits(values: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8)


@lru_cache(maxsize=None)
def _axis_levels(order: int) -> np.ndarray:
    """Unnormalised amplitude indexed by the per-axis Gray label."""
    side = math.isqrt(order)
    gray = np.arange(side)
    return (side - 1) - 2.0 * _gray_to_binary(gray)


@lru_cache(maxsize=None)
def _constellation(order: int) -> np.ndarray:
    q = QamOrder(order)
    half = q.bits_per_symbol // 2
    idx = np.arange(order)
    levels = _axis_levels(order)
    points = levels[idx >> half] + 1j * levels[idx & ((1 << half) - 1)]
    points = points / q.scale
    points.setflags(write=False)
    return points


def constellation(order: int) -> np.ndarray:
    """All ``order`` points, indexed by constellation index."""
    return _constellation(int(QamOrder(order)))


def qam_modulate(bits, order: int) -> np.ndarray:
    """Map a flat bit vector onto Gray-coded unit-energy QAM symbols.

    >>> qam_modulate([0, 0], 4) * np.sqrt(2)
    array([1.+1.j])
    """
    q = QamOrder(order)
    bits = np.asarray(bits)
    if bits.ndim != 1:
        bits = bits.reshape(-1)
    if bits.size % q.bits_per_symbol:
        raise ValueError(
            f"{bits.size} bits is not a multiple of {q.bits_per_symbol} bits per symbol"
        )
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("bits must be 0 or 1")
    labels = _bits_to_ints(bits, q.bits_per_symbol)
    return constellation(q)[labels]


def _slice_axis(values: np.ndarray, order: int) -> np.ndarray:
    """Nearest per-axis Gray label; ties go to the smaller label."""
    side = math.isqrt(order)
    # position on the binary-index axis, 0 at the most positive level
    t = ((side - 1) - values) / 2.0
    lo = np.clip(np.floor(t), 0, side - 1).astype(np.int64)
    hi = np.minimum(lo + 1, side - 1)
    d_lo = np.abs(t - lo)
    d_hi = np.abs(t - hi)
    g_lo = _binary_to_gray(lo)
    g_hi = _binary_to_gray(hi)
    return np.where(d_lo < d_hi, g_lo, np.where(d_hi < d_lo, g_hi, np.minimum(g_lo, g_hi)))


def qam_demodulate_labels(symbols, order: int) -> np.ndarray:
    """Minimum-distance constellation indices for ``symbols``."""
    q = QamOrder(order)
    symbols = np.asarray(symbols, dtype=complex).reshape(-1) * q.scale
    half = q.bits_per_symbol // 2
    i_lab = _slice_axis(symbols.real, q)
    q_lab = _slice_axis(symbols.imag, q)
    return (i_lab << half) | q_lab


def qam_demodulate_hard(symbols, order: int) -> np.ndarray:
    """Hard-decision demapper; inverse of :func:`qam_modulate`."""
    q = QamOrder(order)
    labels = qam_demodulate_labels(symbols, q)
    return _ints_to_bits(labels, q.bits_per_symbol).reshape(-1)


def random_bits(rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.integers(0, 2, size=count, dtype=np.uint8)
