"""Transmit and receive chains for the two-numerology composite frame.

Every operation is linear and accepts leading batch dimensions: the
trailing axis holds subcarriers or samples, so a ``(F, L)`` array is ``F``
independent frames. Transforms are applied as explicit matrices.

Phase convention: the transmitter references subcarrier phase to
``n - cp`` within each symbol and each receiver DFT window starts its own
time origin at the first sample after the CP, so a single-numerology frame
demodulates with unit gain.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .config import MixedConfig


@lru_cache(maxsize=32)
def idft_cp_matrix(size: int, cp: int) -> np.ndarray:
    """``(size + cp) x size`` CP-added inverse DFT, scaled by ``1/size``."""
    if not 0 <= cp < size:
        raise ValueError(f"cp={cp} must satisfy 0 <= cp < size={size}")
    n = (np.arange(size + cp) - cp) % size
    k = np.arange(size)
    mat = np.exp(2j * np.pi * np.outer(n, k) / size) / size
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=32)
def dft_matrix(size: int) -> np.ndarray:
    """Unnormalised forward DFT, entry ``(k, n) = exp(-j 2 pi k n / size)``."""
    k = np.arange(size)
    mat = np.exp(-2j * np.pi * np.outer(k, k) / size)
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True)
class TimeFrame:
    """Composite-frame baseband samples (trailing axis), with sample rate."""

    samples: np.ndarray
    sample_rate_hz: Optional[float] = field(default=None, compare=False)

    def __len__(self) -> int:
        return self.samples.shape[-1]


def _samples(frame) -> np.ndarray:
    return np.asarray(frame.samples if isinstance(frame, TimeFrame) else frame)


@dataclass(frozen=True)
class SymbolGrid:
    """Active-band symbols: ``x0`` is ``(..., P)``, ``x1`` is ``(..., Q, K)``."""

    x0: np.ndarray
    x1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=complex))
        object.__setattr__(self, "x1", np.asarray(self.x1, dtype=complex))
        if self.x1.ndim < 2:
            raise ValueError("x1 must have shape (..., Q, K)")
        if self.x0.shape[:-1] != self.x1.shape[:-2]:
            raise ValueError("x0 and x1 batch shapes differ")

    @classmethod
    def zeros(cls, cfg: MixedConfig, batch: tuple = ()) -> "SymbolGrid":
        return cls(
            np.zeros(batch + (cfg.p_edge,), complex),
            np.zeros(batch + (cfg.q_ratio, cfg.k_edge), complex),
        )

    @classmethod
    def from_stacked(cls, vec, cfg: MixedConfig) -> "SymbolGrid":
        vec = np.asarray(vec, dtype=complex)
        if vec.shape[-1] != cfg.n_active:
            raise ValueError(f"stacked length {vec.shape[-1]} != P+QK={cfg.n_active}")
        p = cfg.p_edge
        x1 = vec[..., p:].reshape(vec.shape[:-1] + (cfg.q_ratio, cfg.k_edge))
        return cls(vec[..., :p].copy(), x1.copy())

    @property
    def batch_shape(self) -> tuple:
        return self.x0.shape[:-1]

    def stacked(self) -> np.ndarray:
        """``[x0; x1[0]; ...; x1[Q-1]]`` along the trailing axis."""
        flat = self.x1.reshape(self.batch_shape + (-1,))
        return np.concatenate([self.x0, flat], axis=-1)

    def check(self, cfg: MixedConfig) -> None:
        if self.x0.shape[-1] != cfg.p_edge:
            raise ValueError(f"x0 has {self.x0.shape[-1]} symbols, expected P={cfg.p_edge}")
        if self.x1.shape[-2:] != (cfg.q_ratio, cfg.k_edge):
            raise ValueError(
                f"x1 has shape {self.x1.shape[-2:]}, expected (Q, K)=({cfg.q_ratio}, {cfg.k_edge})"
            )


def map_edge_symbols(grid: SymbolGrid, cfg: MixedConfig) -> tuple[np.ndarray, np.ndarray]:
    """Place active symbols on their bins.

    Returns the wide-numerology spectrum ``(..., N)`` and the narrow
    numerology spectra ``(..., Q, M)``; inactive bins are zero.
    """
    grid.check(cfg)
    low = np.zeros(grid.batch_shape + (cfg.n_fft,), complex)
    low[..., cfg.low_bins] = grid.x0
    high = np.zeros(grid.batch_shape + (cfg.q_ratio, cfg.m_fft), complex)
    high[..., cfg.high_bins] = grid.x1
    return low, high


def idft_with_cp(spec, size: int, cp: int) -> np.ndarray:
    spec = np.asarray(spec, dtype=complex)
    if spec.shape[-1] != size:
        raise ValueError(f"spectrum length {spec.shape[-1]} != size {size}")
    body = spec @ idft_cp_matrix(size, cp)[cp:].T
    # copy rather than recompute so the prefix is bit-exact
    return np.concatenate([body[..., size - cp:], body], axis=-1)


def concat_high_numerology(symbols, cfg: Optional[MixedConfig] = None) -> np.ndarray:
    """Time-multiplex Q narrow-numerology symbols into one composite span.

    ``symbols`` is ``(..., Q, M + M_cp)`` or a sequence of Q equal-length
    vectors; slot ``q`` occupies samples ``q*(M+M_cp) ... (q+1)*(M+M_cp)-1``.
    """
    if isinstance(symbols, (list, tuple)):
        lengths = {np.shape(s)[-1] for s in symbols}
        if len(lengths) != 1:
            raise ValueError("all slot symbols must have the same length")
        symbols = np.stack([np.asarray(s, complex) for s in symbols], axis=-2)
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.ndim < 2:
        raise ValueError("expected (..., Q, M + M_cp) input")
    if cfg is not None:
        if symbols.shape[-2] != cfg.q_ratio:
            raise ValueError(f"got {symbols.shape[-2]} slots, expected Q={cfg.q_ratio}")
        if symbols.shape[-1] != cfg.slot_len:
            raise ValueError(f"slot length {symbols.shape[-1]} != M+M_cp={cfg.slot_len}")
    return symbols.reshape(symbols.shape[:-2] + (-1,))


def compose(y0, y1) -> np.ndarray:
    y0 = _samples(y0)
    y1 = _samples(y1)
    if y0.shape[-1] != y1.shape[-1]:
        raise ValueError(f"length mismatch: {y0.shape[-1]} vs {y1.shape[-1]}")
    return y0 + y1


def _check_frame(samples: np.ndarray, cfg: MixedConfig) -> None:
    if samples.shape[-1] != cfg.frame_len:
        raise ValueError(f"frame length {samples.shape[-1]} != N+N_cp={cfg.frame_len}")


def demod_low(frame, cfg: MixedConfig) -> np.ndarray:
    """N-point DFT over samples ``N_cp ... N_cp+N-1``."""
    y = _samples(frame)
    _check_frame(y, cfg)
    window = y[..., cfg.n_cp : cfg.n_cp + cfg.n_fft]
    return window @ dft_matrix(cfg.n_fft).T


def demod_high(frame, q: int, cfg: MixedConfig) -> np.ndarray:
    """M-point DFT over the data part of narrow-numerology slot ``q``."""
    y = _samples(frame)
    _check_frame(y, cfg)
    if not 0 <= q < cfg.q_ratio:
        raise ValueError(f"slot index {q} outside [0, {cfg.q_ratio})")
    start = q * cfg.slot_len + cfg.m_cp
    return y[..., start : start + cfg.m_fft] @ dft_matrix(cfg.m_fft).T


def demod_active(frame, cfg: MixedConfig) -> np.ndarray:
    """Demodulate every active bin, returned in stacked order."""
    low = demod_low(frame, cfg)[..., cfg.low_bins]
    highs = [demod_high(frame, q, cfg)[..., cfg.high_bins] for q in range(cfg.q_ratio)]
    return np.concatenate([low] + highs, axis=-1)


def _pre_equalizer_matrix(pre_equalizer) -> np.ndarray:
    mat = getattr(pre_equalizer, "inverse", pre_equalizer)
    return np.asarray(mat)


def build_frame(grid: SymbolGrid, cfg: MixedConfig, pre_equalizer=None) -> TimeFrame:
    """Synthesize the composite frame for ``grid``.

    ``pre_equalizer`` may be a square matrix or any object exposing it as
    ``.inverse``; the stacked symbol vector is multiplied by it first.
    """
    grid.check(cfg)
    if pre_equalizer is not None:
        mat = _pre_equalizer_matrix(pre_equalizer)
        if mat.shape != (cfg.n_active, cfg.n_active):
            raise ValueError(f"pre-equalizer shape {mat.shape} does not match P+QK={cfg.n_active}")
        grid = SymbolGrid.from_stacked(grid.stacked() @ mat.T, cfg)
    low_spec, high_spec = map_edge_symbols(grid, cfg)
    y0 = idft_with_cp(low_spec, cfg.n_fft, cfg.n_cp)
    y1 = concat_high_numerology(idft_with_cp(high_spec, cfg.m_fft, cfg.m_cp), cfg)
    return TimeFrame(compose(y0, y1), cfg.sample_rate_hz)


# -- serialization ---------------------------------------------------------

def write_frame_csv(path, frame) -> None:
    y = _samples(frame).reshape(-1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["real", "imag"])
        for v in y:
            writer.writerow([repr(float(v.real)), repr(float(v.imag))])


def read_frame_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0] + 1j * data[:, 1]


def write_frame_bin(path, frame) -> None:
    """Raw little-endian float64 pairs ``re0, im0, re1, im1, ...``; no header."""
    y = np.ascontiguousarray(_samples(frame), dtype=np.complex128).reshape(-1)
    Path(path).write_bytes(y.view(np.float64).astype("<f8").tobytes())


def read_frame_bin(path) -> np.ndarray:
    raw = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    if raw.size % 2:
        raise ValueError("binary frame has an odd number of float64 values")
    return raw[0::2] + 1j * raw[1::2]

