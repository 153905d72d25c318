"""Error-rate, EVM and PAPR measurement plus closed-form reference curves."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erfc

from .config import MixedConfig
from .qam import QamOrder

Z95 = 1.959963984540054


@dataclass(frozen=True)
class BerPoint:
    numerology: int
    ebn0_db: float
    bits: int
    errors: int

    def __post_init__(self):
        if not 0 <= self.errors <= self.bits:
            raise ValueError("errors must lie in [0, bits]")

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else float("nan")

    @property
    def ci95(self) -> float:
        """Normal-approximation binomial 95% half-width."""
        return binomial_halfwidth(self.ber, self.bits)


@dataclass(frozen=True)
class PaprCurve:
    thresholds_db: np.ndarray
    ccdf: np.ndarray
    frames: int


def binomial_halfwidth(p: float, n: int, z: float = Z95) -> float:
    if n <= 0:
        return float("nan")
    return z * math.sqrt(max(p * (1 - p), 0.0) / n)


def ber(tx_bits, rx_bits) -> float:
    tx = np.asarray(tx_bits).reshape(-1)
    rx = np.asarray(rx_bits).reshape(-1)
    if tx.size != rx.size:
        raise ValueError(f"bit vectors differ in length: {tx.size} vs {rx.size}")
    if tx.size == 0:
        raise ValueError("cannot compute BER of empty bit vectors")
    return np.count_nonzero(tx != rx) / tx.size


def evm_db(received, reference) -> float:
    """RMS EVM in dB relative to reference energy; ``-inf`` for an exact match."""
    r = np.asarray(received, dtype=complex).reshape(-1)
    x = np.asarray(reference, dtype=complex).reshape(-1)
    if r.size != x.size or r.size == 0:
        raise ValueError("received and reference must be equal, non-empty lengths")
    ref_energy = np.sum(np.abs(x) ** 2)
    if ref_energy == 0:
        raise ValueError("reference is all zero")
    err = np.sum(np.abs(r - x) ** 2)
    if err == 0:
        return float("-inf")
    return float(10 * np.log10(err / ref_energy))


def papr_db(frame) -> np.ndarray | float:
    """Peak-to-average power over the trailing (sample) axis, CP included."""
    y = np.asarray(getattr(frame, "samples", frame))
    power = np.abs(y) ** 2
    mean = power.mean(axis=-1)
    if np.any(mean == 0):
        raise ValueError("PAPR undefined for an all-zero frame")
    out = 10 * np.log10(power.max(axis=-1) / mean)
    return float(out) if np.ndim(out) == 0 else out


def ccdf(values, thresholds) -> PaprCurve:
    """Fraction of ``values`` strictly above each threshold."""
    v = np.sort(np.asarray(values, dtype=float).reshape(-1))
    if v.size == 0:
        raise ValueError("ccdf needs at least one value")
    t = np.asarray(thresholds, dtype=float)
    above = v.size - np.searchsorted(v, t, side="right")
    return PaprCurve(t, above / v.size, int(v.size))


def ccdf_level_db(values, level: float) -> float:
    """Smallest threshold at which the empirical CCDF is <= ``level``."""
    v = np.sort(np.asarray(values, dtype=float).reshape(-1))
    # CCDF(v[i]) = (n - 1 - i)/n for distinct values
    idx = int(math.ceil(v.size * (1 - level))) - 1
    return float(v[min(max(idx, 0), v.size - 1)])


def _fft_size(cfg: MixedConfig, numerology: str) -> int:
    if numerology == "low":
        return cfg.n_fft
    if numerology == "high":
        return cfg.m_fft
    raise ValueError(f"numerology must be 'low' or 'high', got {numerology!r}")


def post_dft_snr(cfg: MixedConfig, noise_variance: float, numerology: str) -> float:
    """SNR per unit-energy symbol after the receiver DFT.

    The unnormalised DFT passes symbols with gain 1 while white noise of
    variance ``s2`` per sample comes out with variance ``size * s2``.
    """
    if noise_variance <= 0:
        raise ValueError("noise variance must be positive")
    return 1.0 / (_fft_size(cfg, numerology) * noise_variance)


def noise_variance_for_ebn0(cfg: MixedConfig, ebn0_db: float, order: int, numerology: str) -> float:
    """Time-domain noise variance giving ``ebn0_db`` at ``numerology``'s demodulator."""
    es_n0 = QamOrder(order).bits_per_symbol * 10 ** (ebn0_db / 10)
    return 1.0 / (_fft_size(cfg, numerology) * es_n0)


def _qam_ber_terms(order: int):
    """Coefficients ``a_i`` and arguments ``c_i`` with
    ``Pb(g) = sum_i a_i * erfc(sqrt(c_i * g))`` for Gray square QAM at Eb/N0 ``g``."""
    q = QamOrder(order)
    side = q.side
    nbits = int(math.log2(side))
    base = 3.0 * q.bits_per_symbol / (2.0 * (order - 1))
    coeff: dict[int, float] = {}
    for k in range(1, nbits + 1):
        step = 2 ** (k - 1)
        for i in range(int((1 - 2.0 ** -k) * side)):
            sign = -1 if (i * step // side) % 2 else 1
            weight = step - math.floor(i * step / side + 0.5)
            coeff[i] = coeff.get(i, 0.0) + sign * weight / (side * nbits)
    idx = np.array(sorted(coeff))
    a = np.array([coeff[i] for i in idx])
    c = (2 * idx + 1) ** 2 * base
    return a, c


def theoretical_ber(order: int, ebn0_db, channel: str = "rayleigh"):
    """Exact bit error probability of Gray-mapped square QAM.

    AWGN uses the per-bit-position erfc sum for square Gray QAM. For flat
    Rayleigh fading each ``erfc(sqrt(c*g))`` is averaged over an exponential
    ``g`` with mean ``Eb/N0``, which gives ``1 - sqrt(c*g/(1 + c*g))``.
    """
    g = 10 ** (np.asarray(ebn0_db, dtype=float) / 10)
    return _ber_linear(order, g, channel)


def _ber_linear(order: int, g, channel: str):
    a, c = _qam_ber_terms(order)
    cg = np.multiply.outer(np.asarray(g, dtype=float), c)
    if channel == "awgn":
        terms = erfc(np.sqrt(cg))
    elif channel in ("rayleigh", "rayleigh_block"):
        terms = 1 - np.sqrt(cg / (1 + cg))
    else:
        raise ValueError(f"unknown channel {channel!r}")
    out = terms @ a
    return float(out) if np.ndim(out) == 0 else out


def block_fading_ber_std(order: int, ebn0_db: float, bits: int, bits_per_frame: int) -> float:
    """Standard deviation of a BER estimate when one Rayleigh gain is shared
    by ``bits_per_frame`` bits.

    Per-frame error counts have variance ``m*E[p(1-p)] + m^2*Var[p]`` where
    ``p = p(g)`` is the AWGN bit error probability at the frame's fade and
    ``m = bits_per_frame``; the second term is what a binomial model omits.
    Bits inside one frame are treated as independent given the fade.
    """
    gbar = 10 ** (ebn0_db / 10)
    pts = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0]

    def moment(power):
        f = lambda t: _ber_linear(order, t * gbar, "awgn") ** power * np.exp(-t)
        return integrate.quad(f, 0, 60, limit=500, points=pts)[0]

    e1, e2 = moment(1), moment(2)
    m = bits_per_frame
    frames = bits / m
    var_frame = m * (e1 - e2) + m * m * max(e2 - e1 * e1, 0.0)
    return math.sqrt(var_frame / frames) / m
