"""Frame-structure configuration for two multiplexed numerologies.

The wide-symbol numerology (index ``mu_low``) uses an ``n_fft``-point
transform; the narrow-symbol numerology (``mu_high``) uses
``m_fft = n_fft / q_ratio`` points and transmits ``q_ratio`` symbols in the
time span of one wide symbol (a *composite frame*).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCS_BASE_HZ = 15_000.0
SUPPORTED_MU = (0, 1, 2)

CONFIG_KEYS = ("mu_low", "mu_high", "n_fft", "n_cp", "p_edge", "k_edge", "qam_order")


class ConfigError(ValueError):
    """Raised for any invalid frame-structure or experiment configuration."""


@dataclass(frozen=True)
class MixedConfig:
    mu_low: int
    mu_high: int
    n_fft: int
    m_fft: int
    q_ratio: int
    n_cp: int
    m_cp: int
    p_edge: int
    k_edge: int
    scs_base_hz: float = SCS_BASE_HZ

    def __post_init__(self):
        if self.n_fft != self.q_ratio * self.m_fft:
            raise ConfigError(f"n_fft={self.n_fft} != q_ratio*m_fft={self.q_ratio * self.m_fft}")
        if self.n_cp != self.q_ratio * self.m_cp:
            raise ConfigError(f"n_cp={self.n_cp} != q_ratio*m_cp={self.q_ratio * self.m_cp}")
        if self.q_ratio * (self.m_fft + self.m_cp) != self.n_fft + self.n_cp:
            raise ConfigError("composite frame length mismatch between numerologies")
        if self.m_fft % 2:
            raise ConfigError(f"m_fft={self.m_fft} must be even")
        if not 1 <= self.p_edge <= self.n_fft // 2:
            raise ConfigError(f"p_edge={self.p_edge} outside [1, {self.n_fft // 2}]")
        if not 1 <= self.k_edge <= self.m_fft // 2:
            raise ConfigError(f"k_edge={self.k_edge} outside [1, {self.m_fft // 2}]")

    @property
    def scs_low_hz(self) -> float:
        return subcarrier_spacing(self.mu_low, self.scs_base_hz)

    @property
    def scs_high_hz(self) -> float:
        return subcarrier_spacing(self.mu_high, self.scs_base_hz)

    @property
    def sample_rate_hz(self) -> float:
        return self.n_fft * self.scs_low_hz

    @property
    def frame_len(self) -> int:
        """Samples in one composite frame, ``N + N_cp``."""
        return self.n_fft + self.n_cp

    @property
    def slot_len(self) -> int:
        return self.m_fft + self.m_cp

    @property
    def n_active(self) -> int:
        """Length of the stacked active-symbol vector, ``P + Q*K``."""
        return self.p_edge + self.q_ratio * self.k_edge

    @property
    def low_bins(self) -> np.ndarray:
        return np.arange(self.n_fft // 2 - self.p_edge, self.n_fft // 2)

    @property
    def high_bins(self) -> np.ndarray:
        return np.arange(self.m_fft // 2, self.m_fft // 2 + self.k_edge)

    def as_dict(self) -> dict:
        return {
            "mu_low": self.mu_low,
            "mu_high": self.mu_high,
            "n_fft": self.n_fft,
            "n_cp": self.n_cp,
            "p_edge": self.p_edge,
            "k_edge": self.k_edge,
        }


def subcarrier_spacing(mu: int, base_hz: float = SCS_BASE_HZ) -> float:
    return (2.0 ** mu) * base_hz


def make_mixed_config(
    mu_low: int,
    mu_high: int,
    n_fft: int,
    n_cp: int,
    p_edge: int,
    k_edge: int,
    allowed_mu: tuple[int, ...] = SUPPORTED_MU,
) -> MixedConfig:
    """Validate the primary parameters and derive ``M``, ``Q`` and ``M_cp``.

    >>> cfg = make_mixed_config(0, 1, 256, 18, 96, 48)
    >>> cfg.m_fft, cfg.q_ratio, cfg.m_cp
    (128, 2, 9)
    """
    for name, value in (("mu_low", mu_low), ("mu_high", mu_high)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        if value not in allowed_mu:
            raise ConfigError(f"unsupported numerology {name}={value}; allowed {allowed_mu}")
    for name, value in (("n_fft", n_fft), ("n_cp", n_cp), ("p_edge", p_edge), ("k_edge", k_edge)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
    if mu_high <= mu_low:
        raise ConfigError(f"mu_high={mu_high} must exceed mu_low={mu_low}")
    if n_fft <= 0 or n_cp < 0:
        raise ConfigError("n_fft must be positive and n_cp non-negative")
    q = 2 ** (mu_high - mu_low)
    if n_fft % q:
        raise ConfigError(f"n_fft={n_fft} not divisible by Q={q}")
    if n_cp % q:
        raise ConfigError(f"n_cp={n_cp} not divisible by Q={q}")
    m_fft = n_fft // q
    m_cp = n_cp // q
    if n_cp >= n_fft:
        raise ConfigError("cyclic prefix must be shorter than the transform")
    return MixedConfig(
        mu_low=int(mu_low),
        mu_high=int(mu_high),
        n_fft=int(n_fft),
        m_fft=int(m_fft),
        q_ratio=int(q),
        n_cp=int(n_cp),
        m_cp=int(m_cp),
        p_edge=int(p_edge),
        k_edge=int(k_edge),
    )


def config_from_mapping(data: dict) -> MixedConfig:
    missing = [k for k in CONFIG_KEYS[:-1] if k not in data]
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(missing)}")
    return make_mixed_config(*(data[k] for k in CONFIG_KEYS[:-1]))


def read_json_config(path: str | Path) -> dict:
    """Parse a JSON config file, turning syntax errors into ``ConfigError``
    that carry the offending line number."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def load_mixed_config(path: str | Path) -> tuple[MixedConfig, int]:
    """Load a frame configuration and its QAM order from a JSON file."""
    data = read_json_config(path)
    cfg = config_from_mapping(data)
    if "qam_order" not in data:
        raise ConfigError("missing config key: qam_order")
    return cfg, data["qam_order"]


def reference_config() -> MixedConfig:
    """The 256/128-point, CP 18/9, P=96, K=48 reference configuration."""
    return make_mixed_config(0, 1, 256, 18, 96, 48)
