"""Mixed-numerology OFDM with transmitter-side inter-numerology interference
pre-equalization."""
from .config import ConfigError, MixedConfig, make_mixed_config, reference_config
from .ini import IniModel, assemble_w, pre_equalize, residual_ini
from .ofdm import SymbolGrid, TimeFrame, build_frame, demod_active, demod_high, demod_low
from .qam import QamOrder, qam_demodulate_hard, qam_modulate

__all__ = [
    "ConfigError", "MixedConfig", "make_mixed_config", "reference_config",
    "IniModel", "assemble_w", "pre_equalize", "residual_ini",
    "SymbolGrid", "TimeFrame", "build_frame", "demod_active", "demod_high", "demod_low",
    "QamOrder", "qam_demodulate_hard", "qam_modulate",
]
__version__ = "0.1.0"
