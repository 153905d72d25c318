"""Inter-numerology interference (INI) coupling model and pre-equalizer.

The demodulated active symbols of a composite frame are a fixed linear map
of the transmitted ones, ``demod = W @ x`` in stacked order
``[low; high slot 0; ...; high slot Q-1]``. ``W`` has identity diagonal
blocks, zero blocks between distinct narrow-numerology slots and dense
cross-numerology coupling blocks. Transmitting ``inv(W) @ x`` therefore
demodulates to ``x`` exactly.

Two independent constructions of each coupling block are provided: closed
form geometric sums (:func:`w_block_closed_form`) and a unit-excitation
oracle that runs the real transmit/receive chain (:func:`w_block_oracle`).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .config import MixedConfig
from .ofdm import SymbolGrid, build_frame, demod_active

DEFAULT_COND_THRESHOLD = 1e8

# number of times assemble_w has run in this process; read by tests
BUILD_COUNT = 0


class IllConditionedError(RuntimeError):
    """The coupling matrix is singular or too ill-conditioned to invert."""


class Port(NamedTuple):
    """One symbol stream: the wide numerology, or a narrow-numerology slot."""

    kind: str
    slot: int = 0

    def __str__(self) -> str:
        return "low" if self.kind == "low" else f"high[{self.slot}]"


LOW = Port("low")


def high(slot: int) -> Port:
    return Port("high", slot)


def ports(cfg: MixedConfig) -> list[Port]:
    return [LOW] + [high(q) for q in range(cfg.q_ratio)]


def port_slice(port: Port, cfg: MixedConfig) -> slice:
    """Where ``port`` lives in the stacked symbol vector."""
    if port.kind == "low":
        return slice(0, cfg.p_edge)
    if port.kind == "high" and 0 <= port.slot < cfg.q_ratio:
        start = cfg.p_edge + port.slot * cfg.k_edge
        return slice(start, start + cfg.k_edge)
    raise ValueError(f"invalid port {port!r}")


@dataclass(frozen=True)
class IniBlock:
    victim: Port
    interferer: Port
    matrix: np.ndarray


def _geometric_sum(delta, start: int, count: int, size: int) -> np.ndarray:
    """``sum_{n=start}^{start+count-1} exp(j 2 pi delta n / size)`` for integer ``delta``."""
    delta = np.asarray(delta, dtype=np.int64) % size
    if count <= 0:
        return np.zeros(delta.shape, complex)
    out = np.full(delta.shape, float(count), dtype=complex)
    nz = delta != 0
    z = np.exp(2j * np.pi * delta[nz] / size)
    z_start = np.exp(2j * np.pi * ((delta[nz] * start) % size) / size)
    z_count = np.exp(2j * np.pi * ((delta[nz] * count) % size) / size)
    out[nz] = z_start * (1 - z_count) / (1 - z)
    return out


def _check_pair(victim: Port, interferer: Port, cfg: MixedConfig) -> None:
    port_slice(victim, cfg)
    port_slice(interferer, cfg)
    if victim.kind == interferer.kind:
        raise ValueError(f"no coupling block between same-numerology ports {victim} and {interferer}")


def w_block_closed_form(
    victim: Port,
    interferer: Port,
    cfg: MixedConfig,
    victim_bins: Optional[np.ndarray] = None,
    interferer_bins: Optional[np.ndarray] = None,
) -> IniBlock:
    """Coupling block from geometric-sum closed forms.

    Rows follow victim bins and columns interferer bins; by default these
    are the active edge bands, but any bins may be requested.
    """
    _check_pair(victim, interferer, cfg)
    n, m, qr = cfg.n_fft, cfg.m_fft, cfg.q_ratio
    if victim.kind == "high":
        l = cfg.high_bins if victim_bins is None else np.asarray(victim_bins)
        k = cfg.low_bins if interferer_bins is None else np.asarray(interferer_bins)
        kk, ll = np.meshgrid(k, l)
        # wide-numerology tone seen through the slot's M-sample window
        offset = victim.slot * cfg.slot_len + cfg.m_cp - cfg.n_cp
        phase = np.exp(2j * np.pi * ((kk * offset) % n) / n)
        mat = phase * _geometric_sum(kk - qr * ll, 0, m, n) / n
    else:
        k = cfg.low_bins if victim_bins is None else np.asarray(victim_bins)
        l = cfg.high_bins if interferer_bins is None else np.asarray(interferer_bins)
        ll, kk = np.meshgrid(l, k)
        slot_start = interferer.slot * cfg.slot_len
        first = max(cfg.n_cp, slot_start)
        stop = min(cfg.n_cp + n, slot_start + cfg.slot_len)
        phase = np.exp(-2j * np.pi * ((ll * (slot_start + cfg.m_cp)) % m) / m)
        phase = phase * np.exp(2j * np.pi * ((kk * cfg.n_cp) % n) / n)
        mat = phase * _geometric_sum(qr * ll - kk, first, stop - first, n) / m
    return IniBlock(victim, interferer, mat)


def w_full_oracle(cfg: MixedConfig) -> np.ndarray:
    """Whole coupling matrix by unit excitation through the actual chain.

    Column ``j`` is the demodulated active-bin response to a frame carrying
    a single unit symbol in stacked position ``j``.
    """
    units = SymbolGrid.from_stacked(np.eye(cfg.n_active, dtype=complex), cfg)
    frames = build_frame(units, cfg)
    return demod_active(frames, cfg).T


def w_block_oracle(victim: Port, interferer: Port, cfg: MixedConfig) -> IniBlock:
    _check_pair(victim, interferer, cfg)
    full = w_full_oracle(cfg)
    return IniBlock(victim, interferer, full[port_slice(victim, cfg), port_slice(interferer, cfg)])


@dataclass(frozen=True, eq=False)
class IniModel:
    cfg: MixedConfig
    matrix: np.ndarray
    inverse: np.ndarray
    condition: float

    def block(self, victim: Port, interferer: Port) -> np.ndarray:
        return self.matrix[port_slice(victim, self.cfg), port_slice(interferer, self.cfg)]


def assemble_w(
    cfg: MixedConfig,
    method: str = "closed_form",
    coupling: bool = True,
    cond_threshold: float = DEFAULT_COND_THRESHOLD,
) -> IniModel:
    """Assemble the full coupling matrix and cache its inverse.

    ``method`` is ``"closed_form"`` or ``"oracle"``. With ``coupling=False``
    all cross-numerology blocks are zero and the model is the identity.
    """
    global BUILD_COUNT
    size = cfg.n_active
    if method == "oracle" and coupling:
        w = w_full_oracle(cfg)
    elif method in ("closed_form", "oracle"):
        w = np.eye(size, dtype=complex)
        if coupling:
            for q in range(cfg.q_ratio):
                hs = port_slice(high(q), cfg)
                lo = port_slice(LOW, cfg)
                w[hs, lo] = w_block_closed_form(high(q), LOW, cfg).matrix
                w[lo, hs] = w_block_closed_form(LOW, high(q), cfg).matrix
    else:
        raise ValueError(f"unknown construction method {method!r}")

    cond = float(np.linalg.cond(w))
    if not np.isfinite(cond) or cond > cond_threshold:
        raise IllConditionedError(
            f"coupling matrix condition number {cond:.3g} exceeds {cond_threshold:.3g}"
        )
    inv = np.linalg.inv(w)
    w.setflags(write=False)
    inv.setflags(write=False)
    BUILD_COUNT += 1
    return IniModel(cfg, w, inv, cond)


@lru_cache(maxsize=16)
def cached_model(cfg: MixedConfig, coupling: bool = True) -> IniModel:
    """One model per configuration per process."""
    return assemble_w(cfg, coupling=coupling)


def pre_equalize(grid: SymbolGrid, model: IniModel) -> SymbolGrid:
    grid.check(model.cfg)
    return SymbolGrid.from_stacked(grid.stacked() @ model.inverse.T, model.cfg)


def residual_ini(grid: SymbolGrid, cfg: MixedConfig, model: Optional[IniModel] = None) -> np.ndarray:
    """Noiseless demodulated-minus-intended symbols, stacked order."""
    frame = build_frame(grid, cfg, pre_equalizer=model)
    return demod_active(frame, cfg) - grid.stacked()


# -- matrix export ---------------------------------------------------------

def write_matrix_csv(path, mat: np.ndarray, header: Optional[dict] = None) -> None:
    """``row,col,re,im`` rows, preceded by ``# key: value`` header lines."""
    with open(path, "w", newline="") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "re", "im"])
        for (r, c), v in np.ndenumerate(mat):
            writer.writerow([r, c, repr(float(v.real)), repr(float(v.imag))])


def read_matrix_csv(path) -> tuple[np.ndarray, dict]:
    header = {}
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(": ")
                header[key] = json.loads(value)
            else:
                break
        for rec in csv.DictReader(fh, fieldnames=["row", "col", "re", "im"]):
            rows.append(rec)
    n_rows = max(int(r["row"]) for r in rows) + 1
    n_cols = max(int(r["col"]) for r in rows) + 1
    mat = np.zeros((n_rows, n_cols), complex)
    for r in rows:
        mat[int(r["row"]), int(r["col"])] = complex(float(r["re"]), float(r["im"]))
    return mat, header


def write_matrix_bin(path, mat: np.ndarray) -> None:
    """Row-major, little-endian float64 ``re, im`` pairs; no header."""
    data = np.ascontiguousarray(mat, dtype=np.complex128).reshape(-1)
    Path(path).write_bytes(data.view(np.float64).astype("<f8").tobytes())


def read_matrix_bin(path, shape: Optional[tuple] = None) -> np.ndarray:
    raw = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    vals = raw[0::2] + 1j * raw[1::2]
    if shape is None:
        side = int(round(np.sqrt(vals.size)))
        if side * side != vals.size:
            raise ValueError("binary matrix is not square; pass shape explicitly")
        shape = (side, side)
    return vals.reshape(shape)
