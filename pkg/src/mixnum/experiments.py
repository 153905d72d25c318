"""Declarative experiment runs: verification, BER sweeps, PAPR and matrix export.

All randomness is drawn from :class:`~mixnum.channel.RngStream` substreams
keyed by ``(seed, experiment, qam order, numerology, grid point, batch)``.
Frames are processed in fixed-size batches and consumed in batch order, so
outputs do not depend on the thread count. The pre-equalized and plain arms
of a BER point share substreams and therefore see identical symbols, fades
and noise.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from . import ini
from .channel import CHANNELS, RngStream, awgn, one_tap_equalize, rayleigh_block
from .config import CONFIG_KEYS, ConfigError, MixedConfig, config_from_mapping, read_json_config
from .metrics import BerPoint, ccdf, ccdf_level_db, noise_variance_for_ebn0, papr_db, theoretical_ber
from .ofdm import SymbolGrid, build_frame, demod_active
from .qam import QamOrder, qam_demodulate_hard, qam_modulate

log = logging.getLogger(__name__)

PREEQ_MODES = ("on", "off", "both")
DEFAULT_EBN0_DB = tuple(float(x) for x in range(0, 41, 5))
BER_COLUMNS = ("experiment", "numerology", "qam_order", "channel", "ebn0_db", "bits", "errors", "ber", "ci95")
PAPR_COLUMNS = ("threshold_db", "ccdf_preeq", "ccdf_plain", "frames")
PAPR_THRESHOLDS_DB = tuple(round(0.1 * i, 1) for i in range(0, 151))

_SPEC_KEYS = (
    "seed", "channel", "ebn0_db", "min_bits", "max_bit_errors", "bit_budget",
    "papr_frames", "out", "preeq", "threads", "batch_frames", "zero_coupling",
)


@dataclass(frozen=True)
class ExperimentSpec:
    cfg: MixedConfig
    qam_orders: tuple = (256,)
    channel: str = "rayleigh_block"
    ebn0_db: tuple = DEFAULT_EBN0_DB
    min_bits: int = 10_000
    max_bit_errors: int = 200
    bit_budget: int = 10_000_000
    papr_frames: int = 100_000
    seed: int = 1
    out: str = "results"
    preeq: str = "both"
    threads: int = 1
    batch_frames: int = 256
    # test hook: drop all cross-numerology coupling so W is the identity
    zero_coupling: bool = False

    def __post_init__(self):
        try:
            orders = tuple(int(QamOrder(o)) for o in self.qam_orders)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"qam_order: {exc}") from None
        if not orders:
            raise ConfigError("qam_order: at least one order required")
        object.__setattr__(self, "qam_orders", orders)
        object.__setattr__(self, "ebn0_db", tuple(float(x) for x in self.ebn0_db))
        if not self.ebn0_db:
            raise ConfigError("ebn0_db: grid must not be empty")
        if self.channel not in CHANNELS:
            raise ConfigError(f"channel: expected one of {CHANNELS}, got {self.channel!r}")
        if self.min_bits < 10_000:
            raise ConfigError("min_bits: must be at least 10000")
        if self.max_bit_errors < 1:
            raise ConfigError("max_bit_errors: must be positive")
        if self.bit_budget < self.min_bits:
            raise ConfigError("bit_budget: must be at least min_bits")
        if self.papr_frames < 1:
            raise ConfigError("papr_frames: must be positive")
        if self.preeq not in PREEQ_MODES:
            raise ConfigError(f"preeq: expected one of {PREEQ_MODES}, got {self.preeq!r}")
        if self.threads < 1 or self.batch_frames < 1:
            raise ConfigError("threads and batch_frames must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")

    @property
    def arms(self) -> tuple[str, ...]:
        return {"on": ("preeq",), "off": ("plain",), "both": ("preeq", "plain")}[self.preeq]

    def to_dict(self) -> dict:
        d = self.cfg.as_dict()
        d["qam_order"] = self.qam_orders[0] if len(self.qam_orders) == 1 else list(self.qam_orders)
        for key in _SPEC_KEYS:
            value = getattr(self, key)
            d[key] = list(value) if isinstance(value, tuple) else value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        unknown = sorted(set(data) - set(CONFIG_KEYS) - set(_SPEC_KEYS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = config_from_mapping(data)
        if "qam_order" not in data:
            raise ConfigError("missing config key: qam_order")
        orders = data["qam_order"]
        orders = tuple(orders) if isinstance(orders, list) else (orders,)
        kwargs = {k: data[k] for k in _SPEC_KEYS if k in data}
        for key in ("min_bits", "max_bit_errors", "bit_budget", "papr_frames", "seed", "threads", "batch_frames"):
            if key in kwargs and (isinstance(kwargs[key], bool) or not isinstance(kwargs[key], int)):
                raise ConfigError(f"{key}: must be an integer, got {kwargs[key]!r}")
        if "ebn0_db" in kwargs:
            if not isinstance(kwargs["ebn0_db"], list):
                raise ConfigError("ebn0_db: must be a list of numbers")
            kwargs["ebn0_db"] = tuple(kwargs["ebn0_db"])
        return cls(cfg=cfg, qam_orders=orders, **kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            return cls.from_dict(read_json_config(path))
        except ConfigError as exc:
            msg = str(exc)
            raise ConfigError(msg if msg.startswith(str(path)) else f"{path}: {msg}") from None

    def with_overrides(self, **kwargs) -> "ExperimentSpec":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def model_for(spec: ExperimentSpec) -> ini.IniModel:
    return ini.cached_model(spec.cfg, coupling=not spec.zero_coupling)


def random_grid(cfg: MixedConfig, order: int, frames: int, rng: np.random.Generator):
    """Draw ``frames`` grids of uniformly random QAM symbols; returns ``(grid, bits)``.

    ``bits`` has shape ``(frames, P + Q*K, bits_per_symbol)`` in stacked order.
    """
    bps = QamOrder(order).bits_per_symbol
    bits = rng.integers(0, 2, size=(frames, cfg.n_active, bps), dtype=np.uint8)
    symbols = qam_modulate(bits.reshape(-1), order).reshape(frames, cfg.n_active)
    return SymbolGrid.from_stacked(symbols, cfg), bits


def _ordered_batches(fn: Callable[[int], object], threads: int) -> Iterator:
    """Yield ``fn(0), fn(1), ...`` in order, evaluating up to ``threads`` ahead."""
    if threads <= 1:
        b = 0
        while True:
            yield fn(b)
            b += 1
    with ThreadPoolExecutor(max_workers=threads) as pool:
        b = 0
        while True:
            futures = [pool.submit(fn, b + i) for i in range(threads)]
            for fut in futures:
                yield fut.result()
            b += threads


# -- verify ----------------------------------------------------------------

@dataclass
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    note: str = ""


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)
    condition: float = float("nan")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, measured: float, tolerance: float, note: str = "") -> None:
        self.checks.append(Check(name, float(measured), tolerance, bool(measured <= tolerance), note))

    def render(self) -> str:
        lines = [f"{'check':<28} {'measured':>12} {'tolerance':>10}  status"]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            line = f"{c.name:<28} {c.measured:>12.3e} {c.tolerance:>10.1e}  {status}"
            lines.append(line + (f"  ({c.note})" if c.note else ""))
        lines.append(f"condition number: {self.condition:.6g}")
        lines.append("result: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines) + "\n"


def run_verify(spec: ExperimentSpec, frames: int = 200) -> VerifyReport:
    """Check the coupling model against the physical chain."""
    cfg = spec.cfg
    report = VerifyReport()
    model = model_for(spec)
    report.condition = model.condition
    eye = np.eye(cfg.n_active)
    report.add("inversion_residual", np.abs(model.matrix @ model.inverse - eye).max(), 1e-10)

    if spec.zero_coupling:
        report.add("w_is_identity", np.abs(model.matrix - eye).max(), 0.0, "coupling disabled")
        report.add("inverse_is_identity", np.abs(model.inverse - eye).max(), 0.0)
        return report

    oracle = ini.w_full_oracle(cfg)
    report.add("oracle_equivalence", np.abs(oracle - model.matrix).max(), 1e-9)
    diag = 0.0
    cross = 0.0
    for a in ini.ports(cfg):
        for b in ini.ports(cfg):
            blk = oracle[ini.port_slice(a, cfg), ini.port_slice(b, cfg)]
            if a == b:
                diag = max(diag, np.abs(blk - np.eye(blk.shape[0])).max())
            elif a.kind == b.kind == "high":
                cross = max(cross, np.abs(blk).max())
    report.add("identity_diagonal_blocks", diag, 1e-12)
    report.add("zero_interslot_blocks", cross, 1e-12)

    rng = RngStream(spec.seed, ("verify",)).generator()
    for order in spec.qam_orders:
        grid, _ = random_grid(cfg, order, frames, rng)
        res = ini.residual_ini(grid, cfg, model)
        report.add(f"preeq_residual_{order}qam", np.abs(res).max(), 1e-9)
        plain = ini.residual_ini(grid, cfg)
        predicted = grid.stacked() @ (model.matrix - eye).T
        report.add(f"plain_residual_model_{order}qam", np.abs(plain - predicted).max(), 1e-10)

    a, _ = random_grid(cfg, spec.qam_orders[0], frames, rng)
    b, _ = random_grid(cfg, spec.qam_orders[0], frames, rng)
    alpha, beta = 0.7 - 0.2j, -1.3 + 0.4j
    mix = SymbolGrid(alpha * a.x0 + beta * b.x0, alpha * a.x1 + beta * b.x1)
    for label, m in (("plain", None), ("preeq", model)):
        lhs = ini.residual_ini(mix, cfg, m)
        rhs = alpha * ini.residual_ini(a, cfg, m) + beta * ini.residual_ini(b, cfg, m)
        report.add(f"linearity_{label}", np.abs(lhs - rhs).max(), 1e-10)
    return report


# -- BER -------------------------------------------------------------------

def _ber_batch(spec: ExperimentSpec, model, order: int, numerology: str, i_point: int,
               ebn0_db: float, arms: tuple, batch: int) -> dict:
    cfg = spec.cfg
    gen = RngStream(spec.seed, ("ber", order, numerology, i_point, batch)).generator()
    grid, bits = random_grid(cfg, order, spec.batch_frames, gen)
    noise_var = noise_variance_for_ebn0(cfg, ebn0_db, order, numerology)
    target = slice(0, cfg.p_edge) if numerology == "low" else slice(cfg.p_edge, cfg.n_active)
    # channel draws depend only on the stream, so both arms see the same realisation
    fade_gen_state = gen.bit_generator.state
    out = {}
    for arm in arms:
        gen.bit_generator.state = fade_gen_state
        frame = build_frame(grid, cfg, pre_equalizer=model if arm == "preeq" else None)
        y = frame.samples
        if spec.channel == "rayleigh_block":
            y, h = rayleigh_block(y, gen)
        else:
            h = np.ones(y.shape[:-1], complex)
        y = awgn(y, noise_var, gen)
        eq = one_tap_equalize(demod_active(y, cfg), h)[:, target]
        rx = qam_demodulate_hard(eq, order)
        tx = bits[:, target].reshape(-1)
        out[arm] = (tx.size, int(np.count_nonzero(rx != tx)))
    return out


def simulate_ber_point(spec: ExperimentSpec, order: int, numerology: str, i_point: int,
                       arms: Optional[tuple] = None, model=None) -> dict:
    """Monte Carlo BER for one grid point; returns ``{arm: BerPoint}``.

    Each arm stops once it has ``max_bit_errors`` errors and ``min_bits``
    bits, or when it reaches ``bit_budget`` bits.
    """
    arms = arms or spec.arms
    if model is None and "preeq" in arms:
        model = model_for(spec)
    ebn0 = spec.ebn0_db[i_point]
    totals = {arm: [0, 0] for arm in arms}
    active = set(arms)

    def done(arm):
        bits, errs = totals[arm]
        return bits >= spec.bit_budget or (errs >= spec.max_bit_errors and bits >= spec.min_bits)

    def work(b):
        return _ber_batch(spec, model, order, numerology, i_point, ebn0, tuple(sorted(active)), b)

    for result in _ordered_batches(work, spec.threads):
        for arm in list(active):
            if arm not in result:
                continue
            totals[arm][0] += result[arm][0]
            totals[arm][1] += result[arm][1]
            if done(arm):
                active.discard(arm)
        if not active:
            break
    mu = spec.cfg.mu_low if numerology == "low" else spec.cfg.mu_high
    return {arm: BerPoint(mu, ebn0, bits, errs) for arm, (bits, errs) in totals.items()}


def _fmt(x: float) -> str:
    return repr(float(x))


def run_ber_sweep(spec: ExperimentSpec, out_dir=None) -> Path:
    """Write ``ber.csv`` and ``plot_ber.gp`` under ``out_dir``; returns the CSV path.

    Rows are flushed as each grid point completes so an interrupted sweep
    leaves every finished point on disk.
    """
    out = Path(out_dir or spec.out)
    out.mkdir(parents=True, exist_ok=True)
    model = model_for(spec) if "preeq" in spec.arms else None
    path = out / "ber.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BER_COLUMNS)
        fh.flush()
        for order in spec.qam_orders:
            for numerology in ("low", "high"):
                for i in range(len(spec.ebn0_db)):
                    points = simulate_ber_point(spec, order, numerology, i, model=model)
                    for arm in spec.arms:
                        p = points[arm]
                        writer.writerow([
                            f"ber_{arm}", p.numerology, order, spec.channel, _fmt(p.ebn0_db),
                            p.bits, p.errors, _fmt(p.ber), _fmt(p.ci95),
                        ])
                    fh.flush()
                    log.info("ber %d-QAM %s %.1f dB done", order, numerology, spec.ebn0_db[i])
    (out / "plot_ber.gp").write_text(ber_plot_script(spec, path.name))
    return path


def ber_plot_script(spec: ExperimentSpec, csv_name: str) -> str:
    """Self-contained gnuplot script overlaying measured and theoretical BER."""
    channel = "rayleigh" if spec.channel == "rayleigh_block" else "awgn"
    grid = np.arange(min(spec.ebn0_db), max(spec.ebn0_db) + 0.25, 0.5)
    lines = [
        "# gnuplot script; run: gnuplot plot_ber.gp",
        "set terminal pngcairo size 900,650",
        "set output 'ber.png'",
        "set datafile separator ','",
        "set logscale y",
        "set format y '10^{%L}'",
        "set xlabel 'E_b/N_0 (dB)'",
        "set ylabel 'BER'",
        "set grid",
        "set key bottom left",
    ]
    for order in spec.qam_orders:
        lines.append(f"$theory{order} << EOD")
        for g, p in zip(grid, np.atleast_1d(theoretical_ber(order, grid, channel))):
            lines.append(f"{g:.2f} {p:.6e}")
        lines.append("EOD")
    series = []
    for order in spec.qam_orders:
        series.append(f"$theory{order} using 1:2 with lines lw 2 title 'theory {order}-QAM'")
        for arm in spec.arms:
            for mu in (spec.cfg.mu_low, spec.cfg.mu_high):
                cond = (f'(strcol(1) eq "ber_{arm}" && $2 == {mu} && $3 == {order} && $8 > 0)')
                series.append(
                    f"'{csv_name}' using 5:({cond} ? $8 : 1/0) with linespoints "
                    f"title '{order}-QAM mu={mu} {arm}'"
                )
    lines.append("plot " + ", \\\n     ".join(series))
    return "\n".join(lines) + "\n"


def read_ber_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- PAPR ------------------------------------------------------------------

def papr_values(spec: ExperimentSpec, order: int, model=None) -> tuple[np.ndarray, np.ndarray]:
    """PAPR (dB) of ``papr_frames`` paired frames: ``(preeq, plain)``."""
    model = model if model is not None else model_for(spec)
    n_batches = -(-spec.papr_frames // spec.batch_frames)

    def work(b):
        gen = RngStream(spec.seed, ("papr", order, b)).generator()
        count = min(spec.batch_frames, spec.papr_frames - b * spec.batch_frames)
        grid, _ = random_grid(spec.cfg, order, count, gen)
        pre = papr_db(build_frame(grid, spec.cfg, pre_equalizer=model))
        plain = papr_db(build_frame(grid, spec.cfg))
        return np.atleast_1d(pre), np.atleast_1d(plain)

    results = []
    for b, r in enumerate(_ordered_batches(work, spec.threads)):
        results.append(r)
        if b + 1 == n_batches:
            break
    pre = np.concatenate([r[0] for r in results])
    plain = np.concatenate([r[1] for r in results])
    return pre, plain


def papr_table(preeq_db, plain_db, thresholds=PAPR_THRESHOLDS_DB) -> list[tuple]:
    pre = ccdf(preeq_db, thresholds)
    plain = ccdf(plain_db, thresholds)
    return [
        (_fmt(t), _fmt(a), _fmt(b), pre.frames)
        for t, a, b in zip(pre.thresholds_db, pre.ccdf, plain.ccdf)
    ]


def run_papr(spec: ExperimentSpec, out_dir=None) -> dict:
    """Write ``papr_<order>qam.csv`` and a plot script per QAM order.

    Returns ``{order: (csv_path, delta_db)}`` where ``delta_db`` is the
    pre-equalized minus plain PAPR at CCDF = 1e-2.
    """
    out = Path(out_dir or spec.out)
    out.mkdir(parents=True, exist_ok=True)
    model = model_for(spec)
    summary = {}
    for order in spec.qam_orders:
        pre, plain = papr_values(spec, order, model)
        path = out / f"papr_{order}qam.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(PAPR_COLUMNS)
            writer.writerows(papr_table(pre, plain))
        (out / f"plot_papr_{order}qam.gp").write_text(papr_plot_script(path.name, order))
        summary[order] = (path, ccdf_level_db(pre, 1e-2) - ccdf_level_db(plain, 1e-2))
    return summary


def papr_plot_script(csv_name: str, order: int) -> str:
    stem = Path(csv_name).stem
    return "\n".join([
        f"# gnuplot script; run: gnuplot plot_{stem}.gp",
        "set terminal pngcairo size 900,650",
        f"set output '{stem}.png'",
        "set datafile separator ','",
        "set logscale y",
        "set yrange [1e-4:1]",
        "set xlabel 'PAPR threshold (dB)'",
        "set ylabel 'CCDF'",
        "set grid",
        f"plot '{csv_name}' using 1:($2 > 0 ? $2 : 1/0) skip 1 with linespoints title '{order}-QAM pre-equalized', \\",
        f"     '{csv_name}' using 1:($3 > 0 ? $3 : 1/0) skip 1 with linespoints title '{order}-QAM plain'",
    ]) + "\n"


# -- export ----------------------------------------------------------------

def run_export_matrix(spec: ExperimentSpec, out_dir=None) -> dict:
    """Write the coupling matrix and its inverse as CSV and raw binary."""
    out = Path(out_dir or spec.out)
    out.mkdir(parents=True, exist_ok=True)
    model = model_for(spec)
    header = {
        "config": spec.cfg.as_dict(),
        "condition_number": model.condition,
        "shape": list(model.matrix.shape),
        "order": "stacked [low; high slot 0; ...; high slot Q-1]",
    }
    paths = {}
    for name, mat in (("w_ini", model.matrix), ("w_ini_inv", model.inverse)):
        csv_path = out / f"{name}.csv"
        bin_path = out / f"{name}.bin"
        ini.write_matrix_csv(csv_path, mat, dict(header, matrix=name))
        ini.write_matrix_bin(bin_path, mat)
        paths[name] = (csv_path, bin_path)
    meta = dict(header, binary_format="row-major little-endian float64 (re, im) pairs")
    (out / "matrix_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return paths

