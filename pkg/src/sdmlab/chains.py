"""End-to-end chains: test tone -> modulator -> DAC output stage.

Architectures:

``fig1``   classical EF modulator, one NRZ DAC at ``f_H``
``fig2``   time-interleaved modulator, digital multiplexing, one NRZ DAC at ``f_H``
``fig3a``  time-interleaved modulator, ``M`` phase-shifted NRZ DACs at ``f_L``, analog sum
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .analog import DEFAULT_K, AnalogWaveform, JitterSpec, analog_mux, make_clock, mux_clocks, render_nrz
from .polyphase import LowRateBank, ti_modulate, ti_multiplex_digital
from .sdm_core import ef_modulate, make_loop_filter
from .spectral import MetricConfig, SndrResult, compute_sndr, measure_sigma_dy, sndr_details

log = logging.getLogger(__name__)

ARCHITECTURES = ("fig1", "fig2", "fig3a")


def derive_seed(master: int, *keys: int) -> int:
    """Stage seed: first word of ``SeedSequence([master, *keys])``."""
    return int(np.random.SeedSequence([master, *keys]).generate_state(1)[0])


def dbfs_to_amplitude(dbfs: float) -> float:
    return 10.0 ** (dbfs / 20.0)


def make_tone(n: int, amplitude: float, cfg: MetricConfig, extra: int = 0) -> np.ndarray:
    """Coherent sine at the snapped tone frequency of an ``n``-period run.

    ``extra`` samples are appended (the tone keeps going) to feed pipeline
    latency.
    """
    f = cfg.tone_freq(n)
    return amplitude * np.sin(2 * np.pi * f * np.arange(n + extra))


@dataclass(frozen=True)
class ChainSpec:
    """One simulated converter. ``sigma_tau`` is in units of ``T_H``."""

    architecture: str = "fig1"
    order: int = 2
    M: int = 4
    n_samples: int = 2**18
    K: int = DEFAULT_K
    sigma_tau: float = 0.0
    correlated: bool = False

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.n_samples % self.M:
            raise ValueError("run length must be a multiple of M")

    def jitter(self, seed: int) -> JitterSpec:
        return JitterSpec(self.sigma_tau, seed, self.correlated)


@dataclass
class ChainResult:
    spec: ChainSpec
    amplitude: float
    x: np.ndarray
    y: np.ndarray
    waveform: AnalogWaveform
    bank: LowRateBank | None = None


def aligned_bank(x: np.ndarray, spec: ChainSpec) -> LowRateBank:
    """TI bank whose multiplexed stream lines up with ``ef_modulate(x[:n])``.

    The modulator is fed ``M`` extra samples and its register-fill block is
    dropped.
    """
    h = make_loop_filter(spec.order)
    bank = ti_modulate(x[: spec.n_samples + spec.M], spec.M, h)
    return bank.drop_latency()


def run_chain(spec: ChainSpec, amplitude: float, cfg: MetricConfig, seed: int = 0) -> ChainResult:
    n = spec.n_samples
    x = make_tone(n, amplitude, cfg, extra=spec.M)
    jitter = spec.jitter(seed)
    bank = None
    if spec.architecture == "fig1":
        y, _ = ef_modulate(x[:n], make_loop_filter(spec.order))
    else:
        bank = aligned_bank(x, spec)
        y = ti_multiplex_digital(bank)
    if spec.architecture == "fig3a":
        w = analog_mux(bank, mux_clocks(spec.M, bank.length, jitter), spec.K)
    else:
        w = render_nrz(y, make_clock(1.0, 0.0, jitter, n + 1), spec.K)
    return ChainResult(spec, amplitude, x[:n], y, w, bank)


@dataclass
class PointResult:
    """One sweep point: measured SNDR plus the jitter-free SNDR of the same bit stream."""

    sndr: SndrResult
    ideal_sndr: float
    sigma_dy: float

    @property
    def sndr_db(self) -> float:
        return self.sndr.sndr_db

    @property
    def low_confidence(self) -> bool:
        return self.sndr.low_confidence


def _point(args) -> PointResult | str:
    spec, amp_dbfs, cfg, seed = args
    try:
        r = run_chain(spec, dbfs_to_amplitude(amp_dbfs), cfg, seed)
        return PointResult(
            sndr_details(r.waveform, cfg), compute_sndr(r.y, cfg), measure_sigma_dy(r.y)
        )
    except Exception as exc:  # recorded per point; the sweep continues
        log.warning("point %s dBFS failed: %s", amp_dbfs, exc)
        return f"{type(exc).__name__}: {exc}"


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get("SDMLAB_THREADS")
    return max(1, int(env)) if env else 1


def sweep_points(amps, spec: ChainSpec, cfg: MetricConfig, seed: int, workers: int | None = None):
    jobs = [(spec, a, cfg, derive_seed(seed, i)) for i, a in enumerate(amps)]
    workers = worker_count(workers)
    if workers == 1 or len(jobs) == 1:
        return [_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_point, jobs))


def with_sigma(spec: ChainSpec, sigma_tau: float) -> ChainSpec:
    return replace(spec, sigma_tau=sigma_tau)
