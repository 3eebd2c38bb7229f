"""Continuous-time DAC output stages and clock jitter.

Waveforms are kept as exact edge lists and rasterized onto a uniform grid of
``K`` cells per high-rate period ``T_H``. Each grid sample is the average of
the piecewise-constant waveform over its cell, so sub-cell edge shifts from
jitter survive rasterization without being snapped to the grid.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .polyphase import LowRateBank, ti_multiplex_digital

DEFAULT_K = 32


class ClockConfigError(ValueError):
    pass


@dataclass(frozen=True)
class JitterSpec:
    """i.i.d. Gaussian edge deviations with standard deviation ``sigma_tau`` seconds.

    ``correlated`` makes every phase of a multi-phase clock share one
    deviation sequence instead of drawing its own.
    """

    sigma_tau: float = 0.0
    seed: int = 0
    correlated: bool = False

    def __post_init__(self):
        if not self.sigma_tau >= 0:
            raise ClockConfigError(f"sigma_tau must be >= 0, got {self.sigma_tau}")

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, stream]))


@dataclass
class ClockTrain:
    """Rising edges ``n * ideal_period + phase_offset + tau_n``.

    Ideal instants and deviations are stored separately so the rasterizer
    can place edges without losing precision on long runs.
    """

    ideal_period: float
    phase_offset: float
    ideal_times: np.ndarray
    deviations: np.ndarray

    @property
    def edge_times(self) -> np.ndarray:
        return self.ideal_times + self.deviations

    def __len__(self) -> int:
        return len(self.ideal_times)


def make_clock(
    period: float,
    phase: float,
    jitter: JitterSpec | None,
    count: int,
    stream: int = 0,
) -> ClockTrain:
    if count < 1:
        raise ClockConfigError("clock needs at least one edge")
    jitter = jitter or JitterSpec()
    if jitter.sigma_tau >= 0.25 * period:
        raise ClockConfigError(
            f"sigma_tau={jitter.sigma_tau:g} is not below a quarter period ({0.25 * period:g}); "
            "edges could reorder"
        )
    ideal = np.arange(count) * period + phase
    if jitter.sigma_tau > 0:
        tau = jitter.rng(stream).normal(0.0, jitter.sigma_tau, count)
    else:
        tau = np.zeros(count)
    return ClockTrain(period, phase, ideal, tau)


@dataclass
class AnalogWaveform:
    """Grid rendering of a piecewise-constant voltage.

    ``edge_times`` / ``levels`` is the segment list: the waveform equals
    ``levels[i]`` from ``edge_times[i]`` to the next edge, and 0 before the
    first edge. The grid covers ``[0, duration)``.
    """

    samples: np.ndarray
    K: int
    t_high: float
    edge_times: np.ndarray
    levels: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def grid_rate(self) -> float:
        return self.K / self.t_high

    @property
    def n_periods(self) -> int:
        return len(self.samples) // self.K

    @property
    def duration(self) -> float:
        return len(self.samples) * self.t_high / self.K

    def integral(self) -> float:
        return float(np.sum(self.samples)) * self.t_high / self.K

    def exact_integral(self) -> float:
        """Integral over ``[0, duration)`` straight from the segment list."""
        t = np.concatenate([self.edge_times, [np.inf]])
        lo = np.clip(t[:-1], 0.0, self.duration)
        hi = np.clip(t[1:], 0.0, self.duration)
        return float(np.sum(self.levels * (hi - lo)))

    def period_samples(self) -> np.ndarray:
        """One grid value per high-rate period, taken at the cell centre."""
        return self.samples[self.K // 2 :: self.K][: self.n_periods]


def _grid_position(clock: ClockTrain, K: int, t_high: float) -> tuple[np.ndarray, np.ndarray]:
    pos = clock.ideal_times / t_high * K
    base = np.round(pos)
    if not np.array_equal(base, pos):
        base = np.floor(pos)
    rem = (pos - base) + clock.deviations / t_high * K
    fl = np.floor(rem)
    return base.astype(np.int64) + fl.astype(np.int64), rem - fl


def _rasterize(
    clock: ClockTrain, deltas: np.ndarray, K: int, t_high: float, ncells: int
) -> np.ndarray:
    """Cell averages of ``sum_e deltas[e] * step(t - t_e)``.

    Steps before the window count fully from cell 0. The whole-cell part
    is an exact cumulative sum of the (integer-valued) level changes; the
    fractional part of each edge cell is added on top.
    """
    cell, off = _grid_position(clock, K, t_high)
    full = np.where(cell < 0, 0, cell + 1)
    keep = full < ncells
    whole = np.cumsum(np.bincount(full[keep], weights=deltas[keep], minlength=ncells))
    inside = (cell >= 0) & (cell < ncells)
    part = np.bincount(cell[inside], weights=deltas[inside] * (1.0 - off[inside]), minlength=ncells)
    return whole + part


def _edge_deltas(levels: np.ndarray) -> np.ndarray:
    """Level changes at each of ``len(levels) + 1`` edges, starting and ending at 0."""
    return np.diff(np.concatenate([[0.0], levels, [0.0]]))


def render_nrz(
    y: Sequence[float],
    clock: ClockTrain,
    K: int = DEFAULT_K,
    t_high: float = 1.0,
    periods: int | None = None,
) -> AnalogWaveform:
    """NRZ DAC: level ``y(n)`` from realized edge ``n`` to realized edge ``n + 1``.

    The clock period sets the pulse width; a jittered edge moves both the end
    of one pulse and the start of the next. The window defaults to the ideal
    stream duration; ``periods`` overrides it (in units of ``t_high``).
    """
    y = np.asarray(y, dtype=float)
    if len(clock) != len(y) + 1:
        raise ValueError(f"clock has {len(clock)} edges, need {len(y) + 1}")
    if K < 1:
        raise ValueError("need at least one grid cell per period")
    n_periods = int(round(len(y) * clock.ideal_period / t_high)) if periods is None else periods
    ncells = n_periods * K
    samples = _rasterize(clock, _edge_deltas(y), K, t_high, ncells)
    return AnalogWaveform(samples, K, t_high, clock.edge_times, np.concatenate([y, [0.0]]))


def mux_clocks(
    M: int, Q: int, jitter: JitterSpec | None = None, t_high: float = 1.0
) -> list[ClockTrain]:
    """``M`` clocks of period ``M * t_high``, clock ``p`` delayed by ``p * t_high``."""
    jitter = jitter or JitterSpec()
    return [
        make_clock(M * t_high, p * t_high, jitter, Q + 1, stream=0 if jitter.correlated else p)
        for p in range(M)
    ]


def analog_mux(
    bank: LowRateBank,
    clocks: Sequence[ClockTrain],
    K: int = DEFAULT_K,
    t_high: float = 1.0,
) -> AnalogWaveform:
    """Sum of ``M`` low-rate NRZ DACs weighted by ``1/M``.

    Path ``p`` holds ``y_p(q)`` for a full low-rate period starting at its
    own clock edge ``q``. The rendered window is ``M * Q`` high-rate periods;
    the tails of the last pulses of late phases fall outside it.
    """
    M, Q = bank.M, bank.length
    if len(clocks) != M:
        raise ValueError(f"need {M} clocks, got {len(clocks)}")
    if K < 1:
        raise ValueError("need at least one grid cell per period")
    ncells = M * Q * K
    acc = np.zeros(ncells)
    all_t, all_d = [], []
    for p in range(M):
        if len(clocks[p]) != Q + 1:
            raise ValueError(f"clock {p} has {len(clocks[p])} edges, need {Q + 1}")
        d = _edge_deltas(bank.streams[p])
        acc += _rasterize(clocks[p], d, K, t_high, ncells)
        all_t.append(clocks[p].edge_times)
        all_d.append(d / M)
    t = np.concatenate(all_t)
    order = np.argsort(t, kind="stable")
    levels = np.cumsum(np.concatenate(all_d)[order])
    return AnalogWaveform(acc / M, K, t_high, t[order], levels, meta={"M": M})


def comb_filter(y: Sequence[float], M: int) -> np.ndarray:
    """``(1/M) sum_{k<M} y(n-k)`` with zero prehistory."""
    if M < 1:
        raise ValueError(f"comb order must be >= 1, got {M}")
    y = np.asarray(y, dtype=float)
    return np.convolve(y, np.ones(M))[: len(y)] / M


@dataclass
class DtModelReport:
    M: int
    max_abs_diff: float
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.max_abs_diff <= self.tol


def dt_model_check(bank: LowRateBank, M: int | None = None, K: int = 16) -> DtModelReport:
    """Compare the ideal-clock analog mux with the comb-filtered multiplexed stream.

    The first ``M`` high-rate samples are skipped (comb prehistory).
    """
    M = bank.M if M is None else M
    if M != bank.M:
        raise ValueError("bank path count does not match M")
    g = analog_mux(bank, mux_clocks(M, bank.length), K)
    ref = comb_filter(ti_multiplex_digital(bank), M)
    got = g.period_samples()
    diff = float(np.max(np.abs(got[M:] - ref[M:]))) if len(ref) > M else 0.0
    return DtModelReport(M, diff)


def write_waveform(path: str | Path, w: AnalogWaveform, header: dict) -> Path:
    """Dump grid samples as ``(grid_index, value)``.

    ``.csv`` paths get a text file with ``# key=value`` header lines; any
    other suffix gets a compressed ``.npz`` holding the same header fields.
    """
    path = Path(path)
    head = {"K": w.K, "f_H": 1.0 / w.t_high, **header}
    if path.suffix == ".csv":
        with path.open("w", newline="") as fh:
            for k, v in head.items():
                fh.write(f"# {k}={v}\n")
            wr = csv.writer(fh)
            wr.writerow(["grid_index", "value"])
            for i, v in enumerate(w.samples):
                wr.writerow([i, f"{v:.9g}"])
    else:
        np.savez_compressed(
            path,
            grid_index=np.arange(len(w.samples)),
            value=w.samples,
            header=np.array([f"{k}={v}" for k, v in head.items()]),
        )
        if path.suffix != ".npz":
            path = path.with_name(path.name + ".npz")
    return path


def read_waveform(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    if path.suffix == ".csv":
        header = {}
        with path.open() as fh:
            lines = fh.read().splitlines()
        body = []
        for line in lines:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                header[k] = v
            elif line and not line.startswith("grid_index"):
                body.append(float(line.split(",")[1]))
        return np.array(body), header
    with np.load(path) as z:
        header = dict(s.split("=", 1) for s in z["header"].tolist())
        return z["value"].copy(), header
