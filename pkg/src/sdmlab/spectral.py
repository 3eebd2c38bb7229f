"""Spectral estimates and figures of merit.

Frequencies are normalized to the high rate ``f_H``. Sequences passed as
plain arrays are taken to be one sample per ``T_H``; ``AnalogWaveform``
inputs are analysed on their ``K``-per-``T_H`` grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize, signal

from .analog import AnalogWaveform


@dataclass(frozen=True)
class MetricConfig:
    """Band and estimator settings.

    ``fx_fraction`` places the test tone at ``fx_fraction * B``; the tone is
    snapped to the nearest DFT bin of the run. ``psd_segment`` is counted in
    high-rate periods, so PSD resolution does not depend on the render grid.
    """

    osr: float = 64
    fx_fraction: float = 0.2
    guard_bins: int = 3
    psd_segment: int = 2**14
    psd_overlap: float = 0.5

    def __post_init__(self):
        if not 0 < self.fx_fraction < 1:
            raise ValueError("tone must lie inside the band (0 < f_x/B < 1)")
        if not self.osr > 1:
            raise ValueError("OSR must exceed 1 so that B < f_H/2")

    @property
    def band(self) -> float:
        return 1.0 / (2.0 * self.osr)

    @property
    def fx(self) -> float:
        return self.fx_fraction * self.band

    def tone_bin(self, n: int) -> int:
        return max(1, int(round(self.fx * n)))

    def tone_freq(self, n: int) -> float:
        """Tone frequency snapped to a whole number of cycles in ``n`` periods."""
        return self.tone_bin(n) / n

    def band_bins(self, n: int) -> int:
        return int(math.floor(self.band * n))


def _grid(w) -> tuple[np.ndarray, int]:
    if isinstance(w, AnalogWaveform):
        return w.samples, w.K
    return np.asarray(w, dtype=float), 1


@dataclass
class SpectrumEstimate:
    freqs: np.ndarray
    psd: np.ndarray
    resolution: float
    meta: dict = field(default_factory=dict)

    @property
    def psd_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.psd)

    def total_power(self) -> float:
        return float(np.sum(self.psd) * self.resolution)

    def band_power(self, f_lo: float, f_hi: float) -> float:
        sel = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        return float(np.sum(self.psd[sel]) * self.resolution)

    def value_at(self, f: float) -> float:
        return float(self.psd[int(np.argmin(np.abs(self.freqs - f)))])

    def truncated(self, f_max: float) -> SpectrumEstimate:
        sel = self.freqs <= f_max + 1e-12
        return SpectrumEstimate(self.freqs[sel], self.psd[sel], self.resolution, dict(self.meta))


def estimate_psd(w, cfg: MetricConfig = MetricConfig()) -> SpectrumEstimate:
    """Welch estimate: Hann window, ``psd_overlap`` overlap, one-sided density."""
    x, K = _grid(w)
    nper = cfg.psd_segment * K
    if len(x) < 4 * nper:
        raise ValueError(
            f"input of {len(x)} samples is shorter than 4 segments of {nper}"
        )
    f, p = signal.welch(
        x,
        fs=K,
        window="hann",
        nperseg=nper,
        noverlap=int(nper * cfg.psd_overlap),
        detrend=False,
        scaling="density",
    )
    return SpectrumEstimate(
        f, p, K / nper, {"window": "hann", "segment": nper, "overlap": cfg.psd_overlap}
    )


@dataclass
class SndrResult:
    """Powers are one-sided mean-square values within the band."""

    sndr_db: float
    signal_power: float
    noise_power: float
    tone_bin: int
    band_bins: int
    low_confidence: bool

    @property
    def noise_db(self) -> float:
        """In-band noise plus distortion power in dB."""
        return 10.0 * math.log10(self.noise_power)


def sndr_details(w, cfg: MetricConfig = MetricConfig()) -> SndrResult:
    """In-band SNDR from one Hann-windowed DFT over the whole run.

    Restricting to bins at or below ``B`` acts as a brick-wall anti-alias
    filter. The signal is the tone bin +/- ``guard_bins``; noise and
    distortion are the remaining in-band bins, excluding the DC main lobe
    (bins 0 and 1).
    """
    x, K = _grid(w)
    n = len(x) // K
    x = x[: n * K]
    win = signal.get_window("hann", len(x))
    nb = cfg.band_bins(n)
    X = np.fft.rfft(x * win)[: nb + 1]
    P = 2.0 * (np.abs(X) ** 2) / (np.sum(win**2) * len(x))
    kx = cfg.tone_bin(n)
    g = cfg.guard_bins
    lo, hi = max(kx - g, 2), min(kx + g, nb)
    psig = float(np.sum(P[lo : hi + 1]))
    noise_bins = np.r_[2:lo, hi + 1 : nb + 1]
    pnd = float(np.sum(P[noise_bins]))
    per_bin = pnd / max(len(noise_bins), 1)
    low = psig < 10.0 * per_bin * (hi - lo + 1)
    with np.errstate(divide="ignore"):
        sndr = 10.0 * math.log10(psig / pnd) if pnd > 0 else math.inf
    return SndrResult(sndr, psig, pnd, kx, nb, bool(low))


def compute_sndr(w, cfg: MetricConfig = MetricConfig()) -> float:
    return sndr_details(w, cfg).sndr_db


def notch_depth_db(est: SpectrumEstimate, f0: float, near: float = 0.02, far: float = 0.05) -> float:
    """How far the PSD at ``f0`` sits below the median level ``near..far`` away from it."""
    d = np.abs(est.freqs - f0)
    sel = (d >= near) & (d <= far) & (est.freqs > 0)
    ref = float(np.median(est.psd[sel]))
    return float(10.0 * np.log10(ref / est.value_at(f0)))


def inband_floor_db(est: SpectrumEstimate, cfg: MetricConfig, n: int) -> float:
    """Median in-band PSD (dB) outside the tone region."""
    fx = cfg.tone_freq(n)
    guard = (cfg.guard_bins + 2) * est.resolution
    sel = (est.freqs > 2 * est.resolution) & (est.freqs <= cfg.band) & (np.abs(est.freqs - fx) > guard)
    return float(10.0 * np.log10(np.median(est.psd[sel])))


def measure_sigma_dy(y: Sequence[float]) -> float:
    """RMS of the first difference ``y(n) - y(n-1)``.

    Taken about zero: the difference of a bounded stream has zero mean, and
    the jitter error power scales with its second moment.
    """
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise ValueError("need at least two samples")
    d = np.diff(y)
    return float(np.sqrt(np.mean(d * d)))


def predict_snr_jtt1(A: float, f_s: float, sigma_tau: float, sigma_dy: float, osr: float) -> float:
    """Jitter-limited SNR of a single high-rate NRZ DAC, in dB.

    ``10 log10((A / (f_s sigma_tau sigma_dy))^2 OSR)``. Returns ``inf`` when
    there is no jitter (or no transitions).
    """
    if sigma_tau == 0 or sigma_dy == 0:
        return math.inf
    if min(A, f_s, sigma_tau, sigma_dy, osr) < 0:
        raise ValueError("arguments must be positive")
    return 10.0 * math.log10((A / (f_s * sigma_tau * sigma_dy)) ** 2 * osr)


def dac_step(M: int, vs: float = 1.0) -> float:
    if M < 1 or not vs > 0:
        raise ValueError("need M >= 1 and V_S > 0")
    return 2.0 * vs / M


def snr_improvement(M: int) -> float:
    if M < 1:
        raise ValueError("need M >= 1")
    return 20.0 * math.log10(M)


class CombResponse(NamedTuple):
    magnitude: np.ndarray | float
    magnitude_db: np.ndarray | float


def comb_response(M: int, f) -> CombResponse:
    """``|H_C|`` of the ``M``-tap moving average at ``f`` (units of ``f_H``).

    Exact zeros at ``f = k/M``.
    """
    scalar = np.ndim(f) == 0
    f = np.atleast_1d(np.asarray(f, dtype=float))
    mf = M * f
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.abs(np.sin(np.pi * mf) / (M * np.sin(np.pi * f)))
    integer_f = f == np.round(f)
    mag = np.where(integer_f, 1.0, mag)
    mag = np.where((mf == np.round(mf)) & ~integer_f, 0.0, mag)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag)
    if scalar:
        return CombResponse(float(mag[0]), float(db[0]))
    return CombResponse(mag, db)


def comb_cutoff(M: int, droop_db: float = 10 * math.log10(2)) -> float:
    """First frequency where the comb has fallen by ``droop_db``."""
    if M < 2:
        raise ValueError("a 1-tap comb has no cutoff")
    target = -droop_db
    return optimize.brentq(
        lambda f: comb_response(M, f).magnitude_db - target, 1e-9, 1.0 / M - 1e-12, xtol=1e-12
    )


def min_osr_for_distortion(M: int, max_droop_db: float, tol: float = 1e-6) -> float:
    """Smallest OSR whose band edge ``B = f_H / (2 OSR)`` sees at most ``max_droop_db`` of comb droop."""
    if M < 2 or not max_droop_db > 0:
        raise ValueError("need M >= 2 and a positive droop")
    lo, hi = 1e-9, 1.0 / M
    while hi - lo > tol * 1e-3:
        mid = 0.5 * (lo + hi)
        if -comb_response(M, mid).magnitude_db < max_droop_db:
            lo = mid
        else:
            hi = mid
    return 1.0 / (2.0 * lo)


@dataclass
class DrCurve:
    """SNDR versus input amplitude. ``failures`` maps amplitude to error text."""

    label: str
    points: list[tuple[float, float]]
    low_confidence: list[bool] = field(default_factory=list)
    failures: dict[float, str] = field(default_factory=dict)
    ideal_sndr: list[float] = field(default_factory=list)
    sigma_dy: list[float] = field(default_factory=list)

    def __post_init__(self):
        amps = [a for a, _ in self.points]
        if any(b <= a for a, b in zip(amps, amps[1:])):
            raise ValueError("amplitudes must be strictly increasing")

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([a for a, _ in self.points])

    @property
    def sndr(self) -> np.ndarray:
        return np.array([s for _, s in self.points])

    @property
    def peak_sndr(self) -> float:
        return float(np.max(self.sndr))

    def dynamic_range(self) -> float:
        """Span from the 0 dB SNDR crossing to the best-performing amplitude.

        When every point is above 0 dB the crossing is extrapolated from the
        lowest point with a 1 dB/dB slope.
        """
        a, s = self.amplitudes, self.sndr
        top = a[int(np.argmax(s))]
        pos = np.flatnonzero(s > 0)
        if not len(pos):
            return 0.0
        i = pos[0]
        if i == 0:
            cross = a[0] - s[0]
        else:
            a0, a1, s0, s1 = a[i - 1], a[i], s[i - 1], s[i]
            cross = a0 + (0 - s0) * (a1 - a0) / (s1 - s0)
        return float(top - cross)


def dr_sweep(amplitudes, scenario, cfg: MetricConfig = MetricConfig(), seed: int = 0, workers: int | None = None) -> DrCurve:
    """Simulate ``scenario`` (a :class:`sdmlab.chains.ChainSpec`) at each amplitude.

    Each point gets its own seed derived from ``seed`` and the point index.
    A failing point is recorded and the sweep carries on.
    """
    from .chains import sweep_points

    amps = [float(a) for a in amplitudes]
    if any(a > 0 for a in amps):
        raise ValueError("amplitudes are dBFS and must be <= 0")
    results = sweep_points(amps, scenario, cfg, seed, workers)
    curve = DrCurve(scenario.architecture, [])
    for a, r in zip(amps, results):
        if isinstance(r, str):
            curve.failures[a] = r
            continue
        curve.points.append((a, r.sndr_db))
        curve.low_confidence.append(r.low_confidence)
        curve.ideal_sndr.append(r.ideal_sndr)
        curve.sigma_dy.append(r.sigma_dy)
    return curve
