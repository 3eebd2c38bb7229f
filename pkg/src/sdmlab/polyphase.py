"""Time-interleaved error-feedback modulator.

``H(z)`` is split into ``M`` polyphase components and rearranged into a
pseudo-circulant block filter that runs at ``f_L = f_H / M``. Entry
``(i, j)`` of the block filter routes the quantization error of path ``i``
into the input of path ``j``; entries below the diagonal pick up an extra
low-rate delay because they reach into the previous block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .sdm_core import (
    FirFilter,
    NumericStateError,
    QuantizerSpec,
    Rate,
    check_overload,
    ef_modulate,
    make_loop_filter,
)


@dataclass(frozen=True)
class PolyphaseSet:
    components: tuple[FirFilter, ...]

    @property
    def M(self) -> int:
        return len(self.components)

    def recompose(self) -> FirFilter:
        """``sum_k z^-k H_k(z^M)`` back at the high rate."""
        M = self.M
        n = max(M * (len(c) - 1) + k + 1 for k, c in enumerate(self.components))
        taps = [0.0] * n
        for k, comp in enumerate(self.components):
            for m, c in enumerate(comp.coeffs):
                taps[k + m * M] = c
        return FirFilter(tuple(taps), Rate.HIGH).canonical()


def polyphase_decompose(h: FirFilter, M: int) -> PolyphaseSet:
    """Tap-stride ``h`` into ``M`` low-rate components: ``H_k`` gets ``c_k, c_{k+M}, ...``."""
    if M < 1:
        raise ValueError(f"path count must be >= 1, got {M}")
    comps = []
    for k in range(M):
        taps = h.coeffs[k::M] or (0.0,)
        comps.append(FirFilter(taps, Rate.LOW).canonical())
    return PolyphaseSet(tuple(comps))


@dataclass(frozen=True)
class BlockFilter:
    entries: tuple[tuple[FirFilter, ...], ...]

    def __post_init__(self):
        M = len(self.entries)
        if M < 1 or any(len(row) != M for row in self.entries):
            raise ValueError("block filter must be a non-empty square matrix")

    @property
    def M(self) -> int:
        return len(self.entries)

    def entry(self, i: int, j: int) -> FirFilter:
        return self.entries[i][j]

    def with_entry(self, i: int, j: int, fir: FirFilter) -> BlockFilter:
        rows = [list(r) for r in self.entries]
        rows[i][j] = FirFilter(fir.coeffs, Rate.LOW).canonical()
        return BlockFilter(tuple(tuple(r) for r in rows))

    def terms(self, j: int) -> list[tuple[int, float, int, int]]:
        """Feedback terms feeding path ``j`` as ``(high_rate_lag, coeff, source_path, block_lag)``.

        Sorted by high-rate lag so accumulation order matches the classical
        loop. Raises if path ``j`` would need a current-block error from a
        path that is not evaluated before it.
        """
        M = self.M
        out = []
        for i in range(M):
            for m, c in enumerate(self.entries[i][j].coeffs):
                if c == 0.0:
                    continue
                lag = j - i + m * M
                if lag < 1:
                    raise ValueError(
                        f"entry ({i},{j}) tap z^-{m} needs e_{i} of the current step "
                        f"before path {j} is evaluated"
                    )
                out.append((lag, c, i, m))
        out.sort(key=lambda t: t[0])
        return out

    def format(self) -> str:
        width = max(len(str(e)) for row in self.entries for e in row)
        return "\n".join("  ".join(str(e).rjust(width) for e in row) for row in self.entries)


def build_block_filter(h: FirFilter, M: int) -> BlockFilter:
    """Pseudo-circulant matrix ``entry(i, j) = H_{(j-i) mod M}(z) * z^-[j < i]``."""
    comps = polyphase_decompose(h, M).components
    rows = []
    for i in range(M):
        row = []
        for j in range(M):
            e = comps[(j - i) % M]
            if j < i:
                e = e.delayed(1).canonical()
            row.append(e)
        rows.append(tuple(row))
    return BlockFilter(tuple(rows))


@dataclass
class LowRateBank:
    """``M`` low-rate output streams; ``streams[p][q]`` is ``y_p(q)``.

    ``latency`` counts leading low-rate samples that are register reset
    values rather than modulator decisions. ``padding`` is the number of
    zeros appended to the input to fill the last block.
    """

    streams: np.ndarray
    latency: int = 0
    padding: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.streams = np.asarray(self.streams, dtype=float)
        if self.streams.ndim != 2 or self.streams.shape[0] < 1:
            raise ValueError("bank needs an (M, Q) array of streams")

    @property
    def M(self) -> int:
        return self.streams.shape[0]

    @property
    def length(self) -> int:
        return self.streams.shape[1]

    def drop_latency(self) -> LowRateBank:
        return LowRateBank(self.streams[:, self.latency:], 0, self.padding, dict(self.meta))

    @classmethod
    def from_streams(cls, streams: Sequence[Sequence[float]], **kw) -> LowRateBank:
        lengths = {len(s) for s in streams}
        if len(lengths) != 1:
            raise ValueError(f"ragged streams: lengths {sorted(lengths)}")
        return cls(np.array([np.asarray(s, dtype=float) for s in streams]), **kw)


def ti_multiplex_digital(bank: LowRateBank | Sequence[Sequence[float]]) -> np.ndarray:
    """Interleave the paths: ``y(qM + r) = y_r(q)``."""
    if not isinstance(bank, LowRateBank):
        bank = LowRateBank.from_streams(bank)
    return bank.streams.T.reshape(-1).copy()


def ti_demultiplex(y: Sequence[float], M: int) -> LowRateBank:
    y = np.asarray(y, dtype=float)
    if M < 1 or len(y) % M:
        raise ValueError(f"length {len(y)} is not a multiple of M={M}")
    return LowRateBank(y.reshape(-1, M).T.copy())


def ti_modulate(
    x: Sequence[float],
    M: int,
    h: FirFilter,
    q: QuantizerSpec = QuantizerSpec(),
    block: BlockFilter | None = None,
    strict: bool = True,
) -> LowRateBank:
    """Run ``M`` interleaved paths at the low rate.

    Path ``r`` takes ``x(qM + r)``. Within one low-rate step the paths are
    evaluated in ascending ``r``, since path ``r`` needs the current errors
    of the paths before it. The path outputs go through one low-rate
    register stage, so the bank starts with one block of reset symbols
    (``+vs``) and the multiplexed stream is the classical output delayed by
    ``M`` samples. The final block's decisions stay in the registers.

    ``block`` overrides the block filter built from ``h``; it exists to
    check that a wrong matrix is actually caught. With ``strict=False`` a
    diverging loop ends the run early instead of raising: the bank keeps
    the completed blocks and ``meta["diverged_at"]`` holds ``(path, q)``.
    """
    if M < 1:
        raise ValueError(f"path count must be >= 1, got {M}")
    x = np.asarray(x, dtype=float)
    check_overload(x, q.vs)
    pad = (-len(x)) % M
    if pad:
        x = np.concatenate([x, np.zeros(pad)])
    if block is None:
        block = build_block_filter(h, M)
    elif block.M != M:
        raise ValueError("block filter size does not match M")
    Q = len(x) // M
    xr = x.reshape(Q, M).T.tolist()
    terms = [[(c, i, m) for _, c, i, m in block.terms(r)] for r in range(M)]
    e = [[0.0] * Q for _ in range(M)]
    y = [[0.0] * Q for _ in range(M)]
    vs = q.vs
    done = Q
    diverged = None
    for qi in range(Q):
        if diverged:
            break
        for r in range(M):
            u = xr[r][qi]
            for c, i, m in terms[r]:
                if qi >= m:
                    u += c * e[i][qi - m]
                else:
                    u += c * 0.0
            if u >= 0:
                yn = vs
            elif u < 0:
                yn = -vs
            else:
                if strict:
                    raise NumericStateError(f"path {r} quantizer input not finite at q={qi}")
                diverged = (r, qi)
                done = qi
                break
            y[r][qi] = yn
            e[r][qi] = yn - u
    streams = np.empty((M, done + 1 if diverged else Q))
    streams[:, 0] = vs
    if streams.shape[1] > 1:
        streams[:, 1:] = np.array(y)[:, : streams.shape[1] - 1]
    meta = {"padding": pad}
    if diverged:
        meta["diverged_at"] = diverged
    return LowRateBank(streams, latency=1, padding=pad, meta=meta)


@dataclass
class EquivalenceReport:
    M: int
    order: int
    max_abs_diff: float
    aligned_delay: int
    first_mismatch: int | None = None
    diverged_at: tuple[int, int] | None = None

    @property
    def passed(self) -> bool:
        return (
            self.max_abs_diff == 0.0 and self.aligned_delay == self.M and self.diverged_at is None
        )

    def locate(self) -> tuple[int, int] | None:
        """``(path, low-rate step)`` of the first mismatch at the declared delay."""
        if self.first_mismatch is None:
            return None
        return self.first_mismatch % self.M, self.first_mismatch // self.M


def equivalence_check(
    x: Sequence[float],
    M: int,
    L: int,
    block: BlockFilter | None = None,
    max_delay: int | None = None,
) -> EquivalenceReport:
    """Compare the multiplexed interleaved output with the classical one.

    Searches integer delays ``0..max_delay`` (default ``2M``) for the one
    with the smallest residual; ties go to the smaller delay.
    """
    h = make_loop_filter(L)
    x = np.asarray(x, dtype=float)
    y_c, _ = ef_modulate(x, h)
    bank = ti_modulate(x, M, h, block=block, strict=False)
    y_t = ti_multiplex_digital(bank)
    n = min(len(y_c), len(y_t))
    y_c, y_t = y_c[:n], y_t[:n]
    if max_delay is None:
        max_delay = 2 * M
    best = (math.inf, 0)
    for d in range(0, min(max_delay, n - 1) + 1):
        diff = float(np.max(np.abs(y_t[d:] - y_c[: n - d])))
        if diff < best[0]:
            best = (diff, d)
    first = None
    if M < n:
        bad = np.flatnonzero(y_t[M:] != y_c[: n - M])
        if len(bad):
            first = int(bad[0]) + M
    return EquivalenceReport(M, L, best[0], best[1], first, bank.meta.get("diverged_at"))
