"""Error-feedback sigma-delta modulator clocked at the high rate.

The quantization error is filtered by the loop filter H(z) and added back
to the input, so that ``Y(z) = X(z) + NTF(z) E(z)`` with
``NTF(z) = 1 + H(z) = (1 - z^-1)^L``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

SUPPORTED_ORDERS = (1, 2)


class UnsupportedOrderError(ValueError):
    pass


class NumericStateError(ArithmeticError):
    """Raised when the loop state stops being finite (modulator divergence)."""


class OverloadWarning(UserWarning):
    pass


class Rate(str, Enum):
    HIGH = "high"
    LOW = "low"


@dataclass(frozen=True)
class FirFilter:
    """Finite impulse response ``sum_k coeffs[k] * z^-k``.

    ``rate`` says which clock the delay ``z^-1`` belongs to.
    """

    coeffs: tuple[float, ...]
    rate: Rate = Rate.HIGH

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if not coeffs:
            raise ValueError("FirFilter needs at least one tap")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "rate", Rate(self.rate))

    @classmethod
    def zero(cls, rate: Rate = Rate.HIGH) -> FirFilter:
        return cls((0.0,), rate)

    def canonical(self) -> FirFilter:
        """Copy with trailing zero taps removed (at least one tap is kept)."""
        c = list(self.coeffs)
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        return FirFilter(tuple(c), self.rate)

    @property
    def taps(self) -> np.ndarray:
        return np.asarray(self.coeffs)

    def __len__(self) -> int:
        return len(self.coeffs)

    def is_zero(self) -> bool:
        return all(c == 0.0 for c in self.coeffs)

    def delayed(self, k: int = 1) -> FirFilter:
        """Multiply by ``z^-k``."""
        return FirFilter((0.0,) * k + self.coeffs, self.rate)

    def __add__(self, other: FirFilter) -> FirFilter:
        n = max(len(self), len(other))
        a = self.coeffs + (0.0,) * (n - len(self))
        b = other.coeffs + (0.0,) * (n - len(other))
        return FirFilter(tuple(x + y for x, y in zip(a, b)), self.rate).canonical()

    def __mul__(self, other: FirFilter) -> FirFilter:
        return FirFilter(tuple(np.convolve(self.coeffs, other.coeffs)), self.rate).canonical()

    def __call__(self, z: complex) -> complex:
        """Evaluate the transfer function at ``z``."""
        zi = 1.0 / z
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * zi + c
        return acc

    def frequency_response(self, f) -> np.ndarray:
        """Response at normalized frequency ``f`` (cycles per sample of its own rate)."""
        f = np.asarray(f, dtype=float)
        k = np.arange(len(self.coeffs))
        return np.exp(-2j * np.pi * np.multiply.outer(f, k)) @ self.taps

    def __str__(self) -> str:
        terms = []
        for k, c in enumerate(self.coeffs):
            if c == 0.0:
                continue
            cs = f"{c:g}"
            if k == 0:
                terms.append(cs)
            elif c == 1.0:
                terms.append(f"z^-{k}")
            elif c == -1.0:
                terms.append(f"-z^-{k}")
            else:
                terms.append(f"{cs}z^-{k}")
        return " + ".join(terms).replace("+ -", "- ") if terms else "0"


@dataclass(frozen=True)
class QuantizerSpec:
    """Single-bit quantizer with output levels ``-vs`` / ``+vs``; ties go to ``+vs``."""

    vs: float = 1.0

    def __post_init__(self):
        if not self.vs > 0:
            raise ValueError("quantizer level must be positive")

    @property
    def levels(self) -> tuple[float, float]:
        return (-self.vs, self.vs)


@dataclass
class ModulatorState:
    """Loop memory: ``error_history[k-1]`` holds ``e(n-k)``."""

    error_history: list[float]
    sample_index: int = 0

    @classmethod
    def zeros(cls, memory: int) -> ModulatorState:
        return cls([0.0] * memory, 0)

    def check(self) -> None:
        if not all(math.isfinite(v) for v in self.error_history):
            raise NumericStateError(f"non-finite loop state at n={self.sample_index}")


def make_loop_filter(order: int) -> FirFilter:
    """Loop filter ``H(z) = (1 - z^-1)^L - 1`` for ``L`` in {1, 2}.

    Higher orders need a stabilizing denominator ``D(z)``, which this
    package does not design.
    """
    if order not in SUPPORTED_ORDERS:
        raise UnsupportedOrderError(
            f"order {order} not supported: only L in {SUPPORTED_ORDERS} have D(z) = 1; "
            "higher orders need a stabilizing D(z) polynomial"
        )
    ntf = FirFilter((1.0,))
    for _ in range(order):
        ntf = ntf * FirFilter((1.0, -1.0))
    c = list(ntf.coeffs)
    c[0] -= 1.0
    return FirFilter(tuple(c)).canonical()


def ntf_of(h: FirFilter) -> FirFilter:
    c = list(h.coeffs)
    c[0] += 1.0
    return FirFilter(tuple(c), h.rate)


def quantize(v: float, q: QuantizerSpec = QuantizerSpec()) -> float:
    if not math.isfinite(v):
        raise NumericStateError(f"quantizer input is not finite: {v!r}")
    return q.vs if v >= 0 else -q.vs


def feedback_taps(h: FirFilter) -> list[tuple[int, float]]:
    """Nonzero ``(lag, coefficient)`` pairs of a strictly causal loop filter, by lag."""
    if h.coeffs[0] != 0.0:
        raise ValueError("loop filter must be strictly causal (c_0 == 0)")
    return [(k, c) for k, c in enumerate(h.coeffs) if k > 0 and c != 0.0]


def check_overload(x: np.ndarray, limit: float = 1.0) -> bool:
    peak = float(np.max(np.abs(x))) if len(x) else 0.0
    if peak > limit:
        msg = f"input peak {peak:.6g} exceeds full scale {limit:g}"
        log.warning(msg)
        warnings.warn(msg, OverloadWarning, stacklevel=3)
        return True
    return False


def ef_modulate(
    x: Sequence[float],
    h: FirFilter,
    q: QuantizerSpec = QuantizerSpec(),
    state: ModulatorState | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the error-feedback loop over ``x``.

    Per sample: ``u(n) = x(n) + sum_k c_k e(n-k)``, ``y(n) = quantize(u(n))``,
    ``e(n) = y(n) - u(n)``. Feedback terms are accumulated in increasing lag
    order; the time-interleaved modulator relies on the same order to stay
    bit-exact.

    Returns the output symbols and the quantization error. ``state`` is
    updated in place when given, so long inputs can be fed in chunks.
    """
    x = np.asarray(x, dtype=float)
    check_overload(x, q.vs)
    taps = feedback_taps(h)
    memory = len(h.coeffs) - 1
    if state is None:
        state = ModulatorState.zeros(memory)
    elif len(state.error_history) != memory:
        raise ValueError("state memory does not match loop filter length")

    vs = q.vs
    hist = list(state.error_history)
    xs = x.tolist()
    y = [0.0] * len(xs)
    e = [0.0] * len(xs)
    for n, xn in enumerate(xs):
        u = xn
        for k, c in taps:
            u += c * hist[k - 1]
        if u >= 0:
            yn = vs
        elif u < 0:
            yn = -vs
        else:
            raise NumericStateError(f"quantizer input is not finite at n={state.sample_index + n}")
        en = yn - u
        y[n] = yn
        e[n] = en
        if memory:
            hist.pop()
            hist.insert(0, en)
    state.error_history = hist
    state.sample_index += len(xs)
    state.check()
    return np.array(y), np.array(e)


def reconstruct_output(x: Sequence[float], e: Sequence[float], h: FirFilter) -> np.ndarray:
    """``y = x + ntf * e`` by direct time-domain convolution."""
    x = np.asarray(x, dtype=float)
    return x + np.convolve(e, ntf_of(h).taps)[: len(x)]
