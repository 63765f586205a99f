"""Chebyshev dispersion codes and all-pass phaser impulse responses.

A phaser has unit magnitude over its band and a group delay that follows a
signed odd-order Chebyshev polynomial across the band. Frequencies here are
baseband offsets ``f`` from the (implicit) carrier, so the band is
``[-bandwidth/2, bandwidth/2)``.
"""
from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

from .errors import DomainError, SynthesisError
from .sigcore import SimGrid, Signal, in_band_mask

DEFAULT_OVERSAMPLING = 2
DEFAULT_MIN_CAPTURE = 0.999
# extra margin past the group-delay support, in units of 1/bandwidth
_INITIAL_MARGIN = 4.0


@dataclass(frozen=True)
class DispersionCode:
    """Signed Chebyshev order; a negative sign flips the delay profile."""

    signed_order: int

    def __post_init__(self):
        i = self.signed_order
        if int(i) != i:
            raise DomainError(f"code order must be an integer, got {i!r}")
        i = int(i)
        if abs(i) < 3 or i % 2 == 0:
            raise DomainError(f"code order must be odd with |i| >= 3, got {i}")
        object.__setattr__(self, "signed_order", i)

    @property
    def order(self) -> int:
        return abs(self.signed_order)

    @property
    def sign(self) -> int:
        return 1 if self.signed_order > 0 else -1

    def __int__(self):
        return self.signed_order


@dataclass(frozen=True)
class PhaserSpec:
    """Band and group-delay parameters shared by every code.

    ``delay_offset`` defaults to ``delay_swing/2 + 1 ns`` so the group delay
    stays strictly positive across the band.
    """

    bandwidth: float
    delay_swing: float
    delay_offset: float | None = None

    def __post_init__(self):
        if self.delay_offset is None:
            object.__setattr__(self, "delay_offset", self.delay_swing / 2 + 1e-9)
        if not self.bandwidth > 0:
            raise DomainError("bandwidth must be positive")
        if self.delay_swing < 0:
            raise DomainError("delay_swing must be non-negative")
        if self.delay_offset < self.delay_swing / 2 * (1 - 1e-12):
            raise DomainError("delay_offset must be at least delay_swing/2 (non-negative group delay)")

    @property
    def max_delay(self) -> float:
        return self.delay_offset + self.delay_swing / 2


def chebyshev_t(n: int, x):
    """First-kind Chebyshev polynomial by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    if n < 0:
        raise DomainError("order must be non-negative")
    t_prev, t_cur = np.ones_like(x), x.copy()
    if n == 0:
        return t_prev
    for _ in range(n - 1):
        t_prev, t_cur = t_cur, 2 * x * t_cur - t_prev
    return t_cur


def chebyshev_t_integral(n: int, x):
    """``int_{-1}^{x} T_n(u) du`` in closed form."""
    x = np.asarray(x, dtype=float)
    if n == 0:
        return x + 1
    if n == 1:
        return (x * x - 1) / 2

    def anti(v):
        return chebyshev_t(n + 1, v) / (2 * (n + 1)) - chebyshev_t(n - 1, v) / (2 * (n - 1))

    return anti(x) - anti(np.full_like(x, -1.0))


def _normalized_freq(f, spec: PhaserSpec):
    f = np.asarray(f, dtype=float)
    half = spec.bandwidth / 2
    if np.any(np.abs(f) > half * (1 + 1e-12)):
        raise DomainError("frequency outside the phaser band")
    return np.clip(f / half, -1.0, 1.0)


def delay_deviation(code: DispersionCode, spec: PhaserSpec, f):
    """Group delay minus ``delay_offset``; exactly odd in the code sign."""
    x = _normalized_freq(f, spec)
    return code.sign * (spec.delay_swing / 2 * chebyshev_t(code.order, x))


def chebyshev_delay(code: DispersionCode, spec: PhaserSpec, f):
    """Group delay in seconds at baseband frequency offset(s) ``f``."""
    return spec.delay_offset + delay_deviation(code, spec, f)


def chebyshev_phase(code: DispersionCode, spec: PhaserSpec, f):
    """Transfer phase: minus the group delay integrated in angular frequency
    from the lower band edge."""
    x = _normalized_freq(f, spec)
    half_band_w = np.pi * spec.bandwidth  # (2 pi B)/2
    linear = spec.delay_offset * half_band_w * (x + 1)
    ripple = spec.delay_swing / 2 * half_band_w * code.sign * chebyshev_t_integral(code.order, x)
    return -(linear + ripple)


def transfer_function(code: DispersionCode, spec: PhaserSpec, freqs) -> np.ndarray:
    """``G(f)``: unit magnitude with the Chebyshev phase on ``[-B/2, B/2)``, zero elsewhere."""
    freqs = np.asarray(freqs, dtype=float)
    band = in_band_mask(freqs, spec.bandwidth)
    out = np.zeros(freqs.shape, dtype=np.complex128)
    out[band] = np.exp(1j * chebyshev_phase(code, spec, freqs[band]))
    return out


def generate_code_set(m: int) -> list[DispersionCode]:
    """First ``m`` codes of 3, -3, 5, -5, 7, ..."""
    if m < 1:
        raise DomainError("need at least one access point")
    return [DispersionCode((3 + 2 * (k // 2)) * (1 if k % 2 == 0 else -1)) for k in range(m)]


def parse_code_set(orders) -> list[DispersionCode]:
    """Validate a config list of signed odd orders."""
    codes = [DispersionCode(int(o)) for o in orders]
    if len({c.signed_order for c in codes}) != len(codes):
        raise DomainError(f"code set entries must be distinct: {list(orders)}")
    return codes


def default_window(spec: PhaserSpec, sample_rate: float, margin: float = _INITIAL_MARGIN) -> SimGrid:
    """Grid over ``[-margin/B, max_delay + margin/B]``."""
    pad = margin / spec.bandwidth
    return SimGrid.covering(sample_rate, -pad, spec.max_delay + pad)


def _synthesize_on(code, spec, grid: SimGrid):
    """Phaser IR on ``grid`` plus the fraction of its energy captured there."""
    n = grid.num_samples
    # long FFT period so the part of the response outside the window is resolved
    nfft = sp_fft.next_fast_len(max(16 * n, 4096))
    freqs = sp_fft.fftfreq(nfft, grid.dt)
    spec_vals = transfer_function(code, spec, freqs)
    # g(t0 + k dt) = (1/(nfft dt)) sum_f G(f) exp(j 2 pi f (t0 + k dt))
    long_ir = sp_fft.ifft(spec_vals * np.exp(2j * np.pi * freqs * grid.origin_time)) / grid.dt
    total = np.count_nonzero(spec_vals) / (nfft * grid.dt)
    window = long_ir[:n]
    captured = float(np.sum(np.abs(window) ** 2) * grid.dt / total)
    return Signal(grid, window), captured


def synthesize_phaser_ir(code: DispersionCode, spec: PhaserSpec, sample_rate: float | None = None,
                         grid: SimGrid | None = None, min_capture: float = DEFAULT_MIN_CAPTURE) -> Signal:
    """Impulse response of the phaser for ``code``.

    The spectrum is unit-magnitude on ``[-B/2, B/2)`` with the closed-form
    Chebyshev phase, inverse transformed on a long FFT and cut to a window.
    Given an explicit ``grid`` the window is fixed and a
    :class:`~trdcma.errors.SynthesisError` is raised when it holds less than
    ``min_capture`` of the energy. Otherwise the default window is widened
    until the criterion is met.
    """
    if grid is None and sample_rate is None:
        raise DomainError("need a sample_rate or a grid")
    fs = grid.sample_rate if grid is not None else float(sample_rate)
    if fs < DEFAULT_OVERSAMPLING * spec.bandwidth * (1 - 1e-12):
        warnings.warn(f"sample rate {fs:.4g} is below {DEFAULT_OVERSAMPLING}x the phaser bandwidth",
                      stacklevel=2)
    if grid is not None:
        ir, captured = _synthesize_on(code, spec, grid)
        if captured < min_capture:
            raise SynthesisError(
                f"window holds only {captured:.5f} of the phaser energy (need {min_capture})",
                captured_fraction=captured,
            )
        return ir
    return _auto_synthesize(code, spec, fs, min_capture)


@functools.lru_cache(maxsize=256)
def _auto_synthesize(code, spec, sample_rate, min_capture):
    margin = _INITIAL_MARGIN
    for _ in range(12):
        ir, captured = _synthesize_on(code, spec, default_window(spec, sample_rate, margin))
        if captured >= min_capture:
            return ir
        margin *= 2
    raise SynthesisError(f"could not capture {min_capture} of the phaser energy", captured)
