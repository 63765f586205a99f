"""Sampled complex-baseband signals and the convolution algebra built on them.

Every waveform in the simulator (pulse trains, phaser and wireless impulse
responses, received and decoded signals) is a :class:`Signal`: a block of
complex samples on a uniform time lattice. Sample values approximate the
continuous-time function, so a unit impulse is a single sample of height
``1/dt`` and convolution carries a ``dt`` factor.

Signals on the same lattice may start at different times and have different
lengths; arithmetic aligns them on the shared lattice.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sp_fft
from scipy.signal import fftconvolve

from .errors import ConfigurationError, DomainError

# origin_time must sit on the lattice to within this fraction of a sample
_LATTICE_TOL = 1e-6


@dataclass(frozen=True)
class SimGrid:
    """Uniform sampling lattice: ``t_k = origin_time + k / sample_rate``."""

    sample_rate: float
    num_samples: int
    origin_time: float = 0.0

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        if int(self.num_samples) != self.num_samples or self.num_samples <= 0:
            raise ConfigurationError(f"num_samples must be a positive integer, got {self.num_samples}")
        object.__setattr__(self, "num_samples", int(self.num_samples))
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "origin_time", float(self.origin_time))

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def start_index(self) -> int:
        """Lattice index of the first sample (``origin_time * sample_rate``)."""
        k = self.origin_time * self.sample_rate
        idx = int(round(k))
        if abs(k - idx) > _LATTICE_TOL:
            raise ConfigurationError(f"origin_time {self.origin_time!r} is not on the sampling lattice")
        return idx

    @property
    def end_time(self) -> float:
        """Time of the last sample."""
        return self.origin_time + (self.num_samples - 1) * self.dt

    def times(self) -> np.ndarray:
        return (self.start_index + np.arange(self.num_samples)) * self.dt

    @classmethod
    def covering(cls, sample_rate: float, t_start: float, t_stop: float) -> "SimGrid":
        """Smallest lattice-aligned grid containing ``[t_start, t_stop]``."""
        k0 = int(np.floor(t_start * sample_rate + 1e-9))
        k1 = int(np.ceil(t_stop * sample_rate - 1e-9))
        return cls(sample_rate, max(1, k1 - k0 + 1), k0 / sample_rate)


class Signal:
    """Immutable complex waveform sampled on a :class:`SimGrid`."""

    __slots__ = ("grid", "samples")

    def __init__(self, grid: SimGrid, samples):
        samples = np.array(samples, dtype=np.complex128, copy=True).reshape(-1)
        if samples.size != grid.num_samples:
            raise ConfigurationError(
                f"expected {grid.num_samples} samples for this grid, got {samples.size}"
            )
        samples.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "samples", samples)

    def __setattr__(self, name, value):
        raise AttributeError("Signal is immutable")

    @classmethod
    def from_samples(cls, samples, sample_rate: float, origin_time: float = 0.0) -> "Signal":
        samples = np.asarray(samples)
        return cls(SimGrid(sample_rate, samples.size, origin_time), samples)

    @classmethod
    def zeros(cls, grid: SimGrid) -> "Signal":
        return cls(grid, np.zeros(grid.num_samples))

    @classmethod
    def _at_index(cls, samples, sample_rate: float, start_index: int) -> "Signal":
        return cls.from_samples(samples, sample_rate, start_index / sample_rate)

    # -- lattice bookkeeping ---------------------------------------------
    @property
    def sample_rate(self) -> float:
        return self.grid.sample_rate

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def start_index(self) -> int:
        return self.grid.start_index

    @property
    def stop_index(self) -> int:
        """One past the lattice index of the last sample."""
        return self.grid.start_index + self.grid.num_samples

    @property
    def origin_time(self) -> float:
        return self.grid.origin_time

    def __len__(self) -> int:
        return self.grid.num_samples

    def times(self) -> np.ndarray:
        return self.grid.times()

    def __repr__(self) -> str:
        return (f"Signal(n={len(self)}, fs={self.sample_rate:.4g}, "
                f"t0={self.origin_time:.4g}, peak={np.abs(self.samples).max(initial=0):.4g})")

    # -- arithmetic ----------------------------------------------------------
    def _check_rate(self, other: "Signal"):
        if not np.isclose(self.sample_rate, other.sample_rate, rtol=1e-9, atol=0):
            raise ConfigurationError(
                f"sample rate mismatch: {self.sample_rate} vs {other.sample_rate}"
            )

    def reindex(self, start_index: int, stop_index: int) -> "Signal":
        """Return the signal on lattice indices ``[start_index, stop_index)``,
        zero-filled or cropped as needed."""
        if stop_index <= start_index:
            raise ConfigurationError("empty index range")
        out = np.zeros(stop_index - start_index, dtype=np.complex128)
        lo = max(start_index, self.start_index)
        hi = min(stop_index, self.stop_index)
        if hi > lo:
            out[lo - start_index:hi - start_index] = self.samples[lo - self.start_index:hi - self.start_index]
        return Signal._at_index(out, self.sample_rate, start_index)

    def __add__(self, other):
        if not isinstance(other, Signal):
            return NotImplemented
        self._check_rate(other)
        lo = min(self.start_index, other.start_index)
        hi = max(self.stop_index, other.stop_index)
        out = np.zeros(hi - lo, dtype=np.complex128)
        out[self.start_index - lo:self.stop_index - lo] += self.samples
        out[other.start_index - lo:other.stop_index - lo] += other.samples
        return Signal._at_index(out, self.sample_rate, lo)

    def __neg__(self):
        return Signal(self.grid, -self.samples)

    def __sub__(self, other):
        if not isinstance(other, Signal):
            return NotImplemented
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, Signal):
            return NotImplemented
        return Signal(self.grid, self.samples * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Signal(self.grid, self.samples / scalar)

    def value_at(self, t: float) -> complex:
        """Sample at the lattice point nearest ``t`` (zero outside support)."""
        k = int(round(t * self.sample_rate)) - self.start_index
        if 0 <= k < len(self):
            return complex(self.samples[k])
        return 0j

    def index_of(self, t: float) -> int:
        """Array index of the lattice point nearest ``t`` (may be out of range)."""
        return int(round(t * self.sample_rate)) - self.start_index

    def crop(self, t_start: float, t_stop: float) -> "Signal":
        """Restrict to lattice points in ``[t_start, t_stop)``."""
        k0 = int(np.ceil(t_start * self.sample_rate - 1e-9))
        k1 = int(np.ceil(t_stop * self.sample_rate - 1e-9))
        return self.reindex(k0, max(k1, k0 + 1))

    def conj(self) -> "Signal":
        return Signal(self.grid, np.conj(self.samples))

    @property
    def real(self) -> np.ndarray:
        return self.samples.real


def unit_impulse(sample_rate: float, t0: float = 0.0, num_samples: int = 1) -> Signal:
    """Discrete Dirac delta at ``t0``: one sample of height ``1/dt``.

    With ``num_samples > 1`` the impulse sits at the first sample of a zero
    padded block.
    """
    samples = np.zeros(num_samples, dtype=np.complex128)
    samples[0] = sample_rate
    return Signal.from_samples(samples, sample_rate, t0)


def convolve(a: Signal, b: Signal) -> Signal:
    """Linear convolution scaled by ``dt`` so it approximates the integral."""
    a._check_rate(b)
    out = fftconvolve(a.samples, b.samples) * a.dt
    return Signal._at_index(out, a.sample_rate, a.start_index + b.start_index)


def convolve_at(a: Signal, b: Signal, t: float) -> complex:
    """``(a * b)(t)`` evaluated at one lattice point by a direct sum."""
    a._check_rate(b)
    n = int(round(t * a.sample_rate))
    # (a*b)[n] = dt * sum_j a[j] b[n-j]  over lattice indices j
    j_lo = max(a.start_index, n - (b.stop_index - 1))
    j_hi = min(a.stop_index, n - b.start_index + 1)
    if j_hi <= j_lo:
        return 0j
    a_part = a.samples[j_lo - a.start_index:j_hi - a.start_index]
    b_idx = n - np.arange(j_lo, j_hi) - b.start_index
    return complex(np.dot(a_part, b.samples[b_idx]) * a.dt)


def time_reverse_conjugate(s: Signal) -> Signal:
    """Matched-filter template: ``t -> -t`` with complex conjugation.

    For a complex envelope this is the baseband image of time reversal of
    the real passband waveform.
    """
    return Signal._at_index(np.conj(s.samples[::-1]), s.sample_rate, -(s.stop_index - 1))


def energy(s: Signal) -> float:
    return float(np.sum(np.abs(s.samples) ** 2) * s.dt)


def peak_abs(s: Signal) -> tuple[float, float]:
    """``(time, value)`` of the largest ``|s|``; ties resolve to the earliest."""
    mag = np.abs(s.samples)
    k = int(np.argmax(mag))
    return (s.start_index + k) * s.dt, float(mag[k])


def spectrum(s: Signal, nfft: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-transform samples ``S(f) = dt * sum s_k exp(-j 2 pi f t_k)``.

    Returns ``(freqs, values)`` in FFT bin order.
    """
    n = len(s) if nfft is None else int(nfft)
    if n < len(s):
        raise ConfigurationError("nfft shorter than signal")
    freqs = sp_fft.fftfreq(n, s.dt)
    values = sp_fft.fft(s.samples, n) * s.dt * np.exp(-2j * np.pi * freqs * s.origin_time)
    return freqs, values


def in_band_mask(freqs: np.ndarray, bandwidth: float) -> np.ndarray:
    """Half-open baseband band ``[-B/2, B/2)``."""
    return (freqs >= -bandwidth / 2) & (freqs < bandwidth / 2)


def band_rect_filter(s: Signal, bandwidth: float, nfft: int | None = None) -> Signal:
    """Zero every DFT bin outside ``[-bandwidth/2, bandwidth/2)``.

    The filter is circular over ``nfft`` samples (default: the signal length);
    the output starts at the input's origin and is ``nfft`` samples long.
    """
    if bandwidth > s.sample_rate * (1 + 1e-12):
        raise DomainError(f"bandwidth {bandwidth} exceeds sample rate {s.sample_rate}")
    n = len(s) if nfft is None else int(nfft)
    if n < len(s):
        raise ConfigurationError("nfft shorter than signal")
    spec = sp_fft.fft(s.samples, n)
    spec[~in_band_mask(sp_fft.fftfreq(n, s.dt), bandwidth)] = 0
    return Signal._at_index(sp_fft.ifft(spec), s.sample_rate, s.start_index)


def write_signal_csv(path, s: Signal, header_lines=(), kind: str | None = None):
    """Write ``t_seconds,re,im`` rows (plus a ``kind`` column when given).

    ``header_lines`` are emitted first as ``#``-prefixed metadata comments.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_seconds", "re", "im"] + (["kind"] if kind else []))
        for t, v in zip(s.times(), s.samples):
            row = [repr(float(t)), repr(float(v.real)), repr(float(v.imag))]
            w.writerow(row + ([kind] if kind else []))


def _data_lines(fh):
    for line in fh:
        if not line.startswith("#"):
            yield line


def read_signal_csv(path) -> Signal:
    """Inverse of :func:`write_signal_csv` (the sample rate is inferred)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(_data_lines(fh)))
    if not rows:
        raise ConfigurationError(f"{path}: no samples")
    t = np.array([float(r["t_seconds"]) for r in rows])
    x = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
    if len(t) == 1:
        raise ConfigurationError(f"{path}: cannot infer sample rate from one sample")
    fs = (len(t) - 1) / (t[-1] - t[0])
    k0 = int(round(t[0] * fs))
    return Signal._at_index(x, fs, k0)


TRACE_KINDS = ("desired", "mai", "total")


def write_trace_csv(path, parts: dict, header_lines=()):
    """Several aligned signals in one file, tagged by a ``kind`` column.

    ``parts`` maps kinds from :data:`TRACE_KINDS` to signals; rows are
    written kind by kind in that order.
    """
    unknown = set(parts) - set(TRACE_KINDS)
    if unknown:
        raise ConfigurationError(f"unknown trace kinds {sorted(unknown)}")
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_seconds", "re", "im", "kind"])
        for kind in TRACE_KINDS:
            if kind not in parts:
                continue
            s = parts[kind]
            for t, v in zip(s.times(), s.samples):
                w.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag)), kind])


def read_trace_csv(path) -> dict:
    """Inverse of :func:`write_trace_csv`: ``kind -> Signal``."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(_data_lines(fh)))
    out = {}
    for kind in TRACE_KINDS:
        sel = [r for r in rows if r["kind"] == kind]
        if len(sel) < 2:
            continue
        t = np.array([float(r["t_seconds"]) for r in sel])
        x = np.array([float(r["re"]) + 1j * float(r["im"]) for r in sel])
        fs = (len(t) - 1) / (t[-1] - t[0])
        out[kind] = Signal._at_index(x, fs, int(round(t[0] * fs)))
    return out
