"""MAI statistics, signal-to-interference ratios and bit error probabilities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DomainError
from .sigcore import Signal


@dataclass(frozen=True)
class MaiStats:
    variance: float
    mean: complex
    hist_edges: np.ndarray
    hist_density: np.ndarray
    ks_statistic: float
    ks_pvalue: float
    num_samples: int
    degenerate: bool = False


@dataclass(frozen=True)
class SirReport:
    num_links: int
    bit_period: float
    bandwidth: float
    sir_statistical: float
    sir_analytical: float

    @property
    def deviation_db(self) -> float:
        return to_db(self.sir_statistical) - to_db(self.sir_analytical)


def to_db(x: float) -> float:
    if x == 0:
        return -np.inf
    return float(10 * np.log10(x))


def steady_state(x: Signal, bit_period: float, span: int, start: float | None = None) -> np.ndarray:
    """Samples of ``x`` over ``span`` whole bit periods from ``start``.

    By default the window is centred on ``x``, which keeps it clear of the
    start-up and drain transients when ``x`` carries at least one channel
    length of margin on each side.
    """
    if not bit_period > 0:
        raise DomainError("bit period must be positive")
    if span < 1:
        raise DomainError("window shorter than one bit")
    width = int(round(span * bit_period * x.sample_rate))
    if width > len(x):
        raise DomainError("signal shorter than the requested window")
    if start is None:
        k0 = (len(x) - width) // 2
    else:
        k0 = int(round(start * x.sample_rate)) - x.start_index
        if k0 < 0 or k0 + width > len(x):
            raise DomainError("window falls outside the signal")
    return x.samples[k0:k0 + width]


def mai_variance(x, bit_period: float | None = None, span: int | None = None,
                 start: float | None = None, passband: bool = True) -> float:
    """Average MAI power over whole bit periods, mean taken as zero.

    ``x`` is either a :class:`Signal` (windowed with :func:`steady_state`) or
    a sample array already restricted to the steady state. With
    ``passband`` the result is the variance of the real bandpass signal
    that the complex envelope represents, half the envelope power; with
    ``passband=False`` it is the envelope power itself.
    """
    if isinstance(x, Signal):
        if bit_period is None or span is None:
            raise DomainError("a Signal input needs bit_period and span")
        x = steady_state(x, bit_period, span, start)
    x = np.asarray(x, dtype=np.complex128)
    if x.size == 0:
        raise DomainError("no samples")
    power = float(np.mean(np.abs(x) ** 2))
    return power / 2 if passband else power


MIN_PDF_SAMPLES = 1000


def mai_pdf(samples, variance: float | None = None, bins="fd", ks_samples=None) -> MaiStats:
    """Histogram of ``Re`` MAI plus a KS test against a zero-mean Gaussian.

    ``ks_samples`` lets the caller test a decorrelated subset while the
    histogram uses all samples. When ``variance`` is omitted the Gaussian
    uses the sample variance of the real part.
    """
    samples = np.asarray(samples)
    re = samples.real.astype(float)
    if re.size < MIN_PDF_SAMPLES:
        raise DomainError(f"need at least {MIN_PDF_SAMPLES} samples, got {re.size}")
    ks_re = re if ks_samples is None else np.asarray(ks_samples).real.astype(float)
    sd = np.sqrt(variance) if variance is not None else float(np.std(re))
    if sd == 0 or np.ptp(re) == 0:
        # a point mass is as far from any Gaussian as it gets: reject outright
        edges = np.array([re[0] - 0.5, re[0] + 0.5])
        return MaiStats(0.0, complex(samples.mean()), edges, np.array([1.0]), 1.0, 0.0, int(re.size),
                        degenerate=True)
    density, edges = np.histogram(re, bins=bins, density=True)
    ks = stats.kstest(ks_re, "norm", args=(0.0, sd))
    return MaiStats(sd ** 2, complex(samples.mean()), edges, density, float(ks.statistic),
                    float(ks.pvalue), int(re.size))


def sir_statistical(mai_var: float, peak: float = 1.0) -> float:
    """``peak^2 / sigma^2``; infinite without interference."""
    if mai_var < 0:
        raise DomainError("variance must be non-negative")
    if mai_var == 0:
        return np.inf
    return peak ** 2 / mai_var


def mean_relative_energy(amps, m: int) -> float:
    """Mean of ``(a_k / a_m)^2`` over the interferers ``k != m``."""
    amps = np.asarray(amps, dtype=float)
    if amps.size < 2:
        raise DomainError("need at least two links")
    if not 0 <= m < amps.size:
        raise DomainError(f"link index {m} out of range")
    if np.any(amps <= 0):
        raise DomainError("amplitudes must be positive")
    others = np.delete(amps, m)
    return float(np.mean((others / amps[m]) ** 2))


def sir_analytical(num_links: int, bandwidth: float, bit_period: float, amps=None, m: int = 0) -> float:
    """``2 B T_b / (mean_rel_energy (M - 1))``; equal amplitudes by default."""
    if num_links < 2:
        raise DomainError("analytical SIR needs at least two links")
    if not bandwidth > 0 or not bit_period > 0:
        raise DomainError("bandwidth and bit period must be positive")
    rel = 1.0
    if amps is not None:
        if len(amps) != num_links:
            raise DomainError(f"need {num_links} amplitudes")
        rel = mean_relative_energy(amps, m)
    return 2 * bandwidth * bit_period / (rel * (num_links - 1))


def bep_from_sir(sir) -> np.ndarray | float:
    """OOK error probability ``Q(sqrt(SIR)/2)`` at threshold one half."""
    sir = np.asarray(sir, dtype=float)
    if np.any(sir < 0):
        raise DomainError("SIR must be non-negative")
    out = 0.5 * special.erfc(np.sqrt(sir) / 2 / np.sqrt(2))
    return float(out) if out.ndim == 0 else out


def bep_overall(p_up: float, p_down: float) -> tuple[float, float]:
    """End-to-end error probability of the two hops.

    A bit counts as delivered only when both hops succeed, so the exact
    value is ``1 - (1 - p_u)(1 - p_d) = p_u + p_d - p_u p_d``. The small-BEP
    approximation ``p_u + p_d`` is returned alongside.
    """
    for p in (p_up, p_down):
        if not 0 <= p <= 0.5:
            raise DomainError("hop error probabilities must lie in [0, 0.5]")
    return p_up + p_down - p_up * p_down, p_up + p_down


def bep_link(num_links: int, bandwidth: float, bit_period: float) -> float:
    """Per-hop error probability from the analytical SIR (zero for one link)."""
    if num_links == 1:
        return 0.0
    return bep_from_sir(sir_analytical(num_links, bandwidth, bit_period))


def binomial_interval(p: float, n: int, confidence: float = 0.99) -> tuple[int, int]:
    """Central interval for the error count out of ``n`` trials."""
    lo, hi = stats.binom.interval(confidence, n, p)
    return int(lo), int(hi)


def one_period_thinned(x, bit_period: float, sample_rate: float, bandwidth: float) -> np.ndarray:
    """One bit period of steady-state samples at ``1/bandwidth`` spacing.

    Worst-case MAI repeats every bit period, so later periods add no new
    information, and samples closer than ``1/bandwidth`` are strongly
    correlated. This is the subset handed to the KS test.
    """
    x = np.asarray(x)
    n = int(round(bit_period * sample_rate))
    if x.size < n:
        raise DomainError("need at least one full bit period")
    stride = max(1, int(round(sample_rate / bandwidth)))
    return x[:n:stride]
