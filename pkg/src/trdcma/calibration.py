"""Router calibration: beacon reception, deconvolution and matched filters.

Each access point sends a known beacon; the router deconvolves what it
receives to estimate the overall channel, keeps the highest-energy
stretch of the estimate and time reverses (and conjugates) it into the
template used for uplink decoding and downlink predistortion.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sp_fft

from .errors import CalibrationError, ConfigurationError, IllPosedError
from .sigcore import (Signal, band_rect_filter, convolve, energy, in_band_mask, read_signal_csv,
                      time_reverse_conjugate, unit_impulse, write_signal_csv)

MIN_SPECTRAL_FLOOR = 0.1


@dataclass(frozen=True)
class Beacon:
    waveform: Signal
    bandwidth: float
    name: str = "custom"

    def spectral_floor(self, nfft: int | None = None) -> float:
        """``min |S| / max |S|`` over the in-band DFT bins."""
        n = len(self.waveform) if nfft is None else nfft
        s = np.abs(sp_fft.fft(self.waveform.samples, n))
        band = in_band_mask(sp_fft.fftfreq(n, self.waveform.dt), self.bandwidth)
        peak = s[band].max()
        return float(s[band].min() / peak) if peak > 0 else 0.0


def default_beacon(bandwidth: float, sample_rate: float, half_width: float | None = None) -> Beacon:
    """Band-limited impulse: flat unit spectrum on the band, centred at t=0."""
    if half_width is None:
        half_width = 16 / bandwidth
    k = int(np.ceil(half_width * sample_rate))
    delta = unit_impulse(sample_rate, 0.0).reindex(-k, k + 1)
    # circular band limiting over the block keeps the spectrum exactly flat on its bins
    return Beacon(band_rect_filter(delta, bandwidth), bandwidth, name="bandlimited-impulse")


def simulate_beacon_rx(beacon: Beacon, c: Signal) -> Signal:
    """What the router records when the beacon passes channel ``c``."""
    return convolve(beacon.waveform, c)


def estimate_channel(rx: Signal, beacon: Beacon, epsilon: float = 0.0) -> Signal:
    """Regularized spectral deconvolution restricted to the beacon band.

    ``epsilon`` is relative to ``max |S_B|^2`` over the band. The estimate
    starts at ``rx.origin_time - beacon.origin_time`` and spans ``len(rx)``
    samples.
    """
    if epsilon < 0:
        raise ConfigurationError("epsilon must be non-negative")
    b = beacon.waveform
    b._check_rate(rx)
    n = max(len(rx), len(b))
    floor = beacon.spectral_floor(n)
    if floor < MIN_SPECTRAL_FLOOR:
        raise IllPosedError(f"beacon in-band spectral floor {floor:.3g} < {MIN_SPECTRAL_FLOOR}")
    band = in_band_mask(sp_fft.fftfreq(n, rx.dt), beacon.bandwidth)
    r_f = sp_fft.fft(rx.samples, n)
    s_f = sp_fft.fft(b.samples, n) * b.dt
    eps = epsilon * np.max(np.abs(s_f[band]) ** 2)
    c_f = np.zeros(n, dtype=np.complex128)
    c_f[band] = r_f[band] * np.conj(s_f[band]) / (np.abs(s_f[band]) ** 2 + eps)
    return Signal._at_index(sp_fft.ifft(c_f), rx.sample_rate, rx.start_index - b.start_index)


@dataclass(frozen=True)
class MatchedFilter:
    estimate: Signal        # truncated channel estimate
    template: Signal        # time-reversed conjugate of ``estimate``
    window: float           # requested calibration window T_c (seconds)
    captured_fraction: float


def build_matched_filter(c_hat: Signal, window: float = np.inf) -> MatchedFilter:
    """Keep the ``window``-long stretch of ``c_hat`` holding the most energy,
    zero the rest, then time reverse and conjugate it."""
    if not window > 0:
        raise ConfigurationError("calibration window must be positive")
    p = np.abs(c_hat.samples) ** 2
    total = p.sum()
    if total <= 0:
        raise CalibrationError("channel estimate has zero energy")
    n = len(c_hat)
    width = n if not np.isfinite(window) else int(min(n, max(1, round(window * c_hat.sample_rate))))
    csum = np.concatenate([[0.0], np.cumsum(p)])
    sums = csum[width:] - csum[:-width]
    k0 = int(np.argmax(sums))  # earliest among equal windows
    if sums[k0] <= 0:
        raise CalibrationError("calibration window captured no energy")
    kept = c_hat.reindex(c_hat.start_index + k0, c_hat.start_index + k0 + width)
    return MatchedFilter(kept, time_reverse_conjugate(kept), float(window),
                         float(min(1.0, sums[k0] / total)))


@dataclass
class MatchedFilterBank:
    """Templates per access point, keyed by ``(direction, index)``.

    ``direction`` is ``"U"`` (uplink) or ``"D"`` (downlink). The bank is
    filled once during calibration and only read afterwards.
    """

    window: float
    epsilon: float
    beacon_name: str
    filters: dict = field(default_factory=dict)

    def template(self, direction: str, k: int) -> Signal:
        return self.filters[(direction, k)].template

    def __getitem__(self, key) -> MatchedFilter:
        return self.filters[key]

    def keys(self):
        return sorted(self.filters)

    def save(self, directory, header_lines=(), extra_meta: dict | None = None):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for (direction, k), mf in sorted(self.filters.items()):
            stem = directory / f"template_{direction}{k}"
            write_signal_csv(stem.with_suffix(".csv"), mf.template, header_lines)
            meta = {
                "direction": direction,
                "index": k,
                "window_s": None if not np.isfinite(self.window) else self.window,
                "captured_fraction": mf.captured_fraction,
                "epsilon": self.epsilon,
                "beacon": self.beacon_name,
                **(extra_meta or {}),
            }
            stem.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "MatchedFilterBank":
        directory = Path(directory)
        bank = None
        for meta_path in sorted(directory.glob("template_*.json")):
            meta = json.loads(meta_path.read_text())
            if bank is None:
                window = np.inf if meta["window_s"] is None else meta["window_s"]
                bank = cls(window, meta["epsilon"], meta["beacon"])
            template = read_signal_csv(meta_path.with_suffix(".csv"))
            bank.filters[(meta["direction"], meta["index"])] = MatchedFilter(
                time_reverse_conjugate(template), template, bank.window, meta["captured_fraction"])
        if bank is None:
            raise CalibrationError(f"no templates found in {directory}")
        return bank


def calibrate(channels: dict, beacon: Beacon, window: float = np.inf,
              epsilon: float = 0.0) -> MatchedFilterBank:
    """Run the calibration phase over every ``(direction, k) -> c`` channel."""
    bank = MatchedFilterBank(window, epsilon, beacon.name)
    for key in sorted(channels):
        rx = simulate_beacon_rx(beacon, channels[key])
        bank.filters[key] = build_matched_filter(estimate_channel(rx, beacon, epsilon), window)
    return bank


def in_band_energy(c: Signal, bandwidth: float, nfft: int | None = None) -> float:
    """Energy of the in-band projection of ``c`` (circular over ``nfft``)."""
    return energy(band_rect_filter(c, bandwidth, nfft))
