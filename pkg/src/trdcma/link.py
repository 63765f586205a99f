"""OOK links through the time-reversal router.

Uplink: access point ``m`` sends an impulse train through its overall
channel ``c_m``; the router sums all arrivals and correlates with the
template of ``c_m``. Downlink: the router regenerates the detected pulses,
predistorts each stream with the template of the destination channel
``c_{n(m)}`` and broadcasts the sum. Both directions share
:func:`split_desired_mai`, which separates the wanted response from
multiple-access interference (MAI).

Indices are zero based; ``routing[m]`` is the downlink access point that
receives uplink stream ``m``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import Beacon, MatchedFilterBank, calibrate, default_beacon
from .channel import MultipathParams, channel_grid, compose_channel, derive_seed, discretize, draw_multipath
from .errors import ConfigurationError, DetectionError, DomainError
from .phaser import DEFAULT_OVERSAMPLING, DispersionCode, PhaserSpec, generate_code_set, synthesize_phaser_ir
from .sigcore import SimGrid, Signal, convolve, convolve_at, peak_abs, unit_impulse

UPLINK, DOWNLINK = "U", "D"
_DIRECTION_KEY = {UPLINK: 1, DOWNLINK: 2}
# half width (in samples) of the sinc used for off-lattice pulse positions
_INTERP_HALF_WIDTH = 64


@dataclass(frozen=True)
class BitStream:
    bits: np.ndarray
    bit_period: float
    time_offset: float = 0.0

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).reshape(-1)
        if bits.size == 0:
            raise DomainError("bit stream is empty")
        if np.any(bits > 1):
            raise DomainError("bits must be 0 or 1")
        if not self.bit_period > 0:
            raise DomainError("bit period must be positive")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return self.bits.size

    def bit_times(self) -> np.ndarray:
        return self.time_offset + np.arange(self.bits.size) * self.bit_period

    def to_ascii(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def from_ascii(cls, text: str, bit_period: float, time_offset: float = 0.0) -> "BitStream":
        text = text.strip()
        if set(text) - {"0", "1"}:
            raise DomainError("bit string may only contain 0 and 1")
        return cls(np.array([c == "1" for c in text], dtype=np.uint8), bit_period, time_offset)


@dataclass(frozen=True)
class LinkConfig:
    """Static description of the ``M`` uplink/downlink pairs."""

    num_links: int
    bit_period: float
    uplink_codes: tuple = None
    downlink_codes: tuple = None
    routing: tuple = None
    uplink_amps: tuple = None
    downlink_amps: tuple = None
    offsets: tuple = None
    detector_threshold: float = 0.5
    master_seed: int = 0

    def __post_init__(self):
        m = int(self.num_links)
        if m < 1:
            raise DomainError("need at least one link")
        object.__setattr__(self, "num_links", m)
        if not self.bit_period > 0:
            raise DomainError("bit period must be positive")
        defaults = {
            "uplink_codes": tuple(generate_code_set(m)),
            "downlink_codes": None,
            "routing": tuple(range(m)),
            "uplink_amps": (1.0,) * m,
            "downlink_amps": (1.0,) * m,
        }
        for name, default in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
        if self.downlink_codes is None:
            object.__setattr__(self, "downlink_codes", self.uplink_codes)
        for name in ("uplink_codes", "downlink_codes"):
            codes = tuple(c if isinstance(c, DispersionCode) else DispersionCode(c) for c in getattr(self, name))
            if len(codes) != m:
                raise ConfigurationError(f"{name} needs {m} entries")
            if len({c.signed_order for c in codes}) != m:
                raise ConfigurationError(f"{name} entries must be pairwise distinct")
            object.__setattr__(self, name, codes)
        routing = tuple(int(n) for n in self.routing)
        if sorted(routing) != list(range(m)):
            raise ConfigurationError(f"routing {routing} is not a permutation of 0..{m - 1}")
        object.__setattr__(self, "routing", routing)
        for name in ("uplink_amps", "downlink_amps"):
            amps = tuple(float(a) for a in getattr(self, name))
            if len(amps) != m or min(amps) <= 0:
                raise ConfigurationError(f"{name} needs {m} positive entries")
            object.__setattr__(self, name, amps)
        if self.offsets is not None:
            offs = tuple(float(t) for t in self.offsets)
            if len(offs) != m:
                raise ConfigurationError(f"offsets needs {m} entries")
            object.__setattr__(self, "offsets", offs)
        if not 0 < self.detector_threshold < 1:
            raise DomainError("detector threshold must lie in (0, 1)")

    def inverse_routing(self) -> tuple:
        inv = [0] * self.num_links
        for m, n in enumerate(self.routing):
            inv[n] = m
        return tuple(inv)


# -- waveform operations -------------------------------------------------------

def _deposit(samples: np.ndarray, grid: SimGrid, t: float, weight: float):
    pos = (t - grid.origin_time) * grid.sample_rate
    k = int(round(pos))
    if abs(pos - k) < 1e-9:
        samples[k] += weight
        return
    lo = max(0, int(np.floor(pos)) - _INTERP_HALF_WIDTH)
    hi = min(grid.num_samples, int(np.ceil(pos)) + _INTERP_HALF_WIDTH + 1)
    samples[lo:hi] += weight * np.sinc(np.arange(lo, hi) - pos)


def modulate_ook(bs: BitStream, grid: SimGrid | None = None, sample_rate: float | None = None) -> Signal:
    """Impulse of area one at ``l*T_b + t_m`` for every 1 bit.

    Pulses between lattice points are deposited as a truncated sinc.
    """
    t_end = bs.time_offset + len(bs) * bs.bit_period
    if grid is None:
        if sample_rate is None:
            raise ConfigurationError("need a grid or a sample rate")
        grid = SimGrid.covering(sample_rate, min(0.0, bs.time_offset), t_end)
    if bs.time_offset < grid.origin_time - 1e-15 or bs.bit_times()[-1] > grid.end_time + 1e-15:
        raise ConfigurationError("grid does not cover the bit stream")
    samples = np.zeros(grid.num_samples, dtype=np.complex128)
    for t, b in zip(bs.bit_times(), bs.bits):
        if b:
            _deposit(samples, grid, t, grid.sample_rate)
    return Signal(grid, samples)


def _superpose(signals, filters, amps) -> Signal:
    if not (len(signals) == len(filters) == len(amps)):
        raise ConfigurationError("signals, filters and amplitudes must have equal lengths")
    if not signals:
        raise ConfigurationError("nothing to superpose")
    total = None
    for s, f, a in zip(signals, filters, amps):
        part = convolve(s, f) * a
        total = part if total is None else total + part
    return total


def uplink_superpose(signals, channels, amps) -> Signal:
    """Router input ``sum_m a_m (s_m * c_m)``."""
    return _superpose(signals, channels, amps)


def decode_uplink(r: Signal, template: Signal) -> Signal:
    """Correlate the router input with one access point's template."""
    return convolve(r, template)


def split_desired_mai(signals, tx_filters, amps, rx_filter: Signal, m: int) -> tuple[Signal, Signal]:
    """Wanted response and MAI seen through ``rx_filter`` for stream ``m``.

    Uplink: ``tx_filters`` are the channels, ``rx_filter`` the template of
    ``c_m``. Downlink: ``tx_filters`` are the routed templates and
    ``rx_filter`` the destination channel.
    """
    n = len(signals)
    if not 0 <= m < n:
        raise DomainError(f"stream index {m} out of range for {n} streams")
    if not (len(tx_filters) == len(amps) == n):
        raise ConfigurationError("signals, filters and amplitudes must have equal lengths")
    desired = convolve(convolve(signals[m], tx_filters[m]) * amps[m], rx_filter)
    others = [k for k in range(n) if k != m]
    if others:
        interference = _superpose([signals[k] for k in others], [tx_filters[k] for k in others],
                                  [amps[k] for k in others])
        mai = convolve(interference, rx_filter)
    else:
        mai = desired * 0.0
    return desired, mai


def normalize_link(desired: Signal, mai: Signal) -> tuple[Signal, Signal, float]:
    """Scale both parts so ``max |desired| = 1``."""
    _, peak = peak_abs(desired)
    if peak == 0:
        raise DomainError("desired signal is identically zero")
    scale = 1.0 / peak
    return desired * scale, mai * scale, scale


def detect_bits(z: Signal, bit_period: float, time_offset: float, n_bits: int, threshold: float = 0.5,
                t_sync: float | None = None, on_sync_failure: str = "raise") -> tuple[BitStream, float]:
    """Threshold detector on the normalized decoder output.

    Bit ``l`` is read from ``Re z`` at ``l*T_b + time_offset + t_sync``. When
    ``t_sync`` is not given it is found from the leading preamble bit, which
    must be a 1: the largest ``Re z`` within half a bit of ``time_offset``.
    Returns the detected stream (preamble included) and ``t_sync``.
    """
    if not 0 < threshold < 1:
        raise DomainError("threshold must lie in (0, 1)")
    if t_sync is None:
        seg = z.crop(time_offset - bit_period / 2, time_offset + bit_period / 2)
        k = int(np.argmax(seg.samples.real))
        if seg.samples.real[k] > threshold:
            t_sync = (seg.start_index + k) * z.dt - time_offset
        elif on_sync_failure == "zero":
            t_sync = 0.0
        else:
            raise DetectionError("no preamble peak above threshold")
    times = time_offset + t_sync + np.arange(n_bits) * bit_period
    idx = np.rint(times * z.sample_rate).astype(np.int64) - z.start_index
    values = np.zeros(n_bits)
    inside = (idx >= 0) & (idx < len(z))
    values[inside] = z.samples.real[idx[inside]]
    return BitStream((values > threshold).astype(np.uint8), bit_period, time_offset), float(t_sync)


def downlink_precode(streams, templates_routed, amps) -> Signal:
    """Router broadcast ``sum_m a_m (s_m * template_{n(m)})``."""
    return _superpose(streams, templates_routed, amps)


def decode_downlink(s_d: Signal, w_n: Signal, g_n: Signal) -> Signal:
    """What access point ``n`` sees after its wireless channel and phaser."""
    return convolve(convolve(s_d, w_n), g_n)


# -- assembled network -----------------------------------------------------------

def default_calibration_window(spec: PhaserSpec) -> float:
    return spec.delay_offset + spec.delay_swing / 2 + 40e-9


@dataclass
class Network:
    """Phasers, channels and router templates for one set of draws."""

    config: LinkConfig
    phaser: PhaserSpec
    sample_rate: float
    phasers: dict = field(default_factory=dict)
    wireless: dict = field(default_factory=dict)
    channels: dict = field(default_factory=dict)
    realizations: dict = field(default_factory=dict)
    bank: MatchedFilterBank | None = None

    @property
    def num_links(self) -> int:
        return self.config.num_links

    def template(self, direction: str, k: int) -> Signal:
        return self.bank.template(direction, k)

    def uplink_channels(self):
        return [self.channels[(UPLINK, k)] for k in range(self.num_links)]

    def downlink_channels(self):
        return [self.channels[(DOWNLINK, k)] for k in range(self.num_links)]

    def routed_templates(self):
        return [self.template(DOWNLINK, n) for n in self.config.routing]

    def pulse_peak(self, direction: str, k: int) -> complex:
        """Complex peak of one pulse through channel ``k`` and its template."""
        resp = convolve(self.channels[(direction, k)], self.template(direction, k))
        return complex(resp.samples[int(np.argmax(np.abs(resp.samples)))])


def build_network(config: LinkConfig, phaser: PhaserSpec, params: MultipathParams | None = None, *,
                  seed: int = 0, sample_rate: float | None = None,
                  oversampling: float = DEFAULT_OVERSAMPLING, reciprocal: bool = False,
                  calibration_window: float | None = None, epsilon: float = 0.0,
                  beacon: Beacon | None = None, realizations: dict | None = None,
                  multipath: bool = True) -> Network:
    """Synthesize phasers, draw (or reuse) wireless channels and calibrate.

    Channel ``(direction, k)`` is drawn from ``derive_seed(seed, d, k)``, so a
    link's channel does not depend on how many links are simulated. With
    ``reciprocal`` the downlink reuses the uplink draw of the same index.
    ``realizations`` maps ``(direction, k)`` to persisted realizations and
    bypasses the random draw; ``multipath=False`` uses an ideal unit channel.
    """
    params = params or MultipathParams()
    fs = float(sample_rate) if sample_rate is not None else oversampling * phaser.bandwidth
    if fs < oversampling * phaser.bandwidth * (1 - 1e-12):
        raise ConfigurationError(
            f"sample rate {fs:.4g} below {oversampling} x phaser bandwidth {phaser.bandwidth:.4g}")
    net = Network(config, phaser, fs)
    for direction, codes in ((UPLINK, config.uplink_codes), (DOWNLINK, config.downlink_codes)):
        for k, code in enumerate(codes):
            g = synthesize_phaser_ir(code, phaser, fs)
            key = (direction, k)
            if not multipath:
                w = unit_impulse(fs, 0.0)
            else:
                if realizations and key in realizations:
                    ch = realizations[key]
                else:
                    draw_dir = UPLINK if reciprocal else direction
                    ch = draw_multipath(params, derive_seed(seed, _DIRECTION_KEY[draw_dir], k))
                net.realizations[key] = ch
                w = discretize(ch, channel_grid(ch, fs))
            net.phasers[key] = g
            net.wireless[key] = w
            net.channels[key] = compose_channel(g, w)
    if calibration_window is None:
        calibration_window = default_calibration_window(phaser)
    beacon = beacon or default_beacon(phaser.bandwidth, fs)
    net.bank = calibrate(net.channels, beacon, calibration_window, epsilon)
    return net


def draw_offsets(num_links: int, bit_period: float, sample_rate: float, seed: int) -> tuple:
    """Uniform random offsets in ``[0, T_b)`` snapped to the lattice."""
    rng = np.random.default_rng(seed)
    n = max(1, int(round(bit_period * sample_rate)))
    return tuple(int(k) / sample_rate for k in rng.integers(0, n, size=num_links))


def make_streams(bits, bit_period: float, offsets, preamble: bool = True) -> list[BitStream]:
    """One :class:`BitStream` per row of ``bits``, optionally led by a 1."""
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    if preamble:
        bits = np.concatenate([np.ones((bits.shape[0], 1), dtype=np.uint8), bits], axis=1)
    return [BitStream(row, bit_period, t) for row, t in zip(bits, offsets)]


@dataclass
class LinkRun:
    sent: list            # payload bits per uplink stream m
    uplink_detected: list  # payload bits detected at the router for stream m
    delivered: list        # payload bits detected at access point routing[m]
    uplink_sync: list
    downlink_sync: list

    @property
    def uplink_errors(self) -> int:
        return int(sum(np.sum(a != b) for a, b in zip(self.sent, self.uplink_detected)))

    @property
    def end_to_end_errors(self) -> int:
        return int(sum(np.sum(a != b) for a, b in zip(self.sent, self.delivered)))

    @property
    def num_bits(self) -> int:
        return int(sum(len(a) for a in self.sent))


def run_link(net: Network, payload, offsets=None, sync: str = "preamble") -> LinkRun:
    """Full uplink, router detection, downlink pipeline with random data.

    ``payload`` is an ``M x n`` array of bits; a preamble 1 is prepended to
    every stream. Decoder outputs are normalized by the calibrated
    single-pulse peak. ``sync="preamble"`` locates the sampling instant from
    the preamble; ``sync="calibrated"`` uses the peak lag of the calibrated
    single-pulse response.
    """
    cfg = net.config
    m_links = cfg.num_links
    payload = np.atleast_2d(np.asarray(payload, dtype=np.uint8))
    if payload.shape[0] != m_links:
        raise ConfigurationError(f"payload needs {m_links} rows")
    offsets = offsets if offsets is not None else cfg.offsets
    if offsets is None:
        offsets = draw_offsets(m_links, cfg.bit_period, net.sample_rate, derive_seed(cfg.master_seed, 7))
    streams = make_streams(payload, cfg.bit_period, offsets)
    n_total = len(streams[0])
    signals = [modulate_ook(bs, sample_rate=net.sample_rate) for bs in streams]

    def detect(z, peak_resp, offset):
        t_lag = None
        if sync == "calibrated":
            t_lag = peak_resp[0]
        found, t_s = detect_bits(z / peak_resp[1], cfg.bit_period, offset, n_total,
                                 cfg.detector_threshold, t_sync=t_lag)
        return found, t_s

    r = uplink_superpose(signals, net.uplink_channels(), cfg.uplink_amps)
    up_found, up_sync = [], []
    for m in range(m_links):
        z = decode_uplink(r, net.template(UPLINK, m))
        found, t_s = detect(z, _pulse_response(net.channels[(UPLINK, m)], net.template(UPLINK, m),
                                               cfg.uplink_amps[m]), offsets[m])
        up_found.append(found)
        up_sync.append(t_s)

    # router regenerates clean pulses on the uplink timing
    regenerated = [modulate_ook(BitStream(f.bits, cfg.bit_period, offsets[m]), sample_rate=net.sample_rate)
                   for m, f in enumerate(up_found)]
    s_d = downlink_precode(regenerated, net.routed_templates(), cfg.downlink_amps)
    delivered, down_sync = [], []
    for m in range(m_links):
        n = cfg.routing[m]
        c_n = net.channels[(DOWNLINK, n)]
        z = convolve(s_d, c_n)
        found, t_s = detect(z, _pulse_response(net.template(DOWNLINK, n), c_n, cfg.downlink_amps[m]),
                            offsets[m])
        delivered.append(found.bits[1:])
        down_sync.append(t_s)
    return LinkRun([p.copy() for p in payload], [f.bits[1:] for f in up_found], delivered, up_sync, down_sync)


def _pulse_response(first: Signal, second: Signal, amp: float) -> tuple[float, complex]:
    """``(lag, complex peak)`` of one pulse through two filters."""
    resp = convolve(first, second)
    k = int(np.argmax(np.abs(resp.samples)))
    return (resp.start_index + k) * resp.dt, complex(resp.samples[k]) * amp


@dataclass(frozen=True)
class WorstCaseSplit:
    """Normalized desired and MAI parts with the steady-state window."""

    desired: Signal
    mai: Signal
    scale: float
    steady_start: float
    steady_bits: int

    @property
    def total(self) -> Signal:
        return self.desired + self.mai


def transient_bits(net: Network, direction: str = UPLINK) -> int:
    """Whole bit periods needed for the longest channel plus template."""
    longest = max(len(net.channels[(direction, k)]) + len(net.template(direction, k))
                  for k in range(net.num_links))
    return int(np.ceil(longest / net.sample_rate / net.config.bit_period)) + 1


def worst_case_split(net: Network, n_bits: int, m: int, offsets=None, direction: str = UPLINK,
                     guard_bits: int | None = None) -> WorstCaseSplit:
    """Every link sends 1s; split what link ``m`` sees into desired and MAI.

    ``n_bits`` is the steady-state length; ``guard_bits`` extra bits on each
    side absorb the fill-up and drain transients. For the downlink, stream
    ``m`` is precoded with the template of ``routing[m]`` and observed
    through that access point's channel.
    """
    cfg = net.config
    offsets = offsets if offsets is not None else cfg.offsets
    if offsets is None:
        offsets = draw_offsets(cfg.num_links, cfg.bit_period, net.sample_rate, derive_seed(cfg.master_seed, 7))
    guard = transient_bits(net, direction) if guard_bits is None else int(guard_bits)
    total_bits = n_bits + 2 * guard
    streams = [BitStream(np.ones(total_bits, dtype=np.uint8), cfg.bit_period, t) for t in offsets]
    signals = [modulate_ook(bs, sample_rate=net.sample_rate) for bs in streams]
    if direction == UPLINK:
        tx, amps, rx = net.uplink_channels(), cfg.uplink_amps, net.template(UPLINK, m)
    else:
        tx, amps = net.routed_templates(), cfg.downlink_amps
        rx = net.channels[(DOWNLINK, cfg.routing[m])]
    desired, mai = split_desired_mai(signals, tx, amps, rx, m)
    desired, mai, scale = normalize_link(desired, mai)
    return WorstCaseSplit(desired, mai, scale, guard * cfg.bit_period, n_bits)


def periodic_peak(response: Signal, bit_period: float) -> tuple[float, complex, float]:
    """Steady-state response to an endless train of 1s.

    Folds ``response`` modulo the bit period. Returns the lag of the
    single-pulse peak, the folded value at that lag and the folded maximum
    magnitude (the normalization used for worst-case streams).
    """
    n = int(round(bit_period * response.sample_rate))
    if abs(n / response.sample_rate - bit_period) > 1e-6 / response.sample_rate:
        raise ConfigurationError("bit period must be a whole number of samples")
    k_peak = int(np.argmax(np.abs(response.samples)))
    idx = (np.arange(len(response)) + response.start_index) % n
    folded = np.bincount(idx, weights=response.samples.real, minlength=n) \
        + 1j * np.bincount(idx, weights=response.samples.imag, minlength=n)
    lag_index = response.start_index + k_peak
    return lag_index * response.dt, complex(folded[lag_index % n]), float(np.max(np.abs(folded)))


@dataclass(frozen=True)
class TrialOutcome:
    uplink_errors: np.ndarray    # bool per link m
    downlink_errors: np.ndarray  # bool per link m, against the regenerated stream

    @property
    def failures(self) -> np.ndarray:
        """A bit fails end to end when either hop errs."""
        return self.uplink_errors | self.downlink_errors


def worst_case_trial(net: Network, offsets, threshold: float | None = None) -> TrialOutcome:
    """One decision per link and hop under worst-case (all 1s) traffic.

    Every stream sends 1s for long enough that a middle bit sees the
    steady-state MAI. Each decoder output is normalized by the
    steady-state peak of its desired part and sampled at the calibrated
    single-pulse lag. The router regenerates stream ``m`` from its uplink
    decision, so a wrong uplink decision changes the downlink traffic.
    """
    cfg = net.config
    thr = cfg.detector_threshold if threshold is None else threshold
    guard = max(transient_bits(net, UPLINK), transient_bits(net, DOWNLINK))
    n_total = 2 * guard + 1
    mid = guard
    fs = net.sample_rate

    def train(bits, t):
        return modulate_ook(BitStream(bits, cfg.bit_period, t), sample_rate=fs)

    ones = np.ones(n_total, dtype=np.uint8)
    signals = [train(ones, t) for t in offsets]
    r = uplink_superpose(signals, net.uplink_channels(), cfg.uplink_amps)
    up_err = np.zeros(cfg.num_links, dtype=bool)
    down_streams = []
    for m in range(cfg.num_links):
        tmpl = net.template(UPLINK, m)
        lag, ref, peak = periodic_peak(convolve(net.channels[(UPLINK, m)], tmpl), cfg.bit_period)
        t = offsets[m] + mid * cfg.bit_period + lag
        z = convolve_at(r, tmpl, t) * np.conj(ref) / abs(ref) / (cfg.uplink_amps[m] * peak)
        bit = int(z.real > thr)
        up_err[m] = bit != 1
        regen = ones.copy()
        regen[mid] = bit
        down_streams.append(train(regen, offsets[m]))
    s_d = downlink_precode(down_streams, net.routed_templates(), cfg.downlink_amps)
    down_err = np.zeros(cfg.num_links, dtype=bool)
    for m in range(cfg.num_links):
        n = cfg.routing[m]
        c_n = net.channels[(DOWNLINK, n)]
        lag, ref, peak = periodic_peak(convolve(net.template(DOWNLINK, n), c_n), cfg.bit_period)
        t = offsets[m] + mid * cfg.bit_period + lag
        z = convolve_at(s_d, c_n, t) * np.conj(ref) / abs(ref) / (cfg.downlink_amps[m] * peak)
        down_err[m] = int(z.real > thr) != (0 if up_err[m] else 1)
    return TrialOutcome(up_err, down_err)
