"""Saleh-Valenzuela style UWB multipath channels (IEEE 802.15.3a CM3 class).

Realizations are sparse tap lists with real signed gains. :func:`discretize`
deposits them on a sampling lattice with band-limited (sinc) interpolation;
:func:`compose_channel` convolves the wireless response with a phaser.

Channel energy convention: a discretized channel ``w`` is normalized so its
*tap* energy ``sum |w_k dt|^2`` is one, i.e. a single tap of gain 1 on a
lattice point is exactly a unit impulse.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .sigcore import SimGrid, Signal, convolve

NS = 1e-9


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic sub-seed ``h(master, keys...)`` for trial ``keys``.

    Uses numpy's ``SeedSequence`` spawn-key hashing, so the value depends
    only on the arguments and never on evaluation order.
    """
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class MultipathParams:
    """Cluster/ray model parameters (rates in 1/ns, times in ns, fades in dB).

    Defaults are the CM3 (4-10 m, non-LOS) values of the 802.15.3a report.
    Shadowing is off by default because link amplitudes are renormalized
    per access point downstream.
    """

    cluster_rate: float = 0.0667
    ray_rate: float = 2.1
    cluster_decay: float = 14.0
    ray_decay: float = 7.9
    cluster_fade_db: float = 3.3941
    ray_fade_db: float = 3.3941
    shadowing_db: float = 3.0
    max_excess_delay: float = 80.0
    shadowing: bool = False

    def __post_init__(self):
        for name in ("cluster_rate", "ray_rate", "cluster_decay", "ray_decay", "max_excess_delay"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("cluster_fade_db", "ray_fade_db", "shadowing_db"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.max_excess_delay <= self.cluster_decay:
            raise ConfigurationError("max_excess_delay must exceed the cluster decay constant")


@dataclass(frozen=True)
class ChannelRealization:
    delays: np.ndarray          # seconds, nondecreasing
    gains: np.ndarray           # real, signed
    seed: int | None = None
    resample_count: int = 0
    cluster_delays: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        g = np.asarray(self.gains, dtype=float)
        if d.size == 0 or d.shape != g.shape:
            raise ConfigurationError("need at least one tap with matching delay/gain arrays")
        if np.any(np.diff(d) < 0):
            order = np.argsort(d, kind="stable")
            d, g = d[order], g[order]
        if not np.sum(g ** 2) > 0:
            raise ConfigurationError("channel has zero energy")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "cluster_delays", np.asarray(self.cluster_delays, dtype=float))

    @property
    def energy(self) -> float:
        return float(np.sum(self.gains ** 2))

    def rms_delay_spread(self) -> float:
        p = self.gains ** 2 / self.energy
        mean = np.sum(p * self.delays)
        return float(np.sqrt(np.sum(p * (self.delays - mean) ** 2)))


def _draw_once(params: MultipathParams, rng: np.random.Generator):
    t_max = params.max_excess_delay
    clusters = [0.0]
    while True:
        t = clusters[-1] + rng.exponential(1.0 / params.cluster_rate)
        if t > t_max:
            break
        clusters.append(t)
    s1, s2 = params.cluster_fade_db, params.ray_fade_db
    # bias that makes the lognormal gain unbiased in power
    bias_db = (s1 ** 2 + s2 ** 2) * np.log(10) / 20
    delays, gains = [], []
    for t_c in clusters:
        cluster_fade = rng.normal(0.0, s1)
        rays = [0.0]
        while True:
            tau = rays[-1] + rng.exponential(1.0 / params.ray_rate)
            if t_c + tau > t_max:
                break
            rays.append(tau)
        rays = np.asarray(rays)
        # 10 log10 of the exponential power-delay profile
        mean_db = 10 * np.log10(np.e) * (-t_c / params.cluster_decay - rays / params.ray_decay) - bias_db
        amp = 10 ** ((mean_db + cluster_fade + rng.normal(0.0, s2, rays.size)) / 20)
        sign = rng.choice([-1.0, 1.0], size=rays.size)
        delays.append(t_c + rays)
        gains.append(sign * amp)
    return np.concatenate(delays), np.concatenate(gains), np.asarray(clusters)


def draw_multipath(params: MultipathParams, seed: int) -> ChannelRealization:
    """One normalized channel realization, a pure function of ``(params, seed)``.

    Delays are returned in seconds. Draws with no usable energy are redrawn
    from ``derive_seed(seed, attempt)``; the count is recorded on the result.
    """
    resamples = 0
    rng = np.random.default_rng(seed)
    while True:
        delays_ns, gains, clusters = _draw_once(params, rng)
        keep = delays_ns <= params.max_excess_delay
        delays_ns, gains = delays_ns[keep], gains[keep]
        e = float(np.sum(gains ** 2))
        if delays_ns.size and e > 0 and np.isfinite(e):
            break
        resamples += 1
        rng = np.random.default_rng(derive_seed(seed, resamples))
    order = np.argsort(delays_ns, kind="stable")
    gains = gains[order] / np.sqrt(e)
    if params.shadowing:
        gains = gains * 10 ** (rng.normal(0.0, params.shadowing_db) / 20)
    return ChannelRealization(delays_ns[order] * NS, gains, seed=seed, resample_count=resamples,
                              cluster_delays=clusters * NS)


def channel_grid(ch: ChannelRealization, sample_rate: float, pad_samples: int = 16) -> SimGrid:
    """Lattice covering the taps with ``pad_samples`` of sinc tail either side."""
    pad = pad_samples / sample_rate
    return SimGrid.covering(sample_rate, ch.delays[0] - pad, ch.delays[-1] + pad)


def _sinc_deposit(pos: np.ndarray, gains: np.ndarray, n: int) -> np.ndarray:
    """``sum_i gains_i sinc(k - pos_i)`` for ``k = 0..n-1``.

    Uses ``sinc(j - d) = (-1)^(j+1) sin(pi d) / (pi (j - d))`` with ``pos = r + d``,
    ``r`` the nearest integer, which needs one division per entry instead of
    a full sinc evaluation.
    """
    r = np.rint(pos)
    d = pos - r
    on_lattice = d == 0
    w = np.zeros(n)
    np.add.at(w, r[on_lattice].astype(np.int64), gains[on_lattice])
    r, d, g = r[~on_lattice], d[~on_lattice], gains[~on_lattice]
    if g.size:
        k = np.arange(n)
        # parity of (k - r) folded into a per-tap sign and a per-sample sign
        tap_w = -g * np.sin(np.pi * d) / np.pi * np.where(r % 2 == 0, 1.0, -1.0)
        w += (tap_w @ (1.0 / (k[None, :] - r[:, None] - d[:, None]))) * np.where(k % 2 == 0, 1.0, -1.0)
    return w


def discretize(ch: ChannelRealization, grid: SimGrid) -> Signal:
    """Band-limited (sinc) deposit of every tap on ``grid``, renormalized to
    unit tap energy."""
    if ch.delays[0] < grid.origin_time - 1e-15 or ch.delays[-1] > grid.end_time + 1e-15:
        raise ConfigurationError("grid does not cover the channel taps")
    w = _sinc_deposit(ch.delays * grid.sample_rate - grid.start_index, ch.gains, grid.num_samples)
    w /= np.sqrt(np.sum(w ** 2))
    return Signal(grid, w / grid.dt)


def tap_energy(w: Signal) -> float:
    """``sum |w_k dt|^2``, the discrete energy of an impulse-response lattice."""
    return float(np.sum(np.abs(w.samples * w.dt) ** 2))


def compose_channel(g: Signal, w: Signal) -> Signal:
    """Overall channel ``c = g * w`` (phaser then wireless propagation)."""
    return convolve(g, w)


def save_realization(ch: ChannelRealization, path, params: MultipathParams | None = None,
                     header_lines=(), extra_meta: dict | None = None):
    """Persist as ``delay_s,gain`` CSV with a ``.json`` metadata sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delay_s", "gain"])
        for d, g in zip(ch.delays, ch.gains):
            w.writerow([repr(float(d)), repr(float(g))])
    meta = {
        "seed": ch.seed,
        "resample_count": ch.resample_count,
        "cluster_delays_s": [float(c) for c in ch.cluster_delays],
        "params": asdict(params) if params is not None else None,
        **(extra_meta or {}),
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_realization(path) -> ChannelRealization:
    """Reload a persisted realization; no random numbers are drawn."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    meta_path = path.with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return ChannelRealization(
        np.array([float(r["delay_s"]) for r in rows]),
        np.array([float(r["gain"]) for r in rows]),
        seed=meta.get("seed"),
        resample_count=meta.get("resample_count", 0),
        cluster_delays=np.array(meta.get("cluster_delays_s", [])),
    )
