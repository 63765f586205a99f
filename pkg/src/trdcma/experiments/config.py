"""YAML experiment configuration.

Every scenario reads the same tree; keys that a scenario does not use are
still validated so a typo fails loudly instead of being ignored.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..channel import MultipathParams
from ..errors import ConfigurationError, DomainError
from ..link import LinkConfig
from ..phaser import PhaserSpec

SCENARIOS = ("mai_traces", "sir_sweep", "bep_sweep", "end_to_end", "calibrate")

DEFAULTS = {
    "scenario": None,
    "master_seed": 0,
    "phaser": {"bandwidth_hz": 10e9, "delay_swing_s": 10e-9, "delay_offset_s": None},
    "sample_rate_hz": None,
    "link": {
        "num_links": 5,
        "bit_period_s": 10e-9,
        "code_set": None,
        "downlink_code_set": None,
        "routing": None,
        "uplink_amps": None,
        "downlink_amps": None,
        "offsets_s": None,
        "detector_threshold": 0.5,
        "observed_link": 0,
    },
    "channel": {"multipath": True, "reciprocal": False, "params": {}, "realizations_dir": None},
    "calibration": {"window_s": None, "epsilon": 0.0},
    "bits": 500,
    "worst_case": True,
    # scenario knobs
    "bit_periods_s": None,
    "num_links_sweep": [2, 3, 4, 5, 6, 7, 8, 9],
    "bandwidth_bit_products": [50, 100, 200, 400],
    "trace_bits": 8,
    "seeds": 1,
    "end_to_end": {"mode": "random", "trials": 1112, "target_bits": 10000},
    "acceptance": {"max_sir_deviation_db": 2.0, "confidence": 0.99},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown config key '{where}'")
        if isinstance(base[key], dict) and key != "params":
            if not isinstance(value, dict):
                raise ConfigurationError(f"'{where}' must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _ints(values):
    return None if values is None else tuple(int(v) for v in values)


@dataclass(frozen=True)
class ExperimentConfig:
    tree: dict
    source: str | None = field(default=None, compare=False)

    # -- construction -----------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict | None, source: str | None = None) -> "ExperimentConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigurationError("config root must be a mapping")
        tree = _merge(DEFAULTS, data)
        cfg = cls(tree, source)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigurationError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(data, str(path))

    def with_overrides(self, **top_level) -> "ExperimentConfig":
        tree = copy.deepcopy(self.tree)
        for key, value in top_level.items():
            if key not in DEFAULTS:
                raise ConfigurationError(f"unknown config key '{key}'")
            tree[key] = value
        cfg = ExperimentConfig(tree, self.source)
        cfg.validate()
        return cfg

    # -- typed views --------------------------------------------------------------
    @property
    def scenario(self) -> str | None:
        return self.tree["scenario"]

    @property
    def master_seed(self) -> int:
        return int(self.tree["master_seed"])

    def phaser(self) -> PhaserSpec:
        p = self.tree["phaser"]
        return PhaserSpec(float(p["bandwidth_hz"]), float(p["delay_swing_s"]),
                          None if p["delay_offset_s"] is None else float(p["delay_offset_s"]))

    @property
    def bandwidth(self) -> float:
        return float(self.tree["phaser"]["bandwidth_hz"])

    @property
    def sample_rate(self) -> float:
        fs = self.tree["sample_rate_hz"]
        return 2 * self.bandwidth if fs is None else float(fs)

    def multipath(self) -> MultipathParams:
        params = self.tree["channel"]["params"]
        if not isinstance(params, dict):
            raise ConfigurationError("channel.params must be a mapping")
        return MultipathParams(**{k: (bool(v) if k == "shadowing" else float(v)) for k, v in params.items()})

    def link(self, num_links: int | None = None, bit_period: float | None = None) -> LinkConfig:
        """Link config, optionally resized. Per-link lists are truncated to the first ``num_links``."""
        lk = self.tree["link"]
        m = int(lk["num_links"] if num_links is None else num_links)

        def head(key):
            v = lk[key]
            if v is None:
                return None
            if len(v) < m:
                raise ConfigurationError(f"link.{key} has {len(v)} entries, need {m}")
            return tuple(v[:m])

        routing = lk["routing"]
        if routing is not None and len(routing) != m:
            if num_links is None:
                raise ConfigurationError(f"link.routing needs {m} entries")
            routing = None  # sweeps resize M; fall back to identity
        return LinkConfig(
            num_links=m,
            bit_period=float(lk["bit_period_s"] if bit_period is None else bit_period),
            uplink_codes=_ints(head("code_set")),
            downlink_codes=_ints(head("downlink_code_set")),
            routing=None if routing is None else tuple(routing),
            uplink_amps=head("uplink_amps"),
            downlink_amps=head("downlink_amps"),
            offsets=head("offsets_s"),
            detector_threshold=float(lk["detector_threshold"]),
            master_seed=self.master_seed,
        )

    def bit_periods(self) -> list[float]:
        tb = self.tree["bit_periods_s"]
        if tb is None:
            swing = float(self.tree["phaser"]["delay_swing_s"])
            return [swing, 2 * swing, 4 * swing]
        return [float(t) for t in tb]

    # -- validation / identity ------------------------------------------------------
    def validate(self):
        t = self.tree
        if t["scenario"] is not None and t["scenario"] not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {t['scenario']!r}; expected one of {SCENARIOS}")
        try:
            self.phaser()
            self.multipath()
            self.link()
        except (DomainError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(str(exc)) from exc
        if self.sample_rate < 2 * self.bandwidth * (1 - 1e-12):
            raise ConfigurationError("sample_rate_hz must be at least twice the bandwidth")
        if int(t["bits"]) < 1 or int(t["trace_bits"]) < 1 or int(t["seeds"]) < 1:
            raise ConfigurationError("bits, trace_bits and seeds must be positive")
        if any(float(tb) <= 0 for tb in self.bit_periods()):
            raise ConfigurationError("bit periods must be positive")
        if any(int(m) < 1 for m in t["num_links_sweep"]):
            raise ConfigurationError("num_links_sweep entries must be positive")
        if any(float(p) <= 0 for p in t["bandwidth_bit_products"]):
            raise ConfigurationError("bandwidth_bit_products must be positive")
        e2e = t["end_to_end"]
        if e2e["mode"] not in ("random", "ensemble"):
            raise ConfigurationError("end_to_end.mode must be 'random' or 'ensemble'")
        if int(e2e["trials"]) < 1 or int(e2e["target_bits"]) < 1:
            raise ConfigurationError("end_to_end.trials and target_bits must be positive")
        if not 0 <= int(t["link"]["observed_link"]) < int(t["link"]["num_links"]):
            raise ConfigurationError("link.observed_link out of range")
        if not 0 < float(t["acceptance"]["confidence"]) < 1:
            raise ConfigurationError("acceptance.confidence must lie in (0, 1)")

    def canonical_json(self) -> str:
        return json.dumps(self.tree, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()
