"""Scenario runners behind the CLI.

Each runner takes an :class:`ExperimentConfig` and an output directory,
writes its artifacts and returns a :class:`ScenarioResult`. Sweep points
and Monte-Carlo trials get seeds from ``derive_seed(master_seed, ...)``
and are merged in a fixed order, so the worker count never changes the
output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..channel import derive_seed, load_realization, save_realization
from ..link import (build_network, default_calibration_window, draw_offsets, run_link,
                    worst_case_split, worst_case_trial)
from ..metrics import (bep_from_sir, bep_overall, binomial_interval, mai_pdf, mai_variance,
                       one_period_thinned, sir_analytical, sir_statistical, steady_state, to_db)
from ..sigcore import write_trace_csv
from . import io
from .config import ExperimentConfig

METRICS_COLUMNS = ["M", "T_b_s", "delta_f_hz", "code_set", "seed", "sir_stat_db", "sir_anal_db",
                   "deviation_db", "bep_u", "bep_d", "bep_overall"]
OFFSET_KEY = 7  # sub-seed key for the random stream offsets


@dataclass
class ScenarioResult:
    scenario: str
    out_dir: Path
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    passed: bool = True


def make_network(cfg: ExperimentConfig, link_cfg, seed: int):
    ch = cfg.tree["channel"]
    cal = cfg.tree["calibration"]
    realizations = None
    if ch["realizations_dir"] is not None:
        realizations = load_realizations(ch["realizations_dir"])
    spec = cfg.phaser()
    window = default_calibration_window(spec) if cal["window_s"] is None else float(cal["window_s"])
    return build_network(link_cfg, spec, cfg.multipath(), seed=seed, sample_rate=cfg.sample_rate,
                         reciprocal=bool(ch["reciprocal"]), calibration_window=window,
                         epsilon=float(cal["epsilon"]), realizations=realizations,
                         multipath=bool(ch["multipath"]))


def link_offsets(link_cfg, sample_rate: float, seed: int):
    if link_cfg.offsets is not None:
        return link_cfg.offsets
    return draw_offsets(link_cfg.num_links, link_cfg.bit_period, sample_rate, derive_seed(seed, OFFSET_KEY))


def load_realizations(directory) -> dict:
    out = {}
    for path in sorted(Path(directory).glob("channel_*.csv")):
        tag = path.stem.split("_", 1)[1]
        out[(tag[0], int(tag[1:]))] = load_realization(path)
    return out


def _code_str(codes) -> str:
    return ";".join(str(c.signed_order) for c in codes)


def _hop_beps(link_cfg, bandwidth: float, m: int) -> tuple[float, float, float]:
    """Analytical uplink, downlink and overall error probability of link ``m``."""
    if link_cfg.num_links < 2:
        return 0.0, 0.0, 0.0
    n = link_cfg.num_links
    p_u = bep_from_sir(sir_analytical(n, bandwidth, link_cfg.bit_period, link_cfg.uplink_amps, m))
    p_d = bep_from_sir(sir_analytical(n, bandwidth, link_cfg.bit_period, link_cfg.downlink_amps, m))
    return p_u, p_d, bep_overall(p_u, p_d)[0]


# -- MAI traces ---------------------------------------------------------------------

def _mai_point(args):
    cfg, k_tb, tb = args
    link_cfg = cfg.link(bit_period=tb)
    seed = cfg.master_seed
    net = make_network(cfg, link_cfg, seed)
    offsets = link_offsets(link_cfg, net.sample_rate, seed)
    n_bits = int(cfg.tree["bits"])
    traces, stats = {}, []
    for m in range(link_cfg.num_links):
        split = worst_case_split(net, n_bits, m, offsets)
        t0 = split.steady_start
        t1 = t0 + int(cfg.tree["trace_bits"]) * tb
        traces[m] = {"desired": split.desired.crop(t0, t1), "mai": split.mai.crop(t0, t1),
                     "total": split.total.crop(t0, t1)}
        x = steady_state(split.mai, tb, n_bits, start=t0)
        var = mai_variance(x)
        st = mai_pdf(x, var if var > 0 else None,
                     ks_samples=one_period_thinned(x, tb, net.sample_rate, cfg.bandwidth))
        stats.append({
            "link": m,
            "code": link_cfg.uplink_codes[m].signed_order,
            "variance": var,
            "envelope_power": mai_variance(x, passband=False),
            "sir_statistical_db": to_db(sir_statistical(var)),
            "ks_statistic": st.ks_statistic,
            "ks_pvalue": st.ks_pvalue,
            "degenerate": st.degenerate,
            "hist_edges": st.hist_edges,
            "hist_density": st.hist_density,
            "num_samples": st.num_samples,
        })
    return k_tb, tb, offsets, traces, stats


def run_mai_traces(cfg: ExperimentConfig, out_dir) -> ScenarioResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = ScenarioResult("mai_traces", out)
    hdr = io.header_lines(cfg, res.scenario)
    points = [(cfg, k, tb) for k, tb in enumerate(cfg.bit_periods())]
    for k_tb, tb, offsets, traces, stats in io.parallel_map(_mai_point, points):
        for m, parts in traces.items():
            path = out / f"trace_tb{k_tb}_link{m}.csv"
            write_trace_csv(path, parts, hdr)
            res.files.append(path)
        path = out / f"mai_stats_tb{k_tb}.json"
        io.write_json(path, {"bit_period_s": tb, "offsets_s": offsets, "links": stats}, cfg, res.scenario)
        res.files.append(path)
        res.summary[f"tb{k_tb}"] = {"bit_period_s": tb,
                                    "ks_pvalues": [s["ks_pvalue"] for s in stats]}
    return res


# -- SIR sweep ------------------------------------------------------------------------

def _sir_point(args):
    cfg, m_links, tb, seed = args
    link_cfg = cfg.link(num_links=m_links, bit_period=tb)
    observed = min(int(cfg.tree["link"]["observed_link"]), m_links - 1)
    if m_links == 1:
        stat, anal = math.inf, math.inf
    else:
        net = make_network(cfg, link_cfg, seed)
        offsets = link_offsets(link_cfg, net.sample_rate, seed)
        n_bits = int(cfg.tree["bits"])
        split = worst_case_split(net, n_bits, observed, offsets)
        stat = sir_statistical(mai_variance(split.mai, tb, n_bits, start=split.steady_start))
        anal = sir_analytical(m_links, cfg.bandwidth, tb, link_cfg.uplink_amps, observed)
    p_u, p_d, p_all = _hop_beps(link_cfg, cfg.bandwidth, observed)
    stat_db, anal_db = to_db(stat), to_db(anal)
    dev = stat_db - anal_db if math.isfinite(stat_db) and math.isfinite(anal_db) else math.nan
    return {"M": m_links, "T_b_s": tb, "delta_f_hz": cfg.bandwidth, "code_set": _code_str(link_cfg.uplink_codes),
            "seed": seed, "sir_stat_db": stat_db, "sir_anal_db": anal_db, "deviation_db": dev,
            "bep_u": p_u, "bep_d": p_d, "bep_overall": p_all}


def run_sir_sweep(cfg: ExperimentConfig, out_dir) -> ScenarioResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = ScenarioResult("sir_sweep", out)
    n_seeds = int(cfg.tree["seeds"])
    seeds = [cfg.master_seed] if n_seeds == 1 else [derive_seed(cfg.master_seed, k) for k in range(n_seeds)]
    points = [(cfg, int(m), tb, s) for tb in cfg.bit_periods() for m in cfg.tree["num_links_sweep"]
              for s in seeds]
    rows = io.parallel_map(_sir_point, points)
    rows.sort(key=lambda r: (r["M"], r["T_b_s"], r["seed"]))
    path = out / "sir_sweep.csv"
    io.write_csv(path, METRICS_COLUMNS, rows, cfg, res.scenario)
    res.files.append(path)
    devs = [abs(r["deviation_db"]) for r in rows if math.isfinite(r["deviation_db"])]
    limit = float(cfg.tree["acceptance"]["max_sir_deviation_db"])
    res.summary = {"max_abs_deviation_db": max(devs) if devs else math.nan, "limit_db": limit,
                   "points": len(rows)}
    res.passed = all(d <= limit for d in devs)
    io.write_json(out / "sir_summary.json", res.summary, cfg, res.scenario)
    res.files.append(out / "sir_summary.json")
    return res


# -- BEP sweep -------------------------------------------------------------------------

def bep_point(m_links: int, bandwidth: float, bit_period: float, routed: bool = True,
              uplink_amps=None, downlink_amps=None, m: int = 0) -> tuple[float, float, float]:
    """``(bep_u, bep_d, overall)`` from the closed forms.

    With ``routed=False`` the downlink hop is bypassed, which gives the
    plain multiple-access baseline through the same code path.
    """
    if m_links < 2:
        return 0.0, 0.0, 0.0
    p_u = bep_from_sir(sir_analytical(m_links, bandwidth, bit_period, uplink_amps, m))
    if not routed:
        return p_u, 0.0, bep_overall(p_u, 0.0)[0]
    p_d = bep_from_sir(sir_analytical(m_links, bandwidth, bit_period, downlink_amps, m))
    return p_u, p_d, bep_overall(p_u, p_d)[0]


def run_bep_sweep(cfg: ExperimentConfig, out_dir) -> ScenarioResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = ScenarioResult("bep_sweep", out)
    rows, baseline = [], []
    worst_ratio = (math.inf, -math.inf)
    for prod in cfg.tree["bandwidth_bit_products"]:
        tb = float(prod) / cfg.bandwidth
        for m_links in cfg.tree["num_links_sweep"]:
            m_links = int(m_links)
            link_cfg = cfg.link(num_links=m_links, bit_period=tb)
            p_u, p_d, p_all = bep_point(m_links, cfg.bandwidth, tb, True,
                                        link_cfg.uplink_amps, link_cfg.downlink_amps)
            p_single = bep_point(m_links, cfg.bandwidth, tb, False, link_cfg.uplink_amps)[2]
            anal_db = to_db(sir_analytical(m_links, cfg.bandwidth, tb, link_cfg.uplink_amps)) \
                if m_links > 1 else math.inf
            rows.append({"M": m_links, "T_b_s": tb, "delta_f_hz": cfg.bandwidth,
                         "code_set": _code_str(link_cfg.uplink_codes), "seed": cfg.master_seed,
                         "sir_stat_db": math.nan, "sir_anal_db": anal_db, "deviation_db": math.nan,
                         "bep_u": p_u, "bep_d": p_d, "bep_overall": p_all})
            ratio = p_all / p_single if p_single > 0 else math.nan
            baseline.append({"M": m_links, "delta_f_T_b": float(prod), "bep_no_routing": p_single,
                             "bep_overall": p_all, "ratio": ratio})
            if 0 < p_single < 1e-2:
                worst_ratio = (min(worst_ratio[0], ratio), max(worst_ratio[1], ratio))
    path = out / "bep_sweep.csv"
    io.write_csv(path, METRICS_COLUMNS, rows, cfg, res.scenario)
    base_path = out / "bep_baseline.csv"
    io.write_csv(base_path, ["M", "delta_f_T_b", "bep_no_routing", "bep_overall", "ratio"], baseline, cfg,
                 res.scenario)
    res.files += [path, base_path]
    res.summary = {"ratio_min": worst_ratio[0], "ratio_max": worst_ratio[1]}
    res.passed = worst_ratio[0] >= 1.9 and worst_ratio[1] <= 2.0 if math.isfinite(worst_ratio[0]) else True
    return res


# -- end to end --------------------------------------------------------------------------

def _ensemble_trial(args):
    cfg, trial = args
    seed = derive_seed(cfg.master_seed, trial)
    link_cfg = cfg.link()
    net = make_network(cfg, link_cfg, seed)
    outcome = worst_case_trial(net, link_offsets(link_cfg, net.sample_rate, seed))
    return trial, seed, outcome


def ensemble_trials(cfg: ExperimentConfig) -> int:
    e2e = cfg.tree["end_to_end"]
    m_links = int(cfg.tree["link"]["num_links"])
    return max(int(e2e["trials"]), math.ceil(int(e2e["target_bits"]) / m_links))


def _prediction(link_cfg, bandwidth: float) -> float:
    return float(np.mean([_hop_beps(link_cfg, bandwidth, m)[2] for m in range(link_cfg.num_links)]))


def run_end_to_end(cfg: ExperimentConfig, out_dir) -> ScenarioResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = ScenarioResult("end_to_end", out)
    link_cfg = cfg.link()
    predicted = _prediction(link_cfg, cfg.bandwidth)
    conf = float(cfg.tree["acceptance"]["confidence"])
    mode = cfg.tree["end_to_end"]["mode"]
    if mode == "ensemble":
        results = io.parallel_map(_ensemble_trial, [(cfg, k) for k in range(ensemble_trials(cfg))])
        rows = []
        for trial, seed, o in results:
            for m in range(link_cfg.num_links):
                rows.append({"trial": trial, "seed": seed, "link": m, "uplink_error": int(o.uplink_errors[m]),
                             "downlink_error": int(o.downlink_errors[m]), "failure": int(o.failures[m])})
        path = out / "e2e_trials.csv"
        io.write_csv(path, ["trial", "seed", "link", "uplink_error", "downlink_error", "failure"], rows, cfg,
                     res.scenario)
        res.files.append(path)
        n_bits = len(rows)
        errors = sum(r["failure"] for r in rows)
        up = sum(r["uplink_error"] for r in rows)
        down = sum(r["downlink_error"] for r in rows)
    else:
        seed = cfg.master_seed
        net = make_network(cfg, link_cfg, seed)
        rng = np.random.default_rng(derive_seed(seed, 11))
        payload = rng.integers(0, 2, size=(link_cfg.num_links, int(cfg.tree["bits"])), dtype=np.uint8)
        run = run_link(net, payload, link_offsets(link_cfg, net.sample_rate, seed))
        for m in range(link_cfg.num_links):
            n = link_cfg.routing[m]
            for tag, bits in (("sent", run.sent[m]), ("router", run.uplink_detected[m]),
                              (f"ap{n}", run.delivered[m])):
                path = out / f"bits_link{m}_{tag}.txt"
                io.write_bits(path, bits, cfg, res.scenario)
                res.files.append(path)
        n_bits = run.num_bits
        errors = run.end_to_end_errors
        up = run.uplink_errors
        down = int(sum(np.sum(a != b) for a, b in zip(run.uplink_detected, run.delivered)))
    lo, hi = binomial_interval(predicted, n_bits, conf)
    res.summary = {"mode": mode, "bits": n_bits, "errors": errors, "uplink_errors": up,
                   "downlink_errors": down, "empirical_rate": errors / n_bits, "predicted_rate": predicted,
                   "interval": [lo, hi], "confidence": conf, "num_links": link_cfg.num_links,
                   "bit_period_s": link_cfg.bit_period, "routing": list(link_cfg.routing)}
    res.passed = lo <= errors <= hi
    res.summary["within_interval"] = res.passed
    io.write_json(out / "e2e_summary.json", res.summary, cfg, res.scenario)
    res.files.append(out / "e2e_summary.json")
    return res


# -- calibration ----------------------------------------------------------------------------

def run_calibrate(cfg: ExperimentConfig, out_dir) -> ScenarioResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = ScenarioResult("calibrate", out)
    link_cfg = cfg.link()
    net = make_network(cfg, link_cfg, cfg.master_seed)
    hdr = io.header_lines(cfg, res.scenario)
    for (direction, k), ch in sorted(net.realizations.items()):
        path = out / f"channel_{direction}{k}.csv"
        save_realization(ch, path, cfg.multipath(), hdr, {"meta": io.meta(cfg, res.scenario)})
        res.files += [path, path.with_suffix(".json")]
    bank_dir = out / "bank"
    net.bank.save(bank_dir, hdr, {"meta": io.meta(cfg, res.scenario)})
    res.files += sorted(bank_dir.iterdir())
    res.summary = {"captured_fraction": {f"{d}{k}": net.bank[(d, k)].captured_fraction
                                         for d, k in net.bank.keys()},
                   "window_s": net.bank.window, "epsilon": net.bank.epsilon}
    io.write_json(out / "calibration_summary.json", res.summary, cfg, res.scenario)
    res.files.append(out / "calibration_summary.json")
    return res


RUNNERS = {
    "mai_traces": run_mai_traces,
    "sir_sweep": run_sir_sweep,
    "bep_sweep": run_bep_sweep,
    "end_to_end": run_end_to_end,
    "calibrate": run_calibrate,
}
