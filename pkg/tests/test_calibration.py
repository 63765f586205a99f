import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trdcma.calibration import (MIN_SPECTRAL_FLOOR, Beacon, MatchedFilterBank, build_matched_filter, calibrate,
                                default_beacon, estimate_channel, in_band_energy, simulate_beacon_rx)
from trdcma.channel import MultipathParams, channel_grid, compose_channel, discretize, draw_multipath
from trdcma.errors import CalibrationError, ConfigurationError, IllPosedError
from trdcma.link import default_calibration_window
from trdcma.phaser import DispersionCode, generate_code_set, synthesize_phaser_ir
from trdcma.sigcore import (Signal, band_rect_filter, convolve, energy, peak_abs, time_reverse_conjugate,
                            unit_impulse)

from conftest import BANDWIDTH as B, FS

DT = 1 / FS


@pytest.fixture(scope="module")
def beacon():
    return default_beacon(B, FS)


def overall_channel(spec, code, seed):
    g = synthesize_phaser_ir(DispersionCode(code), spec, FS)
    ch = draw_multipath(MultipathParams(), seed)
    return compose_channel(g, discretize(ch, channel_grid(ch, FS)))


def test_default_beacon_is_admissible(beacon):
    assert beacon.spectral_floor() == pytest.approx(1.0, abs=1e-9)
    assert beacon.spectral_floor(4096) > MIN_SPECTRAL_FLOOR


def test_notched_beacon_is_ill_posed(beacon):
    n = len(beacon.waveform)
    f = np.fft.fftfreq(n, DT)
    spec_b = np.fft.fft(beacon.waveform.samples)
    spec_b[np.abs(f - 1e9) < 0.3e9] *= 0.01
    notched = Beacon(Signal._at_index(np.fft.ifft(spec_b), FS, beacon.waveform.start_index), B)
    with pytest.raises(IllPosedError):
        estimate_channel(simulate_beacon_rx(notched, unit_impulse(FS)), notched)


def test_beacon_rx_basics(beacon, spec):
    np.testing.assert_allclose(simulate_beacon_rx(beacon, unit_impulse(FS)).samples, beacon.waveform.samples,
                               atol=1e-9 * B)
    c = overall_channel(spec, 3, 1)
    np.testing.assert_allclose(simulate_beacon_rx(beacon, c * 3.0).samples,
                               simulate_beacon_rx(beacon, c).samples * 3.0, atol=1e-6)


@pytest.mark.parametrize("code,seed", [(3, 0), (-5, 1), (7, 2)])
def test_noiseless_estimate_is_in_band_channel(beacon, spec, code, seed):
    c = overall_channel(spec, code, seed)
    rx = simulate_beacon_rx(beacon, c)
    est = estimate_channel(rx, beacon)
    ref = band_rect_filter(c.reindex(est.start_index, est.stop_index), B)
    err = np.max(np.abs(est.samples - ref.samples)) / np.max(np.abs(ref.samples))
    assert err < 1e-8


def test_estimate_of_impulse_is_in_band_delta(beacon):
    est = estimate_channel(beacon.waveform, beacon)
    ref = band_rect_filter(unit_impulse(FS).reindex(est.start_index, est.stop_index), B)
    np.testing.assert_allclose(est.samples, ref.samples, atol=1e-9 * B)


def test_regularization_shrinks_flat_spectrum(beacon):
    c = unit_impulse(FS, 7 * DT) * 2.0
    rx = simulate_beacon_rx(beacon, c)
    t0, p0 = peak_abs(estimate_channel(rx, beacon, 0.0))
    t1, p1 = peak_abs(estimate_channel(rx, beacon, 0.01))
    assert t1 == t0
    assert 0.99 < p1 / p0 < 1.0
    assert p1 / p0 == pytest.approx(1 / 1.01, rel=1e-9)


def test_negative_epsilon_rejected(beacon):
    with pytest.raises(ConfigurationError):
        estimate_channel(beacon.waveform, beacon, -1.0)


# -- matched filter ---------------------------------------------------------------------

def test_full_window_keeps_everything(rng):
    c_hat = Signal._at_index(rng.normal(size=40) + 1j * rng.normal(size=40), FS, -10)
    mf = build_matched_filter(c_hat)
    assert mf.captured_fraction == 1.0
    ref = time_reverse_conjugate(c_hat)
    assert mf.template.start_index == ref.start_index
    np.testing.assert_array_equal(mf.template.samples, ref.samples)


def test_tiny_window_keeps_strongest_sample():
    x = np.array([0.1, -0.5, 2.0 + 1.0j, 0.3])
    mf = build_matched_filter(Signal._at_index(x, FS, 4), window=DT / 10)
    assert len(mf.template) == 1
    assert mf.template.samples[0] == np.conj(x[2])
    assert mf.template.start_index == -6


def test_matched_filter_errors():
    with pytest.raises(CalibrationError):
        build_matched_filter(Signal._at_index(np.zeros(5), FS, 0))
    with pytest.raises(ConfigurationError):
        build_matched_filter(unit_impulse(FS), window=0.0)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=60), st.integers(1, 60),
       st.integers(1, 60))
def test_captured_fraction_monotone_in_window(values, w1, w2):
    x = np.asarray(values)
    if not np.any(x != 0):
        return
    s = Signal._at_index(x, FS, 0)
    lo, hi = sorted((w1, w2))
    assert build_matched_filter(s, lo * DT).captured_fraction <= \
        build_matched_filter(s, hi * DT).captured_fraction + 1e-12


@pytest.mark.parametrize("code,seed", [(3, 11), (-3, 12), (5, 13), (-7, 14)])
def test_calibration_identity(beacon, spec, code, seed):
    c = overall_channel(spec, code, seed)
    rx = simulate_beacon_rx(beacon, c)
    mf = build_matched_filter(estimate_channel(rx, beacon, 0.0))
    t, peak = peak_abs(convolve(c, mf.template))
    assert t == pytest.approx(0.0, abs=1e-15)
    assert peak == pytest.approx(in_band_energy(c, B, len(rx)), rel=1e-6)


def _default_window_fractions(beacon, spec, draws=100):
    window = default_calibration_window(spec)
    codes = generate_code_set(9)
    fractions = []
    for seed in range(draws):
        c = overall_channel(spec, int(codes[seed % 9]), 1000 + seed)
        est = estimate_channel(simulate_beacon_rx(beacon, c), beacon)
        fractions.append(build_matched_filter(est, window).captured_fraction)
    return np.array(fractions)


@pytest.fixture(scope="module")
def default_fractions(beacon):
    from trdcma.phaser import PhaserSpec
    return _default_window_fractions(beacon, PhaserSpec(B, 10e-9))


def test_default_window_capture_distribution(default_fractions):
    # measured over 100 draws: min 0.736, median 0.963, mean 0.948
    assert np.median(default_fractions) == pytest.approx(0.963, abs=0.01)
    assert default_fractions.mean() == pytest.approx(0.948, abs=0.01)
    assert default_fractions.min() > 0.7


@pytest.mark.xfail(strict=True, reason="CM3 taps reach 80 ns; a 51 ns window keeps > 0.98 in only ~23% of draws")
def test_default_window_keeps_98_percent_everywhere(default_fractions):
    assert default_fractions.min() > 0.98


# -- bank ------------------------------------------------------------------------------------

def test_bank_save_load_round_trip(tmp_path, beacon, spec):
    channels = {("U", 0): overall_channel(spec, 3, 1), ("D", 0): overall_channel(spec, -3, 2)}
    bank = calibrate(channels, beacon, window=default_calibration_window(spec))
    bank.save(tmp_path, ["seed=4"], {"meta": {"seed": 4}})
    meta = json.loads((tmp_path / "template_U0.json").read_text())
    assert {"window_s", "captured_fraction", "epsilon", "beacon"} <= set(meta)
    assert meta["meta"]["seed"] == 4
    back = MatchedFilterBank.load(tmp_path)
    assert back.keys() == bank.keys() == [("D", 0), ("U", 0)]
    for key in bank.keys():
        np.testing.assert_array_equal(back.template(*key).samples, bank.template(*key).samples)
        assert back[key].captured_fraction == bank[key].captured_fraction
    assert back.window == bank.window


def test_empty_bank_dir_raises(tmp_path):
    with pytest.raises(CalibrationError):
        MatchedFilterBank.load(tmp_path)


def test_in_band_energy_of_phaser_is_bandwidth(spec):
    g = synthesize_phaser_ir(DispersionCode(5), spec, FS)
    assert in_band_energy(g, B, 1 << 15) == pytest.approx(energy(g), rel=1e-3)
