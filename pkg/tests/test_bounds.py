"""MCRB — 닫힌형 값, Gabor 대역폭, Fisher 대각."""

from __future__ import annotations

import math

import numpy as np
import pytest

from app.cdma.bounds import (
    fisher_diagonal,
    gabor_bandwidth,
    mcrb_channel,
    mcrb_delay,
    mcrb_report,
    slope_bandwidth,
    slope_energy,
)
from app.cdma.sysmodel import SignatureSet, SystemConfig, generate_signatures
from app.errors import InputDomainError

CHIPS = np.array([1, -1, 1, 1, -1, -1, 1, -1])


def _rectangular(Q: int) -> np.ndarray:
    return np.repeat(CHIPS, Q) / np.sqrt(Q * CHIPS.size)


def test_channel_bound():
    assert mcrb_channel(1.0, 80) == 0.0125
    assert repr(mcrb_channel(1.0, 80)) == "0.0125"
    with pytest.raises(InputDomainError):
        mcrb_channel(0.0, 80)


def test_delay_bound():
    value = mcrb_delay(2.5, 80, 0.7)
    assert value * 8 * math.pi ** 2 * 80 * 2.5 * 0.7 ** 2 == pytest.approx(1.0, rel=1e-15)
    assert mcrb_delay(1.0, 10, math.inf) == 0.0
    with pytest.raises(InputDomainError):
        mcrb_delay(1.0, 10, 0.0)


def test_gabor_single_spectral_line():
    n, ts, m = 64, 0.5, 5
    t = np.arange(n) * ts
    f0 = m / (n * ts)
    assert gabor_bandwidth(np.exp(2j * np.pi * f0 * t), ts) == pytest.approx(f0, rel=1e-12)


def test_gabor_rejects_degenerate_inputs():
    with pytest.raises(InputDomainError):
        gabor_bandwidth(np.zeros(8), 1.0)
    with pytest.raises(InputDomainError):
        gabor_bandwidth(np.ones(8), 0.0)
    with pytest.raises(InputDomainError):
        gabor_bandwidth(np.ones(8), 1.0, oversample=0)


def test_gabor_zero_padding_exposes_pulse_edges():
    plain = gabor_bandwidth(np.ones(16), 0.25)
    padded = gabor_bandwidth(np.ones(16), 0.25, oversample=4)
    assert plain == pytest.approx(0.0, abs=1e-9)
    assert padded > 0.0


def _gaussian_signatures():
    Q, Nc = 16, 16
    n = np.arange(Q * Nc)
    pulse = np.exp(-0.5 * ((n - 128) / 20.0) ** 2)
    return SignatureSet.from_waveforms(pulse[None, :], Q=Q, Nc=Nc, L=10)


def test_fisher_delay_entry_matches_gabor_bound():
    sig = _gaussian_signatures()
    cfg = SystemConfig(K=1, Nc=16, Q=16, L=10, N0=0.5, sigma2=(2.0,))
    fisher = fisher_diagonal(cfg, sig, [3])
    np.testing.assert_allclose(fisher[:2], 2 * 10 / 0.5)
    bandwidth = gabor_bandwidth(sig.waveforms[0], 1 / 16)
    bound = mcrb_delay(2.0 / 0.5, 10, bandwidth)
    assert 1.0 / fisher[2] == pytest.approx(bound, rel=0.05)


def test_report_flags_rectangular_pulses():
    cfg = SystemConfig(K=2, Nc=8, Q=12, L=80, Lp=4, N0=1.0, sigma2=(1.0, 2.0))
    sig = generate_signatures(cfg, seed=0)
    report = mcrb_report(cfg, sig, [0, 10])
    assert report.tau_divergent.all()
    np.testing.assert_array_equal(report.var_a_bound, 0.0125)
    assert np.all(report.var_tau_bound > 0)
    assert set(report.to_dict()) >= {"var_a_bound", "var_tau_bound_tc2", "tau_divergent"}
    with pytest.raises(InputDomainError):
        fisher_diagonal(cfg, sig, [0, 48])


def test_report_for_smooth_pulse_is_not_divergent():
    sig = _gaussian_signatures()
    cfg = SystemConfig(K=1, Nc=16, Q=16, L=10, N0=0.5, sigma2=(2.0,))
    assert not mcrb_report(cfg, sig, [0]).tau_divergent.any()


def test_gabor_bandwidth_grows_with_oversampling():
    values = [gabor_bandwidth(_rectangular(Q), 1 / Q) for Q in (4, 12, 48)]
    assert values[0] < values[1] < values[2]


def test_slope_energy_counts_chip_edges():
    # 칩 경계 5 곳 + 지지 구간 양 끝: (2·5 + 1)·Q/Nc
    assert slope_energy(_rectangular(12), 1 / 12) == pytest.approx(11 * 12 / 8, rel=1e-12)
    assert slope_bandwidth(_rectangular(12), 1 / 12) == pytest.approx(
        np.sqrt(11 * 12 / 8) / (2 * np.pi), rel=1e-12)
    with pytest.raises(InputDomainError):
        slope_bandwidth(np.zeros(8), 1.0)


def test_rectangular_delay_bound_shrinks_with_oversampling():
    bounds = []
    for Q in (4, 12, 48):
        sig = SignatureSet.from_waveforms(_rectangular(Q)[None, :], Q=Q, Nc=8, L=80)
        cfg = SystemConfig(K=1, Nc=8, Q=Q, L=80, Lp=4, N0=1.0, sigma2=(1.0,))
        bounds.append(mcrb_report(cfg, sig, [0]).var_tau_bound[0])
    assert bounds[0] > bounds[1] > bounds[2] > 0


def test_doubling_noise_halves_fisher_entries():
    cfg = SystemConfig(K=2, Nc=8, Q=12, L=80, Lp=4, N0=1.0, sigma2=(1.0, 2.0))
    sig = generate_signatures(cfg, seed=0)
    base = fisher_diagonal(cfg, sig, [0, 10])
    np.testing.assert_array_equal(base[:4], 160.0)
    doubled = fisher_diagonal(cfg.model_copy(update={"N0": 2.0}), sig, [0, 10])
    np.testing.assert_allclose(doubled, base / 2, rtol=1e-15)


@pytest.mark.parametrize("smooth", [False, True])
def test_report_delay_bound_is_inverse_fisher_entry(smooth):
    if smooth:
        sig = _gaussian_signatures()
        cfg = SystemConfig(K=1, Nc=16, Q=16, L=10, N0=0.5, sigma2=(2.0,))
        delays = [0]
    else:
        cfg = SystemConfig(K=2, Nc=8, Q=12, L=80, Lp=4, N0=1.0, sigma2=(1.0, 1.0))
        sig = generate_signatures(cfg, seed=0)
        delays = [0, 10]
    report = mcrb_report(cfg, sig, delays)
    np.testing.assert_allclose(report.var_tau_bound, 1.0 / report.fisher_diag[2 * cfg.K:],
                               rtol=1e-12)
