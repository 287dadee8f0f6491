"""관측 모델 — 배치 규칙, 선형성, 난수 분포."""

from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from app.cdma.sysmodel import (
    PilotPattern,
    SignatureSet,
    SystemConfig,
    delay_grid_size,
    delay_in_symbols,
    draw_scenario,
    effective_matrix,
    generate_signatures,
    matched_filter_bank,
    simulate_received,
    spreading_matrix,
    spreading_vector,
    user_signal,
    waveform_cross_correlation,
    xc_lookup,
)
from app.errors import InputDomainError

DESK = dict(K=5, Nc=8, Q=12, L=80, Lp=4, N0=1.0, sigma2=(0.4, 0.63, 1.0, 1.58, 2.5))


class TestSystemConfig:
    def test_dimensions(self):
        cfg = SystemConfig(**DESK)
        assert cfg.M == 96 * 81 - 1
        assert cfg.n_delays == 48
        assert cfg.payload_len == 76

    def test_odd_samples_per_symbol(self):
        cfg = SystemConfig(K=1, Nc=3, Q=1, L=2, N0=1.0, sigma2=(1.0,))
        assert cfg.n_delays == 2  # delta ∈ {0, 1} < 1.5

    @pytest.mark.parametrize("bad", [
        dict(sigma2=(1.0,) * 4),
        dict(sigma2=(1.0, 1.0, 0.0, 1.0, 1.0)),
        dict(Lp=80),
        dict(N0=0.0),
        dict(K=0, sigma2=()),
        dict(unknown=1),
    ])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValidationError):
            SystemConfig(**{**DESK, **bad})

    def test_frozen(self):
        cfg = SystemConfig(**DESK)
        with pytest.raises(ValidationError):
            cfg.K = 3


class TestSignatures:
    def test_unit_energy_rectangular(self):
        cfg = SystemConfig(**DESK)
        sig = generate_signatures(cfg, seed=3)
        assert sig.shape == "rectangular"
        assert set(np.unique(sig.chips)) <= {-1, 1}
        np.testing.assert_allclose(np.sum(np.abs(sig.waveforms) ** 2, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.abs(sig.waveforms), 1 / np.sqrt(96))
        # 칩 하나가 Q 샘플 동안 유지된다
        np.testing.assert_array_equal(sig.waveforms[:, :12], np.repeat(sig.waveforms[:, :1], 12, 1))

    def test_same_seed_same_codes(self):
        cfg = SystemConfig(**DESK)
        a = generate_signatures(cfg, seed=11)
        b = generate_signatures(cfg, seed=11)
        np.testing.assert_array_equal(a.chips, b.chips)

    def test_from_waveforms_normalises(self):
        sig = SignatureSet.from_waveforms([[2.0, 0, 0, 0], [1j, 1j, 0, 0]], Q=2, Nc=2, L=3)
        assert sig.shape == "custom"
        np.testing.assert_allclose(np.sum(np.abs(sig.waveforms) ** 2, axis=1), 1.0)

    def test_from_waveforms_rejects_zero_and_bad_length(self):
        with pytest.raises(InputDomainError):
            SignatureSet.from_waveforms([[0, 0, 0, 0]], Q=2, Nc=2, L=3)
        with pytest.raises(InputDomainError):
            SignatureSet.from_waveforms([[1, 0, 0]], Q=2, Nc=2, L=3)


class TestPlacement:
    @pytest.fixture
    def sig(self):
        return generate_signatures(SystemConfig(**DESK), seed=5)

    def test_spreading_vector_support(self, sig):
        v = spreading_vector(sig, k=1, delta=17, ell=3)
        start = 96 * 3 + 17
        assert np.flatnonzero(v).min() == start
        np.testing.assert_array_equal(v[start:start + 96], sig.waveforms[1])
        assert np.vdot(v, v).real == pytest.approx(1.0)

    def test_last_symbol_max_delay_fits(self, sig):
        v = spreading_vector(sig, k=0, delta=sig.n_delays - 1, ell=sig.L - 1)
        assert v.shape == (sig.M,)
        assert np.count_nonzero(v) == 96

    @pytest.mark.parametrize("k, delta, ell", [(5, 0, 0), (0, 48, 0), (0, -1, 0), (0, 0, 80)])
    def test_out_of_range(self, sig, k, delta, ell):
        with pytest.raises(InputDomainError):
            spreading_vector(sig, k, delta, ell)

    def test_spreading_matrix_columns(self, sig):
        S = spreading_matrix(sig, 2, 9)
        assert S.shape == (sig.M, sig.L)
        np.testing.assert_allclose(S.conj().T @ S, np.eye(sig.L), atol=1e-12)

    def test_cross_correlation_matches_inner_products(self, sig):
        xc = waveform_cross_correlation(sig, 0, 3)
        for (ell, d1), (ell2, d2) in [((4, 10), (4, 30)), ((4, 40), (5, 2)), ((6, 0), (5, 47))]:
            direct = np.vdot(spreading_vector(sig, 0, d1, ell), spreading_vector(sig, 3, d2, ell2))
            shift = 96 * (ell - ell2) + d1 - d2
            assert complex(xc_lookup(xc, 96, shift)) == pytest.approx(direct, abs=1e-12)

    def test_matched_filter_bank(self, sig):
        r = np.random.default_rng(0).standard_normal(sig.M) + 0j
        bank = matched_filter_bank(sig, 4, r)
        assert bank.shape == (sig.L, sig.n_delays)
        for ell, delta in [(0, 0), (10, 47), (79, 23)]:
            expected = np.vdot(spreading_vector(sig, 4, delta, ell), r)
            assert bank[ell, delta] == pytest.approx(expected)


class TestScenario:
    def test_noise_free_equals_linear_model(self):
        cfg = SystemConfig(**DESK)
        sig = generate_signatures(cfg, seed=1)
        truth = draw_scenario(cfg, seed=2)
        r = simulate_received(cfg, sig, truth, seed=3, noise=False)
        G = effective_matrix(sig, truth.a, truth.tau)
        np.testing.assert_allclose(r, G @ truth.d.ravel(), atol=1e-12)

    def test_noise_power(self):
        cfg = SystemConfig(**{**DESK, "N0": 0.5})
        sig = generate_signatures(cfg, seed=1)
        truth = draw_scenario(cfg, seed=2)
        clean = simulate_received(cfg, sig, truth, seed=3, noise=False)
        noisy = simulate_received(cfg, sig, truth, seed=3)
        assert np.mean(np.abs(noisy - clean) ** 2) == pytest.approx(0.5, rel=0.05)

    def test_pilots_and_delay_range(self):
        cfg = SystemConfig(**DESK)
        truth = draw_scenario(cfg, seed=9, tau_max_fraction=0.1)
        assert np.all(truth.d[:, :4] == 1)
        assert truth.pilot_mask[:, :4].all() and not truth.pilot_mask[:, 4:].any()
        assert np.all((truth.tau >= 0) & (truth.tau < 10))
        assert set(np.unique(truth.d)) <= {-1, 1}

    def test_delay_grid_size(self):
        cfg = SystemConfig(**DESK)
        assert delay_grid_size(cfg, 0.5) == 48
        assert delay_grid_size(cfg, 0.1) == 10
        assert delay_grid_size(cfg, 1e-6) == 1
        with pytest.raises(InputDomainError):
            delay_grid_size(cfg, 0.6)

    def test_channel_power(self):
        cfg = SystemConfig(K=1, Nc=1, Q=1, L=1, N0=1.0, sigma2=(1.0,))
        power = [abs(draw_scenario(cfg, seed=s).a[0]) ** 2 for s in range(20_000)]
        assert np.mean(power) == pytest.approx(1.0, abs=0.03)

    def test_awgn_channel_fixes_gain_magnitude(self):
        cfg = SystemConfig(**DESK)
        truth = draw_scenario(cfg, seed=2, channel="awgn")
        np.testing.assert_allclose(np.abs(truth.a) ** 2, cfg.sigma2, rtol=1e-12)
        assert len(set(np.round(np.angle(truth.a), 9))) == cfg.K
        with pytest.raises(InputDomainError):
            draw_scenario(cfg, seed=2, channel="ricean")

    def test_user_signal_sums_to_received(self):
        cfg = SystemConfig(**DESK)
        sig = generate_signatures(cfg, seed=1)
        truth = draw_scenario(cfg, seed=2)
        r = simulate_received(cfg, sig, truth, seed=3, noise=False)
        parts = [user_signal(sig, k, truth.a[k], truth.tau[k], truth.d[k]) for k in range(cfg.K)]
        np.testing.assert_allclose(np.sum(parts, axis=0), r, atol=1e-12)
        with pytest.raises(InputDomainError):
            user_signal(sig, 0, 1.0, 0, truth.d[0, :-1])

    def test_pilot_pattern_apply(self):
        pilots = PilotPattern.head(2, 5, 2)
        d = -np.ones((2, 5), dtype=np.int8)
        out = pilots.apply(d)
        assert np.all(out[:, :2] == 1) and np.all(out[:, 2:] == -1)
        assert pilots.n_free == 6

    def test_delay_in_symbols(self):
        cfg = SystemConfig(**DESK)
        assert delay_in_symbols(48, cfg) == pytest.approx(0.5)
