"""Modified Cramér-Rao 하한 — 채널 이득과 지연 추정 MSE 의 기준선.

시간 단위는 칩 주기 T_c (샘플 간격 T_s = 1/Q). T_b² 로 바꾸려면 Nc² 로 나눈다.

직사각 칩 파형은 연속 시간 대역폭이 발산하므로 지연 하한은 0 이 된다.
이 경우 McrbReport 는 tau_divergent 를 세우고, 0 을 덧댄 샘플 지연 벡터의
미분으로 구한 대용값을 보고한다. 보고하는 지연 하한은 언제나 1 / Fisher 지연 항이다.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from app.cdma.sysmodel import SignatureSet, SystemConfig, check_delay
from app.errors import InputDomainError

logger = logging.getLogger("mcsage.bounds")


def gabor_bandwidth(waveform, sample_interval: float, *, oversample: int = 1) -> float:
    """B = sqrt(Σ f²|X(f)|² / Σ |X(f)|²). oversample > 1 이면 DFT 전에 zero-padding."""
    w = np.asarray(waveform, dtype=np.complex128).ravel()
    if sample_interval <= 0:
        raise InputDomainError(f"sample_interval={sample_interval} 는 양수여야 합니다")
    if oversample < 1:
        raise InputDomainError(f"oversample={oversample} 는 1 이상이어야 합니다")
    if not np.any(w):
        raise InputDomainError("에너지가 0인 파형의 대역폭은 정의되지 않습니다")
    n = w.size * oversample
    power = np.abs(np.fft.fft(w, n)) ** 2
    freqs = np.fft.fftfreq(n, d=sample_interval)
    return float(np.sqrt(np.sum(freqs ** 2 * power) / np.sum(power)))


def slope_energy(waveform, sample_interval: float) -> float:
    """‖∂S/∂τ‖² — 0 을 덧댄 지연 벡터의 중앙 차분 미분 에너지.

    양쪽에 0 두 개씩 덧대어 지지 구간 양 끝의 0 → 칩 도약도 중앙 차분으로 잡는다.
    """
    w = np.asarray(waveform, dtype=np.complex128).ravel()
    if sample_interval <= 0:
        raise InputDomainError(f"sample_interval={sample_interval} 는 양수여야 합니다")
    slope = np.gradient(np.pad(w, 2), sample_interval)
    return float(np.sum(np.abs(slope) ** 2))


def slope_bandwidth(waveform, sample_interval: float) -> float:
    """B = ‖∂S/∂τ‖ / (2π‖S‖). Parseval 로 Gabor 대역폭의 시간 영역 표현."""
    w = np.asarray(waveform, dtype=np.complex128).ravel()
    energy = float(np.sum(np.abs(w) ** 2))
    if energy == 0:
        raise InputDomainError("에너지가 0인 파형의 대역폭은 정의되지 않습니다")
    return math.sqrt(slope_energy(w, sample_interval) / energy) / (2.0 * math.pi)


def mcrb_channel(N0: float, L: int) -> float:
    if N0 <= 0 or L < 1:
        raise InputDomainError(f"N0={N0} > 0, L={L} ≥ 1 이어야 합니다")
    return N0 / L


def mcrb_delay(avg_snr: float, L: int, bandwidth: float) -> float:
    """1 / (8π²·L·γ̄·B²). B = ∞ 이면 0."""
    if avg_snr <= 0 or L < 1:
        raise InputDomainError(f"avg_snr={avg_snr} > 0, L={L} ≥ 1 이어야 합니다")
    if math.isinf(bandwidth):
        return 0.0
    if not bandwidth > 0:
        raise InputDomainError("대역폭 0 에서는 지연 하한이 정의되지 않습니다")
    return 1.0 / (8.0 * math.pi ** 2 * L * avg_snr * bandwidth ** 2)


def fisher_diagonal(cfg: SystemConfig, sig: SignatureSet, delays) -> np.ndarray:
    """수정 Fisher 정보 대각 — [Re a (K), Im a (K), τ (K)].

    지연 항은 심볼 배치를 평행이동할 뿐이므로 delays 는 격자 검증에만 쓰인다.
    지연 항 = (2/N0)·σ_k²·L·slope_energy(w_k).
    """
    if len(delays) != cfg.K:
        raise InputDomainError(f"delays 길이 {len(delays)} != K = {cfg.K}")
    for delta in delays:
        check_delay(delta, cfg.n_delays)
    ts = 1.0 / cfg.Q
    gain = np.full(2 * cfg.K, 2.0 * cfg.L / cfg.N0)
    slopes = np.array([slope_energy(sig.waveforms[k], ts) for k in range(cfg.K)])
    delay = 2.0 / cfg.N0 * np.asarray(cfg.sigma2) * cfg.L * slopes
    return np.concatenate([gain, delay])


@dataclass(frozen=True)
class McrbReport:
    var_a_bound: np.ndarray
    var_tau_bound: np.ndarray
    tau_divergent: np.ndarray
    bandwidth: np.ndarray
    fisher_diag: np.ndarray

    def to_dict(self) -> dict:
        return {
            "var_a_bound": self.var_a_bound.tolist(),
            "var_tau_bound_tc2": self.var_tau_bound.tolist(),
            "tau_divergent": self.tau_divergent.tolist(),
            "gabor_bandwidth": self.bandwidth.tolist(),
            "fisher_diag": self.fisher_diag.tolist(),
        }


def mcrb_report(cfg: SystemConfig, sig: SignatureSet, delays) -> McrbReport:
    ts = 1.0 / cfg.Q
    bandwidth = np.array([slope_bandwidth(sig.waveforms[k], ts) for k in range(cfg.K)])
    var_tau = np.array([
        mcrb_delay(cfg.sigma2[k] / cfg.N0, cfg.L, bandwidth[k]) for k in range(cfg.K)
    ])
    divergent = np.full(cfg.K, sig.shape == "rectangular")
    if divergent.any():
        logger.debug("직사각 칩 파형: 지연 하한은 샘플 격자 대용값으로 보고")
    return McrbReport(
        var_a_bound=np.full(cfg.K, mcrb_channel(cfg.N0, cfg.L)),
        var_tau_bound=var_tau,
        tau_divergent=divergent,
        bandwidth=bandwidth,
        fisher_diag=fisher_diagonal(cfg, sig, delays),
    )
