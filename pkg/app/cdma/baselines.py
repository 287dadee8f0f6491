"""기준 수신기 — pilot 기반 MMSE-SE 초기화와 지연 재탐색, 지연을 아는 SAGE, 단일 사용자 하한."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from app.cdma.gibbs import EffectiveModel
from app.cdma.sage import ParameterState, ReceiverResult, run_receiver
from app.cdma.sysmodel import (
    PilotPattern,
    SignatureSet,
    SystemConfig,
    check_delay,
    matched_filter_bank,
    user_signal,
)
from app.errors import InputDomainError, UnsupportedConfigError

logger = logging.getLogger("mcsage.baselines")

_FRAME_CHUNK = 10_000
# pilot 창 연속 소거 반복 수
_SIC_PASSES = 2


@dataclass(frozen=True)
class InitEstimate:
    a0: np.ndarray
    tau0: np.ndarray
    d0: np.ndarray

    @property
    def state(self) -> ParameterState:
        return ParameterState(a_hat=self.a0, tau_hat=self.tau0)


def _pilot_values(cfg: SystemConfig, pilots: PilotPattern, k: int) -> np.ndarray:
    return pilots.values[k, :cfg.Lp].astype(np.float64)


def _pilot_columns(cfg: SystemConfig, sig: SignatureSet, pilots: PilotPattern, k: int,
                   delays) -> np.ndarray:
    """열 j = Σ_{ℓ<Lp} p_k(ℓ)·S_k(ℓ, delays[j]) 를 pilot 창 길이로 자른 행렬.

    delta < W/2 이므로 pilot 블록은 항상 창 (W·(Lp+1) − 1 샘플) 안에 들어간다.
    """
    block = np.outer(_pilot_values(cfg, pilots, k), sig.waveforms[k]).ravel()
    delays = np.atleast_1d(np.asarray(delays, dtype=np.int64))
    cols = np.zeros((cfg.samples_per_symbol * (cfg.Lp + 1) - 1, delays.size),
                    dtype=np.complex128)
    for j, delta in enumerate(delays):
        cols[delta:delta + block.size, j] = block
    return cols


def _check_init_inputs(cfg: SystemConfig, pilots: PilotPattern, r) -> np.ndarray:
    if cfg.Lp == 0:
        raise UnsupportedConfigError("MMSE-SE 초기화에는 pilot 심볼(Lp ≥ 1)이 필요합니다")
    if not pilots.mask[:, :cfg.Lp].all():
        raise InputDomainError("MMSE-SE 초기화는 프레임 선두 Lp 개 pilot 을 가정합니다")
    r = np.asarray(r, dtype=np.complex128)
    if r.shape != (cfg.M,):
        raise InputDomainError(f"r 길이 {r.shape[0]} != M = {cfg.M}")
    return r


def pilot_gains(cfg: SystemConfig, sig: SignatureSet, r: np.ndarray, pilots: PilotPattern,
                tau) -> np.ndarray:
    """주어진 지연에서 K 사용자 이득의 결합 MMSE 추정 (pilot 창만 사용).

    â = (C†C + N0·Σ⁻¹)⁻¹·C†r_w,  C 의 k 열 = Σ_{ℓ<Lp} p_k(ℓ)·S_k(ℓ, τ_k)
    """
    r = _check_init_inputs(cfg, pilots, r)
    tau = np.asarray(tau, dtype=np.int64)
    if tau.shape != (cfg.K,):
        raise InputDomainError(f"tau 길이 {tau.shape} != K = {cfg.K}")
    for delta in tau:
        check_delay(delta, cfg.n_delays)
    C = np.concatenate([_pilot_columns(cfg, sig, pilots, k, tau[k]) for k in range(cfg.K)],
                       axis=1)
    CH = np.conj(C).T
    ridge = cfg.N0 * np.diag(1.0 / np.asarray(cfg.sigma2))
    return np.linalg.solve(CH @ C + ridge, CH @ r[:C.shape[0]])


def mmse_symbols(cfg: SystemConfig, sig: SignatureSet, r: np.ndarray, pilots: PilotPattern,
                 a, tau) -> np.ndarray:
    """â 로 가중한 선형 MMSE 심볼 추정의 부호. pilot 은 알려진 값으로 빼고 푼다.

    d_free = (Re R_ff + (N0/2)·I)⁻¹·(Re z_f − Re R_fp·p)
    """
    model = EffectiveModel.from_parameters(sig, r, a, tau, cfg.N0)
    known = pilots.mask.ravel()
    free = ~known
    rr, zr = model.gram_re, model.matched_re
    p = pilots.values.ravel()[known].astype(np.float64)
    rhs = zr[free] - rr[np.ix_(free, known)] @ p
    lhs = rr[np.ix_(free, free)] + 0.5 * cfg.N0 * np.eye(int(free.sum()))
    d = np.zeros(model.n)
    d[free] = np.linalg.solve(lhs, rhs)
    return pilots.apply(np.where(d >= 0, 1, -1).reshape(cfg.K, cfg.L))


def mmse_se_init(cfg: SystemConfig, sig: SignatureSet, r: np.ndarray,
                 pilots: PilotPattern) -> InitEstimate:
    """pilot 창의 MMSE 분리 추정 (MMSE-SE).

    1. 전력이 큰 사용자부터 잔차에서 지연 가설별 단일 탭 MMSE â(δ) 를 구하고
       가장 강한 경로 τ0 = argmax |â(δ)| 를 고른 뒤 그 기여를 뺀다 (2 회 반복).
    2. 고른 지연에서 K 사용자 이득을 결합 MMSE 로 다시 추정 → a0.
    3. a0 로 가중한 선형 MMSE 심볼 추정 → d0.
    """
    r = _check_init_inputs(cfg, pilots, r)
    n_window = cfg.samples_per_symbol * (cfg.Lp + 1) - 1
    delays = np.arange(cfg.n_delays)
    columns = [_pilot_columns(cfg, sig, pilots, k, delays) for k in range(cfg.K)]
    order = np.argsort(-np.asarray(cfg.sigma2), kind="stable")

    residual = r[:n_window].copy()
    a_tap = np.zeros(cfg.K, dtype=np.complex128)
    tau0 = np.zeros(cfg.K, dtype=np.int64)
    for sweep in range(_SIC_PASSES):
        for k in order:
            if sweep:
                residual += a_tap[k] * columns[k][:, tau0[k]]
            taps = np.conj(columns[k]).T @ residual / (cfg.Lp + cfg.N0 / cfg.sigma2[k])
            tau0[k] = int(np.argmax(np.abs(taps)))
            a_tap[k] = taps[tau0[k]]
            residual -= a_tap[k] * columns[k][:, tau0[k]]

    a0 = pilot_gains(cfg, sig, r, pilots, tau0)
    d0 = mmse_symbols(cfg, sig, r, pilots, a0, tau0)
    logger.debug("MMSE-SE 초기값: tau0=%s", tau0.tolist())
    return InitEstimate(a0=a0, tau0=tau0, d0=d0)


def known_delay_init(cfg: SystemConfig, sig: SignatureSet, r: np.ndarray, pilots: PilotPattern,
                     tau) -> InitEstimate:
    """지연을 알 때의 초기값 — 그 지연에서 결합 MMSE 이득과 선형 MMSE 심볼."""
    tau = np.asarray(tau, dtype=np.int64)
    a0 = pilot_gains(cfg, sig, r, pilots, tau)
    return InitEstimate(a0=a0, tau0=tau, d0=mmse_symbols(cfg, sig, r, pilots, a0, tau))


def refine_delays(cfg: SystemConfig, sig: SignatureSet, r: np.ndarray, pilots: PilotPattern,
                  init: InitEstimate) -> InitEstimate:
    """프레임 전체로 지연을 다시 잡는다. 다른 사용자의 재구성 신호는 빼고 시작한다.

    점수(δ) = |Σ_{pilot} p(ℓ)·B(ℓ, δ)|² + Σ_{payload} |B(ℓ, δ)|²,  B = S_k†(ℓ, δ)·잔차
    payload 항은 심볼 부호와 무관하므로 a0 가 틀려도 쓸 수 있다.
    사용자 순서는 MMSE-SE 와 같고, 끝나면 결합 MMSE 로 a0, d0 를 다시 구한다.
    """
    r = _check_init_inputs(cfg, pilots, r)
    a = np.array(init.a0, dtype=np.complex128)
    tau = np.array(init.tau0, dtype=np.int64)
    d = np.array(init.d0, dtype=np.int8)
    parts = [user_signal(sig, k, a[k], tau[k], d[k]) for k in range(cfg.K)]
    residual = r - np.sum(parts, axis=0)
    for k in np.argsort(-np.asarray(cfg.sigma2), kind="stable"):
        residual += parts[k]
        bank = matched_filter_bank(sig, k, residual)
        mask = pilots.mask[k]
        coherent = np.abs(pilots.values[k, mask].astype(np.float64) @ bank[mask]) ** 2
        score = coherent + np.sum(np.abs(bank[~mask]) ** 2, axis=0)
        tau[k] = int(np.argmax(score))
        column = bank[:, tau[k]]
        a[k] = pilots.values[k, mask].astype(np.float64) @ column[mask]
        a[k] /= mask.sum() + cfg.N0 / cfg.sigma2[k]
        decisions = np.where(np.real(np.conj(a[k]) * column) >= 0, 1, -1)
        d[k] = np.where(mask, pilots.values[k], decisions)
        parts[k] = user_signal(sig, k, a[k], tau[k], d[k])
        residual -= parts[k]
    moved = np.flatnonzero(tau != init.tau0)
    if moved.size:
        logger.debug("지연 재탐색: 사용자 %s 의 τ0 변경", (moved + 1).tolist())
    return known_delay_init(cfg, sig, r, pilots, tau)


def sage_known_tau(cfg: SystemConfig, sig: SignatureSet, r: np.ndarray, true_tau, init_a,
                   pilots: PilotPattern, **kwargs) -> ReceiverResult:
    """지연을 아는 SAGE — 지연 M-step 만 빠진 같은 코드 경로."""
    init = ParameterState(a_hat=init_a, tau_hat=true_tau)
    return run_receiver(cfg, sig, r, init, pilots, known_tau=True, **kwargs)


def rayleigh_bpsk_ber(avg_snr) -> np.ndarray:
    """Rayleigh 페이딩 + 완전한 채널 정보 BPSK 의 BER ½(1 − sqrt(γ̄/(1+γ̄)))."""
    g = np.asarray(avg_snr, dtype=np.float64)
    return 0.5 * (1.0 - np.sqrt(g / (1.0 + g)))


def single_user_bound(cfg: SystemConfig, snr_db_grid, trials: int, seed: int) -> np.ndarray:
    """간섭 없는 단일 사용자, 채널을 아는 BPSK BER 의 Monte-Carlo 추정.

    프레임마다 a ~ CN(0, 1) 하나, payload L−Lp 비트. 정합필터 출력은
    y = a·d + CN(0, N0) 이므로 M 샘플 파형을 만들 필요가 없다.
    """
    if trials < 1:
        raise InputDomainError(f"trials={trials} ≥ 1 이어야 합니다")
    grid = np.atleast_1d(np.asarray(snr_db_grid, dtype=np.float64))
    n_bits = cfg.payload_len
    children = np.random.SeedSequence(seed).spawn(grid.size)
    ber = np.empty(grid.size)
    for i, (snr_db, child) in enumerate(zip(grid, children)):
        rng = np.random.default_rng(child)
        noise_std = math.sqrt(10.0 ** (-snr_db / 10.0) / 2.0)
        errors = 0
        for start in range(0, trials, _FRAME_CHUNK):
            n = min(_FRAME_CHUNK, trials - start)
            a = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
            d = 2 * rng.integers(0, 2, size=(n, n_bits)) - 1
            shape = (n, n_bits)
            w = noise_std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
            y = a[:, None] * d + w
            d_hat = np.where(np.real(np.conj(a)[:, None] * y) >= 0, 1, -1)
            errors += int(np.count_nonzero(d_hat != d))
        ber[i] = errors / (trials * n_bits)
    return ber
