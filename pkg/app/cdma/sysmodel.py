"""비동기 DS-CDMA 관측 모델 — r = S(τ)·A·d + w.

샘플 벡터 길이 M = Q·Nc·(L+1) − 1.
지연 τ_k 는 샘플 격자(T_s = T_c/Q) 위의 정수 오프셋 delta 로 표현하며
0 ≤ delta < Q·Nc/2 (τ_k ∈ [0, T_b/2)).

사용법:
    cfg = SystemConfig(K=5, Nc=8, Q=12, L=80, Lp=4, N0=1.0, sigma2=(...))
    sig = generate_signatures(cfg, seed=7)
    truth = draw_scenario(cfg, seed=11, tau_max_fraction=0.5)
    r = simulate_received(cfg, sig, truth, seed=13)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import InputDomainError

logger = logging.getLogger("mcsage.sysmodel")

ChannelKind = Literal["rayleigh", "awgn"]


# ── SystemConfig ──────────────────────────────────────────────────────────────


class SystemConfig(BaseModel):
    """시나리오 상수 전체. 생성 후 불변."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    K: int = Field(..., ge=1, description="사용자 수")
    Nc: int = Field(..., ge=1, description="심볼당 칩 수")
    Q: int = Field(..., ge=1, description="칩당 샘플 수")
    L: int = Field(..., ge=1, description="프레임당 심볼 수")
    Lp: int = Field(default=0, ge=0, description="프레임 선두 pilot 심볼 수")
    N0: float = Field(..., gt=0, allow_inf_nan=False, description="잡음 레벨 (선형)")
    sigma2: tuple[float, ...] = Field(..., description="사용자별 채널 분산 σ_k² (선형)")
    Nt: int = Field(default=50, ge=1, description="E-step 당 보존 Gibbs 샘플 수")
    burn_in: int = Field(default=10, ge=0, description="버리는 Gibbs sweep 수")
    sage_iters: int = Field(default=25, ge=1, description="SAGE 파라미터 갱신 총 횟수")
    seed: int = Field(default=0, ge=0, lt=2**64)
    early_stop_tol: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_consistency(self) -> SystemConfig:
        if len(self.sigma2) != self.K:
            raise ValueError(f"sigma2 는 K={self.K} 개여야 합니다 (현재 {len(self.sigma2)}개)")
        if any(not math.isfinite(s) or s <= 0 for s in self.sigma2):
            raise ValueError("sigma2 의 모든 값은 유한한 양수여야 합니다")
        if self.Lp >= self.L:
            raise ValueError(f"Lp({self.Lp}) < L({self.L}) 이어야 합니다 (payload 최소 1개)")
        return self

    @property
    def samples_per_symbol(self) -> int:
        return self.Q * self.Nc

    @property
    def M(self) -> int:
        return self.Q * self.Nc * (self.L + 1) - 1

    @property
    def n_delays(self) -> int:
        """지연 격자 크기 — delta < Q·Nc/2 를 만족하는 정수 개수."""
        return (self.Q * self.Nc + 1) // 2

    @property
    def payload_len(self) -> int:
        return self.L - self.Lp


# ── Signatures ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SignatureSet:
    """사용자별 오버샘플 확산 파형 (에너지 1) + 배치 규칙에 필요한 프레임 치수."""

    waveforms: np.ndarray
    Q: int
    Nc: int
    L: int
    chips: np.ndarray | None = None
    shape: Literal["rectangular", "custom"] = "rectangular"

    @property
    def K(self) -> int:
        return self.waveforms.shape[0]

    @property
    def W(self) -> int:
        return self.Q * self.Nc

    @property
    def M(self) -> int:
        return self.W * (self.L + 1) - 1

    @property
    def n_delays(self) -> int:
        return (self.W + 1) // 2

    @classmethod
    def from_waveforms(cls, waveforms, *, Q: int, Nc: int, L: int) -> SignatureSet:
        """임의의 오버샘플 파형으로 구성. 각 파형은 에너지 1로 정규화된다."""
        w = np.atleast_2d(np.asarray(waveforms, dtype=np.complex128))
        if w.shape[1] != Q * Nc:
            raise InputDomainError(f"파형 길이 {w.shape[1]} != Q·Nc = {Q * Nc}")
        energy = np.sum(np.abs(w) ** 2, axis=1)
        if np.any(energy == 0):
            raise InputDomainError("에너지가 0인 파형은 사용할 수 없습니다")
        w = w / np.sqrt(energy)[:, None]
        w.setflags(write=False)
        return cls(waveforms=w, Q=Q, Nc=Nc, L=L, shape="custom")


def generate_signatures(cfg: SystemConfig, seed: int) -> SignatureSet:
    """i.i.d. ±1 칩 + 직사각 칩 파형 (칩당 Q 샘플 반복), 전체 에너지 1."""
    rng = np.random.default_rng(seed)
    chips = (2 * rng.integers(0, 2, size=(cfg.K, cfg.Nc)) - 1).astype(np.int8)
    waveforms = np.repeat(chips, cfg.Q, axis=1).astype(np.complex128)
    waveforms /= math.sqrt(cfg.Q * cfg.Nc)
    chips.setflags(write=False)
    waveforms.setflags(write=False)
    return SignatureSet(waveforms=waveforms, Q=cfg.Q, Nc=cfg.Nc, L=cfg.L, chips=chips)


def check_delay(delta: int, n_delays: int) -> int:
    if not 0 <= int(delta) < n_delays:
        raise InputDomainError(f"delta={delta} 가 지연 격자 [0, {n_delays}) 밖입니다")
    return int(delta)


def _check_user(k: int, K: int) -> int:
    if not 0 <= int(k) < K:
        raise InputDomainError(f"사용자 인덱스 k={k} 가 [0, {K}) 밖입니다")
    return int(k)


def _check_symbol(ell: int, L: int) -> int:
    if not 0 <= int(ell) < L:
        raise InputDomainError(f"심볼 인덱스 ell={ell} 가 [0, {L}) 밖입니다")
    return int(ell)


def spreading_vector(sig: SignatureSet, k: int, delta: int, ell: int) -> np.ndarray:
    """S_k(τ_k, ℓ) — 샘플 Q·Nc·ℓ + delta 부터 k번째 파형을 배치한 길이 M 벡터."""
    k = _check_user(k, sig.K)
    delta = check_delay(delta, sig.n_delays)
    ell = _check_symbol(ell, sig.L)
    v = np.zeros(sig.M, dtype=np.complex128)
    start = sig.W * ell + delta
    v[start:start + sig.W] = sig.waveforms[k]
    return v


def spreading_matrix(sig: SignatureSet, k: int, delta: int) -> np.ndarray:
    """S_k(τ_k) — 열 ℓ = spreading_vector(k, delta, ℓ) 인 M×L 행렬."""
    return np.stack([spreading_vector(sig, k, delta, ell) for ell in range(sig.L)], axis=1)


def effective_matrix(sig: SignatureSet, a, tau) -> np.ndarray:
    """G = S(τ)·A, 열 인덱스 q = k·L + ℓ."""
    a = np.asarray(a, dtype=np.complex128)
    if a.shape != (sig.K,) or len(tau) != sig.K:
        raise InputDomainError("a, tau 길이는 K 와 같아야 합니다")
    return np.concatenate(
        [spreading_matrix(sig, k, tau[k]) * a[k] for k in range(sig.K)], axis=1
    )


def matched_filter_bank(sig: SignatureSet, k: int, r: np.ndarray,
                        n_symbols: int | None = None) -> np.ndarray:
    """S_k†(ℓ, δ)·r 표 — shape (n_symbols, n_delays).

    슬라이딩 윈도 상관 한 번으로 모든 (ℓ, δ) 가설을 계산한다.
    n_symbols 를 줄이면 앞쪽 샘플만 필요하다 (pilot 구간 초기화용).
    """
    k = _check_user(k, sig.K)
    n_symbols = sig.L if n_symbols is None else n_symbols
    W, nd = sig.W, sig.n_delays
    need = W * (n_symbols - 1) + nd - 1 + W
    r = np.asarray(r, dtype=np.complex128)
    if r.shape[0] < need:
        raise InputDomainError(f"샘플 수 {r.shape[0]} < 필요 샘플 수 {need}")
    windows = sliding_window_view(r[:need], W)
    corr = windows @ np.conj(sig.waveforms[k])
    idx = W * np.arange(n_symbols)[:, None] + np.arange(nd)[None, :]
    return corr[idx]


def waveform_cross_correlation(sig: SignatureSet, k: int, k2: int) -> np.ndarray:
    """비주기 상호상관 xc[s + W − 1] = Σ_n conj(w_k[n])·w_k2[n + s], |s| < W."""
    return np.correlate(sig.waveforms[k2], sig.waveforms[k], mode="full")


def xc_lookup(xc: np.ndarray, W: int, shift) -> np.ndarray:
    """상호상관 값을 lag 배열로 조회. |shift| ≥ W 이면 0."""
    shift = np.asarray(shift, dtype=np.int64)
    values = xc[np.clip(shift + W - 1, 0, 2 * W - 2)]
    return np.where(np.abs(shift) < W, values, 0.0)


# ── Scenario ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class PilotPattern:
    """수신기가 아는 pilot 정보. values 는 mask 위치에서만 의미가 있다 (그 외 0)."""

    mask: np.ndarray
    values: np.ndarray

    @classmethod
    def head(cls, K: int, L: int, Lp: int) -> PilotPattern:
        mask = np.zeros((K, L), dtype=bool)
        mask[:, :Lp] = True
        values = np.where(mask, 1, 0).astype(np.int8)
        return cls(mask=mask, values=values)

    @property
    def n_free(self) -> int:
        return int(np.count_nonzero(~self.mask))

    def apply(self, d: np.ndarray) -> np.ndarray:
        """d 의 pilot 위치를 알려진 값으로 덮어쓴 사본."""
        out = np.array(d, dtype=np.int8, copy=True)
        out[self.mask] = self.values[self.mask]
        return out


@dataclass(frozen=True)
class ScenarioTruth:
    a: np.ndarray
    tau: np.ndarray
    d: np.ndarray
    pilot_mask: np.ndarray

    @property
    def pilots(self) -> PilotPattern:
        values = np.where(self.pilot_mask, self.d, 0).astype(np.int8)
        return PilotPattern(mask=self.pilot_mask, values=values)


def delay_grid_size(cfg: SystemConfig, tau_max_fraction: float) -> int:
    """[0, tau_max_fraction·T_b) 를 덮는 지연 격자 점 개수."""
    if not 0 < tau_max_fraction <= 0.5:
        raise InputDomainError(f"tau_max_fraction={tau_max_fraction} 는 (0, 0.5] 이어야 합니다")
    n = math.ceil(tau_max_fraction * cfg.samples_per_symbol - 1e-9)
    return max(1, min(cfg.n_delays, n))


def draw_scenario(cfg: SystemConfig, seed: int, tau_max_fraction: float = 0.5, *,
                  channel: ChannelKind = "rayleigh") -> ScenarioTruth:
    """delta_k 균등, payload ±1 균등, 선두 Lp 개 pilot = +1.

    channel="rayleigh": a_k ~ CN(0, σ_k²)
    channel="awgn":     |a_k|² = σ_k², 위상만 균등 (페이딩 없음)
    """
    n_grid = delay_grid_size(cfg, tau_max_fraction)
    rng = np.random.default_rng(seed)
    if channel == "rayleigh":
        scale = np.sqrt(np.asarray(cfg.sigma2) / 2.0)
        a = scale * (rng.standard_normal(cfg.K) + 1j * rng.standard_normal(cfg.K))
    elif channel == "awgn":
        a = np.sqrt(np.asarray(cfg.sigma2)) * np.exp(2j * np.pi * rng.random(cfg.K))
    else:
        raise InputDomainError(f"알 수 없는 채널 종류: {channel}")
    tau = rng.integers(0, n_grid, size=cfg.K).astype(np.int64)
    d = (2 * rng.integers(0, 2, size=(cfg.K, cfg.L)) - 1).astype(np.int8)
    pilots = PilotPattern.head(cfg.K, cfg.L, cfg.Lp)
    d = pilots.apply(d)
    for arr in (a, tau, d, pilots.mask):
        arr.setflags(write=False)
    return ScenarioTruth(a=a, tau=tau, d=d, pilot_mask=pilots.mask)


def _check_dimensions(cfg: SystemConfig, sig: SignatureSet, truth: ScenarioTruth) -> None:
    if (sig.K, sig.Q, sig.Nc, sig.L) != (cfg.K, cfg.Q, cfg.Nc, cfg.L):
        raise InputDomainError("SignatureSet 치수가 SystemConfig 와 다릅니다")
    if truth.a.shape != (cfg.K,) or truth.tau.shape != (cfg.K,):
        raise InputDomainError("ScenarioTruth 의 a/tau 길이가 K 와 다릅니다")
    if truth.d.shape != (cfg.K, cfg.L) or truth.pilot_mask.shape != (cfg.K, cfg.L):
        raise InputDomainError("ScenarioTruth 의 d/pilot_mask 가 K×L 이 아닙니다")
    for delta in truth.tau:
        check_delay(delta, cfg.n_delays)


def user_signal(sig: SignatureSet, k: int, a: complex, delta: int, d) -> np.ndarray:
    """a·Σ_ℓ d(ℓ)·S_k(ℓ, delta) — 길이 M. 한 사용자의 심볼은 겹치지 않아 블록 하나로 놓인다."""
    k = _check_user(k, sig.K)
    delta = check_delay(delta, sig.n_delays)
    d = np.asarray(d)
    if d.shape != (sig.L,):
        raise InputDomainError(f"심볼 길이 {d.shape} != L = {sig.L}")
    v = np.zeros(sig.M, dtype=np.complex128)
    v[delta:delta + sig.L * sig.W] = np.outer(a * d, sig.waveforms[k]).ravel()
    return v


def simulate_received(cfg: SystemConfig, sig: SignatureSet, truth: ScenarioTruth,
                      seed: int, *, noise: bool = True) -> np.ndarray:
    """r = Σ_k Σ_ℓ S_k(τ_k, ℓ)·a_k·d_k(ℓ) + w,  w ~ CN(0, N0·I)."""
    _check_dimensions(cfg, sig, truth)
    r = np.zeros(cfg.M, dtype=np.complex128)
    for k in range(cfg.K):
        r = r + user_signal(sig, k, truth.a[k], truth.tau[k], truth.d[k])
    logger.debug("수신 신호 합성: K=%d, M=%d, noise=%s", cfg.K, cfg.M, noise)
    if noise:
        rng = np.random.default_rng(seed)
        std = math.sqrt(cfg.N0 / 2.0)
        w = std * (rng.standard_normal(cfg.M) + 1j * rng.standard_normal(cfg.M))
        r = r + w
    return r


def delay_in_symbols(delta, cfg: SystemConfig):
    """샘플 격자 지연 → τ/T_b."""
    return np.asarray(delta, dtype=np.float64) / cfg.samples_per_symbol
