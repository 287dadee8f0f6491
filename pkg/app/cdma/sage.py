"""Monte-Carlo SAGE 수신기 — 사용자 하나씩 (a_k, τ_k) 를 번갈아 갱신한다.

반복 i 의 흐름:
  1. 현재 θ 로 EffectiveModel 조립 → Gibbs E-step (체인은 반복 간 이어짐)
  2. 사용자 k = i mod K 의 Ψ(ℓ, δ) 표 계산
  3. τ_k ← argmax_δ |Σ_ℓ Ψ(ℓ, δ)|,  a_k ← Σ_ℓ Ψ(ℓ, τ_k) / (L + N0/σ_k²)

Ψ 표는 사용자별 정합필터 뱅크와 파형 상호상관만으로 만든다.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from app.cdma.gibbs import (
    LAGS,
    ChainState,
    EffectiveModel,
    SoftStatistics,
    estimate_soft_correlations,
    estimate_soft_symbols,
    exact_soft_statistics,
    init_chain,
)
from app.cdma.sysmodel import (
    PilotPattern,
    SignatureSet,
    SystemConfig,
    check_delay,
    matched_filter_bank,
    spreading_vector,
    waveform_cross_correlation,
    xc_lookup,
)
from app.errors import InputDomainError

logger = logging.getLogger("mcsage.sage")


@dataclass(frozen=True)
class ParameterState:
    a_hat: np.ndarray
    tau_hat: np.ndarray
    iteration: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "a_hat", np.asarray(self.a_hat, dtype=np.complex128).copy())
        object.__setattr__(self, "tau_hat", np.asarray(self.tau_hat, dtype=np.int64).copy())
        if self.a_hat.shape != self.tau_hat.shape or self.a_hat.ndim != 1:
            raise InputDomainError("a_hat, tau_hat 는 길이 K 의 1차원 배열이어야 합니다")

    def updated(self, k: int, a: complex, tau: int) -> ParameterState:
        a_hat = self.a_hat.copy()
        tau_hat = self.tau_hat.copy()
        a_hat[k] = a
        tau_hat[k] = tau
        return ParameterState(a_hat=a_hat, tau_hat=tau_hat, iteration=self.iteration + 1)


@dataclass(frozen=True)
class FrameContext:
    """프레임마다 한 번 계산하는 θ-독립 표: 정합필터 뱅크와 파형 상호상관."""

    sig: SignatureSet
    r: np.ndarray
    banks: list[np.ndarray]
    xcorr: list[list[np.ndarray]]

    @classmethod
    def build(cls, sig: SignatureSet, r: np.ndarray) -> FrameContext:
        r = np.asarray(r, dtype=np.complex128)
        if r.shape != (sig.M,):
            raise InputDomainError(f"r 길이 {r.shape[0]} != M = {sig.M}")
        if not np.all(np.isfinite(r)):
            raise InputDomainError("r 에 유한하지 않은 값이 있습니다")
        banks = [matched_filter_bank(sig, k, r) for k in range(sig.K)]
        xcorr = [[waveform_cross_correlation(sig, k, k2) for k2 in range(sig.K)]
                 for k in range(sig.K)]
        return cls(sig=sig, r=r, banks=banks, xcorr=xcorr)

    def model(self, state: ParameterState, N0: float) -> EffectiveModel:
        return EffectiveModel.from_parameters(self.sig, self.r, state.a_hat, state.tau_hat, N0,
                                              banks=self.banks, xcorr=self.xcorr)


# ── Ψ table & M-steps ─────────────────────────────────────────────────────────


def psi_table(ctx: FrameContext, state: ParameterState, soft: SoftStatistics, k: int) -> np.ndarray:
    """Ψ_k(ℓ, δ) = S_k†(ℓ, δ)·(d̃_k(ℓ)·r − Σ_{k'≠k} a_k' Σ_j corr·S_k'(ℓ+j, τ_k')).

    shape (L, n_delays). 간섭 항은 |ℓ−ℓ'| ≤ 1 쌍만 겹친다.
    """
    sig = ctx.sig
    W = sig.W
    delta = np.arange(sig.n_delays)
    psi = soft.d_tilde[k][:, None] * ctx.banks[k]
    for k2 in range(sig.K):
        if k2 == k:
            continue
        for j in LAGS:
            weights = soft.corr[k, :, k2, j + 1]
            if not np.any(weights):
                continue
            overlap = xc_lookup(ctx.xcorr[k][k2], W, delta - state.tau_hat[k2] - W * j)
            psi = psi - state.a_hat[k2] * np.outer(weights, overlap)
    return psi


def branch_psi(sig: SignatureSet, r: np.ndarray, state: ParameterState, soft: SoftStatistics,
               k: int, ell: int, delta: int) -> complex:
    """Ψ_k(ℓ, δ) 단일 값 — 길이 M 벡터를 직접 만들어 계산한다."""
    x = soft.d_tilde[k, ell] * np.asarray(r, dtype=np.complex128)
    for k2 in range(sig.K):
        if k2 == k:
            continue
        for j in LAGS:
            if 0 <= ell + j < sig.L:
                x = x - (state.a_hat[k2] * soft.corr[k, ell, k2, j + 1]
                         * spreading_vector(sig, k2, state.tau_hat[k2], ell + j))
    return complex(np.vdot(spreading_vector(sig, k, delta, ell), x))


def m_step_tau(psi: np.ndarray) -> int:
    """argmax_δ |Σ_ℓ Ψ(ℓ, δ)|. 동률이면 가장 작은 δ."""
    return int(np.argmax(np.abs(psi.sum(axis=0))))


def m_step_a(psi_at_tau: np.ndarray, N0: float, sigma2_k: float, L: int) -> complex:
    """MAP 채널 이득 Σ_ℓ Ψ(ℓ, τ_k) / (L + N0/σ_k²)."""
    return complex(np.sum(psi_at_tau) / (L + N0 / sigma2_k))


def surrogate_objective(psi_sum: complex, a: complex, N0: float, sigma2_k: float, L: int) -> float:
    """Q_k(a, δ) 의 θ_k 의존 부분 — psi_sum 은 Σ_ℓ Ψ(ℓ, δ)."""
    power = abs(a) ** 2
    return float(2.0 / N0 * np.real(np.conj(a) * psi_sum) - L / N0 * power - power / sigma2_k)


def complete_loglik(r: np.ndarray, G: np.ndarray, d, N0: float | None = None) -> float:
    """Re{r†·G·d} − ½‖G·d‖².

    N0 를 주면 2/N0 를 곱해 ln p(r | d, θ) 에서 d 와 무관한 상수만 뺀 값을 돌려준다.
    """
    mu = G @ np.asarray(d, dtype=np.complex128).ravel()
    kernel = float(np.real(np.vdot(r, mu)) - 0.5 * np.real(np.vdot(mu, mu)))
    if N0 is None:
        return kernel
    if not N0 > 0:
        raise InputDomainError(f"N0={N0} 는 양수여야 합니다")
    return 2.0 / N0 * kernel


# ── Receiver loop ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class EStepCache:
    """한 반복의 E-step 결과와 갱신 대상 사용자의 Ψ 표 (L × n_delays)."""

    user: int
    soft: SoftStatistics
    psi: np.ndarray

    @property
    def sums(self) -> np.ndarray:
        return self.psi.sum(axis=0)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    user: int
    a_before: complex
    a_after: complex
    tau_before: int
    tau_after: int
    objective_before: float
    objective_after: float

    @property
    def change(self) -> float:
        return max(abs(self.a_after - self.a_before), abs(self.tau_after - self.tau_before))


@dataclass
class ReceiverResult:
    state: ParameterState
    soft: SoftStatistics
    decisions: np.ndarray
    trace: list[IterationRecord] = field(default_factory=list)

    @property
    def iterations_run(self) -> int:
        return len(self.trace)


def _e_step(model: EffectiveModel, cfg: SystemConfig, pilots: PilotPattern,
            chain: ChainState, exact_e: bool) -> tuple[SoftStatistics, ChainState]:
    if exact_e:
        return exact_soft_statistics(model, pilots), chain
    est = estimate_soft_symbols(model, pilots, cfg.Nt, cfg.burn_in, state=chain)
    corr = estimate_soft_correlations(model, pilots, est.samples)
    return SoftStatistics(d_tilde=est.d_tilde, corr=corr), est.state


def hard_decisions(d_tilde: np.ndarray, pilots: PilotPattern) -> np.ndarray:
    """sign(d̃), 0 은 +1. pilot 위치는 알려진 값."""
    return pilots.apply(np.where(d_tilde >= 0, 1, -1))


def run_receiver(cfg: SystemConfig, sig: SignatureSet, r: np.ndarray, init: ParameterState,
                 pilots: PilotPattern, *, known_tau: bool = False, exact_e: bool = False,
                 d_init=None, seed: int | None = None) -> ReceiverResult:
    """sage_iters 회 사용자 순환 갱신 후 최종 θ 에서 E-step 을 한 번 더 돌려 판정한다.

    known_tau=True 이면 지연 M-step 을 건너뛰고 init.tau_hat 를 유지한다.
    early_stop_tol 이 설정되면 한 바퀴(K 회) 동안의 최대 변화가 tol 미만일 때 멈춘다.
    """
    if (sig.K, sig.L, sig.Q, sig.Nc) != (cfg.K, cfg.L, cfg.Q, cfg.Nc):
        raise InputDomainError("SignatureSet 치수가 SystemConfig 와 다릅니다")
    ctx = FrameContext.build(sig, r)
    K = sig.K
    if init.a_hat.shape != (K,):
        raise InputDomainError(f"초기 파라미터 길이 {init.a_hat.shape[0]} != K = {K}")
    for delta in init.tau_hat:
        check_delay(delta, sig.n_delays)
    if pilots.mask.shape != (K, sig.L):
        raise InputDomainError("pilot mask 치수가 K×L 이 아닙니다")

    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    chain = init_chain(K, sig.L, pilots, rng, d_init=d_init)
    state = replace(init, iteration=0)
    trace: list[IterationRecord] = []

    for i in range(cfg.sage_iters):
        k = i % K
        soft, chain = _e_step(ctx.model(state, cfg.N0), cfg, pilots, chain, exact_e)
        cache = EStepCache(user=k, soft=soft, psi=psi_table(ctx, state, soft, k))
        sums = cache.sums
        sigma2_k = cfg.sigma2[k]

        tau_old, a_old = int(state.tau_hat[k]), complex(state.a_hat[k])
        tau_new = tau_old if known_tau else m_step_tau(cache.psi)
        a_new = m_step_a(cache.psi[:, tau_new], cfg.N0, sigma2_k, cfg.L)
        record = IterationRecord(
            iteration=i, user=k,
            a_before=a_old, a_after=a_new,
            tau_before=tau_old, tau_after=tau_new,
            objective_before=surrogate_objective(sums[tau_old], a_old, cfg.N0, sigma2_k, cfg.L),
            objective_after=surrogate_objective(sums[tau_new], a_new, cfg.N0, sigma2_k, cfg.L),
        )
        trace.append(record)
        logger.debug("iter %d user %d: tau %d→%d, Q %.6g→%.6g", i, k, tau_old, tau_new,
                     record.objective_before, record.objective_after)
        state = state.updated(k, a_new, tau_new)

        if cfg.early_stop_tol is not None and (i + 1) % K == 0:
            if max(rec.change for rec in trace[-K:]) < cfg.early_stop_tol:
                logger.debug("조기 종료: 반복 %d (tol=%g)", i + 1, cfg.early_stop_tol)
                break

    soft, _ = _e_step(ctx.model(state, cfg.N0), cfg, pilots, chain, exact_e)
    return ReceiverResult(state=state, soft=soft,
                          decisions=hard_decisions(soft.d_tilde, pilots), trace=trace)


def round_change(trace: list[IterationRecord], K: int, first: int, second: int) -> np.ndarray:
    """사용자별 ||a(second)| − |a(first)|| / |a(first)|. 라운드 번호는 1부터."""
    if not 1 <= first < second or len(trace) < second * K:
        raise InputDomainError(
            f"라운드 {first}→{second} 비교에는 최소 {second * K}회 반복 기록이 필요합니다"
        )
    before = np.abs([trace[(first - 1) * K + k].a_after for k in range(K)])
    after = np.abs([trace[(second - 1) * K + k].a_after for k in range(K)])
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(before > 0, np.abs(after - before) / before, np.inf)
