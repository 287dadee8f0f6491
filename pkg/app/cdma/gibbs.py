"""MCMC E-step — 파라미터 θ 를 고정한 채 심볼 사후분포에서 Gibbs 표본을 뽑는다.

모든 조건부 통계는 정합필터 충분통계 z = G†r, R = G†G 로 계산한다 (d 는 실수 ±1):
  λ_q = (4/N0)·(Re z_q − Σ_{p≠q} Re R_qp·d_p)

출력:
  d̃   — Rao-Blackwell 평균 E[d_q | r, θ]
  corr — 인접 심볼 쌍의 교차 사용자 상관 E[d_k(ℓ)·d_k'(ℓ')], |ℓ−ℓ'| ≤ 1
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit, logit, logsumexp

from app.cdma.sysmodel import (
    PilotPattern,
    SignatureSet,
    check_delay,
    matched_filter_bank,
    waveform_cross_correlation,
)
from app.config import get_settings
from app.errors import InputDomainError, UnsupportedConfigError

logger = logging.getLogger("mcsage.gibbs")

LAGS = (-1, 0, 1)


# ── EffectiveModel ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class EffectiveModel:
    """θ 를 고정한 선형 모델 r = G·d + w 의 충분통계."""

    gram: np.ndarray
    matched: np.ndarray
    N0: float
    K: int
    L: int

    def __post_init__(self) -> None:
        n = self.K * self.L
        if self.gram.shape != (n, n) or self.matched.shape != (n,):
            raise InputDomainError(f"Gram/정합필터 치수가 K·L={n} 과 맞지 않습니다")
        if not self.N0 > 0:
            raise InputDomainError(f"N0={self.N0} 는 양수여야 합니다")

    @property
    def n(self) -> int:
        return self.K * self.L

    @cached_property
    def gram_re(self) -> np.ndarray:
        return np.ascontiguousarray(self.gram.real)

    @cached_property
    def matched_re(self) -> np.ndarray:
        return self.matched.real.copy()

    @cached_property
    def gram_diag(self) -> np.ndarray:
        return np.diag(self.gram_re).copy()

    @classmethod
    def from_matrix(cls, G: np.ndarray, r: np.ndarray, N0: float, K: int, L: int) -> EffectiveModel:
        GH = np.conj(G).T
        return cls(gram=GH @ G, matched=GH @ r, N0=N0, K=K, L=L)

    @classmethod
    def from_parameters(cls, sig: SignatureSet, r: np.ndarray, a, tau, N0: float, *,
                        banks: list[np.ndarray] | None = None,
                        xcorr: list[list[np.ndarray]] | None = None) -> EffectiveModel:
        """파형 상호상관으로 G†G 를 직접 조립한다. M×KL 행렬은 만들지 않는다."""
        K, L, W = sig.K, sig.L, sig.W
        a = np.asarray(a, dtype=np.complex128)
        tau = np.asarray(tau, dtype=np.int64)
        if a.shape != (K,) or tau.shape != (K,):
            raise InputDomainError("a, tau 길이는 K 와 같아야 합니다")
        for delta in tau:
            check_delay(delta, sig.n_delays)
        if banks is None:
            banks = [matched_filter_bank(sig, k, r) for k in range(K)]
        if xcorr is None:
            xcorr = [[waveform_cross_correlation(sig, k, k2) for k2 in range(K)] for k in range(K)]

        ell = np.arange(L)
        gram = np.zeros((K * L, K * L), dtype=np.complex128)
        for k in range(K):
            for k2 in range(K):
                scale = np.conj(a[k]) * a[k2]
                for j in LAGS:
                    shift = int(-W * j + tau[k] - tau[k2])
                    if abs(shift) >= W:
                        continue
                    value = xcorr[k][k2][shift + W - 1]
                    rows = ell[(ell + j >= 0) & (ell + j < L)]
                    gram[k * L + rows, k2 * L + rows + j] = scale * value

        matched = np.concatenate([np.conj(a[k]) * banks[k][ell, tau[k]] for k in range(K)])
        return cls(gram=gram, matched=matched, N0=N0, K=K, L=L)


def _as_symbols(model: EffectiveModel, d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64).ravel()
    if d.shape != (model.n,):
        raise InputDomainError(f"d 길이 {d.shape[0]} != K·L = {model.n}")
    return d


def _check_index(model: EffectiveModel, q: int) -> int:
    if not 0 <= int(q) < model.n:
        raise InputDomainError(f"심볼 인덱스 q={q} 가 [0, {model.n}) 밖입니다")
    return int(q)


def llr_single(model: EffectiveModel, q: int, d) -> float:
    """ln P(d_q=+1 | r, d_q̄) − ln P(d_q=−1 | r, d_q̄). d 의 q 번째 값은 무시된다."""
    q = _check_index(model, q)
    d = _as_symbols(model, d)
    rr = model.gram_re
    field = model.matched_re[q] - rr[q] @ d + rr[q, q] * d[q]
    return float(4.0 / model.N0 * field)


def _logcosh(x):
    return np.logaddexp(x, -x) - np.log(2.0)


def _pair_fields(model: EffectiveModel, p: int, q: int,
                 d: np.ndarray) -> tuple[float, float, float]:
    """(A_q, A_p, B) — d_p, d_q 를 모두 제외한 잔차에 대한 정합필터 통계."""
    rr, zr = model.gram_re, model.matched_re
    A_q = zr[q] - rr[q] @ d + rr[q, q] * d[q] + rr[q, p] * d[p]
    A_p = zr[p] - rr[p] @ d + rr[p, p] * d[p] + rr[p, q] * d[q]
    return A_q, A_p, rr[q, p]


def pairwise_joint_prob(model: EffectiveModel, p: int, q: int, m: int, n: int, d) -> float:
    """P(d_q = m, d_p = n | r, 나머지 심볼).

    σ(ζ)·P(d_q = m | 나머지) 로 분해한다. ζ 는 d_q = m 조건부 d_p 의 LLR 이고
    두 번째 인자는 d_p 를 주변화한 d_q 의 조건부 확률이다.
    """
    p, q = _check_index(model, p), _check_index(model, q)
    if p == q:
        raise InputDomainError("p 와 q 는 서로 다른 심볼이어야 합니다")
    if m not in (-1, 1) or n not in (-1, 1):
        raise InputDomainError("m, n 은 ±1 이어야 합니다")
    d = _as_symbols(model, d)
    A_q, A_p, B = _pair_fields(model, p, q, d)
    c = 2.0 / model.N0
    zeta = 2.0 * c * n * (A_p - m * B)
    lam_marg = 2.0 * c * A_q + _logcosh(c * (A_p - B)) - _logcosh(c * (A_p + B))
    return float(expit(zeta) * expit(m * lam_marg))


# ── Gibbs chain ───────────────────────────────────────────────────────────────


@dataclass
class ChainState:
    d: np.ndarray
    t: int
    rng: np.random.Generator


def init_chain(K: int, L: int, pilots: PilotPattern, rng: np.random.Generator,
               d_init=None) -> ChainState:
    """균등 ±1 (또는 d_init) 에서 시작, pilot 위치는 고정값."""
    if d_init is None:
        d = (2 * rng.integers(0, 2, size=(K, L)) - 1).astype(np.int8)
    else:
        d = np.array(d_init, dtype=np.int8).reshape(K, L)
    return ChainState(d=pilots.apply(d), t=0, rng=rng)


def gibbs_sweep(model: EffectiveModel, state: ChainState, pilots: PilotPattern) -> ChainState:
    """비-pilot 심볼을 q = k·L + ℓ 순서로 하나씩 조건부 재추출한다.

    u < σ(λ) 판정은 logit(u) < λ 와 같다. 균등 난수는 sweep 당 한 번에 뽑는다.
    """
    d = state.d.astype(np.float64).ravel()
    free = np.flatnonzero(~pilots.mask.ravel())
    thresholds = logit(state.rng.random(free.size))
    c = 4.0 / model.N0
    rr, zr, diag = model.gram_re, model.matched_re, model.gram_diag
    for i, q in enumerate(free):
        lam = c * (zr[q] - rr[q] @ d + diag[q] * d[q])
        d[q] = 1.0 if lam > thresholds[i] else -1.0
    return ChainState(d=d.reshape(model.K, model.L).astype(np.int8), t=state.t + 1, rng=state.rng)


def rao_blackwell_llr(model: EffectiveModel, samples: np.ndarray) -> np.ndarray:
    """표본별 조건부 LLR λ_q(d^(t)) — shape (Nt, K·L)."""
    S = np.asarray(samples, dtype=np.float64).reshape(-1, model.n)
    return 4.0 / model.N0 * (model.matched_re[None, :] - S @ model.gram_re
                             + model.gram_diag[None, :] * S)


@dataclass(frozen=True)
class SoftSymbolEstimate:
    d_tilde: np.ndarray
    samples: np.ndarray
    state: ChainState


def estimate_soft_symbols(model: EffectiveModel, pilots: PilotPattern, Nt: int, burn_in: int,
                          seed: int | None = None, *,
                          state: ChainState | None = None) -> SoftSymbolEstimate:
    """burn_in sweep 을 버리고 Nt 개 표본을 보존해 d̃ = mean_t(2σ(λ_t) − 1) 을 만든다.

    state 를 넘기면 그 체인을 이어서 돌린다 (SAGE 반복 간 warm start).
    """
    if Nt < 1 or burn_in < 0:
        raise InputDomainError(f"Nt={Nt} ≥ 1, burn_in={burn_in} ≥ 0 이어야 합니다")
    if pilots.mask.shape != (model.K, model.L):
        raise InputDomainError("pilot mask 치수가 K×L 이 아닙니다")
    if state is None:
        state = init_chain(model.K, model.L, pilots, np.random.default_rng(seed))

    for _ in range(burn_in):
        state = gibbs_sweep(model, state, pilots)
    samples = np.empty((Nt, model.n), dtype=np.int8)
    for t in range(Nt):
        state = gibbs_sweep(model, state, pilots)
        samples[t] = state.d.ravel()

    p_plus = expit(rao_blackwell_llr(model, samples)).mean(axis=0)
    d_tilde = (2.0 * p_plus - 1.0).reshape(model.K, model.L)
    d_tilde[pilots.mask] = pilots.values[pilots.mask]
    return SoftSymbolEstimate(d_tilde=d_tilde, samples=samples, state=state)


# ── Soft statistics ───────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SoftStatistics:
    """d̃ (K, L) 와 corr (K, L, K, 3). corr[k, ℓ, k', j+1] = E[d_k(ℓ)·d_k'(ℓ+j)].

    k' = k 칸과 ℓ+j 가 프레임 밖인 칸은 0.
    """

    d_tilde: np.ndarray
    corr: np.ndarray

    def pair(self, k: int, ell: int, k2: int, ell2: int) -> float:
        if k2 == k:
            raise InputDomainError(f"같은 사용자 k={k} 의 심볼 쌍은 저장하지 않습니다")
        j = ell2 - ell
        if j not in LAGS:
            raise InputDomainError(f"|ℓ−ℓ'| = {abs(j)} > 1 인 쌍은 저장하지 않습니다")
        return float(self.corr[k, ell, k2, j + 1])


@dataclass(frozen=True)
class _PairIndex:
    k: np.ndarray
    ell: np.ndarray
    k2: np.ndarray
    slot: np.ndarray
    q: np.ndarray
    p: np.ndarray


def _pair_index(K: int, L: int) -> _PairIndex:
    rows = [
        (k, ell, k2, j + 1, k * L + ell, k2 * L + ell + j)
        for k, ell, k2, j in itertools.product(range(K), range(L), range(K), LAGS)
        if k2 != k and 0 <= ell + j < L
    ]
    cols = np.array(rows, dtype=np.int64).reshape(-1, 6).T
    return _PairIndex(*cols)


def _corr_from_pairs(K: int, L: int, idx: _PairIndex, values: np.ndarray) -> np.ndarray:
    corr = np.zeros((K, L, K, 3), dtype=np.float64)
    corr[idx.k, idx.ell, idx.k2, idx.slot] = values
    return corr


def estimate_soft_correlations(model: EffectiveModel, pilots: PilotPattern,
                               samples: np.ndarray) -> np.ndarray:
    """표본별 정확한 쌍 조건부 기대값 E[d_q·d_p | 나머지] 의 평균 — shape (K, L, K, 3)."""
    S = np.atleast_2d(np.asarray(samples, dtype=np.float64)).reshape(-1, model.n)
    if S.shape[0] == 0:
        raise InputDomainError("표본이 비어 있습니다")
    idx = _pair_index(model.K, model.L)
    if idx.q.size == 0:
        return np.zeros((model.K, model.L, model.K, 3))
    q, p = idx.q, idx.p
    rr, zr, diag = model.gram_re, model.matched_re, model.gram_diag
    RD = S @ rr
    B = rr[q, p]
    A_q = zr[q] - RD[:, q] + diag[q] * S[:, q] + B * S[:, p]
    A_p = zr[p] - RD[:, p] + diag[p] * S[:, p] + B * S[:, q]

    c = 2.0 / model.N0
    x_plus = 2.0 * c * (A_p - B)
    x_minus = 2.0 * c * (A_p + B)
    lam_marg = 2.0 * c * A_q + _logcosh(c * (A_p - B)) - _logcosh(c * (A_p + B))
    expect = expit(lam_marg) * np.tanh(x_plus / 2) - expit(-lam_marg) * np.tanh(x_minus / 2)

    mask = pilots.mask.ravel()
    vals = pilots.values.ravel().astype(np.float64)
    q_pilot, p_pilot = mask[q], mask[p]
    vq, vp = vals[q], vals[p]
    only_q = q_pilot & ~p_pilot
    only_p = p_pilot & ~q_pilot
    both = q_pilot & p_pilot
    x_given_q = 2.0 * c * (A_p - vq * B)
    expect = np.where(only_q, vq * np.tanh(x_given_q / 2), expect)
    lam_given_p = 2.0 * c * (A_q - vp * B)
    expect = np.where(only_p, vp * np.tanh(lam_given_p / 2), expect)
    expect = np.where(both, vq * vp, expect)
    return _corr_from_pairs(model.K, model.L, idx, expect.mean(axis=0))


def empirical_soft_statistics(samples: np.ndarray, K: int, L: int) -> SoftStatistics:
    """Rao-Blackwell 없이 표본 평균만으로 만든 통계 (검증용 기준)."""
    S = np.atleast_2d(np.asarray(samples, dtype=np.float64)).reshape(-1, K * L)
    idx = _pair_index(K, L)
    values = (S[:, idx.q] * S[:, idx.p]).mean(axis=0) if idx.q.size else np.zeros(0)
    return SoftStatistics(d_tilde=S.mean(axis=0).reshape(K, L),
                          corr=_corr_from_pairs(K, L, idx, values))


# ── Exact enumeration ─────────────────────────────────────────────────────────

_CHUNK = 1 << 14


def _config_chunks(model: EffectiveModel, pilots: PilotPattern):
    free = np.flatnonzero(~pilots.mask.ravel())
    base = pilots.values.ravel().astype(np.float64)
    total = 1 << free.size
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        bits = (codes[:, None] >> np.arange(free.size)[None, :]) & 1
        D = np.broadcast_to(base, (codes.size, model.n)).copy()
        D[:, free] = 2.0 * bits - 1.0
        yield D


def _log_weights(model: EffectiveModel, D: np.ndarray) -> np.ndarray:
    """ln p(r | d) + 상수 = (1/N0)·(2 Re z·d − dᵀ Re R d)."""
    quad = np.einsum("ij,ij->i", D @ model.gram_re, D)
    return (2.0 * D @ model.matched_re - quad) / model.N0


def _check_enumerable(pilots: PilotPattern, max_symbols: int | None) -> None:
    limit = get_settings().exact_e_max_symbols if max_symbols is None else max_symbols
    if pilots.n_free > limit:
        raise UnsupportedConfigError(
            f"정확 열거는 비-pilot 심볼 {limit}개 이하만 지원합니다 (현재 {pilots.n_free}개)"
        )


def posterior_table(model: EffectiveModel, pilots: PilotPattern,
                    max_symbols: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """모든 비-pilot 배치와 정규화된 사후확률. (configs (N, K·L), probs (N,))."""
    _check_enumerable(pilots, max_symbols)
    configs = np.concatenate(list(_config_chunks(model, pilots)), axis=0)
    logw = _log_weights(model, configs)
    return configs, np.exp(logw - logsumexp(logw))


def exact_soft_statistics(model: EffectiveModel, pilots: PilotPattern,
                          max_symbols: int | None = None) -> SoftStatistics:
    """열거로 계산한 정확한 E-step. 2^(비-pilot 심볼 수) 배치를 청크 단위로 누적한다."""
    _check_enumerable(pilots, max_symbols)
    logger.debug("정확 E-step: 배치 %d개 열거", 1 << pilots.n_free)
    logw = np.concatenate([_log_weights(model, D) for D in _config_chunks(model, pilots)])
    log_norm = logsumexp(logw)

    mean = np.zeros(model.n)
    second = np.zeros((model.n, model.n))
    offset = 0
    for D in _config_chunks(model, pilots):
        w = np.exp(logw[offset:offset + D.shape[0]] - log_norm)
        offset += D.shape[0]
        mean += w @ D
        second += D.T @ (w[:, None] * D)

    idx = _pair_index(model.K, model.L)
    return SoftStatistics(d_tilde=mean.reshape(model.K, model.L),
                          corr=_corr_from_pairs(model.K, model.L, idx, second[idx.q, idx.p]))
