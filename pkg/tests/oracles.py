"""테스트 기준값 — G 를 직접 만들어 가우시안 우도를 그대로 계산한다."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import logsumexp


def log_likelihood(G: np.ndarray, r: np.ndarray, N0: float, d) -> float:
    """ln p(r | d) + 상수 = −‖r − G·d‖² / N0."""
    resid = r - G @ np.asarray(d, dtype=np.complex128).ravel()
    return float(-np.real(np.vdot(resid, resid)) / N0)


def direct_llr(G: np.ndarray, r: np.ndarray, N0: float, d, q: int) -> float:
    plus = np.array(d, dtype=np.float64).ravel()
    minus = plus.copy()
    plus[q], minus[q] = 1.0, -1.0
    return log_likelihood(G, r, N0, plus) - log_likelihood(G, r, N0, minus)


def enumerate_posterior(G: np.ndarray, r: np.ndarray, N0: float, mask=None, values=None):
    """(configs, probs) — 모든 ±1 배치의 사후확률. pilot 위치는 values 로 고정."""
    n = G.shape[1]
    mask = np.zeros(n, dtype=bool) if mask is None else np.asarray(mask).ravel()
    values = np.zeros(n) if values is None else np.asarray(values, dtype=np.float64).ravel()
    free = np.flatnonzero(~mask)
    configs = []
    for bits in itertools.product((-1.0, 1.0), repeat=free.size):
        d = values.copy()
        d[free] = bits
        configs.append(d)
    configs = np.array(configs)
    logw = np.array([log_likelihood(G, r, N0, d) for d in configs])
    return configs, np.exp(logw - logsumexp(logw))


def conditional_pair(G: np.ndarray, r: np.ndarray, N0: float, d, p: int, q: int) -> dict:
    """P(d_q = m, d_p = n | 나머지) — 네 배치를 직접 정규화."""
    base = np.array(d, dtype=np.float64).ravel()
    logw = {}
    for m, n in itertools.product((-1, 1), repeat=2):
        x = base.copy()
        x[q], x[p] = m, n
        logw[(m, n)] = log_likelihood(G, r, N0, x)
    norm = logsumexp(list(logw.values()))
    return {key: float(np.exp(v - norm)) for key, v in logw.items()}
