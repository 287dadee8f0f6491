"""공통 fixture — 작은 시나리오와 seed 고정 인스턴스."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from app.cdma.gibbs import EffectiveModel
from app.cdma.sysmodel import (
    PilotPattern,
    ScenarioTruth,
    SignatureSet,
    SystemConfig,
    draw_scenario,
    effective_matrix,
    generate_signatures,
    simulate_received,
)
from app.config import get_settings


@dataclass
class Instance:
    cfg: SystemConfig
    sig: SignatureSet
    truth: ScenarioTruth
    r: np.ndarray
    G: np.ndarray
    model: EffectiveModel

    @property
    def pilots(self) -> PilotPattern:
        return self.truth.pilots


def make_instance(seed: int, *, K: int = 2, L: int = 2, Lp: int = 0, Nc: int = 4, Q: int = 2,
                  N0: float = 1.0, sigma2=None, noise: bool = True, **overrides) -> Instance:
    sigma2 = tuple(sigma2) if sigma2 is not None else (1.0,) * K
    cfg = SystemConfig(K=K, Nc=Nc, Q=Q, L=L, Lp=Lp, N0=N0, sigma2=sigma2, seed=seed, **overrides)
    ss = np.random.SeedSequence(seed).spawn(3)
    sig = generate_signatures(cfg, ss[0])
    truth = draw_scenario(cfg, ss[1])
    r = simulate_received(cfg, sig, truth, ss[2], noise=noise)
    G = effective_matrix(sig, truth.a, truth.tau)
    model = EffectiveModel.from_parameters(sig, r, truth.a, truth.tau, cfg.N0)
    return Instance(cfg=cfg, sig=sig, truth=truth, r=r, G=G, model=model)


@pytest.fixture
def instance_factory():
    return make_instance


@pytest.fixture
def small_cfg() -> SystemConfig:
    return SystemConfig(K=3, Nc=4, Q=3, L=6, Lp=2, N0=0.5, sigma2=(0.5, 1.0, 2.0), seed=1)


@pytest.fixture(autouse=True)
def _clear_settings_cache():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
