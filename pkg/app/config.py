"""설정 — pydantic-settings v2 + 타입 안전 검증.

실험 파라미터(K, N_c, L ...)는 실험 spec 파일이 담당하고,
여기서는 프로세스 수준 설정(로그 레벨, 스레드 수, 출력 경로)만 다룬다.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="MCSAGE_",
        extra="ignore",
    )

    # ── Sweep 실행 ────────────────────────────────────────
    sweep_threads: int = Field(default=1, ge=1, le=256)
    default_trials: int = Field(default=200, ge=1)

    # ── 결과 출력 ─────────────────────────────────────────
    results_dir: str = "./results"
    json_mirror: bool = True

    # ── 수신기 ────────────────────────────────────────────
    exact_e_max_symbols: int = Field(default=20, ge=1, le=24)
    """열거 기반 exact E-step 을 허용하는 최대 자유 심볼 수 (2^n 구성)."""

    # ── Logging ───────────────────────────────────────────
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"


@lru_cache()
def get_settings() -> Settings:
    return Settings()
