"""실험 spec / 결과 모델 — Pydantic v2 검증 적용."""

from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.cdma.sysmodel import ChannelKind, SystemConfig
from app.config import get_settings

ReceiverName = Literal["mcmc_sage", "sage_known_tau", "mmse_se", "single_user"]
AxisName = Literal["tau_max_fraction", "effective_snr"]

# 축 종류별로 기록하는 지표
AXIS_METRICS: dict[str, tuple[str, ...]] = {
    "tau_max_fraction": ("mse_a", "mse_tau"),
    "effective_snr": ("ber",),
}

# init 값으로 시작하는 반복 수신기
SAGE_RECEIVERS = frozenset({"mcmc_sage", "sage_known_tau"})


class ExperimentSpec(BaseModel):
    """sweep 하나의 전체 정의. base 는 축 값에 따라 N0 또는 지연 범위만 바뀐다."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    base: SystemConfig
    axis: AxisName = Field(..., description="sweep 축")
    axis_values: tuple[float, ...] = Field(..., min_length=1, description="축 값 (오름차순)")
    trials: int = Field(default_factory=lambda: get_settings().default_trials, ge=1,
                        description="축 값당 프레임 수")
    receivers: tuple[ReceiverName, ...] = Field(default=("mcmc_sage",), min_length=1)
    output_path: str = Field(default_factory=lambda: f"{get_settings().results_dir}/sweep.csv")
    threads: int = Field(default_factory=lambda: get_settings().sweep_threads, ge=1, le=256,
                         description="trial 병렬 스레드 수")
    init: Literal["refined", "mmse_se", "truth"] = Field(
        default="refined", description="SAGE 수신기 초기값 (refined = MMSE-SE 뒤 프레임 전체 지연 재탐색)",
    )
    channel: ChannelKind = Field(default="rayleigh", description="rayleigh 또는 awgn (고정 크기)")
    simulate_noise: bool = True
    nominal_user: int | None = Field(default=None, ge=0, description="SNR 축 기준 사용자 (0-based)")
    tau_max_fraction: float = Field(default=0.5, gt=0, le=0.5,
                                    description="BER sweep 의 지연 범위 [0, f·T_b)")

    @model_validator(mode="after")
    def _check_axis(self) -> ExperimentSpec:
        values = self.axis_values
        if any(not math.isfinite(v) for v in values):
            raise ValueError("axis_values 에 유한하지 않은 값이 있습니다")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("axis_values 는 순증가해야 합니다")
        if self.axis == "tau_max_fraction" and not all(0 < v <= 0.5 for v in values):
            raise ValueError("tau_max_fraction 축 값은 (0, 0.5] 이어야 합니다")
        if len(set(self.receivers)) != len(self.receivers):
            raise ValueError("receivers 에 중복이 있습니다")
        if "single_user" in self.receivers and self.axis != "effective_snr":
            raise ValueError("single_user 는 effective_snr 축에서만 의미가 있습니다")
        if self.nominal_user is not None and self.nominal_user >= self.base.K:
            raise ValueError(f"nominal_user={self.nominal_user} 는 K={self.base.K} 보다 작아야 합니다")
        if self.base.Lp == 0 and self.uses_mmse_se:
            raise ValueError("MMSE-SE (수신기 또는 init) 에는 Lp ≥ 1 이 필요합니다")
        return self

    @property
    def metrics(self) -> tuple[str, ...]:
        return AXIS_METRICS[self.axis]

    @property
    def uses_mmse_se(self) -> bool:
        if "mmse_se" in self.receivers:
            return True
        return self.init != "truth" and bool(SAGE_RECEIVERS.intersection(self.receivers))

    @property
    def nominal(self) -> int:
        return self.base.K // 2 if self.nominal_user is None else self.nominal_user


class SweepRow(BaseModel):
    receiver: ReceiverName
    axis: float
    user: int = Field(..., ge=1, description="사용자 번호 (1-based)")
    metric: str
    value: float
    bound: float | None = None
    trials: int = Field(..., ge=1)
    seed: int = Field(..., ge=0)


class SweepResult(BaseModel):
    axis_name: AxisName
    rows: list[SweepRow] = Field(default_factory=list)
    convergence: dict[str, list[float]] = Field(
        default_factory=dict,
        description="'receiver@axis' → 사용자별로 라운드 5→6 |â| 변화 < 1% 인 trial 비율",
    )

    def row(self, receiver: str, axis: float, user: int, metric: str) -> SweepRow:
        for row in self.rows:
            if (row.receiver, row.axis, row.user, row.metric) == (receiver, axis, user, metric):
                return row
        raise KeyError((receiver, axis, user, metric))
