"""sweep 실행 — 축 값마다 seed 분리 trial 을 돌리고 사용자별 지표로 집계한다.

seed 분리:
  SeedSequence([master, axis_index, trial_index]).spawn(4)
  → signatures / scenario / noise / receiver 독립 스트림.

trial 은 ThreadPoolExecutor.map 으로 병렬 실행하고 결과는 trial 순서대로 모은다.
스레드 수와 무관하게 같은 spec·seed 는 같은 결과를 낸다.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from app.cdma.baselines import (
    InitEstimate,
    known_delay_init,
    mmse_se_init,
    rayleigh_bpsk_ber,
    refine_delays,
    sage_known_tau,
    single_user_bound,
)
from app.cdma.bounds import mcrb_channel, mcrb_report
from app.cdma.sage import ReceiverResult, round_change, run_receiver
from app.cdma.sysmodel import (
    ScenarioTruth,
    SignatureSet,
    SystemConfig,
    draw_scenario,
    generate_signatures,
    simulate_received,
)
from app.errors import InputDomainError
from app.models import ExperimentSpec, SweepResult, SweepRow

logger = logging.getLogger("mcsage.harness.sweeps")

# 라운드 5 → 6 사이 사용자별 |â| 상대 변화 기준
CONVERGENCE_ROUNDS = (5, 6)
CONVERGENCE_TOL = 0.01

# single_user 시뮬레이션 seed 스트림 (trial 인덱스와 겹치지 않는 값)
_SU_STREAM = 2**32


@dataclass(frozen=True, slots=True)
class TrialSeeds:
    signatures: int
    scenario: int
    noise: int
    receiver: int


def trial_seeds(master: int, axis_index: int, trial_index: int) -> TrialSeeds:
    children = np.random.SeedSequence([master, axis_index, trial_index]).spawn(4)
    values = [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]
    return TrialSeeds(*values)


@dataclass(frozen=True)
class ReceiverOutcome:
    a_hat: np.ndarray
    tau_hat: np.ndarray
    decisions: np.ndarray
    # 사용자별 라운드 5→6 수렴 여부
    converged: np.ndarray | None = None


@dataclass(frozen=True)
class TrialOutcome:
    a: np.ndarray
    tau: np.ndarray
    d: np.ndarray
    tau_bound_tc2: np.ndarray
    receivers: dict[str, ReceiverOutcome]


def _from_result(cfg: SystemConfig, result: ReceiverResult) -> ReceiverOutcome:
    first, second = CONVERGENCE_ROUNDS
    converged = None
    if len(result.trace) >= second * cfg.K:
        change = round_change(result.trace, cfg.K, first, second)
        converged = change < CONVERGENCE_TOL
    return ReceiverOutcome(a_hat=result.state.a_hat, tau_hat=result.state.tau_hat,
                           decisions=result.decisions, converged=converged)


def initial_estimate(spec: ExperimentSpec, cfg: SystemConfig, sig: SignatureSet,
                     r: np.ndarray, truth: ScenarioTruth,
                     mmse: InitEstimate | None) -> InitEstimate:
    """spec.init 에 따른 SAGE 시작점. truth 외에는 MMSE-SE 결과가 필요하다."""
    if spec.init == "truth":
        return InitEstimate(a0=truth.a, tau0=truth.tau, d0=truth.d)
    if spec.init == "refined":
        return refine_delays(cfg, sig, r, truth.pilots, mmse)
    return mmse


def run_trial(spec: ExperimentSpec, cfg: SystemConfig, axis_index: int, tau_max_fraction: float,
              trial_index: int) -> TrialOutcome:
    seeds = trial_seeds(cfg.seed, axis_index, trial_index)
    sig = generate_signatures(cfg, seeds.signatures)
    truth = draw_scenario(cfg, seeds.scenario, tau_max_fraction, channel=spec.channel)
    r = simulate_received(cfg, sig, truth, seeds.noise, noise=spec.simulate_noise)
    pilots = truth.pilots

    mmse = mmse_se_init(cfg, sig, r, pilots) if spec.uses_mmse_se else None
    outcomes: dict[str, ReceiverOutcome] = {}
    for name in spec.receivers:
        if name == "mmse_se":
            outcomes[name] = ReceiverOutcome(a_hat=mmse.a0, tau_hat=mmse.tau0, decisions=mmse.d0)
        elif name == "mcmc_sage":
            init = initial_estimate(spec, cfg, sig, r, truth, mmse)
            result = run_receiver(cfg, sig, r, init.state, pilots, d_init=init.d0,
                                  seed=seeds.receiver)
            outcomes[name] = _from_result(cfg, result)
        elif name == "sage_known_tau":
            if spec.init == "truth":
                known = InitEstimate(a0=truth.a, tau0=truth.tau, d0=truth.d)
            else:
                known = known_delay_init(cfg, sig, r, pilots, truth.tau)
            result = sage_known_tau(cfg, sig, r, truth.tau, known.a0, pilots,
                                    d_init=known.d0, seed=seeds.receiver)
            outcomes[name] = _from_result(cfg, result)

    report = mcrb_report(cfg, sig, truth.tau)
    return TrialOutcome(a=truth.a, tau=truth.tau, d=truth.d,
                        tau_bound_tc2=report.var_tau_bound, receivers=outcomes)


def _run_axis_point(spec: ExperimentSpec, cfg: SystemConfig, axis_index: int,
                    tau_max_fraction: float) -> list[TrialOutcome]:
    def one(trial_index: int) -> TrialOutcome:
        return run_trial(spec, cfg, axis_index, tau_max_fraction, trial_index)

    started = time.perf_counter()
    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            outcomes = list(pool.map(one, range(spec.trials)))
    else:
        outcomes = [one(t) for t in range(spec.trials)]
    logger.info("axis[%d] 완료: %d trials, %.1fs", axis_index, spec.trials,
                time.perf_counter() - started)
    return outcomes


def _convergence_fraction(outcomes: list[TrialOutcome], name: str) -> np.ndarray | None:
    flags = [o.receivers[name].converged for o in outcomes]
    if any(flag is None for flag in flags):
        return None
    return np.mean(np.stack(flags), axis=0)


def _record_convergence(result: SweepResult, outcomes: list[TrialOutcome], name: str,
                        axis_value: float) -> None:
    fraction = _convergence_fraction(outcomes, name)
    if fraction is None:
        return
    result.convergence[f"{name}@{axis_value!r}"] = fraction.tolist()
    logger.info("%s @ %r: 라운드 %d→%d 사용자별 수렴 비율 %s", name, axis_value,
                *CONVERGENCE_ROUNDS, np.round(fraction, 2).tolist())


def run_mse_sweep(spec: ExperimentSpec) -> SweepResult:
    """축 = 최대 지연 비율. 사용자별 E|â−a|², E(τ̂−τ)² [T_b²] 와 MCRB."""
    if spec.axis != "tau_max_fraction":
        raise InputDomainError(f"MSE sweep 은 tau_max_fraction 축이 필요합니다 (현재 {spec.axis})")
    cfg = spec.base
    W = cfg.samples_per_symbol
    result = SweepResult(axis_name=spec.axis)
    bound_a = mcrb_channel(cfg.N0, cfg.L)
    for axis_index, x in enumerate(spec.axis_values):
        outcomes = _run_axis_point(spec, cfg, axis_index, x)
        a_true = np.stack([o.a for o in outcomes])
        tau_true = np.stack([o.tau for o in outcomes])
        bound_tau = np.mean([o.tau_bound_tc2 for o in outcomes], axis=0) / cfg.Nc ** 2
        for name in spec.receivers:
            a_hat = np.stack([o.receivers[name].a_hat for o in outcomes])
            tau_hat = np.stack([o.receivers[name].tau_hat for o in outcomes])
            mse_a = np.mean(np.abs(a_hat - a_true) ** 2, axis=0)
            mse_tau = np.mean(((tau_hat - tau_true) / W) ** 2, axis=0)
            for k in range(cfg.K):
                common = dict(receiver=name, axis=x, user=k + 1, trials=spec.trials,
                              seed=cfg.seed)
                result.rows.append(SweepRow(metric="mse_a", value=float(mse_a[k]),
                                            bound=bound_a, **common))
                result.rows.append(SweepRow(metric="mse_tau", value=float(mse_tau[k]),
                                            bound=float(bound_tau[k]), **common))
            _record_convergence(result, outcomes, name, x)
    return result


def config_for_effective_snr(spec: ExperimentSpec, snr_db: float) -> SystemConfig:
    """기준 사용자의 ((L−Lp)/L)·σ²/N0 가 snr_db 가 되도록 N0 만 바꾼다."""
    cfg = spec.base
    gamma_eff = 10.0 ** (snr_db / 10.0)
    gamma_nominal = gamma_eff * cfg.L / cfg.payload_len
    N0 = cfg.sigma2[spec.nominal] / gamma_nominal
    return cfg.model_copy(update={"N0": N0})


def effective_snr(cfg: SystemConfig) -> np.ndarray:
    """사용자별 ((L−Lp)/L)·σ_k²/N0 — pilot 에 쓴 에너지를 뺀 payload 기준 SNR.

    SU 기준선은 pilot 없이 채널을 알므로 이 값에서 시뮬레이션한다.
    """
    return np.asarray(cfg.sigma2) / cfg.N0 * cfg.payload_len / cfg.L


def _su_seed(master: int, axis_index: int, user: int) -> int:
    seq = np.random.SeedSequence([master, axis_index, _SU_STREAM, user])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _payload_ber(cfg: SystemConfig, outcomes: list[TrialOutcome], name: str) -> list[float]:
    """pilot 을 제외한 심볼만 센다. 분모 = trials·(L − Lp)."""
    errors = np.zeros(cfg.K, dtype=np.int64)
    for o in outcomes:
        wrong = o.receivers[name].decisions[:, cfg.Lp:] != o.d[:, cfg.Lp:]
        errors += np.count_nonzero(wrong, axis=1)
    return (errors / (len(outcomes) * cfg.payload_len)).tolist()


def run_ber_sweep(spec: ExperimentSpec) -> SweepResult:
    """축 = 기준 사용자 유효 SNR [dB]. 사용자별 payload BER.

    bound 열과 single_user 행은 사용자별 유효 SNR 에서 계산한다.
    """
    if spec.axis != "effective_snr":
        raise InputDomainError(f"BER sweep 은 effective_snr 축이 필요합니다 (현재 {spec.axis})")
    result = SweepResult(axis_name=spec.axis)
    for axis_index, x in enumerate(spec.axis_values):
        cfg = config_for_effective_snr(spec, x)
        gamma = effective_snr(cfg)
        bound = rayleigh_bpsk_ber(gamma)
        simulated = [name for name in spec.receivers if name != "single_user"]
        outcomes = []
        if simulated:
            outcomes = _run_axis_point(spec, cfg, axis_index, spec.tau_max_fraction)
        for name in spec.receivers:
            if name == "single_user":
                ber = [
                    float(single_user_bound(
                        cfg, 10.0 * math.log10(gamma[k]), spec.trials,
                        seed=_su_seed(cfg.seed, axis_index, k),
                    )[0])
                    for k in range(cfg.K)
                ]
            else:
                ber = _payload_ber(cfg, outcomes, name)
                _record_convergence(result, outcomes, name, x)
            for k in range(cfg.K):
                result.rows.append(SweepRow(receiver=name, axis=x, user=k + 1, metric="ber",
                                            value=ber[k], bound=float(bound[k]),
                                            trials=spec.trials, seed=cfg.seed))
    return result
