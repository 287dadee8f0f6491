"""MCMC-SAGE DS-CDMA 실험 CLI.

Usage:
    python run.py mse-sweep --spec data/specs/mse_delay_sweep.conf
    python run.py ber-sweep --spec data/specs/ber_snr_sweep.conf --threads 8
    python run.py bounds --spec data/specs/demo.conf
    python run.py demo                                   # 단일 프레임 데모

종료 코드: 0 성공, 2 입력/설정 오류 (ReceiverError), 1 예기치 못한 오류.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from app.cdma.baselines import mmse_se_init
from app.cdma.bounds import mcrb_report
from app.cdma.sage import run_receiver
from app.cdma.sysmodel import draw_scenario, generate_signatures, simulate_received
from app.config import get_settings
from app.errors import ReceiverError
from app.harness.spec_loader import load_spec
from app.harness.sweeps import initial_estimate, run_ber_sweep, run_mse_sweep, trial_seeds
from app.harness.writer import write_results, write_text
from app.models import ExperimentSpec

logger = logging.getLogger("mcsage.cli")

DEMO_SPEC = Path(__file__).resolve().parent / "data" / "specs" / "demo.conf"


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"1 이상이어야 합니다: {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed 는 [0, 2^64) 범위여야 합니다: {text}")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcsage",
        description="비동기 DS-CDMA Monte-Carlo SAGE 수신기 실험",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "예시:\n"
            "  mcsage mse-sweep --spec data/specs/mse_delay_sweep.conf --trials 100\n"
            "  mcsage ber-sweep --spec data/specs/ber_snr_sweep.conf --out results/ber.csv\n"
            "  mcsage demo --seed 7\n"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_spec, help_text in (
        ("mse-sweep", True, "최대 지연 축 sweep — â, τ̂ MSE 와 MCRB"),
        ("ber-sweep", True, "유효 SNR 축 sweep — 사용자별 BER"),
        ("bounds", True, "기준 구성의 MCRB 보고서 (JSON)"),
        ("demo", False, "한 프레임 실행 후 참값/추정값 비교"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--spec", type=Path, required=needs_spec, default=None,
                       help="실험 spec 파일 (key = value)")
        p.add_argument("--out", type=Path, default=None, help="결과 경로 (기본: spec.output_path)")
        p.add_argument("--seed", type=_seed, default=None, help="master seed 덮어쓰기")
        p.add_argument("--trials", type=_positive_int, default=None, help="축 값당 trial 수")
        p.add_argument("--threads", type=_positive_int, default=None, help="trial 병렬 스레드 수")
    return parser


def _apply_overrides(spec: ExperimentSpec, args: argparse.Namespace) -> ExperimentSpec:
    base = spec.base
    if args.seed is not None:
        base = base.model_copy(update={"seed": args.seed})
    update: dict = {"base": base}
    if args.trials is not None:
        update["trials"] = args.trials
    if args.threads is not None:
        update["threads"] = args.threads
    if args.out is not None:
        update["output_path"] = str(args.out)
    return spec.model_copy(update=update)


def _run_sweep(spec: ExperimentSpec, command: str) -> None:
    sweep = run_mse_sweep if command == "mse-sweep" else run_ber_sweep
    result = sweep(spec)
    write_results(result, spec.output_path, json_mirror=get_settings().json_mirror)
    for key, fractions in result.convergence.items():
        for user, fraction in enumerate(fractions, start=1):
            if fraction < 0.8:
                logger.warning("%s 사용자 %d: 라운드 5→6 수렴 비율 %.2f < 0.80", key, user, fraction)


def _run_bounds(spec: ExperimentSpec, out: Path | None) -> None:
    cfg = spec.base
    seeds = trial_seeds(cfg.seed, 0, 0)
    sig = generate_signatures(cfg, seeds.signatures)
    truth = draw_scenario(cfg, seeds.scenario, spec.tau_max_fraction, channel=spec.channel)
    text = json.dumps(mcrb_report(cfg, sig, truth.tau).to_dict(), ensure_ascii=False, indent=2)
    if out is None:
        print(text)
    else:
        write_text(out, text + "\n")
        logger.info("MCRB 보고서 기록: %s", out)


def _run_demo(spec: ExperimentSpec) -> None:
    cfg = spec.base
    seeds = trial_seeds(cfg.seed, 0, 0)
    sig = generate_signatures(cfg, seeds.signatures)
    truth = draw_scenario(cfg, seeds.scenario, spec.tau_max_fraction, channel=spec.channel)
    r = simulate_received(cfg, sig, truth, seeds.noise, noise=spec.simulate_noise)
    init = initial_estimate(spec, cfg, sig, r, truth, mmse_se_init(cfg, sig, r, truth.pilots))
    result = run_receiver(cfg, sig, r, init.state, truth.pilots, d_init=init.d0,
                          seed=seeds.receiver)

    payload = slice(cfg.Lp, None)
    print(f"K={cfg.K} Nc={cfg.Nc} Q={cfg.Q} L={cfg.L} Lp={cfg.Lp} N0={cfg.N0:g} "
          f"iters={result.iterations_run}")
    print(f"{'user':>4} {'|a|':>7} {'|a0-a|':>8} {'|â-a|':>8} {'τ':>4} {'τ0':>4} {'τ̂':>4} "
          f"{'err0':>5} {'err':>5}")
    for k in range(cfg.K):
        err0 = int(np.count_nonzero(init.d0[k, payload] != truth.d[k, payload]))
        err = int(np.count_nonzero(result.decisions[k, payload] != truth.d[k, payload]))
        print(f"{k + 1:>4} {abs(truth.a[k]):7.3f} {abs(init.a0[k] - truth.a[k]):8.4f} "
              f"{abs(result.state.a_hat[k] - truth.a[k]):8.4f} {truth.tau[k]:>4} "
              f"{init.tau0[k]:>4} {result.state.tau_hat[k]:>4} {err0:>5} {err:>5}")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    s = get_settings()
    logging.basicConfig(
        level=getattr(logging, s.log_level, logging.INFO),
        format="%(asctime)s [%(name)s] %(levelname)s: %(message)s",
    )

    try:
        spec = _apply_overrides(load_spec(args.spec or DEMO_SPEC), args)
        if args.command in ("mse-sweep", "ber-sweep"):
            _run_sweep(spec, args.command)
        elif args.command == "bounds":
            _run_bounds(spec, args.out)
        else:
            _run_demo(spec)
    except ReceiverError as exc:
        print(f"[ERROR] {exc}", file=sys.stderr)
        return 2
    except Exception:
        logger.exception("실행 실패")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
