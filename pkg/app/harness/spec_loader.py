"""실험 spec 파일 — `key = value` 형식의 평문 설정.

형식:
  # 주석, 빈 줄 허용
  K = 5
  sigma2_db = -4, -2, 0, 2, 4      # 또는 sigma2 = 0.398, ... (선형)
  axis = tau_max_fraction
  axis_values = 0.1, 0.3, 0.5
  receivers = mcmc_sage, mmse_se

SystemConfig 필드와 ExperimentSpec 필드를 한 파일에 평평하게 적는다.
검증 오류는 해당 키의 줄 번호를 담은 SpecParseError 로 변환된다.
"""

from __future__ import annotations

import logging
from pathlib import Path

from pydantic import ValidationError

from app.cdma.sysmodel import SystemConfig
from app.errors import SpecParseError
from app.harness.writer import write_text
from app.models import ExperimentSpec
from app.retry import io_retry

logger = logging.getLogger("mcsage.harness.spec")

_BASE_KEYS = frozenset(SystemConfig.model_fields)
_SPEC_KEYS = frozenset(ExperimentSpec.model_fields) - {"base"}
_DERIVED_KEYS = frozenset({"sigma2_db"})
_LIST_KEYS = frozenset({"sigma2", "sigma2_db", "axis_values", "receivers"})
_NONE_WORDS = frozenset({"", "none", "null"})

# dump 순서
_BASE_ORDER = ("K", "Nc", "Q", "L", "Lp", "N0", "sigma2", "Nt", "burn_in", "sage_iters",
               "seed", "early_stop_tol")
_SPEC_ORDER = ("axis", "axis_values", "trials", "receivers", "output_path", "threads", "init",
               "channel", "simulate_noise", "nominal_user", "tau_max_fraction")


def _parse_lines(text: str) -> tuple[dict[str, str | list[str] | None], dict[str, int]]:
    values: dict[str, str | list[str] | None] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise SpecParseError(f"'key = value' 형식이 아닙니다: {body!r}", line=lineno)
        key, _, value = (part.strip() for part in body.partition("="))
        if key not in _BASE_KEYS | _SPEC_KEYS | _DERIVED_KEYS:
            raise SpecParseError(f"알 수 없는 키 '{key}'", line=lineno, key=key)
        if key in values:
            raise SpecParseError(f"키 '{key}' 가 중복되었습니다 (처음: line {lines[key]})",
                                 line=lineno, key=key)
        if key in _LIST_KEYS:
            values[key] = [item.strip() for item in value.split(",") if item.strip()]
        elif value.lower() in _NONE_WORDS:
            values[key] = None
        else:
            values[key] = value
        lines[key] = lineno
    return values, lines


def _raise_validation(exc: ValidationError, lines: dict[str, int], prefix: tuple = ()) -> None:
    err = exc.errors()[0]
    loc = tuple(err.get("loc", ()))[len(prefix):]
    key = str(loc[0]) if loc else None
    if key == "sigma2" and "sigma2" not in lines and "sigma2_db" in lines:
        key = "sigma2_db"
    if err.get("type") == "missing":
        raise SpecParseError(f"필수 키 누락: '{key}'", key=key) from exc
    where = f"'{key}': " if key else ""
    raise SpecParseError(where + err.get("msg", str(exc)), line=lines.get(key), key=key) from exc


def parse_spec_text(text: str) -> ExperimentSpec:
    values, lines = _parse_lines(text)
    if "sigma2" in values and "sigma2_db" in values:
        raise SpecParseError("sigma2 와 sigma2_db 는 함께 쓸 수 없습니다",
                             line=lines["sigma2_db"], key="sigma2_db")
    if "sigma2_db" in values:
        try:
            values["sigma2"] = [10.0 ** (float(x) / 10.0) for x in values.pop("sigma2_db")]
        except ValueError as exc:
            raise SpecParseError(f"sigma2_db 값이 숫자가 아닙니다: {exc}",
                                 line=lines["sigma2_db"], key="sigma2_db") from exc

    base_values = {k: v for k, v in values.items() if k in _BASE_KEYS and v is not None}
    spec_values = {k: v for k, v in values.items() if k in _SPEC_KEYS and v is not None}
    try:
        base = SystemConfig(**base_values)
    except ValidationError as exc:
        _raise_validation(exc, lines)
    try:
        return ExperimentSpec(base=base, **spec_values)
    except ValidationError as exc:
        _raise_validation(exc, lines)


@io_retry
def _read_text(path: Path) -> str:
    return path.read_text(encoding="utf-8")


def load_spec(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    if not path.is_file():
        raise SpecParseError(f"spec 파일이 없습니다: {path}")
    spec = parse_spec_text(_read_text(path))
    logger.info("spec 로드: %s (axis=%s, %d points, trials=%d)",
                path, spec.axis, len(spec.axis_values), spec.trials)
    return spec


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def format_spec(spec: ExperimentSpec) -> str:
    out = []
    for key in _BASE_ORDER:
        value = getattr(spec.base, key)
        if value is not None:
            out.append(f"{key} = {_format(value)}")
    for key in _SPEC_ORDER:
        value = getattr(spec, key)
        if value is not None:
            out.append(f"{key} = {_format(value)}")
    return "\n".join(out) + "\n"


def dump_spec(spec: ExperimentSpec, path: str | Path) -> None:
    """정규형으로 기록. load_spec(dump_spec(s)) == s."""
    write_text(Path(path), format_spec(spec))
