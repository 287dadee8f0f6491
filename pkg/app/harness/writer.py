"""결과 기록 — CSV (고정 헤더) + 같은 필드의 JSON 미러.

float 는 repr 로 기록해 같은 spec·seed 재실행 시 바이트 단위로 같은 파일을 만든다.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path

from app.models import SweepResult
from app.retry import io_retry

logger = logging.getLogger("mcsage.harness.writer")

CSV_HEADER = ("receiver", "axis", "user", "metric", "value", "bound", "trials", "seed")


def format_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in result.rows:
        writer.writerow([
            row.receiver,
            repr(row.axis),
            row.user,
            row.metric,
            repr(row.value),
            "" if row.bound is None else repr(row.bound),
            row.trials,
            row.seed,
        ])
    return buf.getvalue()


@io_retry
def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def write_results(result: SweepResult, path: str | Path, *, json_mirror: bool = True) -> list[Path]:
    """CSV 를 path 에, JSON 미러를 같은 이름의 .json 에 기록하고 경로 목록을 반환한다."""
    path = Path(path)
    write_text(path, format_csv(result))
    written = [path]
    if json_mirror:
        mirror = path.with_suffix(".json")
        write_text(mirror, json.dumps(result.model_dump(mode="json"), ensure_ascii=False,
                                       indent=2) + "\n")
        written.append(mirror)
    logger.info("결과 기록: %s (%d rows)", ", ".join(map(str, written)), len(result.rows))
    return written
