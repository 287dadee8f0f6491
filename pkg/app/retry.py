"""재시도 전략 — tenacity 기반 결과 파일 쓰기 retry 데코레이터.

사용법:
    from app.retry import io_retry

    @io_retry
    def write_csv(path, rows):
        ...
"""

from __future__ import annotations

import logging

from tenacity import (
    before_sleep_log,
    retry,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

logger = logging.getLogger(__name__)

# 네트워크 파일시스템/일시적 잠금에서 나는 오류만 재시도한다.
_IO_RETRYABLE = (BlockingIOError, InterruptedError, TimeoutError, ConnectionError)

io_retry = retry(
    stop=stop_after_attempt(2),
    wait=wait_exponential(multiplier=0.5, min=0.5, max=5),
    retry=retry_if_exception_type(_IO_RETRYABLE),
    before_sleep=before_sleep_log(logger, logging.WARNING),
    reraise=True,
)
