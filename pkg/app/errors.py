"""수신기/하네스 공통 예외 계층.

CLI 경계(run.py)에서는 ReceiverError 하위 예외만 사용자 메시지로 변환하고,
그 외 예외는 logger.exception 으로 남긴 뒤 종료 코드 1 을 반환한다.
"""

from __future__ import annotations


class ReceiverError(Exception):
    """이 패키지가 의도적으로 발생시키는 모든 예외의 기반 클래스."""


class InputDomainError(ReceiverError, ValueError):
    """인덱스 범위 초과, 차원 불일치 등 입력 정의역 위반."""


class UnsupportedConfigError(ReceiverError):
    """수학적으로는 가능하지만 이 구현이 지원하지 않는 구성 (예: Lp=0 인 MMSE-SE)."""


class SpecParseError(ReceiverError):
    """실험 spec 파일 파싱/검증 실패. line 은 1-based, 알 수 없으면 None."""

    def __init__(self, message: str, *, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
