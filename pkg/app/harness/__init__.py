"""실험 오케스트레이션 — spec 로딩, seed 분리 trial 실행, 결과 기록."""
