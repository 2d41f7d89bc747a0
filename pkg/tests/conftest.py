from __future__ import annotations

import contextlib
import time

import pytest

# criterion number -> (title, passed, seconds, detail)
ACCEPTANCE: dict[int, tuple[str, bool, float, str]] = {}


@contextlib.contextmanager
def criterion(number: int, title: str, limit_s: float | None = None):
    """Time a block, record pass/fail for the summary, and enforce the runtime limit."""
    notes: list[str] = []
    start = time.perf_counter()
    ok = False
    try:
        yield notes
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        if ok and limit_s is not None and elapsed >= limit_s:
            ok = False
            notes.append(f"runtime {elapsed:.2f}s exceeds {limit_s}s")
        ACCEPTANCE[number] = (title, ok, elapsed, "; ".join(notes))
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({elapsed:.2f}s) {'; '.join(notes)}"
        print(line.rstrip())
    if limit_s is not None:
        assert elapsed < limit_s, f"runtime {elapsed:.2f}s exceeds {limit_s}s"


@pytest.fixture
def acceptance():
    return criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, elapsed, detail = ACCEPTANCE[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number}. {title} ({elapsed:.2f}s)"
        terminalreporter.write_line(f"{line} {detail}".rstrip())
