import contextlib
import time

import pytest

RESULTS: list[str] = []


class Criterion:
    def __init__(self, number: int, title: str, limit: float):
        self.number, self.title, self.limit = number, title, limit
        self.notes: list[str] = []

    def note(self, text: str) -> None:
        self.notes.append(text)


@pytest.fixture
def criterion():
    """Time an acceptance criterion and record one PASS/FAIL line for it."""
    @contextlib.contextmanager
    def run(number: int, title: str, limit: float):
        c = Criterion(number, title, limit)
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield c
            elapsed = time.perf_counter() - start
            if elapsed > limit:
                c.note(f"over the {limit:g}s limit")
                raise AssertionError(f"criterion {number} took {elapsed:.1f}s > {limit:g}s")
            status = "PASS"
        finally:
            elapsed = time.perf_counter() - start
            detail = "; ".join(c.notes)
            line = f"{status} criterion {number}: {title} ({elapsed:.1f}s){' - ' + detail if detail else ''}"
            RESULTS.append(line)
            print(line)
    return run


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
