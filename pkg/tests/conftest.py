import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("kfc", max_examples=60, deadline=None)
settings.load_profile("kfc")

# acceptance outcomes, printed once at the end of the run
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def record(criterion: int, part: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        ok = all(p[1] for p in parts)
        tr.write_line(f"criterion {c:2d}: {'PASS' if ok else 'FAIL'}")
        for name, good, detail in parts:
            tr.write_line(f"    [{'pass' if good else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
