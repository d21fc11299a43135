import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion id -> (title, passed, detail); filled by test_acceptance.py
CRITERIA = {}


@pytest.fixture
def criterion():
    def record(cid, title, passed, detail=""):
        CRITERIA[cid] = (title, bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(CRITERIA):
        title, ok, detail = CRITERIA[cid]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {cid:>2}: {title} | {detail}")
