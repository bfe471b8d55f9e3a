import collections

import pytest

# criterion number -> list of (check name, passed, detail)
ACCEPTANCE = collections.OrderedDict()


def record(criterion: int, name: str, passed: bool, detail: str = ""):
    ACCEPTANCE.setdefault(criterion, []).append((name, bool(passed), detail))
    return passed


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[crit]
        ok = all(p for _, p, _ in checks)
        parts = "; ".join(f"{n}: {'ok' if p else 'FAIL'}{' (' + d + ')' if d else ''}" for n, p, d in checks)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'} -- {parts}")
