import pytest

# criterion number -> (status, detail), filled in by test_acceptance.py
ACCEPTANCE = {}


def record_acceptance(number, ok, detail, status=None):
    ACCEPTANCE[number] = (status or ("PASS" if ok else "FAIL"), detail)


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
