import pytest

# (criterion number, title, passed, detail) recorded by the acceptance suite
ACCEPTANCE = []


@pytest.fixture
def acceptance():
    def record(number, title, passed, detail=""):
        ACCEPTANCE.append((number, title, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {number}: {title} {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    def order(a):
        n = str(a[0])
        digits = "".join(c for c in n if c.isdigit())
        return int(digits or 0), n

    for number, title, passed, detail in sorted(ACCEPTANCE, key=order):
        terminalreporter.write_line(
            f"{'PASS' if passed else 'FAIL'} {number}: {title}" + (f" ({detail})" if detail else ""))
