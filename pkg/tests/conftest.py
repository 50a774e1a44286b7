import pytest

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """``report(n, title, checks)`` records one PASS/FAIL line and asserts.

    ``checks`` is a list of ``(label, passed)``; failed labels are listed on
    the line so the summary alone shows what broke.
    """
    lines = request.config.stash[ACCEPTANCE]

    def report(number, title, checks):
        failed = [label for label, ok in checks if not ok]
        status = "FAIL" if failed else "PASS"
        line = f"{status} criterion {number}: {title}"
        if failed:
            line += " | failed: " + "; ".join(failed)
        lines.append((number, line))
        print(line)
        assert not failed, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
