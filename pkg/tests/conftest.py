"""Terminal reporting: one pass/fail line per acceptance criterion."""

_ACCEPTANCE_REPORTS: list = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _ACCEPTANCE_REPORTS.append(report)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_REPORTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for report in _ACCEPTANCE_REPORTS:
        name = report.nodeid.split("::")[-1]
        label = name.replace("test_", "", 1)
        status = "PASS" if report.passed else "FAIL"
        terminalreporter.write_line(
            f"ACCEPTANCE {label:<42} {status}  ({report.duration:.2f}s)"
        )
