import _acceptance_log


def pytest_terminal_summary(terminalreporter):
    rows = _acceptance_log.lines()
    if rows:
        terminalreporter.section("acceptance criteria")
        for row in rows:
            terminalreporter.write_line(row)
