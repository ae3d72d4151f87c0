"""Shared pytest hooks: replay acceptance lines after the run summary."""

ACCEPTANCE_LINES = []


def record_acceptance(criterion, line):
    ACCEPTANCE_LINES.append((criterion, line))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
