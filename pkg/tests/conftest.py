"""Shared pytest wiring for the acceptance battery: each acceptance test
records a one-line verdict here, and the terminal summary echoes them all so
the per-criterion outcome is visible without -s."""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
