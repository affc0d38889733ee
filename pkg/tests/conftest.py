"""Shared test plumbing: surfaces acceptance-criterion results in the
terminal summary, where pytest's output capture would otherwise hide them."""

acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.line(line)
