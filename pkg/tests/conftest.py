"""Shared pytest wiring: collects the acceptance criterion results and
prints them as an uncaptured summary block at the end of the run."""

criterion_results: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if criterion_results:
        terminalreporter.section("acceptance criteria")
        for line in criterion_results:
            terminalreporter.write_line(line)
