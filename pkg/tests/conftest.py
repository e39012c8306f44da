import sys


def pytest_terminal_summary(terminalreporter):
    """Repeat the per-criterion acceptance lines at the end of the run."""
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
