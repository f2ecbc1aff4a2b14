import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def live(request):
    """Write a line to the terminal immediately, bypassing output capture."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(line: str) -> None:
        ACCEPTANCE_LINES.append(line)
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
