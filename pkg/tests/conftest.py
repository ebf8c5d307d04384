import pytest

_LINES: list[str] = []


class Report:
    """Collects one verdict line per acceptance criterion."""

    def line(self, number: int, ok: bool, detail: str) -> bool:
        text = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(text)
        _LINES.append(text)
        return ok


@pytest.fixture(scope="session")
def report():
    return Report()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for text in sorted(_LINES):
            terminalreporter.write_line(text)
