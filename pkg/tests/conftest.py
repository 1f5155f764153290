import pytest

_VERDICTS: dict[str, tuple[bool, str]] = {}


class Verdicts:
    """Collects one verdict line per acceptance criterion for the terminal summary."""

    def record(self, ac: str, passed: bool, detail: str) -> bool:
        _VERDICTS[ac] = (bool(passed), detail)
        return bool(passed)


@pytest.fixture(scope="session")
def verdicts():
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(_VERDICTS, key=lambda k: int(k.split("-")[1])):
        passed, detail = _VERDICTS[ac]
        terminalreporter.write_line(f"{ac}: {'PASS' if passed else 'FAIL'}  {detail}")
