import pytest

from renewcap.model import ModelParams, TimeGrid

ACCEPTANCE_LINES: dict[str, str] = {}


def record_acceptance(ac: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[ac] = f"{ac} {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[ac])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(ACCEPTANCE_LINES, key=lambda k: (len(k), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[ac])


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def grid():
    return TimeGrid(1.0, 50)


@pytest.fixture
def no_jumps(params):
    return params.replace(lam1=0.0, lam2=0.0)
