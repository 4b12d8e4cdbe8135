import pytest

from urnphylo._backend import BACKEND
from urnphylo.tree import builtin_tree


@pytest.fixture
def t2():
    return builtin_tree("t2")


@pytest.fixture
def t3():
    return builtin_tree("t3")


@pytest.fixture
def t1():
    return builtin_tree("t1")


@pytest.fixture(params=["python", "cython"])
def backend(request):
    if request.param == "cython" and BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    return request.param


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def announce(capsys):
    """Print a PASS/FAIL line for an acceptance criterion as soon as it is known."""

    def _announce(number: int, title: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}  {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)

    return _announce


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
