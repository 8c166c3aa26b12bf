import functools

import pytest

import lkhrekey.dca as dca

# Every DCA run made anywhere in the session is recorded so the descent
# criterion can be checked over all of them.
SOLVER_RUNS: list = []
ACCEPTANCE: dict[int, tuple[bool, str]] = {}

_run_dca = dca.run_dca


@functools.wraps(_run_dca)
def _recording_run_dca(*args, **kwargs):
    run = _run_dca(*args, **kwargs)
    SOLVER_RUNS.append(run.records)
    return run


dca.run_dca = _recording_run_dca


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}: {detail}")


def pytest_collection_modifyitems(config, items):
    # the descent check must see the runs of every other test
    last = [it for it in items if it.name == "test_criterion_03_dca_descent"]
    rest = [it for it in items if it.name != "test_criterion_03_dca_descent"]
    items[:] = rest + last


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")


@pytest.fixture
def acceptance():
    return record_acceptance
