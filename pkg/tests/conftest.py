from __future__ import annotations

from importlib import resources

import pytest

from btcalc.dsl import Document, parse


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Remember one acceptance result for the terminal summary."""
    _ACCEPTANCE[criterion] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}: {detail}")


def load_builtin(name: str) -> Document:
    data = resources.files("btcalc.data").joinpath(f"{name}.bt").read_bytes()
    result = parse(data, f"{name}.bt")
    assert result.ok, [d.render() for d in result.diagnostics]
    return result.document


@pytest.fixture(scope="session")
def mm_doc() -> Document:
    return load_builtin("mobile_manipulator")


@pytest.fixture(scope="session")
def mm_tree(mm_doc):
    return mm_doc.tree("mobile_manipulator")


@pytest.fixture(scope="session")
def fig5a_doc() -> Document:
    return load_builtin("fig5a")


@pytest.fixture(scope="session")
def fig5b_doc() -> Document:
    return load_builtin("fig5b")


@pytest.fixture(scope="session")
def cbf_doc() -> Document:
    return load_builtin("cbf_scenarios")
