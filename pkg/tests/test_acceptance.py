"""Every acceptance criterion at its stated tolerance; one PASS/FAIL line each."""

import pytest

from svsa.verify import CRITERIA, run_criterion


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    row = run_criterion(number)
    with capsys.disabled():
        print("\n" + row.line())
    assert row.passed, row.line()
