"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 6, 7 and 11 share cached design grids, so together they take a few
minutes; the rest finish in seconds.
"""

import pytest

from mimotrain.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    result = run_criterion(number, seed=0)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
