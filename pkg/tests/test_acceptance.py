"""Acceptance criteria at full sample sizes; one PASS/FAIL line per criterion."""

import pytest

from zdx.criteria import CRITERIA


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, capsys):
    res = CRITERIA[k](seed=k)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
