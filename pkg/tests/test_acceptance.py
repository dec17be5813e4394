"""Acceptance criteria 1-9, one pass/fail line per criterion."""

from __future__ import annotations

import pytest

from ulamfloat.acceptance import CRITERIA


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    result = CRITERIA[number]()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.details
