"""Acceptance suite: every shipped guarantee checked at its stated tolerance.

Runs the same checks as ``relsim verify`` and prints one PASS/FAIL line per
criterion (pytest -s shows them).  The growth-shape criteria run dozens of
simulations up to n=4096 and take a few minutes.
"""

import pytest

from relsim.acceptance import CRITERIA


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda k: f"criterion_{k}")
def test_criterion(number):
    result = CRITERIA[number]()
    status = "PASS" if result.passed else "FAIL"
    print(f"{status}  criterion {result.number}: {result.name} -- {result.detail}")
    assert result.passed, f"criterion {result.number} failed: {result.detail}"
