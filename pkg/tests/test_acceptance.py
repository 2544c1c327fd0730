"""Acceptance criteria 1-12, each held to its stated tolerance.

Every criterion prints one PASS/FAIL line; the lines are also collected and
repeated in the pytest terminal summary.
"""

import pytest

from porosplit import verification

RESULTS: list[verification.CriterionResult] = []


@pytest.fixture(scope="module")
def verifier():
    return verification.Verifier()


@pytest.mark.parametrize("number", sorted(verification.CRITERIA))
def test_criterion(verifier, number):
    result = verification.CRITERIA[number](verifier)
    RESULTS.append(result)
    print(result.line())
    assert result.passed, result.line()
