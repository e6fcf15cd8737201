"""Acceptance criteria at full size, one pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the verdict lines.
"""

import pytest

from replearn.harness.suite import fixtures, run_check

# criterion -> wall-clock budget in seconds
BUDGETS = {1: 60, 2: 60, 3: 10, 4: 30, 5: 300, 6: 600, 7: 600, 8: 60, 9: 60}


@pytest.fixture(scope="module")
def fx():
    return fixtures()


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(BUDGETS))
def test_criterion(number, fx):
    v = run_check(number, 1.0, fx)
    print("\n" + v.line())
    assert v.passed, v.line()
    assert v.seconds < BUDGETS[number], f"took {v.seconds:.1f}s, budget {BUDGETS[number]}s"
