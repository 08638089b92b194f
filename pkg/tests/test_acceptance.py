"""Acceptance criteria.

Each group below runs one reference check from :mod:`hesaw.acceptance` and
prints a PASS/FAIL line per criterion; the lines are collected again in the
terminal summary.  A red line here is a genuine mismatch, see README.
"""

import pytest

from hesaw.acceptance import CHECKS


@pytest.mark.parametrize("group", list(CHECKS))
def test_criterion(group, acceptance_log):
    results = CHECKS[group]()
    assert results
    for chk in results:
        line = chk.line()
        acceptance_log.append(line)
        print(line)
    failed = [chk.cid for chk in results if not chk.passed]
    assert not failed, "failing criteria: " + ", ".join(failed)
