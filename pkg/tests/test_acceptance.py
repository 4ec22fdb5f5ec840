"""The ten acceptance criteria at their stated tolerances.

The long simulations are shared through the acceptance cache, so the 2D run
at default resolution is evolved once for criteria 2, 5, 6, 9 and 10.
"""
import pytest

from dkglab import acceptance

import conftest


def _check(k):
    res = acceptance.CRITERIA[k]()
    line = res.line()
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert res.passed, line


@pytest.mark.parametrize("k", list(range(1, 11)))
def test_criterion(k):
    _check(k)


def test_unknown_suite():
    with pytest.raises(acceptance.UnknownSuiteError):
        acceptance.run_suite("nope")
