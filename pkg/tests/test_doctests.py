import doctest

import pytest

import ctmn.acceptance
import ctmn.estimators


@pytest.mark.parametrize("module", [ctmn.acceptance, ctmn.estimators])
def test_docstring_examples(module):
    result = doctest.testmod(module)
    assert result.attempted > 0 and result.failed == 0
