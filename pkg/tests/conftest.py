import warnings

import pytest

from galerkin_ofb.errors import UncertifiedDesign


@pytest.fixture(autouse=True)
def _quiet_uncertified():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UncertifiedDesign)
        yield
