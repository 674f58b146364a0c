import pytest
from mpmath import mp

from dgdp import configure_precision


@pytest.fixture(autouse=True)
def fixed_precision():
    """Every test runs at the default 80-digit working precision."""
    configure_precision(80)
    yield
    mp.dps = 80
