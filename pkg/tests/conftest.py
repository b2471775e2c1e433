import sys
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from strategic_bandits.core import DiscretePrior  # noqa: E402

MICRO_1_ROWS = (((0.9, 0.1), 0.5), ((0.1, 0.9), 0.5))
THREE_POINT_ROWS = (((0.6, 0.4), 0.4), ((0.4, 0.6), 0.3), ((0.8, 0.2), 0.3))
ASYM_2_ROWS = (((0.1, 0.3), 0.5), ((0.7, 0.1), 0.5))


@pytest.fixture
def micro1():
    return DiscretePrior.from_rows(MICRO_1_ROWS, exact=True)


@pytest.fixture
def micro1_float():
    return DiscretePrior.from_rows(MICRO_1_ROWS, exact=False)


def frac(text: str) -> Fraction:
    return Fraction(text)
