import pytest

from properties import PROPERTIES, SEEDS, run_property


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("name", list(PROPERTIES))
def test_property(name, seed):
    run_property(name, seed)
