import json

import numpy as np
import pytest

from tdsstab.benchmark_systems import (
    CUBIC_BLOCK,
    OSCILLATOR_BLOCK,
    UNSTABLE_BLOCK,
    block_system,
    mixed_block_system,
    slow_plant,
    triangular_pair,
    two_block_system,
    unstable_plant,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unstable_block():
    return block_system(UNSTABLE_BLOCK)


@pytest.fixture
def oscillator_block():
    return block_system(OSCILLATOR_BLOCK)


@pytest.fixture
def cubic_block():
    return block_system(CUBIC_BLOCK)


@pytest.fixture
def two_block():
    return two_block_system()


@pytest.fixture
def mixed_block():
    return mixed_block_system()


@pytest.fixture
def triangular():
    return triangular_pair()


@pytest.fixture
def plant():
    return unstable_plant()


@pytest.fixture
def slow():
    return slow_plant()


@pytest.fixture
def write_json(tmp_path):
    def write(name, data):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return str(path)

    return write
