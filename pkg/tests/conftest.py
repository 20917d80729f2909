import numpy as np
import pytest

from stokesrec import assemble_bundle, build_layout, generate_unit_square


@pytest.fixture(scope="session")
def square2_bundle():
    return assemble_bundle(build_layout(generate_unit_square(2)))


@pytest.fixture(scope="session")
def square3_bundle():
    return assemble_bundle(build_layout(generate_unit_square(3)))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
