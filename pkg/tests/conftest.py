import numpy as np
import pytest

from hyperlips.config import PROFILES
from hyperlips.data import make_toy_dataset


@pytest.fixture(scope="session")
def toy_profile():
    return PROFILES["toy"]


@pytest.fixture(scope="session")
def toy_data_dir(tmp_path_factory):
    """Small shared dataset for unit tests: 3 clips of 48 frames."""
    out = tmp_path_factory.mktemp("toydata") / "ds"
    make_toy_dataset(3, 7, out, n_frames=48)
    return out


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
