import numpy as np
import pytest

from latentedit import ToyBackend, synthetic_clip, write_clip_frames


@pytest.fixture(scope="session")
def toy_backend():
    # weights are frozen and every method is pure, so one instance is shared
    return ToyBackend()


@pytest.fixture
def clip_dir_factory(tmp_path):
    def make(kind="slide", frames=4, size=64, name=None):
        directory = tmp_path / (name or f"{kind}_{frames}_{size}")
        write_clip_frames(synthetic_clip(kind, frames=frames, size=size), directory)
        return directory

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
