"""
Pytest configuration and fixtures for the blur stack codec tests.
"""

import os
import shutil
import tempfile

import numpy as np
import pytest
import yaml

from raster import RasterImage
from scale_space import BlurSchedule, SpreadSpec
from stack_codec import EncoderConfig, encode
from tests.synthetic import synthetic_photo

PROFILE_FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "profile_yaml")
GOLDEN_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "goldens.yaml")


@pytest.fixture
def small_rgb():
    """A 40x32 RGB image with both smooth and noisy content."""
    rng = np.random.default_rng(7)
    y, x = np.mgrid[0:32, 0:40]
    smooth = np.stack([x * 5, y * 6, (x + y) * 3]) + 20
    return RasterImage.from_array(np.clip(smooth + rng.integers(-12, 13, size=(3, 32, 40)), 0, 255))


@pytest.fixture
def small_grey():
    rng = np.random.default_rng(11)
    return RasterImage.from_array(rng.integers(0, 256, size=(24, 24)))


@pytest.fixture(scope="session")
def photo_256():
    return synthetic_photo(256)


@pytest.fixture(scope="session")
def photo_stack(photo_256):
    """Lossless eleven-layer decomposition of the 256x256 synthetic photo."""
    return encode(photo_256, EncoderConfig(schedule="paper"))


@pytest.fixture
def short_schedule():
    return BlurSchedule((8.0, 4.0, 2.0, 1.0))


@pytest.fixture
def lossy_cfg(short_schedule):
    return EncoderConfig(schedule=short_schedule, layer_codec="downq", base_codec="downq")


@pytest.fixture
def spread_cfg(short_schedule):
    return EncoderConfig(schedule=short_schedule, spread=SpreadSpec.uniform(3, 4, seed=42))


@pytest.fixture
def temp_profile_dir():
    """Create a temporary directory holding one valid and one invalid profile."""
    temp_dir = tempfile.mkdtemp()
    shutil.copy(os.path.join(PROFILE_FIXTURES, "pass_explicit.yaml"), temp_dir)
    shutil.copy(os.path.join(PROFILE_FIXTURES, "fail_extra_fields.yaml"), temp_dir)

    yield temp_dir

    # Cleanup
    shutil.rmtree(temp_dir)


def pytest_addoption(parser):
    parser.addoption("--update-goldens", action="store_true", default=False,
                     help="re-record the values in tests/goldens.yaml")


class GoldenStore:
    """Reference numbers frozen by the first run that measures them."""

    def __init__(self, path, update=False):
        self.path = path
        self.update = update
        self.dirty = False
        with open(path) as file:
            self.values = yaml.safe_load(file) or {}

    def check(self, name, value, rel=None, abs=None):
        value = float(value)
        if self.update or name not in self.values:
            self.values[name] = value
            self.dirty = True
            return
        assert value == pytest.approx(self.values[name], rel=rel, abs=abs), f"golden '{name}' moved"

    def save(self):
        if self.dirty:
            with open(self.path, "w") as file:
                yaml.safe_dump(self.values, file, sort_keys=True)


@pytest.fixture(scope="session")
def golden(request):
    store = GoldenStore(GOLDEN_FILE, request.config.getoption("--update-goldens"))

    yield store

    store.save()
