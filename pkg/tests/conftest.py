"""
Shared fixtures: textured frames, small phantoms and configuration managers.
"""

import os

import numpy as np
import pytest
from scipy import ndimage

from vascular_mrc.core.config import ConfigManager
from vascular_mrc.core.models import Frame, PhantomConfig
from vascular_mrc.imaging.phantom import generate_phantom

SMALL_PHANTOM = {
    "width": 128,
    "height": 128,
    "amplitude_px": 4.0,
    "contrasted_frames": 8,
    "live_frames": 4,
    "seed": 3,
}


def textured(shape=(96, 96), seed=0, sigma=2.5) -> np.ndarray:
    """Smooth band-limited noise in [0.05, 0.95]."""
    rng = np.random.default_rng(seed)
    noise = ndimage.gaussian_filter(rng.standard_normal(shape), sigma)
    noise = (noise - noise.mean()) / noise.std()
    return np.clip(0.5 + 0.12 * noise, 0.05, 0.95)


@pytest.fixture
def texture_frame() -> Frame:
    return Frame(textured(), index=0, contrasted=True)


@pytest.fixture(scope="session")
def small_phantom():
    return generate_phantom(PhantomConfig(**SMALL_PHANTOM))


@pytest.fixture
def clean_env(monkeypatch):
    """Remove MRC_* variables so settings come from defaults and overrides only."""
    for key in list(os.environ):
        if key.upper().startswith("MRC_"):
            monkeypatch.delenv(key)


@pytest.fixture
def make_manager(clean_env):
    def factory(config_file=None, **overrides):
        return ConfigManager(config_file, overrides)

    return factory


@pytest.fixture
def phantom_manager(make_manager):
    """Manager whose phantom settings match ``small_phantom``."""
    return make_manager(**SMALL_PHANTOM)
