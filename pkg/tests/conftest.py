import numpy as np
import pytest

from emgsynth.toyoracle import ToyOracleConfig, generate_toy_dataset


@pytest.fixture(scope="session")
def small_toy():
    """A tiny but fully-featured dataset shared by read-only tests."""
    cfg = ToyOracleConfig(
        d_j=6,
        d_e=4,
        frame_rate_hz=25.0,
        sample_rate_hz=200.0,
        n_gestures=6,
        samples_per_gesture=4,
        duration_s=2.0,
        noise_band_hz=(10.0, 90.0),
        seed=11,
    )
    manifest, samples = generate_toy_dataset(cfg)
    return cfg, manifest, samples


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
