"""Shared fixtures: the synthetic two-blob toy dataset and reduced configs."""

import numpy as np
import pytest

from ctgen.data import ImageDataset, scale_intensity, to_training_tensor
from ctgen.model import GanConfig


def two_blob_images(n, size=8, channels=1, seed=0):
    """Synthetic 8x8-style toy data: two Gaussian blobs with jittered
    centers/amplitudes, intensity-scaled to [0, 2]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    items = []
    for _ in range(n):
        c1 = np.array([size * 0.3, size * 0.3]) + rng.normal(0, 0.4, 2)
        c2 = np.array([size * 0.7, size * 0.7]) + rng.normal(0, 0.4, 2)
        s1 = 0.12 * size * (1 + rng.uniform(-0.2, 0.2))
        s2 = 0.12 * size * (1 + rng.uniform(-0.2, 0.2))
        a2 = 0.8 + rng.uniform(-0.15, 0.15)
        img = np.exp(-((yy - c1[0]) ** 2 + (xx - c1[1]) ** 2) / (2 * s1 ** 2))
        img = img + a2 * np.exp(-((yy - c2[0]) ** 2 + (xx - c2[1]) ** 2) / (2 * s2 ** 2))
        items.append(to_training_tensor(scale_intensity(img), channels))
    return ImageDataset(items, size, channels,
                        f"size={size};channels={channels};scaling=per-image")


def reduced_config(**overrides):
    """8x8 config with filters scaled down 16x; cheap enough for tests."""
    defaults = dict(image_size=8, channels=1, noise_dim=4, batch_size=16,
                    filter_scale=16, seed=0)
    defaults.update(overrides)
    return GanConfig(**defaults)


@pytest.fixture
def toy_dataset():
    return two_blob_images(64)
