"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from screendx.capture import (DegradationParams, make_default_templates,
                              make_synthetic_medical)
from screendx.imaging import ImageBuffer


@pytest.fixture(scope="session")
def templates():
    return make_default_templates(count=6)


@pytest.fixture(scope="session")
def medical_images():
    return [make_synthetic_medical(seed=k) for k in range(4)]


@pytest.fixture
def gradient_image():
    """Deterministic 96x96 grayscale ramp with texture."""
    rng = np.random.default_rng(42)
    yy, xx = np.mgrid[0:96, 0:96] / 95.0
    img = 0.25 + 0.5 * (xx + yy) / 2.0 + 0.05 * rng.random((96, 96))
    return ImageBuffer(np.clip(img, 0.0, 1.0)[:, :, None])


def frontal_params(seed=0):
    return DegradationParams.frontal(seed=seed)
